//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Spectral (operator 2-) norm.
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.singular_values().max()
}

/// Frobenius norm.
pub fn fro_norm(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

/// Smallest singular value.
pub fn min_singular(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.singular_values().min()
}

/// Ratio of largest to smallest singular value; infinite for singular input.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let lo = sv.min();
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        sv.max() / lo
    }
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// `[a^0, a^1, ..., a^n]`.
pub fn powers(a: &DMatrix<f64>, n: usize) -> Vec<DMatrix<f64>> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(DMatrix::identity(a.nrows(), a.ncols()));
    for k in 1..=n {
        let next = a * &out[k - 1];
        out.push(next);
    }
    out
}

pub fn all_finite_vec(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

pub fn all_finite_mat(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| x.is_finite())
}

/// Uniform sample from the closed Euclidean ball of the given radius.
pub fn sample_in_ball<R: Rng + ?Sized>(rng: &mut R, dim: usize, radius: f64) -> DVector<f64> {
    if dim == 0 {
        return DVector::zeros(0);
    }
    let dir = sample_unit_sphere(rng, dim);
    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
    dir * r
}

/// Uniform direction on the unit sphere via normalized Gaussians.
pub fn sample_unit_sphere<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| standard_normal(rng));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Box-Muller standard normal draw.
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Matrix with i.i.d. entries uniform on `[-1, 1]`.
pub fn uniform_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..=1.0))
}

/// Rescale `v` onto the ball of the given radius if it lies outside.
pub fn clip_to_ball(v: DVector<f64>, radius: f64) -> DVector<f64> {
    let n = v.norm();
    if n > radius {
        v * (radius / n)
    } else {
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn op_norm_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, -3.0, 2.0]));
        assert!((op_norm(&m) - 3.0).abs() < 1e-12);
        assert!((condition_number(&m) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn ball_samples_stay_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let v = sample_in_ball(&mut rng, 7, 0.25);
            assert!(v.norm() <= 0.25 + 1e-15);
        }
    }

    #[test]
    fn powers_match_repeated_product() {
        let a = DMatrix::from_row_slice(2, 2, &[0.3, 0.1, -0.2, 0.5]);
        let p = powers(&a, 3);
        assert_eq!(p[0], DMatrix::identity(2, 2));
        assert!((&p[3] - &a * &a * &a).norm() < 1e-15);
    }
}
