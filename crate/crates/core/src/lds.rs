//! Linear dynamical systems `x_{t+1} = A x_t + B u_t + w_t`, bounded
//! disturbance generators and strong-stability certificates.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure, Error, Result};
use crate::linalg::{clip_to_ball, condition_number, op_norm, sample_in_ball, sample_unit_sphere, standard_normal};

/// `(A, B)` together with the norm bounds and the disturbance radius `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub kappa_a: f64,
    pub kappa_b: f64,
    pub w_bound: f64,
}

impl LinearSystem {
    /// Bounds default to the operator norms of `A` and `B`.
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, w_bound: f64) -> Result<Self> {
        ensure(a.is_square(), || format!("A must be square, got {}x{}", a.nrows(), a.ncols()))?;
        ensure(b.nrows() == a.nrows(), || format!("B has {} rows, A has {}", b.nrows(), a.nrows()))?;
        ensure(w_bound >= 0.0 && w_bound.is_finite(), || format!("invalid disturbance bound {w_bound}"))?;
        let kappa_a = op_norm(&a);
        let kappa_b = op_norm(&b);
        Ok(Self { a, b, kappa_a, kappa_b, w_bound })
    }

    /// Declared bounds must dominate the operator norms.
    pub fn with_bounds(a: DMatrix<f64>, b: DMatrix<f64>, kappa_a: f64, kappa_b: f64, w_bound: f64) -> Result<Self> {
        let mut sys = Self::new(a, b, w_bound)?;
        ensure(sys.kappa_a <= kappa_a * (1.0 + 1e-12) && sys.kappa_b <= kappa_b * (1.0 + 1e-12), || {
            format!("declared bounds ({kappa_a}, {kappa_b}) below norms ({}, {})", sys.kappa_a, sys.kappa_b)
        })?;
        sys.kappa_a = kappa_a;
        sys.kappa_b = kappa_b;
        Ok(sys)
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    /// `A - B K`.
    pub fn closed_loop(&self, k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        ensure(k.nrows() == self.input_dim() && k.ncols() == self.state_dim(), || {
            format!("K must be {}x{}, got {}x{}", self.input_dim(), self.state_dim(), k.nrows(), k.ncols())
        })?;
        Ok(&self.a - &self.b * k)
    }
}

fn check_step_dims(system: &LinearSystem, x: &DVector<f64>, u: &DVector<f64>) -> Result<()> {
    ensure(x.len() == system.state_dim(), || format!("state has {} entries, expected {}", x.len(), system.state_dim()))?;
    ensure(u.len() == system.input_dim(), || format!("input has {} entries, expected {}", u.len(), system.input_dim()))
}

/// `A x + B u + w`.
pub fn step_dynamics(system: &LinearSystem, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
    check_step_dims(system, x, u)?;
    ensure(w.len() == system.state_dim(), || format!("disturbance has {} entries", w.len()))?;
    Ok(&system.a * x + &system.b * u + w)
}

/// `x_next - A x - B u`.
pub fn recover_disturbance(system: &LinearSystem, x_next: &DVector<f64>, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
    check_step_dims(system, x, u)?;
    ensure(x_next.len() == system.state_dim(), || "next state has wrong dimension".into())?;
    Ok(x_next - &system.a * x - &system.b * u)
}

/// Shape of a disturbance sequence; the amplitude scales every kind.
#[derive(Debug, Clone, PartialEq)]
pub enum DisturbanceKind {
    Zero,
    /// Fixed random direction at full amplitude.
    Constant,
    /// `N(0, sigma^2 I)` draws clipped to the amplitude ball.
    GaussianClipped { sigma: f64 },
    /// Per-coordinate sines with random phases.
    Sinusoidal { period: f64 },
    /// A fresh uniform point of the amplitude ball every `period` rounds.
    PiecewiseStep { period: usize },
    /// Piecewise-constant offset of norm at most `(1 - noise) a` plus uniform noise of radius `noise a`.
    NoisyStep { period: usize, noise: f64 },
    /// Random signs on every coordinate, scaled to the amplitude sphere.
    AdversarialSign,
    /// Uniform in the amplitude ball, independent across rounds.
    UniformBall,
    /// Replay of a recorded sequence.
    Recorded(Vec<DVector<f64>>),
}

impl DisturbanceKind {
    /// Parse a config name such as `gaussian`, `sinusoidal:50` or `step:200`.
    pub fn parse(name: &str) -> Result<Self> {
        let (head, arg) = match name.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (name, None),
        };
        let num = |default: f64| -> Result<f64> {
            arg.map(|a| a.parse::<f64>().map_err(|_| Error::Contract(format!("bad disturbance argument {a}"))))
                .unwrap_or(Ok(default))
        };
        Ok(match head {
            "zero" => Self::Zero,
            "constant" => Self::Constant,
            "gaussian" => Self::GaussianClipped { sigma: num(0.5)? },
            "sinusoidal" => Self::Sinusoidal { period: num(100.0)? },
            "step" => Self::PiecewiseStep { period: num(200.0)? as usize },
            "noisy-step" => Self::NoisyStep { period: num(200.0)? as usize, noise: 0.2 },
            "sign" => Self::AdversarialSign,
            "uniform" => Self::UniformBall,
            other => return Err(Error::Contract(format!("unknown disturbance kind {other}"))),
        })
    }
}

/// Seeded source of disturbances with `||w_t|| <= W` for every emitted round.
#[derive(Debug, Clone)]
pub struct DisturbanceGenerator {
    kind: DisturbanceKind,
    dim: usize,
    amplitude: f64,
    w_bound: f64,
    rng: ChaCha8Rng,
    direction: DVector<f64>,
    phases: Vec<f64>,
    current: DVector<f64>,
    emitted: usize,
}

impl DisturbanceGenerator {
    pub fn new(kind: DisturbanceKind, dim: usize, amplitude: f64, w_bound: f64, seed: u64) -> Result<Self> {
        ensure(amplitude >= 0.0 && amplitude <= w_bound, || {
            format!("amplitude {amplitude} must lie in [0, W={w_bound}]")
        })?;
        match kind {
            DisturbanceKind::PiecewiseStep { period } => ensure(period > 0, || "step period must be positive".into())?,
            DisturbanceKind::NoisyStep { period, noise } => {
                ensure(period > 0, || "step period must be positive".into())?;
                ensure((0.0..=1.0).contains(&noise), || "noise fraction must lie in [0, 1]".into())?;
            }
            _ => {}
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let direction = sample_unit_sphere(&mut rng, dim.max(1)).rows(0, dim).into_owned();
        let phases = (0..dim).map(|_| rng.random::<f64>() * std::f64::consts::TAU).collect();
        Ok(Self {
            kind,
            dim,
            amplitude,
            w_bound,
            rng,
            direction,
            phases,
            current: DVector::zeros(dim),
            emitted: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bound(&self) -> f64 {
        self.w_bound
    }

    /// Next disturbance; rounds are counted from 0.
    pub fn next_disturbance(&mut self) -> DVector<f64> {
        let t = self.emitted;
        self.emitted += 1;
        let a = self.amplitude;
        let raw = match &self.kind {
            DisturbanceKind::Zero => DVector::zeros(self.dim),
            DisturbanceKind::Constant => &self.direction * a,
            DisturbanceKind::GaussianClipped { sigma } => {
                let s = *sigma;
                DVector::from_fn(self.dim, |_, _| s * standard_normal(&mut self.rng))
            }
            DisturbanceKind::Sinusoidal { period } => {
                let scale = a / (self.dim as f64).sqrt();
                let arg = std::f64::consts::TAU * t as f64 / period;
                DVector::from_fn(self.dim, |i, _| scale * (arg + self.phases[i]).sin())
            }
            DisturbanceKind::PiecewiseStep { period } => {
                if t.is_multiple_of(*period) {
                    self.current = sample_in_ball(&mut self.rng, self.dim, a);
                }
                self.current.clone()
            }
            DisturbanceKind::NoisyStep { period, noise } => {
                let (p, f) = (*period, *noise);
                if t.is_multiple_of(p) {
                    self.current = sample_in_ball(&mut self.rng, self.dim, a * (1.0 - f));
                }
                &self.current + sample_in_ball(&mut self.rng, self.dim, a * f)
            }
            DisturbanceKind::AdversarialSign => {
                let scale = a / (self.dim as f64).sqrt();
                DVector::from_fn(self.dim, |_, _| if self.rng.random::<bool>() { scale } else { -scale })
            }
            DisturbanceKind::UniformBall => sample_in_ball(&mut self.rng, self.dim, a),
            DisturbanceKind::Recorded(seq) => seq.get(t).cloned().unwrap_or_else(|| DVector::zeros(self.dim)),
        };
        clip_to_ball(clip_to_ball(raw, a), self.w_bound)
    }

    pub fn take_sequence(&mut self, n: usize) -> Vec<DVector<f64>> {
        (0..n).map(|_| self.next_disturbance()).collect()
    }
}

/// Certificate `A - BK = H L H^{-1}` with `||L|| <= 1 - gamma` and `||K||, ||H||, ||H^{-1}|| <= kappa`.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityCertificate {
    pub k: DMatrix<f64>,
    pub kappa: f64,
    pub gamma: f64,
    pub h: DMatrix<f64>,
    pub h_inv: DMatrix<f64>,
    /// Real block-diagonal: scalars for real eigenvalues, `[[a, b], [-b, a]]` for `a +- ib`.
    pub l: DMatrix<f64>,
}

impl StabilityCertificate {
    pub fn reconstruction_error(&self, system: &LinearSystem) -> f64 {
        let closed = &system.a - &system.b * &self.k;
        (&self.h * &self.l * &self.h_inv - closed).norm()
    }

    pub fn tau(&self, kappa_b: f64) -> f64 {
        kappa_b * self.kappa.powi(3)
    }
}

/// Outcome of checking declared `(kappa, gamma)` against an eigen-certificate.
#[derive(Debug, Clone, PartialEq)]
pub enum StabilityVerdict {
    Certified(StabilityCertificate),
    Rejected { reasons: Vec<String> },
}

impl StabilityVerdict {
    pub fn certificate(self) -> Option<StabilityCertificate> {
        match self {
            Self::Certified(c) => Some(c),
            Self::Rejected { .. } => None,
        }
    }
}

/// Real eigen-decomposition `M = H L H^{-1}` with unit-norm columns before scaling.
struct EigenSplit {
    h: DMatrix<f64>,
    l: DMatrix<f64>,
}

fn complex_null_space(m: &DMatrix<Complex64>, dim: usize, tol: f64) -> Option<Vec<DVector<Complex64>>> {
    let n = m.ncols();
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let mut out = Vec::with_capacity(dim);
    for &idx in order.iter().take(dim) {
        if svd.singular_values[idx] > tol {
            return None;
        }
        out.push(DVector::from_fn(n, |r, _| v_t[(idx, r)].conj()));
    }
    if out.len() < dim {
        return None;
    }
    Some(out)
}

/// Deterministic basis for a null space: Gram-Schmidt on the projector columns
/// of largest norm. For `lambda I` this returns the standard basis.
fn canonical_basis(basis: &[DVector<Complex64>]) -> Vec<(usize, DVector<Complex64>)> {
    let n = basis[0].len();
    let mut proj = DMatrix::<Complex64>::zeros(n, n);
    for v in basis {
        proj += v * v.adjoint();
    }
    let mut out: Vec<(usize, DVector<Complex64>)> = Vec::new();
    let mut used = vec![false; n];
    for _ in 0..basis.len() {
        let mut best: Option<(usize, DVector<Complex64>, f64)> = None;
        for c in 0..n {
            if used[c] {
                continue;
            }
            let mut v = proj.column(c).into_owned();
            for (_, q) in &out {
                let coef = q.dotc(&v);
                v -= q * coef;
            }
            let nv = v.norm();
            if best.as_ref().is_none_or(|b| nv > b.2 + 1e-12) {
                best = Some((c, v, nv));
            }
        }
        let (c, v, nv) = best.expect("null space basis shorter than its dimension");
        used[c] = true;
        // Normalize with a real positive pivot entry.
        let phase = v[c] / v[c].norm();
        out.push((c, v / (phase * Complex64::new(nv, 0.0))));
    }
    out
}

fn eigen_split(m: &DMatrix<f64>) -> Result<EigenSplit> {
    let n = m.nrows();
    let scale = op_norm(m).max(1.0);
    let cluster_tol = 1e-9 * scale;
    let null_tol = 1e-7 * scale;
    let eig: Vec<Complex64> = m.complex_eigenvalues().iter().cloned().collect();

    // Cluster eigenvalues; drop the lower half of complex pairs.
    let mut clusters: Vec<(Complex64, usize)> = Vec::new();
    for z in &eig {
        if let Some(c) = clusters.iter_mut().find(|c| (c.0 - z).norm() <= cluster_tol) {
            c.1 += 1;
        } else {
            clusters.push((*z, 1));
        }
    }
    let mc = m.map(|x| Complex64::new(x, 0.0));
    let mut groups: Vec<(usize, Vec<DVector<f64>>, DMatrix<f64>)> = Vec::new();
    for (z, mult) in clusters {
        if z.im < -cluster_tol {
            continue;
        }
        let real = z.im.abs() <= cluster_tol;
        let lam = if real { Complex64::new(z.re, 0.0) } else { z };
        let shifted = &mc - DMatrix::<Complex64>::identity(n, n) * lam;
        let basis = complex_null_space(&shifted, mult, null_tol).ok_or_else(|| {
            Error::CannotCertify(format!("eigenvalue {lam} has fewer independent eigenvectors than its multiplicity {mult}"))
        })?;
        for (pivot, v) in canonical_basis(&basis) {
            if real {
                let col = v.map(|c| c.re);
                groups.push((pivot, vec![col], DMatrix::from_element(1, 1, lam.re)));
            } else {
                let p = v.map(|c| c.re);
                let q = v.map(|c| c.im);
                let block = DMatrix::from_row_slice(2, 2, &[lam.re, lam.im, -lam.im, lam.re]);
                groups.push((pivot, vec![p, q], block));
            }
        }
    }
    groups.sort_by_key(|g| g.0);
    let cols: usize = groups.iter().map(|g| g.1.len()).sum();
    if cols != n {
        return Err(Error::CannotCertify(format!("found {cols} eigen-directions for a {n}x{n} matrix")));
    }
    let mut h = DMatrix::zeros(n, n);
    let mut l = DMatrix::zeros(n, n);
    let mut c = 0;
    for (_, vecs, block) in &groups {
        let k = vecs.len();
        for (j, v) in vecs.iter().enumerate() {
            let nv = v.norm();
            h.set_column(c + j, &(v / nv));
        }
        // Column rescaling of a complex pair changes the block, so keep pairs at equal scale.
        if k == 2 {
            let np = vecs[0].norm();
            let nq = vecs[1].norm();
            h.set_column(c, &(&vecs[0] / np.max(nq)));
            h.set_column(c + 1, &(&vecs[1] / np.max(nq)));
        }
        l.view_mut((c, c), (k, k)).copy_from(block);
        c += k;
    }
    Ok(EigenSplit { h, l })
}

/// Eigen-certificate with `H` scaled so `||H|| = ||H^{-1}|| = sqrt(cond H)`,
/// reporting the smallest `kappa` and largest `gamma` it supports.
pub fn certify_minimal(system: &LinearSystem, k: &DMatrix<f64>) -> Result<StabilityCertificate> {
    let closed = system.closed_loop(k)?;
    let EigenSplit { h, l } = eigen_split(&closed)?;
    let cond = condition_number(&h);
    if !cond.is_finite() || cond > 1e12 {
        return Err(Error::CannotCertify(format!("eigenvector matrix condition number {cond:e}")));
    }
    let s = cond.sqrt() / op_norm(&h);
    let h = h * s;
    let h_inv = h
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::CannotCertify("eigenvector matrix is singular".into()))?;
    let err = (&h * &l * &h_inv - &closed).norm();
    if err > 1e-8 * closed.norm().max(1.0) {
        return Err(Error::CannotCertify(format!("reconstruction error {err:e}")));
    }
    let kappa = op_norm(k).max(cond.sqrt()).max(1.0);
    let gamma = 1.0 - op_norm(&l);
    Ok(StabilityCertificate { k: k.clone(), kappa, gamma, h, h_inv, l })
}

/// Accept iff `||L|| <= 1 - gamma`, `||K|| <= kappa` and `||H||, ||H^{-1}|| <= kappa`.
pub fn check_strong_stability(system: &LinearSystem, k: &DMatrix<f64>, kappa: f64, gamma: f64) -> Result<StabilityVerdict> {
    ensure(gamma > 0.0 && gamma <= 1.0, || format!("gamma must lie in (0, 1], got {gamma}"))?;
    ensure(kappa >= 1.0, || format!("kappa must be at least 1, got {kappa}"))?;
    let minimal = certify_minimal(system, k)?;
    let slack = 1e-12;
    let mut reasons = Vec::new();
    let l_norm = op_norm(&minimal.l);
    if l_norm > 1.0 - gamma + slack {
        reasons.push(format!("||L|| = {l_norm} exceeds 1 - gamma = {}", 1.0 - gamma));
    }
    let k_norm = op_norm(k);
    if k_norm > kappa + slack {
        reasons.push(format!("||K|| = {k_norm} exceeds kappa = {kappa}"));
    }
    let h_norm = op_norm(&minimal.h).max(op_norm(&minimal.h_inv));
    if h_norm > kappa * (1.0 + 1e-9) {
        reasons.push(format!("||H|| or ||H^-1|| = {h_norm} exceeds kappa = {kappa}"));
    }
    if reasons.is_empty() {
        Ok(StabilityVerdict::Certified(StabilityCertificate { kappa, gamma, ..minimal }))
    } else {
        Ok(StabilityVerdict::Rejected { reasons })
    }
}

/// States `x_0..x_T`, actions `u_1..u_T`, disturbances `w_1..w_T` and per-round costs.
///
/// Entry `t` of `actions`, `disturbances` and `costs` belongs to the
/// transition from `states[t]` to `states[t + 1]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub actions: Vec<DVector<f64>>,
    pub disturbances: Vec<DVector<f64>>,
    pub costs: Vec<f64>,
}

impl Trajectory {
    pub fn start(x0: DVector<f64>) -> Self {
        Self { states: vec![x0], ..Self::default() }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn total_cost(&self) -> f64 {
        self.costs.iter().sum()
    }

    /// `max_t ||x_{t+1} - A x_t - B u_t - w_t||`.
    pub fn max_residual(&self, system: &LinearSystem) -> f64 {
        (0..self.len())
            .map(|t| {
                (&self.states[t + 1] - &system.a * &self.states[t] - &system.b * &self.actions[t] - &self.disturbances[t])
                    .norm()
            })
            .fold(0.0, f64::max)
    }
}

/// Closed loop under `u = -K x` for `rounds` steps from `x0`.
pub fn simulate_linear_feedback(
    system: &LinearSystem,
    k: &DMatrix<f64>,
    disturbances: &[DVector<f64>],
    x0: DVector<f64>,
) -> Result<Trajectory> {
    let mut traj = Trajectory::start(x0);
    for w in disturbances {
        let x = traj.states.last().expect("trajectory has a state");
        let u = -(k * x);
        let next = step_dynamics(system, x, &u, w)?;
        traj.actions.push(u);
        traj.disturbances.push(w.clone());
        traj.costs.push(0.0);
        traj.states.push(next);
    }
    Ok(traj)
}

/// A system with its stabilizing controller and certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlScenario {
    pub name: String,
    pub system: LinearSystem,
    pub certificate: StabilityCertificate,
}

pub const PRESET_NAMES: [&str; 3] = ["stable3x2", "scalar", "rotation"];

/// Library presets:
/// - `stable3x2`: 3 states, 2 inputs, eigenvalues (0.9, 0.6, -0.4) with nearly orthogonal eigenvectors, K = 0;
/// - `scalar`: `A = 0.5`, `B = 1`, K = 0;
/// - `rotation`: damped 2-D rotation with spectral radius 0.8 plus a third decaying mode, K = 0.
pub fn preset(name: &str, w_bound: f64) -> Result<ControlScenario> {
    let (a, b) = match name {
        "stable3x2" => {
            let q = DMatrix::from_row_slice(3, 3, &[0.8, -0.6, 0.05, 0.6, 0.8, 0.0, 0.0, 0.05, 1.0]);
            let lam = DMatrix::from_diagonal(&DVector::from_vec(vec![0.9, 0.6, -0.4]));
            let q_inv = q.clone().try_inverse().expect("preset eigenvectors are invertible");
            let a = &q * lam * q_inv;
            let b = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.5, -0.5]);
            (a, b)
        }
        "scalar" => (DMatrix::from_element(1, 1, 0.5), DMatrix::from_element(1, 1, 1.0)),
        "rotation" => {
            let (c, s) = (0.8 * 0.6, 0.8 * 0.8);
            let a = DMatrix::from_row_slice(3, 3, &[c, s, 0.0, -s, c, 0.0, 0.0, 0.0, 0.3]);
            let b = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 0.5]);
            (a, b)
        }
        other => return Err(Error::Contract(format!("unknown preset {other}; known: {}", PRESET_NAMES.join(", ")))),
    };
    let system = LinearSystem::new(a, b, w_bound)?;
    let k = DMatrix::zeros(system.input_dim(), system.state_dim());
    let certificate = certify_minimal(&system, &k)?;
    Ok(ControlScenario { name: name.to_string(), system, certificate })
}

/// Random system `A = Q diag(lambda) Q^{-1}` with real eigenvalues of modulus at most `rho`
/// (one at exactly `rho`) and `B` with entries in `[-1, 1]` rescaled to unit norm.
pub fn random_stable_system<R: Rng + ?Sized>(rng: &mut R, dx: usize, du: usize, rho: f64, w_bound: f64) -> Result<LinearSystem> {
    loop {
        let q = crate::linalg::uniform_matrix(rng, dx, dx) + DMatrix::identity(dx, dx) * 1.5;
        if condition_number(&q) > 50.0 {
            continue;
        }
        let mut lam: Vec<f64> = (0..dx).map(|_| rng.random_range(-rho..=rho)).collect();
        lam[0] = rho;
        let q_inv = q.clone().try_inverse().expect("well-conditioned matrix inverts");
        let a = &q * DMatrix::from_diagonal(&DVector::from_vec(lam)) * q_inv;
        let b = crate::linalg::uniform_matrix(rng, dx, du);
        let nb = op_norm(&b);
        if nb < 1e-3 {
            continue;
        }
        return LinearSystem::new(a, b / nb, w_bound);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn scalar() -> LinearSystem {
        LinearSystem::new(DMatrix::from_element(1, 1, 0.5), DMatrix::from_element(1, 1, 1.0), 1.0).unwrap()
    }

    #[test]
    fn scalar_recursion() {
        let s = scalar();
        let u = dvector![0.0];
        let w = dvector![1.0];
        let x1 = step_dynamics(&s, &dvector![0.0], &u, &w).unwrap();
        let x2 = step_dynamics(&s, &x1, &u, &w).unwrap();
        let x3 = step_dynamics(&s, &x2, &u, &w).unwrap();
        assert_eq!((x1[0], x2[0], x3[0]), (1.0, 1.5, 1.75));
    }

    #[test]
    fn identity_dynamics_accumulate() {
        let s = LinearSystem::new(DMatrix::identity(2, 2), DMatrix::zeros(2, 1), 1.0).unwrap();
        let x = step_dynamics(&s, &dvector![1.0, 2.0], &dvector![5.0], &dvector![0.5, -0.5]).unwrap();
        assert_eq!(x, dvector![1.5, 1.5]);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let s = scalar();
        assert!(step_dynamics(&s, &dvector![0.0, 1.0], &dvector![0.0], &dvector![0.0]).is_err());
    }

    #[test]
    fn noiseless_step_recovers_zero() {
        let s = scalar();
        let x = dvector![0.3];
        let u = dvector![-0.2];
        let next = step_dynamics(&s, &x, &u, &dvector![0.0]).unwrap();
        assert_eq!(recover_disturbance(&s, &next, &x, &u).unwrap(), dvector![0.0]);
    }

    #[test]
    fn diagonal_system_certifies_with_identity() {
        let s = LinearSystem::new(DMatrix::identity(2, 2) * 0.5, DMatrix::identity(2, 2), 1.0).unwrap();
        let k = DMatrix::zeros(2, 2);
        let cert = check_strong_stability(&s, &k, 1.0, 0.5).unwrap().certificate().unwrap();
        assert!((&cert.h - DMatrix::<f64>::identity(2, 2)).norm() < 1e-12);
        assert!((&cert.l - DMatrix::<f64>::identity(2, 2) * 0.5).norm() < 1e-12);
    }

    #[test]
    fn too_slow_decay_is_rejected() {
        let s = LinearSystem::new(DMatrix::identity(2, 2) * 0.8, DMatrix::identity(2, 2), 1.0).unwrap();
        let verdict = check_strong_stability(&s, &DMatrix::zeros(2, 2), 1.0, 0.5).unwrap();
        assert!(matches!(verdict, StabilityVerdict::Rejected { .. }));
    }

    #[test]
    fn jordan_block_cannot_be_certified() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 1.0, 0.0, 0.5]);
        let s = LinearSystem::new(a, DMatrix::zeros(2, 1), 1.0).unwrap();
        let r = check_strong_stability(&s, &DMatrix::zeros(1, 2), 10.0, 0.1);
        assert!(matches!(r, Err(Error::CannotCertify(_))), "{r:?}");
    }

    #[test]
    fn rotation_preset_uses_real_blocks() {
        let sc = preset("rotation", 1.0).unwrap();
        assert!(sc.certificate.reconstruction_error(&sc.system) < 1e-10);
        assert!((sc.certificate.gamma - 0.2).abs() < 1e-9);
    }

    #[test]
    fn presets_certify() {
        for name in PRESET_NAMES {
            let sc = preset(name, 0.5).unwrap();
            assert!(sc.certificate.reconstruction_error(&sc.system) < 1e-8, "{name}");
            assert!(sc.certificate.gamma > 0.0);
        }
        let sc = preset("stable3x2", 0.5).unwrap();
        assert!(sc.certificate.kappa < 1.15, "kappa = {}", sc.certificate.kappa);
        assert!((sc.certificate.gamma - 0.1).abs() < 1e-9);
    }

    #[test]
    fn disturbances_respect_bound() {
        let kinds = [
            DisturbanceKind::Constant,
            DisturbanceKind::GaussianClipped { sigma: 3.0 },
            DisturbanceKind::Sinusoidal { period: 17.0 },
            DisturbanceKind::PiecewiseStep { period: 5 },
            DisturbanceKind::NoisyStep { period: 7, noise: 0.3 },
            DisturbanceKind::AdversarialSign,
            DisturbanceKind::UniformBall,
        ];
        for kind in kinds {
            let mut g = DisturbanceGenerator::new(kind, 3, 0.7, 0.7, 11).unwrap();
            for _ in 0..200 {
                assert!(g.next_disturbance().norm() <= 0.7 + 1e-12);
            }
        }
        assert!(DisturbanceGenerator::new(DisturbanceKind::Zero, 2, 2.0, 1.0, 0).is_err());
    }
}
