//! Piecewise-stationary square-loss regression streams.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scream_core::linalg::sample_in_ball;
use scream_core::oco::{ComparatorSequence, DomainBall, SquareLoss, VecStream};
use scream_core::Result;

use crate::config::OcoConfig;

/// Stream, ground-truth comparators and the domain they live in.
#[derive(Debug, Clone)]
pub struct RegressionScenario {
    pub stream: VecStream<SquareLoss>,
    pub comparators: ComparatorSequence,
    pub domain: DomainBall,
    pub losses: Vec<SquareLoss>,
}

/// `y_t = x_t^T w*_t + eps_t` with `x_t` uniform in the `Gamma`-ball,
/// `eps_t` uniform on `[0, noise_max]` and `w*` redrawn every `change_period`
/// rounds uniformly from the ball of radius `(D/2 - noise_max) / Gamma`, the
/// largest ball for which every gradient on the domain stays within `D Gamma^2`.
pub fn gen_piecewise_regression(config: &OcoConfig, seed: u64) -> Result<RegressionScenario> {
    let domain = DomainBall::new(config.dim, config.diameter)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut losses = Vec::with_capacity(config.horizon);
    let mut points = Vec::with_capacity(config.horizon);
    let mut model = DVector::zeros(config.dim);
    for t in 0..config.horizon {
        if t % config.change_period == 0 {
            model = sample_in_ball(&mut rng, config.dim, (config.diameter / 2.0 - config.noise_max) / config.feature_radius);
        }
        let x = sample_in_ball(&mut rng, config.dim, config.feature_radius);
        let noise = if config.noise_max > 0.0 { rng.random_range(0.0..=config.noise_max) } else { 0.0 };
        let y = x.dot(&model) + noise;
        losses.push(SquareLoss::new(x, y));
        points.push(model.clone());
    }
    let comparators = ComparatorSequence::new(points, &domain)?;
    Ok(RegressionScenario { stream: VecStream::new(config.dim, losses.clone()), comparators, domain, losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use scream_core::oco::MemoryLoss;

    fn small(noise: f64, period: usize) -> OcoConfig {
        OcoConfig { horizon: 600, dim: 4, change_period: period, noise_max: noise, ..OcoConfig::default() }
    }

    #[test]
    fn jumps_match_segments() {
        let sc = gen_piecewise_regression(&small(0.1, 100), 3).unwrap();
        let pts = sc.comparators.points();
        let jumps: Vec<f64> = pts.windows(2).map(|p| (&p[1] - &p[0]).norm()).filter(|d| *d > 0.0).collect();
        assert_eq!(jumps.len(), 5);
        assert!((jumps.iter().sum::<f64>() - sc.comparators.path_length()).abs() < 1e-12);
    }

    #[test]
    fn realizable_stationary_case_has_zero_comparator_loss() {
        let sc = gen_piecewise_regression(&small(0.0, 600), 8).unwrap();
        let v = &sc.comparators.points()[0];
        let total: f64 = sc.losses.iter().map(|l| l.eval_unary(v)).sum();
        assert!(total < 1e-25);
    }

    #[test]
    fn gradients_respect_bound() {
        let cfg = small(0.1, 100);
        let sc = gen_piecewise_regression(&cfg, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for l in &sc.losses {
            let w = sample_in_ball(&mut rng, cfg.dim, cfg.diameter / 2.0);
            assert!(l.unary_gradient(&w).norm() <= cfg.grad_bound);
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let a = gen_piecewise_regression(&small(0.1, 100), 9).unwrap();
        let b = gen_piecewise_regression(&small(0.1, 100), 9).unwrap();
        assert_eq!(a.losses, b.losses);
    }
}
