//! Randomized properties of the public building blocks.

use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use scream_core::dac::{clip_singular_values, project_to_dac_set, DacFeasibleSet, DacParams};
use scream_core::linalg::op_norm;
use scream_core::oco::DomainBall;
use scream_core::omd::{hedge_step, ogd_step, OmdState};
use scream_core::scream::{build_step_size_pool, nonuniform_prior, scream_meta_rate, StepSizePool};

fn vector(dim: usize, scale: f64) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-scale..scale, dim).prop_map(DVector::from_vec)
}

fn matrix(rows: usize, cols: usize, scale: f64) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-scale..scale, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

proptest! {
    #[test]
    fn hedge_stays_on_simplex(losses in prop::collection::vec(-100.0f64..100.0, 1..20), rate in 0.0f64..10.0) {
        let n = losses.len();
        let mut state = OmdState::new(nonuniform_prior(n), rate);
        for _ in 0..3 {
            state = hedge_step(&state, &DVector::from_vec(losses.clone())).unwrap();
            prop_assert!(state.point.iter().all(|p| *p >= 0.0));
            prop_assert!((state.point.sum() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn ogd_stays_in_ball(point in vector(5, 1.0), grad in vector(5, 50.0), rate in 0.0f64..3.0) {
        let domain = DomainBall::new(5, 2.0).unwrap();
        let start = OmdState::new(domain.project(&point), rate);
        let next = ogd_step(&start, &grad, &domain).unwrap();
        prop_assert!(domain.contains(&next.point, 1e-12));
    }

    #[test]
    fn clipping_caps_and_is_idempotent(m in matrix(3, 2, 5.0), cap in 0.01f64..3.0) {
        let p = clip_singular_values(&m, cap);
        prop_assert!(op_norm(&p) <= cap * (1.0 + 1e-12));
        prop_assert!((clip_singular_values(&p, cap) - &p).norm() <= 1e-10);
        // The projection never moves a point further than the zero matrix is.
        prop_assert!((&m - &p).norm() <= m.norm() + 1e-12);
    }

    #[test]
    fn dac_projection_is_feasible(b1 in matrix(2, 3, 4.0), b2 in matrix(2, 3, 4.0), gamma in 0.05f64..0.95) {
        let set = DacFeasibleSet::new(1.0, 1.2, gamma, 2).unwrap();
        let m = DacParams::new(vec![b1, b2]).unwrap();
        let p = project_to_dac_set(&m, &set).unwrap();
        prop_assert!(set.contains(&p, 1e-10));
    }
}

#[test]
fn prior_sums_to_one() {
    for n in 1..=2000 {
        assert!((nonuniform_prior(n).sum() - 1.0).abs() <= 1e-12, "N = {n}");
    }
    assert_relative_eq!(nonuniform_prior(1)[0], 1.0);
    assert_relative_eq!(nonuniform_prior(3)[0], 4.0 / 6.0);
}

#[test]
fn pool_for_the_regression_setup() {
    // T = 20000: N = ceil(log2(20001) / 2) + 1 = 9.
    assert_eq!(StepSizePool::expert_count(20000), 9);
    assert_eq!(StepSizePool::expert_count(1), 2);
    let pool = build_step_size_pool(20000, 2.0, 2.0, 1.0).unwrap();
    let base = (4.0f64 / (6.0 * 20000.0)).sqrt();
    assert_relative_eq!(pool.sizes()[0], base, max_relative = 1e-14);
    assert_relative_eq!(pool.sizes()[8], 256.0 * base, max_relative = 1e-14);
    assert_relative_eq!(scream_meta_rate(20000, 2.0, 2.0, 1.0), (2.0f64 / (4.0 * 3.0 * 4.0 * 20000.0)).sqrt());
}
