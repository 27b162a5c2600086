//! The transfer-matrix view of a DAC history agrees with direct simulation.

use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scream_core::dac::{simulate_dac, state_via_transfer, ClosedLoop, DacFeasibleSet, DacParams};
use scream_core::lds::{preset, DisturbanceGenerator, DisturbanceKind, PRESET_NAMES};

#[test]
fn presets_agree_with_simulation() {
    for name in PRESET_NAMES {
        let sc = preset(name, 0.3).unwrap();
        let sys = &sc.system;
        let (du, dx) = (sys.input_dim(), sys.state_dim());
        let k = DMatrix::zeros(du, dx);
        let set = DacFeasibleSet::new(sys.kappa_b, sc.certificate.kappa, sc.certificate.gamma, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let horizon = 40;
        let history: Vec<DacParams> = (0..horizon).map(|_| set.sample(&mut rng, du, dx)).collect();
        let w = DisturbanceGenerator::new(DisturbanceKind::AdversarialSign, dx, 0.3, 0.3, 9)
            .unwrap()
            .take_sequence(horizon);
        let xs = simulate_dac(sys, &k, &history, &w).unwrap();
        let cl = ClosedLoop::new(sys, &k, horizon).unwrap();
        for t in 1..=horizon {
            let via = state_via_transfer(&cl, &history, &w, t).unwrap();
            assert_relative_eq!(via, xs[t], epsilon = 1e-12, max_relative = 1e-10);
        }
    }
}

#[test]
fn zero_controller_with_no_disturbance_stays_at_rest() {
    let sc = preset("stable3x2", 0.3).unwrap();
    let k = DMatrix::zeros(2, 3);
    let history = vec![DacParams::zeros(2, 2, 3); 10];
    let w = vec![DVector::zeros(3); 10];
    let xs = simulate_dac(&sc.system, &k, &history, &w).unwrap();
    assert!(xs.iter().all(|x| x.norm() == 0.0));
}
