//! Identification of unknown `(A, B)` from random `+-1` inputs and the
//! explore-then-commit pipeline that runs the controller on the estimate.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::control::{run_control_with_model, ControlConfig, ControlRun, ControlSettings, ControllerKind, CostSequence};
use crate::dac::ControlCost;
use crate::error::{ensure, Error, Result};
use crate::lds::{certify_minimal, step_dynamics, LinearSystem, Trajectory};
use crate::linalg::{all_finite_mat, condition_number, powers};

/// Exploration length `T_0`, controllability index `k` and the stabilizing `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentificationConfig {
    pub explore_rounds: usize,
    pub k_index: usize,
    pub k: DMatrix<f64>,
}

impl IdentificationConfig {
    pub fn new(explore_rounds: usize, k_index: usize, k: DMatrix<f64>) -> Result<Self> {
        ensure(k_index >= 1, || "controllability index must be at least 1".into())?;
        ensure(explore_rounds > k_index, || format!("T_0 = {explore_rounds} must exceed k = {k_index}"))?;
        Ok(Self { explore_rounds, k_index, k })
    }
}

/// `T_0 = ceil(T^(2/3))`.
pub fn default_exploration_rounds(horizon: usize) -> usize {
    (horizon as f64).powf(2.0 / 3.0).ceil() as usize
}

/// Smallest `k` with `[B, AB, ..., A^{k-1} B]` of full row rank.
pub fn controllability_index(system: &LinearSystem) -> Result<usize> {
    let n = system.state_dim();
    let m = system.input_dim();
    let tol = 1e-9 * system.kappa_b.max(1.0);
    let mut blocks: Vec<DMatrix<f64>> = Vec::with_capacity(n);
    let mut current = system.b.clone();
    for k in 1..=n {
        blocks.push(current.clone());
        let mut c = DMatrix::zeros(n, k * m);
        for (j, b) in blocks.iter().enumerate() {
            c.view_mut((0, j * m), (n, m)).copy_from(b);
        }
        if c.rank(tol) == n {
            return Ok(k);
        }
        current = &system.a * current;
    }
    Err(Error::Contract("system is not controllable".into()))
}

/// `N_j = (1 / (T_0 - k)) sum_{t=0}^{T_0-k-1} x_{t+j+1} u~_t^T` for `j = 0..=k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimates {
    pub n: Vec<DMatrix<f64>>,
}

/// Estimated system with exploration metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentifiedSystem {
    pub a_hat: DMatrix<f64>,
    pub b_hat: DMatrix<f64>,
    pub a_k_hat: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub explore_rounds: usize,
    pub k_index: usize,
    /// Whether the Gram matrix needed the small ridge.
    pub ridge_used: bool,
    pub gram_condition: f64,
    /// Analysis-only quantities, carried for reports.
    pub epsilon_w: Option<f64>,
    pub w0: Option<f64>,
    pub kappa_c: Option<f64>,
}

impl IdentifiedSystem {
    /// Wrap known matrices, as if identification were perfect.
    pub fn exact(system: &LinearSystem, k: &DMatrix<f64>) -> Self {
        Self {
            a_hat: system.a.clone(),
            b_hat: system.b.clone(),
            a_k_hat: &system.a - &system.b * k,
            k: k.clone(),
            explore_rounds: 0,
            k_index: 0,
            ridge_used: false,
            gram_condition: 1.0,
            epsilon_w: None,
            w0: None,
            kappa_c: None,
        }
    }

    pub fn as_system(&self, w_bound: f64) -> Result<LinearSystem> {
        LinearSystem::new(self.a_hat.clone(), self.b_hat.clone(), w_bound)
    }

    /// `||A^ - (A^_K + B^ K)||_F`.
    pub fn reconstruction_residual(&self) -> f64 {
        (&self.a_hat - (&self.a_k_hat + &self.b_hat * &self.k)).norm()
    }
}

/// Exploration record: states, actions, Rademacher inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Exploration {
    pub trajectory: Trajectory,
    pub probes: Vec<DVector<f64>>,
}

/// Play `u_t = -K x_t + u~_t` with `u~_t` uniform on `{+-1}^{d_u}` for `T_0` rounds.
pub fn explore<S: CostSequence>(
    plant: &LinearSystem,
    config: &IdentificationConfig,
    x0: DVector<f64>,
    disturbances: &[DVector<f64>],
    costs: Option<&S>,
    seed: u64,
) -> Result<Exploration> {
    ensure(disturbances.len() >= config.explore_rounds, || {
        format!("need {} disturbances, got {}", config.explore_rounds, disturbances.len())
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let du = plant.input_dim();
    let mut traj = Trajectory::start(x0);
    let mut probes = Vec::with_capacity(config.explore_rounds);
    for (t, w) in disturbances.iter().take(config.explore_rounds).enumerate() {
        let x = traj.states.last().expect("non-empty").clone();
        let probe = DVector::from_fn(du, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 });
        let u = -(&config.k * &x) + &probe;
        let c = costs.map_or(0.0, |s| s.cost(t).eval(&x, &u));
        let next = step_dynamics(plant, &x, &u, w)?;
        traj.actions.push(u);
        traj.disturbances.push(w.clone());
        traj.costs.push(c);
        traj.states.push(next);
        probes.push(probe);
    }
    Ok(Exploration { trajectory: traj, probes })
}

/// Moments and least-squares recovery from an exploration record.
pub fn estimate_from_exploration(exploration: &Exploration, config: &IdentificationConfig) -> Result<(IdentifiedSystem, MomentEstimates)> {
    let t0 = config.explore_rounds;
    let k = config.k_index;
    let xs = &exploration.trajectory.states;
    let us = &exploration.probes;
    let (dx, du) = (xs[0].len(), us[0].len());
    let scale = 1.0 / (t0 - k) as f64;
    let mut n = Vec::with_capacity(k + 1);
    for j in 0..=k {
        let mut acc = DMatrix::zeros(dx, du);
        for t in 0..(t0 - k) {
            acc += &xs[t + j + 1] * us[t].transpose();
        }
        n.push(acc * scale);
    }
    if n.iter().any(|m| !all_finite_mat(m)) {
        return Err(Error::Numerical("moment estimates are not finite".into()));
    }
    let mut c0 = DMatrix::zeros(dx, k * du);
    let mut c1 = DMatrix::zeros(dx, k * du);
    for j in 0..k {
        c0.view_mut((0, j * du), (dx, du)).copy_from(&n[j]);
        c1.view_mut((0, j * du), (dx, du)).copy_from(&n[j + 1]);
    }
    let mut gram = &c0 * c0.transpose();
    let cond = condition_number(&gram);
    let mut ridge_used = false;
    if !cond.is_finite() || cond > 1e15 {
        return Err(Error::InsufficientExcitation(format!(
            "Gram matrix condition number {cond:e}; increase T_0 or k"
        )));
    }
    if cond > 1e12 {
        gram += DMatrix::identity(dx, dx) * 1e-10;
        ridge_used = true;
    }
    let rhs = &c0 * c1.transpose();
    let solved = gram
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InsufficientExcitation("Gram matrix is singular; increase T_0 or k".into()))?;
    let a_k_hat = solved.transpose();
    let b_hat = n[0].clone();
    let a_hat = &a_k_hat + &b_hat * &config.k;
    Ok((
        IdentifiedSystem {
            a_hat,
            b_hat,
            a_k_hat,
            k: config.k.clone(),
            explore_rounds: t0,
            k_index: k,
            ridge_used,
            gram_condition: cond,
            epsilon_w: None,
            w0: None,
            kappa_c: None,
        },
        MomentEstimates { n },
    ))
}

/// Explore, then estimate.
pub fn identify_system(
    plant: &LinearSystem,
    config: &IdentificationConfig,
    disturbances: &[DVector<f64>],
    seed: u64,
) -> Result<(IdentifiedSystem, MomentEstimates)> {
    let exploration = explore::<Vec<crate::dac::QuadraticTrackingCost>>(
        plant,
        config,
        DVector::zeros(plant.state_dim()),
        disturbances,
        None,
        seed,
    )?;
    estimate_from_exploration(&exploration, config)
}

/// Errors of an identification, for JSON reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentificationReport {
    pub explore_rounds: usize,
    pub k_index: usize,
    pub a_error_fro: f64,
    pub b_error_fro: f64,
    /// `||N_j - A_K^j B||_F` for `j = 0..=k`.
    pub moment_errors: Vec<f64>,
    pub ridge_used: bool,
}

pub fn identification_report(truth: &LinearSystem, id: &IdentifiedSystem, moments: &MomentEstimates) -> IdentificationReport {
    let a_k = &truth.a - &truth.b * &id.k;
    let pw = powers(&a_k, moments.n.len());
    IdentificationReport {
        explore_rounds: id.explore_rounds,
        k_index: id.k_index,
        a_error_fro: (&id.a_hat - &truth.a).norm(),
        b_error_fro: (&id.b_hat - &truth.b).norm(),
        moment_errors: moments.n.iter().enumerate().map(|(j, nj)| (nj - &pw[j] * &truth.b).norm()).collect(),
        ridge_used: id.ridge_used,
    }
}

/// Whether phase 2 uses the estimate or an injected model.
#[derive(Debug, Clone, PartialEq)]
pub enum IdentificationMode {
    Estimate,
    Inject(IdentifiedSystem),
}

/// Both phases of the explore-then-commit run.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub identified: IdentifiedSystem,
    pub moments: Option<MomentEstimates>,
    pub exploration: Exploration,
    pub control_config: ControlConfig,
    pub control: ControlRun,
    pub exploration_cost: f64,
    pub control_cost: f64,
}

impl PipelineRun {
    pub fn total_cost(&self) -> f64 {
        self.exploration_cost + self.control_cost
    }
}

/// Phase 1 explores `T_0` rounds on the plant; phase 2 runs the controller for
/// the remaining `T - T_0` rounds with disturbances recovered through the
/// model, while the costs accrue on the plant. `settings.horizon` is the total `T`.
#[allow(clippy::too_many_arguments)]
pub fn run_unknown_pipeline<S: CostSequence>(
    plant: &LinearSystem,
    id_config: &IdentificationConfig,
    mode: IdentificationMode,
    settings: ControlSettings,
    kind: &ControllerKind,
    disturbances: &[DVector<f64>],
    costs: &S,
    seed: u64,
) -> Result<PipelineRun> {
    let horizon = settings.horizon;
    let t0 = id_config.explore_rounds;
    ensure(t0 < horizon, || format!("T_0 = {t0} must be below T = {horizon}"))?;
    ensure(disturbances.len() == horizon, || format!("{} disturbances for T = {horizon}", disturbances.len()))?;
    let exploration = explore(plant, id_config, DVector::zeros(plant.state_dim()), disturbances, Some(costs), seed)?;
    let (identified, moments) = match mode {
        IdentificationMode::Estimate => {
            let (id, m) = estimate_from_exploration(&exploration, id_config)?;
            (id, Some(m))
        }
        IdentificationMode::Inject(id) => (id, None),
    };
    let model = identified.as_system(plant.w_bound)?;
    let certificate = certify_minimal(&model, &id_config.k)?;
    let phase_settings = ControlSettings { horizon: horizon - t0, ..settings };
    let control_config = ControlConfig::new(&model, &certificate, phase_settings)?;
    let x_start = exploration.trajectory.states.last().expect("non-empty").clone();
    let control = run_control_with_model(&control_config, kind, &model, plant, x_start, &disturbances[t0..], costs, t0)?;
    let exploration_cost = exploration.trajectory.total_cost();
    let control_cost = control.total_cost();
    Ok(PipelineRun { identified, moments, exploration, control_config, control, exploration_cost, control_cost })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lds::preset;

    #[test]
    fn scalar_moments_approach_powers() {
        let sc = preset("scalar", 1.0).unwrap();
        let cfg = IdentificationConfig::new(20000, 2, DMatrix::zeros(1, 1)).unwrap();
        let w = vec![DVector::zeros(1); 20000];
        let (id, moments) = identify_system(&sc.system, &cfg, &w, 3).unwrap();
        for (j, nj) in moments.n.iter().enumerate() {
            assert!((nj[(0, 0)] - 0.5f64.powi(j as i32)).abs() < 0.05, "N_{j} = {}", nj[(0, 0)]);
        }
        assert!(id.reconstruction_residual() < 1e-12);
        assert!((id.a_hat[(0, 0)] - 0.5).abs() < 0.05);
    }

    #[test]
    fn index_of_presets() {
        assert_eq!(controllability_index(&preset("scalar", 1.0).unwrap().system).unwrap(), 1);
        assert_eq!(controllability_index(&preset("stable3x2", 1.0).unwrap().system).unwrap(), 2);
    }

    #[test]
    fn uncontrollable_input_is_reported() {
        let sys = LinearSystem::new(DMatrix::identity(2, 2) * 0.5, DMatrix::from_row_slice(2, 1, &[1.0, 0.0]), 1.0).unwrap();
        assert!(controllability_index(&sys).is_err());
        let cfg = IdentificationConfig::new(200, 2, DMatrix::zeros(1, 2)).unwrap();
        let r = identify_system(&sys, &cfg, &vec![DVector::zeros(2); 200], 1);
        assert!(matches!(r, Err(Error::InsufficientExcitation(_))), "{r:?}");
    }

    #[test]
    fn config_requires_t0_above_k() {
        assert!(IdentificationConfig::new(2, 2, DMatrix::zeros(1, 1)).is_err());
    }
}
