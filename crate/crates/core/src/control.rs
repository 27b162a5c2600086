//! Scream.Control: meta-expert aggregation over DAC parameters for a linear
//! system with adversarial disturbances, plus counterfactual regret and
//! offline comparators.
//!
//! Rounds are 0-based here: round `t` observes `x_t`, plays `u_t`, pays
//! `c_t(x_t, u_t)` and then recovers `w_t`. The first `H` rounds are a warm-up
//! that plays the initial parameters (zero, so `u = -K x`) without learning.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dac::{
    dac_action, lipschitz_constants, project_to_dac_set, truncated_point, unary_truncated_gradient, ClosedLoop,
    ConstantInputs, ControlCost, DacFeasibleSet, DacParams, DisturbanceWindow, LipschitzConstants,
    QuadraticTrackingCost,
};
use crate::error::{ensure, Error, Result};
use crate::lds::{recover_disturbance, step_dynamics, LinearSystem, StabilityCertificate, Trajectory};
use crate::linalg::op_norm;
use crate::oco::RegretReport;
use crate::scream::{build_step_size_pool, nonuniform_prior, scream_meta_rate, MetaAggregator, MetaStep, StepSizePool};

/// Cost functions revealed round by round.
pub trait CostSequence {
    type Cost: ControlCost;
    fn cost(&self, t: usize) -> Self::Cost;
}

/// Quadratic tracking `||x - x*_t||^2 + r ||u||^2` with a scheduled target.
#[derive(Debug, Clone, PartialEq)]
pub enum TrackingSchedule {
    /// `targets.len()` equal segments over `horizon` rounds.
    Piecewise { targets: Vec<DVector<f64>>, horizon: usize, r: f64 },
    /// `x*_t = amplitude * sin(2 pi t / period) * direction`.
    Sinusoidal { direction: DVector<f64>, amplitude: f64, period: f64, r: f64 },
}

impl TrackingSchedule {
    pub fn piecewise(targets: Vec<DVector<f64>>, horizon: usize, r: f64) -> Result<Self> {
        ensure(!targets.is_empty() && targets.len() <= horizon.max(1), || "need between 1 and T targets".into())?;
        Ok(Self::Piecewise { targets, horizon, r })
    }

    pub fn segment_of(&self, t: usize) -> usize {
        match self {
            Self::Piecewise { targets, horizon, .. } => (t * targets.len() / (*horizon).max(1)).min(targets.len() - 1),
            Self::Sinusoidal { .. } => 0,
        }
    }

    /// `[start, end)` round ranges of the segments.
    pub fn segments(&self, horizon: usize) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = Vec::new();
        for t in 0..horizon {
            let s = self.segment_of(t);
            if out.len() == s + 1 {
                out[s].1 = t + 1;
            } else {
                out.push((t, t + 1));
            }
        }
        out
    }

    pub fn target_bound(&self) -> f64 {
        match self {
            Self::Piecewise { targets, .. } => targets.iter().map(|x| x.norm()).fold(0.0, f64::max),
            Self::Sinusoidal { direction, amplitude, .. } => amplitude * direction.norm(),
        }
    }

    pub fn r(&self) -> f64 {
        match self {
            Self::Piecewise { r, .. } | Self::Sinusoidal { r, .. } => *r,
        }
    }
}

impl CostSequence for TrackingSchedule {
    type Cost = QuadraticTrackingCost;

    fn cost(&self, t: usize) -> QuadraticTrackingCost {
        match self {
            Self::Piecewise { targets, r, .. } => QuadraticTrackingCost::new(targets[self.segment_of(t)].clone(), *r),
            Self::Sinusoidal { direction, amplitude, period, r } => {
                let s = (std::f64::consts::TAU * t as f64 / period).sin();
                QuadraticTrackingCost::new(direction * (amplitude * s), *r)
            }
        }
    }
}

impl<C: ControlCost + Clone> CostSequence for Vec<C> {
    type Cost = C;

    fn cost(&self, t: usize) -> C {
        self[t].clone()
    }
}

/// Gradient constant `G_c` of the cost family, possibly depending on the state bound `D`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostScale {
    Fixed(f64),
    /// Quadratic tracking: `G_c = max(2 (1 + target_bound / D), 2 r)`.
    Tracking { target_bound: f64, r: f64 },
}

/// User-facing knobs; everything else is derived.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlSettings {
    pub horizon: usize,
    /// Truncation length; defaults to `ceil(log_{1/(1-gamma)} T)`.
    pub h: Option<usize>,
    pub cost_scale: CostScale,
    /// Scales the theoretical `lambda = (H + 2)^2 L_f`.
    pub lambda_multiplier: f64,
}

impl ControlSettings {
    pub fn new(horizon: usize, cost_scale: CostScale) -> Self {
        Self { horizon, h: None, cost_scale, lambda_multiplier: 1.0 }
    }
}

/// `ceil(ln T / -ln(1 - gamma))`, at least 1.
pub fn default_memory(horizon: usize, gamma: f64) -> usize {
    let h = ((horizon.max(2) as f64).ln() / -(1.0 - gamma).ln()).ceil();
    (h as usize).max(1)
}

/// Fully derived controller tuning.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlConfig {
    pub horizon: usize,
    pub h: usize,
    #[serde(skip)]
    pub k: DMatrix<f64>,
    pub kappa: f64,
    pub gamma: f64,
    pub kappa_b: f64,
    pub w_bound: f64,
    pub g_c: f64,
    pub constants: LipschitzConstants,
    pub lambda_theory: f64,
    pub lambda_multiplier: f64,
    /// Effective switching weight `lambda_multiplier * lambda_theory`.
    pub lambda: f64,
    pub step_sizes: Vec<f64>,
    pub meta_rate: f64,
    #[serde(skip)]
    pub feasible: DacFeasibleSet,
}

/// Pool `eta_i = 2^(i-1) sqrt(D_f^2 / ((lambda G_f + G_f^2) T))` and meta rate
/// `sqrt(2 / ((2 lambda + G_f)(lambda + G_f) D_f^2 T))`.
pub fn control_pool(constants: &LipschitzConstants, horizon: usize, lambda: f64) -> Result<(StepSizePool, f64)> {
    let pool = build_step_size_pool(horizon, constants.d_f, constants.g_f, lambda)?;
    Ok((pool, scream_meta_rate(horizon, constants.d_f, constants.g_f, lambda)))
}

impl ControlConfig {
    pub fn new(system: &LinearSystem, certificate: &StabilityCertificate, settings: ControlSettings) -> Result<Self> {
        ensure(settings.horizon > 0, || "horizon must be positive".into())?;
        ensure(settings.lambda_multiplier >= 0.0, || "lambda multiplier must be non-negative".into())?;
        let (kappa, gamma) = (certificate.kappa, certificate.gamma);
        let h = settings.h.unwrap_or_else(|| default_memory(settings.horizon, gamma));
        let mut inputs = ConstantInputs {
            kappa_b: system.kappa_b.max(f64::MIN_POSITIVE),
            kappa,
            gamma,
            h,
            g_c: 1.0,
            w: system.w_bound,
            du: system.input_dim(),
            dx: system.state_dim(),
        };
        let probe = lipschitz_constants(&inputs)?;
        inputs.g_c = match settings.cost_scale {
            CostScale::Fixed(g) => g,
            CostScale::Tracking { target_bound, r } => (2.0 * (1.0 + target_bound / probe.d)).max(2.0 * r),
        };
        let constants = lipschitz_constants(&inputs)?;
        let lambda = settings.lambda_multiplier * constants.lambda;
        log::info!("theoretical lambda {:.4e}, effective {:.4e}", constants.lambda, lambda);
        let (pool, meta_rate) = control_pool(&constants, settings.horizon, lambda)?;
        Ok(Self {
            horizon: settings.horizon,
            h,
            k: certificate.k.clone(),
            kappa,
            gamma,
            kappa_b: inputs.kappa_b,
            w_bound: system.w_bound,
            g_c: inputs.g_c,
            constants,
            lambda_theory: constants.lambda,
            lambda_multiplier: settings.lambda_multiplier,
            lambda,
            step_sizes: pool.sizes().to_vec(),
            meta_rate,
            feasible: DacFeasibleSet::new(inputs.kappa_b, kappa, gamma, h)?,
        })
    }

    pub fn pool(&self) -> StepSizePool {
        StepSizePool::geometric(self.step_sizes[0], self.step_sizes.len()).expect("pool built at construction")
    }
}

/// Which learner drives the DAC parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum ControllerKind {
    /// Meta-expert aggregation with the configured pool and prior.
    Scream,
    /// Single projected-OGD learner with the given step size.
    Ogd { step: f64 },
}

/// Learner state: experts, meta weights and the disturbance window.
#[derive(Debug, Clone)]
pub struct ControllerState {
    meta: MetaAggregator,
    window: DisturbanceWindow,
    h: usize,
    du: usize,
    dx: usize,
    round: usize,
    gradient_evaluations: usize,
}

impl ControllerState {
    pub fn new(config: &ControlConfig, kind: &ControllerKind, du: usize, dx: usize) -> Result<Self> {
        let start = DacParams::zeros(config.h, du, dx).to_vector();
        let meta = match kind {
            ControllerKind::Scream => {
                let pool = config.pool();
                MetaAggregator::new(start, &pool, &nonuniform_prior(pool.len()), config.meta_rate, config.lambda)?
            }
            ControllerKind::Ogd { step } => {
                let pool = StepSizePool::geometric(*step, 1)?;
                MetaAggregator::new(start, &pool, &DVector::from_element(1, 1.0), 0.0, 0.0)?
            }
        };
        Ok(Self {
            meta,
            window: DisturbanceWindow::for_memory(config.h, dx),
            h: config.h,
            du,
            dx,
            round: 0,
            gradient_evaluations: 0,
        })
    }

    /// Aggregated parameters `M_t = sum_i p_i M_{t,i}`.
    pub fn params(&self) -> DacParams {
        DacParams::from_vector(&self.meta.aggregate(), self.h, self.du, self.dx).expect("consistent shapes")
    }

    pub fn expert_params(&self) -> Vec<DacParams> {
        self.meta
            .experts()
            .iter()
            .map(|v| DacParams::from_vector(v, self.h, self.du, self.dx).expect("consistent shapes"))
            .collect()
    }

    pub fn weights(&self) -> DVector<f64> {
        self.meta.weights()
    }

    pub fn window(&self) -> &DisturbanceWindow {
        &self.window
    }

    pub fn gradient_evaluations(&self) -> usize {
        self.gradient_evaluations
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn is_learning(&self) -> bool {
        self.round >= self.h
    }
}

/// Metrics of one controller round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlRecord {
    pub t: usize,
    pub cost: f64,
    pub state_norm: f64,
    pub action_norm: f64,
    pub params_norm: f64,
    pub meta_entropy: f64,
    pub meta_movement: f64,
    pub surrogate_sup: f64,
}

/// Result of one round.
#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub params: DacParams,
    pub action: DVector<f64>,
    pub cost: f64,
    pub next_state: DVector<f64>,
    pub recovered: DVector<f64>,
    pub meta_step: Option<MetaStep>,
}

/// Model-side pieces: the system used for disturbance recovery and truncated losses.
#[derive(Debug, Clone)]
pub struct ControlModel {
    pub system: LinearSystem,
    pub closed_loop: ClosedLoop,
}

impl ControlModel {
    pub fn new(system: &LinearSystem, config: &ControlConfig) -> Result<Self> {
        Ok(Self { system: system.clone(), closed_loop: ClosedLoop::new(system, &config.k, config.h)? })
    }
}

/// One round: aggregate, act, pay, take the single gradient, update experts,
/// step the plant and recover the disturbance with the model.
#[allow(clippy::too_many_arguments)]
pub fn scream_control_round<C: ControlCost + ?Sized>(
    state: &mut ControllerState,
    config: &ControlConfig,
    model: &ControlModel,
    plant: &LinearSystem,
    x: &DVector<f64>,
    cost: &C,
    disturbance: &DVector<f64>,
) -> Result<RoundOutcome> {
    let params = state.params();
    let action = dac_action(&config.k, &params, x, &state.window)?;
    let cost_value = cost.eval(x, &action);
    if !cost_value.is_finite() {
        return Err(Error::Numerical(format!("cost at round {} is not finite", state.round)));
    }
    let meta_step = if state.is_learning() {
        let grad = unary_truncated_gradient(cost, &model.closed_loop, &params, &state.window)?;
        state.gradient_evaluations += 1;
        let (h, du, dx) = (state.h, state.du, state.dx);
        let set = &config.feasible;
        let step = state.meta.update(&grad.to_vector(), |v| {
            let m = DacParams::from_vector(v, h, du, dx).expect("consistent shapes");
            project_to_dac_set(&m, set).expect("matching H").to_vector()
        })?;
        for (i, e) in state.expert_params().iter().enumerate() {
            if !set.contains(e, 1e-9) {
                return Err(Error::Invariant(format!("expert {i} left the feasible set at round {}", state.round)));
            }
        }
        Some(step)
    } else {
        None
    };
    let next_state = step_dynamics(plant, x, &action, disturbance)?;
    let recovered = recover_disturbance(&model.system, &next_state, x, &action)?;
    state.window.push(recovered.clone())?;
    state.round += 1;
    Ok(RoundOutcome { params, action, cost: cost_value, next_state, recovered, meta_step })
}

/// Closed-loop run of a learner.
#[derive(Debug, Clone)]
pub struct ControlRun {
    pub trajectory: Trajectory,
    /// `M_t` played at each round.
    pub params: Vec<DacParams>,
    pub records: Vec<ControlRecord>,
    pub recovered: Vec<DVector<f64>>,
    pub gradient_evaluations: usize,
}

impl ControlRun {
    pub fn total_cost(&self) -> f64 {
        self.trajectory.total_cost()
    }

    pub fn params_movement(&self) -> f64 {
        self.params.windows(2).map(|p| p[1].distance(&p[0])).sum()
    }
}

fn entropy(p: &DVector<f64>) -> f64 {
    -p.iter().filter(|x| **x > 0.0).map(|x| x * x.ln()).sum::<f64>()
}

/// Run a learner against `plant`, recovering disturbances through `model`.
#[allow(clippy::too_many_arguments)]
pub fn run_control_with_model<S: CostSequence>(
    config: &ControlConfig,
    kind: &ControllerKind,
    model: &LinearSystem,
    plant: &LinearSystem,
    x0: DVector<f64>,
    disturbances: &[DVector<f64>],
    costs: &S,
    start_round: usize,
) -> Result<ControlRun> {
    ensure(x0.len() == plant.state_dim(), || "initial state has wrong dimension".into())?;
    ensure(model.state_dim() == plant.state_dim() && model.input_dim() == plant.input_dim(), || {
        "model and plant dimensions differ".into()
    })?;
    let cm = ControlModel::new(model, config)?;
    let mut state = ControllerState::new(config, kind, plant.input_dim(), plant.state_dim())?;
    let mut traj = Trajectory::start(x0);
    let mut params = Vec::with_capacity(disturbances.len());
    let mut records = Vec::with_capacity(disturbances.len());
    let mut recovered = Vec::with_capacity(disturbances.len());
    for (i, w) in disturbances.iter().enumerate() {
        let t = start_round + i;
        let x = traj.states.last().expect("non-empty").clone();
        let cost = costs.cost(t);
        let out = scream_control_round(&mut state, config, &cm, plant, &x, &cost, w)?;
        records.push(ControlRecord {
            t,
            cost: out.cost,
            state_norm: x.norm(),
            action_norm: out.action.norm(),
            params_norm: out.params.fro_norm(),
            meta_entropy: entropy(&state.weights()),
            meta_movement: out.meta_step.as_ref().map_or(0.0, |s| s.weight_movement()),
            surrogate_sup: out.meta_step.as_ref().map_or(0.0, |s| s.surrogate_sup()),
        });
        traj.actions.push(out.action);
        traj.disturbances.push(w.clone());
        traj.costs.push(out.cost);
        traj.states.push(out.next_state);
        params.push(out.params);
        recovered.push(out.recovered);
    }
    Ok(ControlRun { trajectory: traj, params, records, recovered, gradient_evaluations: state.gradient_evaluations })
}

/// Run a learner on a known system.
pub fn run_control<S: CostSequence>(
    config: &ControlConfig,
    kind: &ControllerKind,
    system: &LinearSystem,
    x0: DVector<f64>,
    disturbances: &[DVector<f64>],
    costs: &S,
) -> Result<ControlRun> {
    run_control_with_model(config, kind, system, system, x0, disturbances, costs, 0)
}

/// Counterfactual closed loop under the policy sequence `policies` with the
/// recorded disturbances; returns the trajectory with per-round costs.
pub fn replay_policies<S: CostSequence>(
    system: &LinearSystem,
    k: &DMatrix<f64>,
    x0: DVector<f64>,
    disturbances: &[DVector<f64>],
    costs: &S,
    policies: &[DacParams],
    start_round: usize,
) -> Result<Trajectory> {
    ensure(policies.len() == disturbances.len(), || {
        format!("{} policies for {} disturbances", policies.len(), disturbances.len())
    })?;
    let h = policies.first().map_or(1, |m| m.h());
    let mut window = DisturbanceWindow::with_capacity(h, system.state_dim());
    let mut traj = Trajectory::start(x0);
    for (i, (m, w)) in policies.iter().zip(disturbances).enumerate() {
        let x = traj.states.last().expect("non-empty").clone();
        let u = dac_action(k, m, &x, &window)?;
        let c = costs.cost(start_round + i).eval(&x, &u);
        let next = step_dynamics(system, &x, &u, w)?;
        window.push(w.clone())?;
        traj.actions.push(u);
        traj.disturbances.push(w.clone());
        traj.costs.push(c);
        traj.states.push(next);
    }
    Ok(traj)
}

/// `J_T(algorithm) - J_T(pi_1..pi_T)` by replaying the comparators on the same
/// disturbances. Path length is `sum ||M_{t-1} - M_t||_F` of the comparators,
/// switching cost is `lambda` times the algorithm's parameter movement, and
/// the static regret uses the best distinct comparator played throughout.
#[allow(clippy::too_many_arguments)]
pub fn dynamic_policy_regret_control<S: CostSequence>(
    system: &LinearSystem,
    k: &DMatrix<f64>,
    x0: DVector<f64>,
    disturbances: &[DVector<f64>],
    costs: &S,
    run: &ControlRun,
    comparators: &[DacParams],
    lambda: f64,
) -> Result<RegretReport> {
    if disturbances.len() != run.params.len() {
        return Err(Error::Contract(format!(
            "{} recorded disturbances for a run of {} rounds",
            disturbances.len(),
            run.params.len()
        )));
    }
    let cumulative_loss = run.total_cost();
    let comparator_loss = replay_policies(system, k, x0.clone(), disturbances, costs, comparators, 0)?.total_cost();
    let mut distinct: Vec<&DacParams> = Vec::new();
    for m in comparators {
        if !distinct.contains(&m) {
            distinct.push(m);
        }
    }
    let mut best = f64::INFINITY;
    for m in distinct {
        let fixed = vec![m.clone(); comparators.len()];
        best = best.min(replay_policies(system, k, x0.clone(), disturbances, costs, &fixed, 0)?.total_cost());
    }
    let movement = run.params_movement();
    Ok(RegretReport {
        cumulative_loss,
        switching_cost: lambda * movement,
        movement,
        comparator_loss,
        dynamic_policy_regret: cumulative_loss - comparator_loss,
        static_policy_regret: if best.is_finite() { cumulative_loss - best } else { cumulative_loss },
        path_length: comparators.windows(2).map(|p| p[1].distance(&p[0])).sum(),
    })
}

/// Affine maps of the unary truncated state and action: `y = c_y + Phi m`, `v = c_v + Xi m`,
/// with `m` the stacked parameter vector.
#[derive(Debug, Clone)]
pub struct AffineTruncation {
    pub c_y: DVector<f64>,
    pub phi: DMatrix<f64>,
    pub c_v: DVector<f64>,
    pub xi: DMatrix<f64>,
}

pub fn affine_truncation(cl: &ClosedLoop, h: usize, window: &DisturbanceWindow) -> Result<AffineTruncation> {
    let (du, dx) = (cl.input_dim(), cl.state_dim());
    let zero = DacParams::zeros(h, du, dx);
    let (c_y, c_v) = truncated_point(cl, &vec![zero; h + 2], window)?;
    let size = du * dx;
    let mut phi = DMatrix::zeros(dx, h * size);
    let mut xi_direct = DMatrix::zeros(du, h * size);
    let eye_u = DMatrix::<f64>::identity(du, du);
    for k in 1..=h {
        let mut block = DMatrix::zeros(dx, size);
        for j in 0..=h {
            block += window.lag(1 + j + k).transpose().kronecker(cl.power_b(j));
        }
        phi.view_mut((0, (k - 1) * size), (dx, size)).copy_from(&block);
        xi_direct
            .view_mut((0, (k - 1) * size), (du, size))
            .copy_from(&window.lag(k).transpose().kronecker(&eye_u));
    }
    let xi = xi_direct - &cl.k * &phi;
    Ok(AffineTruncation { c_y, phi, c_v, xi })
}

/// Minimise `m^T Q m + 2 b^T m` over the feasible set by accelerated projected gradient.
fn minimise_quadratic(q: &DMatrix<f64>, b: &DVector<f64>, h: usize, du: usize, dx: usize, set: &DacFeasibleSet, iterations: usize) -> DVector<f64> {
    let p = b.len();
    let lip = 2.0 * op_norm(q);
    if lip <= 0.0 {
        return DVector::zeros(p);
    }
    let project = |v: &DVector<f64>| -> DVector<f64> {
        let m = DacParams::from_vector(v, h, du, dx).expect("consistent shapes");
        project_to_dac_set(&m, set).expect("matching H").to_vector()
    };
    let mut x = DVector::zeros(p);
    let mut yk = x.clone();
    let mut tk = 1.0f64;
    for _ in 0..iterations {
        let grad = (q * &yk + b) * 2.0;
        let next = project(&(&yk - grad / lip));
        let tn = (1.0 + (1.0 + 4.0 * tk * tk).sqrt()) / 2.0;
        yk = &next + (&next - &x) * ((tk - 1.0) / tn);
        x = next;
        tk = tn;
    }
    x
}

/// Segment-wise best fixed DAC for quadratic tracking costs on the exact closed
/// loop. Segments are fitted in order: the state entering a segment is the one
/// produced by the comparators already chosen, and inside the segment the
/// state is affine in the parameters, so each fit is a constrained quadratic
/// solved by accelerated projected gradient. Returns one comparator per round.
#[allow(clippy::too_many_arguments)]
pub fn fit_segment_comparators<S>(
    system: &LinearSystem,
    k: &DMatrix<f64>,
    h: usize,
    x0: DVector<f64>,
    disturbances: &[DVector<f64>],
    costs: &S,
    segments: &[(usize, usize)],
    set: &DacFeasibleSet,
    iterations: usize,
) -> Result<Vec<DacParams>>
where
    S: CostSequence<Cost = QuadraticTrackingCost>,
{
    let (du, dx) = (system.input_dim(), system.state_dim());
    let p = h * du * dx;
    let a_k = system.closed_loop(k)?;
    let eye_u = DMatrix::<f64>::identity(du, du);
    let mut window = DisturbanceWindow::with_capacity(h, dx);
    let mut x = x0;
    let mut out = Vec::with_capacity(disturbances.len());
    let mut expected = 0;
    for &(start, end) in segments {
        ensure(start == expected && end <= disturbances.len() && start < end, || {
            "segments must tile the horizon in order".into()
        })?;
        expected = end;
        let (mut c, mut jac) = (x.clone(), DMatrix::<f64>::zeros(dx, p));
        let mut win = window.clone();
        let (mut q, mut b) = (DMatrix::<f64>::zeros(p, p), DVector::<f64>::zeros(p));
        for (t, w) in disturbances.iter().enumerate().take(end).skip(start) {
            let cost = costs.cost(t);
            let mut direct = DMatrix::zeros(du, p);
            for i in 1..=h {
                direct.view_mut((0, (i - 1) * du * dx), (du, du * dx)).copy_from(&win.lag(i).transpose().kronecker(&eye_u));
            }
            let ju = direct - k * &jac;
            let cu = -(k * &c);
            q += jac.transpose() * &jac + ju.transpose() * &ju * cost.r;
            b += jac.transpose() * (&c - &cost.target) + ju.transpose() * &cu * cost.r;
            c = &a_k * &c + &system.b * &cu + w;
            jac = &a_k * &jac + &system.b * &ju;
            win.push(w.clone())?;
        }
        let m = minimise_quadratic(&q, &b, h, du, dx, set, iterations);
        x = &c + &jac * &m;
        window = win;
        let params = DacParams::from_vector(&m, h, du, dx)?;
        out.extend(std::iter::repeat_n(params, end - start));
    }
    ensure(out.len() == disturbances.len(), || "segments must cover the horizon".into())?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dac::unary_truncated_loss;
    use crate::lds::{preset, DisturbanceGenerator, DisturbanceKind};
    use nalgebra::dvector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(h: usize, horizon: usize) -> (LinearSystem, ControlConfig) {
        let sc = preset("stable3x2", 0.2).unwrap();
        let mut settings = ControlSettings::new(horizon, CostScale::Tracking { target_bound: 1.0, r: 0.1 });
        settings.h = Some(h);
        let cfg = ControlConfig::new(&sc.system, &sc.certificate, settings).unwrap();
        (sc.system, cfg)
    }

    #[test]
    fn pool_matches_oco_pool_scaled() {
        let c = LipschitzConstants { d: 1.0, l_f: 1.0, g_f: 1.0, d_f: 1.0, lambda: 0.0, tau: 1.0 };
        let (pool, _) = control_pool(&c, 100, 0.0).unwrap();
        let oco = build_step_size_pool(100, 2.0, 1.0, 0.0).unwrap();
        for (a, b) in pool.sizes().iter().zip(oco.sizes()) {
            assert!((2.0 * a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_multiplier_gives_memoryless_pool() {
        let (sys, _) = setup(2, 50);
        let sc = preset("stable3x2", 0.2).unwrap();
        let mut s = ControlSettings::new(50, CostScale::Fixed(1.0));
        s.h = Some(2);
        s.lambda_multiplier = 0.0;
        let cfg = ControlConfig::new(&sys, &sc.certificate, s).unwrap();
        let expect = build_step_size_pool(50, cfg.constants.d_f, cfg.constants.g_f, 0.0).unwrap();
        assert_eq!(cfg.step_sizes, expect.sizes());
    }

    #[test]
    fn zero_disturbances_keep_params_at_zero() {
        let (sys, cfg) = setup(2, 40);
        let w = vec![DVector::zeros(3); 40];
        let costs = vec![QuadraticTrackingCost::new(dvector![1.0, 0.0, 0.0], 0.1); 40];
        let run = run_control(&cfg, &ControllerKind::Scream, &sys, DVector::zeros(3), &w, &costs).unwrap();
        for m in &run.params {
            assert_eq!(m.fro_norm(), 0.0);
        }
        assert_eq!(run.gradient_evaluations, 40 - 2);
    }

    #[test]
    fn self_comparison_has_zero_regret() {
        let (sys, cfg) = setup(2, 60);
        let mut g = DisturbanceGenerator::new(DisturbanceKind::UniformBall, 3, 0.2, 0.2, 4).unwrap();
        let w = g.take_sequence(60);
        let costs = TrackingSchedule::piecewise(vec![dvector![1.0, 0.0, 0.0], dvector![0.0, -1.0, 0.0]], 60, 0.1).unwrap();
        let run = run_control(&cfg, &ControllerKind::Scream, &sys, DVector::zeros(3), &w, &costs).unwrap();
        let rep = dynamic_policy_regret_control(&sys, &cfg.k, DVector::zeros(3), &w, &costs, &run, &run.params, cfg.lambda).unwrap();
        assert!(rep.dynamic_policy_regret.abs() < 1e-10, "{}", rep.dynamic_policy_regret);
    }

    #[test]
    fn affine_maps_reproduce_truncated_point() {
        let (sys, cfg) = setup(3, 10);
        let cl = ClosedLoop::new(&sys, &cfg.k, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut win = DisturbanceWindow::for_memory(3, 3);
        for _ in 0..7 {
            win.push(crate::linalg::sample_in_ball(&mut rng, 3, 0.2)).unwrap();
        }
        let m = cfg.feasible.sample(&mut rng, 2, 3);
        let aff = affine_truncation(&cl, 3, &win).unwrap();
        let cost = QuadraticTrackingCost::new(dvector![0.0, 0.0, 0.0], 0.1);
        let p = unary_truncated_loss(&cost, &cl, &m, &win).unwrap();
        let mv = m.to_vector();
        assert!((&aff.c_y + &aff.phi * &mv - &p.y).norm() < 1e-12);
        assert!((&aff.c_v + &aff.xi * &mv - &p.v).norm() < 1e-12);
    }

    #[test]
    fn segment_schedule_boundaries() {
        let s = TrackingSchedule::piecewise(vec![dvector![0.0]; 4], 10, 0.1).unwrap();
        assert_eq!(s.segments(10), vec![(0, 3), (3, 5), (5, 8), (8, 10)]);
    }

    #[test]
    fn exact_fit_beats_zero_and_matches_replay() {
        let (sys, cfg) = setup(2, 90);
        let mut g = DisturbanceGenerator::new(DisturbanceKind::PiecewiseStep { period: 30 }, 3, 0.2, 0.2, 2).unwrap();
        let w = g.take_sequence(90);
        let targets = vec![dvector![0.5, 0.0, 0.0], dvector![0.0, -0.5, 0.2], dvector![0.3, 0.3, 0.0]];
        let costs = TrackingSchedule::piecewise(targets, 90, 0.1).unwrap();
        let segs = costs.segments(90);
        let fit = fit_segment_comparators(&sys, &cfg.k, 2, DVector::zeros(3), &w, &costs, &segs, &cfg.feasible, 200).unwrap();
        let zero = vec![DacParams::zeros(2, 2, 3); 90];
        let jf = replay_policies(&sys, &cfg.k, DVector::zeros(3), &w, &costs, &fit, 0).unwrap().total_cost();
        let jz = replay_policies(&sys, &cfg.k, DVector::zeros(3), &w, &costs, &zero, 0).unwrap().total_cost();
        assert!(jf < jz, "{jf} vs {jz}");
        assert!(fit.iter().all(|m| cfg.feasible.contains(m, 1e-9)));
    }
}
