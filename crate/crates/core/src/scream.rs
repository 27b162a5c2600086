//! Meta-expert aggregation for OCO with memory.
//!
//! `N` projected-gradient experts with geometrically spaced step sizes run
//! side by side on the linearized unary loss; a Hedge meta-learner combines
//! them using a surrogate loss that charges each expert for its own movement.
//! Every round uses a single unary gradient, evaluated at the aggregated
//! decision. The same machinery with the movement charge switched off and a
//! uniform prior gives the Ader baseline, and a single expert gives plain OGD.
//!
//! The loop starts at round 1 with the prior weights and with all experts at
//! the origin.

use nalgebra::DVector;

use crate::error::{ensure, Error, Result};
use crate::oco::{
    eval_memory_loss, regret_metrics, unary_gradient, window_at, ComparatorSequence, Decision,
    DomainBall, LossStream, MemoryLoss, RegretReport,
};
use crate::omd::Hedge;

/// Geometric step sizes `eta_i = 2^(i-1) * eta_1`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSizePool {
    sizes: Vec<f64>,
}

impl StepSizePool {
    /// `N = ceil(0.5 * log2(1 + T)) + 1`.
    pub fn expert_count(horizon: usize) -> usize {
        (0.5 * (1.0 + horizon as f64).log2()).ceil() as usize + 1
    }

    pub fn geometric(base: f64, count: usize) -> Result<Self> {
        ensure(base.is_finite() && base > 0.0, || format!("base step size must be positive, got {base}"))?;
        ensure(count >= 1, || "pool needs at least one step size".into())?;
        let mut sizes = Vec::with_capacity(count);
        let mut eta = base;
        for _ in 0..count {
            sizes.push(eta);
            eta *= 2.0;
        }
        Ok(Self { sizes })
    }

    pub fn sizes(&self) -> &[f64] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn base(&self) -> f64 {
        self.sizes[0]
    }
}

/// Pool `eta_i = 2^(i-1) sqrt(D^2 / ((lambda G + G^2) T))`.
pub fn build_step_size_pool(horizon: usize, diameter: f64, grad_bound: f64, lambda: f64) -> Result<StepSizePool> {
    ensure(horizon > 0, || "horizon must be positive".into())?;
    ensure(diameter > 0.0 && grad_bound > 0.0, || "diameter and gradient bound must be positive".into())?;
    ensure(lambda >= 0.0, || "switching weight must be non-negative".into())?;
    let base = (diameter * diameter / ((lambda * grad_bound + grad_bound * grad_bound) * horizon as f64)).sqrt();
    StepSizePool::geometric(base, StepSizePool::expert_count(horizon))
}

/// Meta learning rate `sqrt(2 / ((2 lambda + G)(lambda + G) D^2 T))`.
pub fn scream_meta_rate(horizon: usize, diameter: f64, grad_bound: f64, lambda: f64) -> f64 {
    (2.0 / ((2.0 * lambda + grad_bound) * (lambda + grad_bound) * diameter * diameter * horizon as f64)).sqrt()
}

/// Ader's meta rate `sqrt(8 ln N / ((G D)^2 T))` over linearized losses.
pub fn ader_meta_rate(horizon: usize, diameter: f64, grad_bound: f64, experts: usize) -> f64 {
    let gd = grad_bound * diameter;
    (8.0 * (experts as f64).ln() / (gd * gd * horizon as f64)).sqrt()
}

/// `p_i = (N + 1) / (N i (i + 1))`, which sums to one.
pub fn nonuniform_prior(experts: usize) -> DVector<f64> {
    let n = experts as f64;
    DVector::from_fn(experts, |k, _| {
        let i = (k + 1) as f64;
        (n + 1.0) / (n * i * (i + 1.0))
    })
}

pub fn uniform_prior(experts: usize) -> DVector<f64> {
    DVector::from_element(experts, 1.0 / experts as f64)
}

/// `l_i = <grad, w_i> + lambda ||w_i - w_i^prev||_2`.
pub fn surrogate_loss(current: &[Decision], previous: &[Decision], gradient: &DVector<f64>, lambda: f64) -> DVector<f64> {
    DVector::from_iterator(
        current.len(),
        current
            .iter()
            .zip(previous)
            .map(|(w, p)| gradient.dot(w) + lambda * (w - p).norm()),
    )
}

/// What one meta-expert update did; used by diagnostics and bound checks.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaStep {
    pub weights_before: DVector<f64>,
    pub weights_after: DVector<f64>,
    pub surrogate: DVector<f64>,
}

impl MetaStep {
    pub fn weight_movement(&self) -> f64 {
        (&self.weights_after - &self.weights_before).abs().sum()
    }

    pub fn surrogate_sup(&self) -> f64 {
        self.surrogate.amax()
    }
}

/// Experts plus Hedge meta-learner over points in a flat parameter vector.
///
/// The feasible set is supplied as a projection at update time, so the same
/// aggregator drives both the decision-ball learner and the DAC controller.
#[derive(Debug, Clone)]
pub struct MetaAggregator {
    experts: Vec<DVector<f64>>,
    previous: Vec<DVector<f64>>,
    step_sizes: Vec<f64>,
    hedge: Hedge,
    lambda: f64,
}

impl MetaAggregator {
    pub fn new(start: DVector<f64>, pool: &StepSizePool, prior: &DVector<f64>, meta_rate: f64, lambda: f64) -> Result<Self> {
        ensure(prior.len() == pool.len(), || {
            format!("prior has {} entries for {} experts", prior.len(), pool.len())
        })?;
        ensure(lambda >= 0.0, || "switching weight must be non-negative".into())?;
        Ok(Self {
            experts: vec![start.clone(); pool.len()],
            previous: vec![start; pool.len()],
            step_sizes: pool.sizes().to_vec(),
            hedge: Hedge::new(prior, meta_rate)?,
            lambda,
        })
    }

    pub fn experts(&self) -> &[DVector<f64>] {
        &self.experts
    }

    pub fn previous_experts(&self) -> &[DVector<f64>] {
        &self.previous
    }

    pub fn weights(&self) -> DVector<f64> {
        self.hedge.weights()
    }

    pub fn meta_rate(&self) -> f64 {
        self.hedge.rate()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `sum_i p_i w_i`.
    pub fn aggregate(&self) -> DVector<f64> {
        let p = self.hedge.weights();
        let mut out = DVector::zeros(self.experts[0].len());
        for (w, pi) in self.experts.iter().zip(p.iter()) {
            out.axpy(*pi, w, 1.0);
        }
        out
    }

    /// Surrogate losses, Hedge step, then every expert steps along the shared gradient.
    pub fn update<P>(&mut self, gradient: &DVector<f64>, project: P) -> Result<MetaStep>
    where
        P: Fn(&DVector<f64>) -> DVector<f64>,
    {
        let weights_before = self.hedge.weights();
        let surrogate = surrogate_loss(&self.experts, &self.previous, gradient, self.lambda);
        self.hedge.step(&surrogate)?;
        let next: Vec<DVector<f64>> = self
            .experts
            .iter()
            .zip(&self.step_sizes)
            .map(|(w, eta)| project(&(w - gradient * *eta)))
            .collect();
        self.previous = std::mem::replace(&mut self.experts, next);
        Ok(MetaStep { weights_before, weights_after: self.hedge.weights(), surrogate })
    }
}

/// Configuration of a meta-expert learner on a decision ball.
#[derive(Debug, Clone, PartialEq)]
pub struct ScreamConfig {
    pub horizon: usize,
    pub memory: usize,
    pub lipschitz: f64,
    pub grad_bound: f64,
    pub domain: DomainBall,
    /// Switching weight in the surrogate loss.
    pub lambda: f64,
    pub meta_rate: f64,
    pub pool: StepSizePool,
}

impl ScreamConfig {
    /// Tuning for memory `m` and coordinate Lipschitz constant `L`: `lambda = m^2 L`.
    pub fn for_memory(horizon: usize, memory: usize, lipschitz: f64, grad_bound: f64, domain: DomainBall) -> Result<Self> {
        ensure(lipschitz >= 0.0, || "Lipschitz constant must be non-negative".into())?;
        let lambda = (memory * memory) as f64 * lipschitz;
        let mut cfg = Self::with_lambda(horizon, grad_bound, domain, lambda)?;
        cfg.memory = memory;
        cfg.lipschitz = lipschitz;
        Ok(cfg)
    }

    /// Tuning for an explicit switching weight (the OCO-with-switching-cost benchmark).
    pub fn with_lambda(horizon: usize, grad_bound: f64, domain: DomainBall, lambda: f64) -> Result<Self> {
        let d = domain.diameter();
        let pool = build_step_size_pool(horizon, d, grad_bound, lambda)?;
        Ok(Self {
            horizon,
            memory: 0,
            lipschitz: 0.0,
            grad_bound,
            domain,
            lambda,
            meta_rate: scream_meta_rate(horizon, d, grad_bound, lambda),
            pool,
        })
    }

    pub fn experts(&self) -> usize {
        self.pool.len()
    }
}

/// Per-round trace entry.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub t: usize,
    pub decision_norm: f64,
    /// `f_t` on the decision window.
    pub loss: f64,
    /// Unweighted `||w_t - w_{t-1}||_2`.
    pub switching: f64,
    /// Meta weights used at round `t` (empty for single-learner runs).
    pub weights: Vec<f64>,
    /// `||p_{t+1} - p_t||_1`.
    pub meta_movement: f64,
    /// `max_i |l_{t,i}|`.
    pub surrogate_sup: f64,
}

/// Decisions, revealed losses and trace of one run.
#[derive(Debug, Clone)]
pub struct RunOutput<L> {
    pub decisions: Vec<Decision>,
    pub losses: Vec<L>,
    pub records: Vec<RoundRecord>,
    pub gradient_evaluations: usize,
    pub meta_rate: Option<f64>,
    pub step_sizes: Vec<f64>,
}

impl<L: MemoryLoss> RunOutput<L> {
    pub fn report(&self, comparators: &ComparatorSequence, lambda: f64) -> Result<RegretReport> {
        regret_metrics(&self.decisions, comparators, &self.losses, lambda)
    }

    pub fn movement(&self) -> f64 {
        crate::oco::movement(&self.decisions)
    }
}

/// Stateful Scream learner; drive it with [`Scream::decide`] and [`Scream::observe`].
#[derive(Debug, Clone)]
pub struct Scream {
    domain: DomainBall,
    meta: MetaAggregator,
    round: usize,
    gradient_evaluations: usize,
}

impl Scream {
    pub fn new(config: &ScreamConfig) -> Result<Self> {
        let prior = nonuniform_prior(config.pool.len());
        Self::with_prior(config, &prior, config.meta_rate, config.lambda)
    }

    fn with_prior(config: &ScreamConfig, prior: &DVector<f64>, meta_rate: f64, lambda: f64) -> Result<Self> {
        Ok(Self {
            domain: config.domain,
            meta: MetaAggregator::new(config.domain.origin(), &config.pool, prior, meta_rate, lambda)?,
            round: 0,
            gradient_evaluations: 0,
        })
    }

    pub fn decide(&self) -> Decision {
        self.meta.aggregate()
    }

    pub fn meta(&self) -> &MetaAggregator {
        &self.meta
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn gradient_evaluations(&self) -> usize {
        self.gradient_evaluations
    }

    /// Feed the loss revealed for the decision just played.
    pub fn observe<L: MemoryLoss + ?Sized>(&mut self, loss: &L) -> Result<MetaStep> {
        let w = self.decide();
        let g = unary_gradient(loss, &w)?;
        self.gradient_evaluations += 1;
        let domain = self.domain;
        let step = self.meta.update(&g, |x| domain.project(x))?;
        self.round += 1;
        Ok(step)
    }
}

/// One round: submit `w_t`, reveal `f_t`, update. Returns the decision and the meta step.
pub fn scream_round<L: MemoryLoss + ?Sized>(state: &mut Scream, loss: &L) -> Result<(Decision, MetaStep)> {
    let w = state.decide();
    let step = state.observe(loss)?;
    Ok((w, step))
}

fn drive<S: LossStream>(learner: &mut Scream, stream: &mut S) -> Result<RunOutput<S::Loss>> {
    let horizon = stream.horizon();
    let mut decisions: Vec<Decision> = Vec::with_capacity(horizon);
    let mut losses = Vec::with_capacity(horizon);
    let mut records = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let w = learner.decide();
        decisions.push(w.clone());
        let loss = stream.reveal(t)?;
        let window = window_at(&decisions, t, loss.memory());
        let value = eval_memory_loss(&loss, &window)?;
        let switching = if t > 1 { (&w - &decisions[t - 2]).norm() } else { 0.0 };
        let step = learner.observe(&loss)?;
        records.push(RoundRecord {
            t,
            decision_norm: w.norm(),
            loss: value,
            switching,
            meta_movement: step.weight_movement(),
            surrogate_sup: step.surrogate_sup(),
            weights: step.weights_before.iter().cloned().collect(),
        });
        losses.push(loss);
    }
    Ok(RunOutput {
        decisions,
        losses,
        records,
        gradient_evaluations: learner.gradient_evaluations(),
        meta_rate: Some(learner.meta.meta_rate()),
        step_sizes: learner.meta.step_sizes.clone(),
    })
}

/// Run Scream over a whole stream.
pub fn run_scream<S: LossStream>(config: &ScreamConfig, stream: &mut S) -> Result<RunOutput<S::Loss>> {
    check_stream(config, stream)?;
    let mut learner = Scream::new(config)?;
    drive(&mut learner, stream)
}

/// Ader: same experts, linearized meta losses without the movement charge,
/// uniform prior and `eps = sqrt(8 ln N / ((G D)^2 T))`. The pool is tuned
/// with `lambda = 0` since Ader ignores switching.
pub fn ader_learner(config: &ScreamConfig) -> Result<Scream> {
    let d = config.domain.diameter();
    let pool = build_step_size_pool(config.horizon, d, config.grad_bound, 0.0)?;
    let cfg = ScreamConfig { pool, lambda: 0.0, ..config.clone() };
    let n = cfg.pool.len();
    let rate = ader_meta_rate(cfg.horizon, d, cfg.grad_bound, n);
    Scream::with_prior(&cfg, &uniform_prior(n), rate, 0.0)
}

pub fn run_ader<S: LossStream>(config: &ScreamConfig, stream: &mut S) -> Result<RunOutput<S::Loss>> {
    check_stream(config, stream)?;
    let mut learner = ader_learner(config)?;
    drive(&mut learner, stream)
}

/// Step size `sqrt(2 D^2 / ((G^2 + lambda G) T))` for OGD on the unary loss.
pub fn ogd_default_step(config: &ScreamConfig) -> f64 {
    let d = config.domain.diameter();
    let g = config.grad_bound;
    (2.0 * d * d / ((g * g + config.lambda * g) * config.horizon as f64)).sqrt()
}

/// Projected OGD on the unary loss from the origin.
pub fn run_ogd_memory<S: LossStream>(config: &ScreamConfig, stream: &mut S, step: Option<f64>) -> Result<RunOutput<S::Loss>> {
    check_stream(config, stream)?;
    let eta = step.unwrap_or_else(|| ogd_default_step(config));
    ensure(eta.is_finite() && eta > 0.0, || format!("invalid OGD step size {eta}"))?;
    let pool = StepSizePool::geometric(eta, 1)?;
    let cfg = ScreamConfig { pool, ..config.clone() };
    let mut learner = Scream::with_prior(&cfg, &DVector::from_element(1, 1.0), 0.0, 0.0)?;
    let mut out = drive(&mut learner, stream)?;
    out.meta_rate = None;
    for r in &mut out.records {
        r.weights.clear();
    }
    Ok(out)
}

fn check_stream<S: LossStream>(config: &ScreamConfig, stream: &S) -> Result<()> {
    if stream.dimension() != config.domain.dimension() {
        return Err(Error::Contract(format!(
            "stream dimension {} differs from domain dimension {}",
            stream.dimension(),
            config.domain.dimension()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oco::{SquareLoss, VecStream};
    use nalgebra::dvector;

    #[test]
    fn pool_for_hundred_rounds() {
        let pool = build_step_size_pool(100, 2.0, 2.0, 0.0).unwrap();
        assert_eq!(pool.len(), 5);
        let expected = [0.1, 0.2, 0.4, 0.8, 1.6];
        for (a, b) in pool.sizes().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn single_round_pool_has_two_entries() {
        assert_eq!(StepSizePool::expert_count(1), 2);
        let pool = build_step_size_pool(1, 1.0, 1.0, 0.0).unwrap();
        assert_eq!(pool.len(), 2);
        assert_eq!(pool.sizes()[1], 2.0 * pool.sizes()[0]);
    }

    #[test]
    fn zero_horizon_is_rejected() {
        assert!(build_step_size_pool(0, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn prior_small_cases() {
        assert_eq!(nonuniform_prior(1), dvector![1.0]);
        let p2 = nonuniform_prior(2);
        assert!((p2[0] - 0.75).abs() < 1e-15 && (p2[1] - 0.25).abs() < 1e-15);
        let p3 = nonuniform_prior(3);
        for (a, b) in p3.iter().zip([2.0 / 3.0, 2.0 / 9.0, 1.0 / 9.0]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn surrogate_hand_value() {
        let l = surrogate_loss(&[dvector![0.5, 0.0]], &[dvector![0.3, 0.0]], &dvector![1.0, 0.0], 2.0);
        assert!((l[0] - 0.9).abs() < 1e-15);
        let off = surrogate_loss(&[dvector![0.5, 0.2]], &[dvector![0.3, 0.0]], &dvector![1.0, 3.0], 0.0);
        assert_eq!(off[0], 0.5 + 0.6);
    }

    #[test]
    fn theoretical_tuning_uses_m_squared_l() {
        let ball = DomainBall::new(3, 2.0).unwrap();
        let cfg = ScreamConfig::for_memory(50, 3, 0.5, 1.5, ball).unwrap();
        assert_eq!(cfg.lambda, 4.5);
        let expect = (2.0f64 / ((2.0 * 4.5 + 1.5) * (4.5 + 1.5) * 4.0 * 50.0)).sqrt();
        assert!((cfg.meta_rate - expect).abs() < 1e-15);
    }

    #[test]
    fn zero_gradients_freeze_everything() {
        let ball = DomainBall::new(2, 2.0).unwrap();
        let cfg = ScreamConfig::with_lambda(20, 1.0, ball, 0.5).unwrap();
        let losses = vec![SquareLoss::new(dvector![0.0, 0.0], 0.0); 20];
        let out = run_scream(&cfg, &mut VecStream::new(2, losses)).unwrap();
        let prior = nonuniform_prior(cfg.experts());
        for r in &out.records {
            assert_eq!(r.switching, 0.0);
            assert!(r.meta_movement < 1e-14);
            assert!((DVector::from_vec(r.weights.clone()) - &prior).amax() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let ball = DomainBall::new(2, 2.0).unwrap();
        let cfg = ScreamConfig::with_lambda(3, 1.0, ball, 0.0).unwrap();
        let mut s = VecStream::new(3, vec![SquareLoss::new(dvector![1.0, 0.0, 0.0], 0.0); 3]);
        assert!(run_scream(&cfg, &mut s).is_err());
    }
}
