//! Online convex optimization with memory: decisions, the feasible ball,
//! memory losses revealed round by round, and the regret bookkeeping that
//! every algorithm in the crate reports against.
//!
//! Rounds are 1-based. A loss at round `t` acts on the window
//! `[w_{t-m}, ..., w_t]` (oldest first). Decisions before round 1 are taken
//! to equal the round-1 decision, so the first `m` windows are padded with it.

use std::cell::Cell;
use std::rc::Rc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::linalg::all_finite_vec;

/// A point in the decision space.
pub type Decision = DVector<f64>;

/// Origin-centred Euclidean ball `{w : ||w||_2 <= D/2}` of diameter `D`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainBall {
    dimension: usize,
    diameter: f64,
}

impl DomainBall {
    pub fn new(dimension: usize, diameter: f64) -> Result<Self> {
        ensure(dimension > 0, || "domain dimension must be positive".into())?;
        ensure(diameter.is_finite() && diameter > 0.0, || {
            format!("domain diameter must be positive, got {diameter}")
        })?;
        Ok(Self { dimension, diameter })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn radius(&self) -> f64 {
        self.diameter / 2.0
    }

    /// Euclidean projection: rescale onto the sphere when outside.
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = x.norm();
        let r = self.radius();
        if n > r {
            x * (r / n)
        } else {
            x.clone()
        }
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        x.len() == self.dimension && x.norm() <= self.radius() + tol
    }

    pub fn origin(&self) -> Decision {
        DVector::zeros(self.dimension)
    }
}

/// Round loss acting on the last `m + 1` decisions.
///
/// Implementors only supply the window evaluation and the unary gradient;
/// the unary value defaults to the window evaluation on `m + 1` copies, so
/// `f(w, ..., w) == f~(w)` holds bit for bit.
pub trait MemoryLoss {
    /// Memory length `m`.
    fn memory(&self) -> usize;

    /// `f_t(w_{t-m}, ..., w_t)`; the window is oldest first and has `m + 1` entries.
    fn eval_window(&self, window: &[Decision]) -> f64;

    /// Gradient of the unary loss `w -> f_t(w, ..., w)`.
    fn unary_gradient(&self, w: &Decision) -> DVector<f64>;

    fn eval_unary(&self, w: &Decision) -> f64 {
        let window = vec![w.clone(); self.memory() + 1];
        self.eval_window(&window)
    }
}

impl<L: MemoryLoss + ?Sized> MemoryLoss for Box<L> {
    fn memory(&self) -> usize {
        (**self).memory()
    }
    fn eval_window(&self, window: &[Decision]) -> f64 {
        (**self).eval_window(window)
    }
    fn unary_gradient(&self, w: &Decision) -> DVector<f64> {
        (**self).unary_gradient(w)
    }
    fn eval_unary(&self, w: &Decision) -> f64 {
        (**self).eval_unary(w)
    }
}

/// Checked window evaluation.
pub fn eval_memory_loss<L: MemoryLoss + ?Sized>(loss: &L, window: &[Decision]) -> Result<f64> {
    let m = loss.memory();
    ensure(window.len() == m + 1, || {
        format!("window must hold m + 1 = {} decisions, got {}", m + 1, window.len())
    })?;
    let v = loss.eval_window(window);
    if !v.is_finite() {
        return Err(Error::Numerical(format!("loss evaluated to {v}")));
    }
    Ok(v)
}

/// Checked unary gradient; rejects non-finite output.
pub fn unary_gradient<L: MemoryLoss + ?Sized>(loss: &L, w: &Decision) -> Result<DVector<f64>> {
    let g = loss.unary_gradient(w);
    if !all_finite_vec(&g) {
        return Err(Error::Numerical("unary gradient has non-finite entries".into()));
    }
    Ok(g)
}

/// Memoryless square loss `0.5 (w^T x - y)^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareLoss {
    pub features: DVector<f64>,
    pub target: f64,
}

impl SquareLoss {
    pub fn new(features: DVector<f64>, target: f64) -> Self {
        Self { features, target }
    }

    fn residual(&self, w: &Decision) -> f64 {
        w.dot(&self.features) - self.target
    }
}

impl MemoryLoss for SquareLoss {
    fn memory(&self) -> usize {
        0
    }

    fn eval_window(&self, window: &[Decision]) -> f64 {
        let r = self.residual(&window[0]);
        0.5 * r * r
    }

    fn unary_gradient(&self, w: &Decision) -> DVector<f64> {
        &self.features * self.residual(w)
    }
}

/// Square loss on a convex combination of the window:
/// `0.5 (sum_k a_k w_{t-m+k}^T x - y)^2` with `a` on the simplex.
///
/// Coordinate-wise Lipschitz with `L = max_k a_k * R * ||x||` where `R`
/// bounds the residual on the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSquareLoss {
    pub features: DVector<f64>,
    pub target: f64,
    pub weights: Vec<f64>,
}

impl WindowSquareLoss {
    pub fn new(features: DVector<f64>, target: f64, weights: Vec<f64>) -> Result<Self> {
        ensure(!weights.is_empty(), || "window weights must be non-empty".into())?;
        let s: f64 = weights.iter().sum();
        ensure(weights.iter().all(|a| *a >= 0.0) && (s - 1.0).abs() < 1e-12, || {
            "window weights must lie on the simplex".into()
        })?;
        Ok(Self { features, target, weights })
    }

    /// Coordinate-wise Lipschitz constant on a ball of the given radius.
    pub fn lipschitz(&self, radius: f64) -> f64 {
        let xn = self.features.norm();
        let resid = radius * xn + self.target.abs();
        let amax = self.weights.iter().cloned().fold(0.0, f64::max);
        amax * resid * xn
    }
}

impl MemoryLoss for WindowSquareLoss {
    fn memory(&self) -> usize {
        self.weights.len() - 1
    }

    fn eval_window(&self, window: &[Decision]) -> f64 {
        let pred: f64 = window
            .iter()
            .zip(&self.weights)
            .map(|(w, a)| a * w.dot(&self.features))
            .sum();
        let r = pred - self.target;
        0.5 * r * r
    }

    fn unary_gradient(&self, w: &Decision) -> DVector<f64> {
        let a: f64 = self.weights.iter().sum();
        let r = a * w.dot(&self.features) - self.target;
        &self.features * (a * r)
    }
}

/// `f(a, b) = ||a - b||_2`; its unary form is identically zero.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MovementLoss;

impl MemoryLoss for MovementLoss {
    fn memory(&self) -> usize {
        1
    }

    fn eval_window(&self, window: &[Decision]) -> f64 {
        (&window[1] - &window[0]).norm()
    }

    fn unary_gradient(&self, w: &Decision) -> DVector<f64> {
        DVector::zeros(w.len())
    }
}

/// Losses revealed one round at a time, after the learner commits.
pub trait LossStream {
    type Loss: MemoryLoss;

    fn dimension(&self) -> usize;

    fn horizon(&self) -> usize;

    /// Loss of round `t` (1-based).
    fn reveal(&mut self, t: usize) -> Result<Self::Loss>;
}

/// Stream backed by a precomputed list.
#[derive(Debug, Clone)]
pub struct VecStream<L> {
    dimension: usize,
    losses: Vec<L>,
}

impl<L: MemoryLoss + Clone> VecStream<L> {
    pub fn new(dimension: usize, losses: Vec<L>) -> Self {
        Self { dimension, losses }
    }
}

impl<L: MemoryLoss + Clone> LossStream for VecStream<L> {
    type Loss = L;

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn horizon(&self) -> usize {
        self.losses.len()
    }

    fn reveal(&mut self, t: usize) -> Result<L> {
        self.losses
            .get(t.wrapping_sub(1))
            .cloned()
            .ok_or_else(|| Error::Contract(format!("round {t} outside 1..={}", self.losses.len())))
    }
}

/// Loss wrapper that counts unary-gradient evaluations through a shared cell.
#[derive(Debug, Clone)]
pub struct CountingLoss<L> {
    inner: L,
    gradient_calls: Rc<Cell<usize>>,
}

impl<L: MemoryLoss> MemoryLoss for CountingLoss<L> {
    fn memory(&self) -> usize {
        self.inner.memory()
    }
    fn eval_window(&self, window: &[Decision]) -> f64 {
        self.inner.eval_window(window)
    }
    fn unary_gradient(&self, w: &Decision) -> DVector<f64> {
        self.gradient_calls.set(self.gradient_calls.get() + 1);
        self.inner.unary_gradient(w)
    }
    fn eval_unary(&self, w: &Decision) -> f64 {
        self.inner.eval_unary(w)
    }
}

/// Stream adaptor whose losses share one gradient-call counter.
#[derive(Debug)]
pub struct CountingStream<S> {
    inner: S,
    gradient_calls: Rc<Cell<usize>>,
}

impl<S: LossStream> CountingStream<S> {
    pub fn new(inner: S) -> Self {
        Self { inner, gradient_calls: Rc::new(Cell::new(0)) }
    }

    pub fn gradient_calls(&self) -> usize {
        self.gradient_calls.get()
    }

    pub fn counter(&self) -> Rc<Cell<usize>> {
        Rc::clone(&self.gradient_calls)
    }
}

impl<S: LossStream> LossStream for CountingStream<S> {
    type Loss = CountingLoss<S::Loss>;

    fn dimension(&self) -> usize {
        self.inner.dimension()
    }
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }
    fn reveal(&mut self, t: usize) -> Result<Self::Loss> {
        Ok(CountingLoss { inner: self.inner.reveal(t)?, gradient_calls: self.counter() })
    }
}

/// Time-varying comparators `v_1, ..., v_T`, all inside the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparatorSequence {
    points: Vec<Decision>,
}

impl ComparatorSequence {
    pub fn new(points: Vec<Decision>, domain: &DomainBall) -> Result<Self> {
        for (t, v) in points.iter().enumerate() {
            ensure(domain.contains(v, 1e-12), || {
                format!("comparator at round {} lies outside the domain", t + 1)
            })?;
        }
        Ok(Self { points })
    }

    pub fn constant(v: Decision, horizon: usize, domain: &DomainBall) -> Result<Self> {
        Self::new(vec![v; horizon], domain)
    }

    pub fn points(&self) -> &[Decision] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `P_T = sum_{t>=2} ||v_{t-1} - v_t||_2`.
    pub fn path_length(&self) -> f64 {
        movement(&self.points)
    }
}

/// Regret and switching summary of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    /// `sum_t f_t(w_{t-m}, ..., w_t)`.
    pub cumulative_loss: f64,
    /// `lambda * sum_{t>=2} ||w_t - w_{t-1}||_2`.
    pub switching_cost: f64,
    /// Unweighted movement `sum_{t>=2} ||w_t - w_{t-1}||_2`.
    pub movement: f64,
    /// Memory loss of the comparator sequence.
    pub comparator_loss: f64,
    pub dynamic_policy_regret: f64,
    /// Regret against the best single point taken from the comparator sequence.
    pub static_policy_regret: f64,
    pub path_length: f64,
}

/// Total Euclidean movement of a sequence.
pub fn movement(points: &[Decision]) -> f64 {
    points.windows(2).map(|p| (&p[1] - &p[0]).norm()).sum()
}

/// Window ending at round `t` (1-based) with the round-1 padding convention.
pub fn window_at(history: &[Decision], t: usize, m: usize) -> Vec<Decision> {
    (0..=m)
        .map(|k| {
            let s = t as isize - m as isize + k as isize;
            let idx = if s < 1 { 0 } else { (s - 1) as usize };
            history[idx].clone()
        })
        .collect()
}

/// Fill a [`RegretReport`] from the decisions, the comparators, and the
/// losses that were revealed along the way.
pub fn regret_metrics<L: MemoryLoss>(
    decisions: &[Decision],
    comparators: &ComparatorSequence,
    losses: &[L],
    lambda: f64,
) -> Result<RegretReport> {
    let horizon = decisions.len();
    ensure(comparators.len() == horizon, || {
        format!("{} decisions but {} comparators", horizon, comparators.len())
    })?;
    ensure(losses.len() == horizon, || format!("{} decisions but {} losses", horizon, losses.len()))?;
    ensure(lambda >= 0.0, || "switching weight must be non-negative".into())?;

    let v = comparators.points();
    let mut cumulative_loss = 0.0;
    let mut comparator_loss = 0.0;
    for (i, loss) in losses.iter().enumerate() {
        let t = i + 1;
        let m = loss.memory();
        cumulative_loss += eval_memory_loss(loss, &window_at(decisions, t, m))?;
        comparator_loss += eval_memory_loss(loss, &window_at(v, t, m))?;
    }

    // Candidate fixed comparators: the distinct points of the sequence.
    let mut best_fixed = f64::INFINITY;
    let mut seen: Vec<&Decision> = Vec::new();
    for p in v {
        if seen.contains(&p) {
            continue;
        }
        seen.push(p);
        let total: f64 = losses.iter().map(|l| l.eval_unary(p)).sum();
        best_fixed = best_fixed.min(total);
    }
    if seen.is_empty() {
        best_fixed = 0.0;
    }

    let mv = movement(decisions);
    Ok(RegretReport {
        cumulative_loss,
        switching_cost: lambda * mv,
        movement: mv,
        comparator_loss,
        dynamic_policy_regret: cumulative_loss - comparator_loss,
        static_policy_regret: cumulative_loss - best_fixed,
        path_length: comparators.path_length(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn square_loss_at_origin() {
        let loss = SquareLoss::new(dvector![1.0, 0.0, 0.0], 1.0);
        let v = eval_memory_loss(&loss, &[dvector![0.0, 0.0, 0.0]]).unwrap();
        assert_eq!(v, 0.5);
    }

    #[test]
    fn window_length_is_checked() {
        let loss = SquareLoss::new(dvector![1.0], 0.0);
        let err = eval_memory_loss(&loss, &[dvector![0.0], dvector![0.0]]).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn movement_loss_vanishes_on_equal_pair() {
        let a = dvector![0.3, -0.2];
        assert_eq!(eval_memory_loss(&MovementLoss, &[a.clone(), a]).unwrap(), 0.0);
    }

    #[test]
    fn square_loss_gradients() {
        let zero_resid = SquareLoss::new(dvector![1.0, 0.0, 0.0], 0.0);
        assert_eq!(unary_gradient(&zero_resid, &dvector![0.0, 0.0, 0.0]).unwrap(), dvector![0.0, 0.0, 0.0]);
        let loss = SquareLoss::new(dvector![1.0, 0.0], 1.0);
        assert_eq!(unary_gradient(&loss, &dvector![0.0, 0.0]).unwrap(), dvector![-1.0, 0.0]);
    }

    #[test]
    fn nan_gradient_is_numerical_error() {
        let loss = SquareLoss::new(dvector![f64::NAN], 0.0);
        assert!(matches!(unary_gradient(&loss, &dvector![1.0]), Err(Error::Numerical(_))));
    }

    #[test]
    fn padding_repeats_first_decision() {
        let hist = vec![dvector![1.0], dvector![2.0], dvector![3.0]];
        assert_eq!(window_at(&hist, 1, 2), vec![dvector![1.0], dvector![1.0], dvector![1.0]]);
        assert_eq!(window_at(&hist, 3, 1), vec![dvector![2.0], dvector![3.0]]);
    }

    #[test]
    fn one_dimensional_switching_cost() {
        let ball = DomainBall::new(1, 4.0).unwrap();
        let w = vec![dvector![0.0], dvector![1.0], dvector![0.0]];
        let losses = vec![SquareLoss::new(dvector![1.0], 0.0); 3];
        let comp = ComparatorSequence::constant(dvector![0.0], 3, &ball).unwrap();
        let rep = regret_metrics(&w, &comp, &losses, 1.0).unwrap();
        assert_eq!(rep.switching_cost, 2.0);
        assert_eq!(rep.path_length, 0.0);
    }

    #[test]
    fn identical_constant_sequences_have_zero_regret() {
        let ball = DomainBall::new(2, 2.0).unwrap();
        let v = dvector![0.2, -0.1];
        let losses: Vec<_> = (0..5).map(|k| SquareLoss::new(dvector![1.0, k as f64 * 0.1], 0.3)).collect();
        let comp = ComparatorSequence::constant(v.clone(), 5, &ball).unwrap();
        let rep = regret_metrics(&vec![v; 5], &comp, &losses, 3.0).unwrap();
        assert_eq!(rep.dynamic_policy_regret, 0.0);
        assert_eq!(rep.static_policy_regret, 0.0);
        assert_eq!(rep.switching_cost, 0.0);
        assert_eq!(rep.path_length, 0.0);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let ball = DomainBall::new(1, 2.0).unwrap();
        let comp = ComparatorSequence::constant(dvector![0.0], 2, &ball).unwrap();
        let losses = vec![SquareLoss::new(dvector![1.0], 0.0); 3];
        assert!(regret_metrics(&vec![dvector![0.0]; 3], &comp, &losses, 0.0).is_err());
    }

    #[test]
    fn comparators_outside_domain_are_rejected() {
        let ball = DomainBall::new(1, 2.0).unwrap();
        assert!(ComparatorSequence::new(vec![dvector![1.5]], &ball).is_err());
    }

    #[test]
    fn projection_lands_on_sphere() {
        let ball = DomainBall::new(2, 2.0).unwrap();
        let p = ball.project(&dvector![3.0, 4.0]);
        assert!((p.norm() - 1.0).abs() < 1e-15);
        assert_eq!(ball.project(&dvector![0.1, 0.2]), dvector![0.1, 0.2]);
    }
}
