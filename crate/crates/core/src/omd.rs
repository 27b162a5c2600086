//! Online mirror descent with the two mirror maps the algorithms need:
//! the Euclidean regularizer (projected gradient descent on a ball) and
//! negative entropy (multiplicative weights on the simplex).

use nalgebra::DVector;

use crate::error::{ensure, Error, Result};
use crate::linalg::all_finite_vec;
use crate::oco::DomainBall;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regularizer {
    /// `R(x) = 0.5 ||x||^2`, Bregman divergence `0.5 ||x - y||^2`.
    Euclidean,
    /// `R(p) = sum p_i ln p_i`, Bregman divergence KL(p || q).
    NegativeEntropy,
}

/// Feasible region paired with a regularizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Geometry {
    Ball(DomainBall),
    Simplex,
}

/// Current iterate together with its step size (or learning rate).
#[derive(Debug, Clone, PartialEq)]
pub struct OmdState {
    pub point: DVector<f64>,
    pub rate: f64,
}

impl OmdState {
    pub fn new(point: DVector<f64>, rate: f64) -> Self {
        Self { point, rate }
    }
}

/// `Pi_W[w - eta * g]` on the origin-centred ball.
pub fn ogd_step(state: &OmdState, gradient: &DVector<f64>, domain: &DomainBall) -> Result<OmdState> {
    ensure(gradient.len() == state.point.len(), || {
        format!("gradient has {} entries, point has {}", gradient.len(), state.point.len())
    })?;
    if !all_finite_vec(gradient) {
        return Err(Error::Numerical("gradient has non-finite entries".into()));
    }
    let moved = &state.point - gradient * state.rate;
    Ok(OmdState { point: domain.project(&moved), rate: state.rate })
}

/// `p_{t+1,i} ∝ p_{t,i} exp(-eps * l_i)`, evaluated with a max shift in log space.
pub fn hedge_step(state: &OmdState, losses: &DVector<f64>) -> Result<OmdState> {
    ensure(losses.len() == state.point.len(), || {
        format!("{} losses for {} weights", losses.len(), state.point.len())
    })?;
    if !all_finite_vec(losses) {
        return Err(Error::Numerical("hedge losses contain NaN or infinity".into()));
    }
    let logw = state.point.map(f64::ln) - losses * state.rate;
    Ok(OmdState { point: normalize_log_weights(&logw), rate: state.rate })
}

/// One mirror-descent step in the requested geometry.
pub fn omd_step(
    state: &OmdState,
    gradient: &DVector<f64>,
    regularizer: Regularizer,
    geometry: &Geometry,
) -> Result<OmdState> {
    match (regularizer, geometry) {
        (Regularizer::Euclidean, Geometry::Ball(ball)) => ogd_step(state, gradient, ball),
        (Regularizer::NegativeEntropy, Geometry::Simplex) => hedge_step(state, gradient),
        (r, g) => Err(Error::Contract(format!("unsupported pairing {r:?} with {g:?}"))),
    }
}

/// Exponentiate log-weights after shifting by their maximum and normalize.
pub fn normalize_log_weights(logw: &DVector<f64>) -> DVector<f64> {
    let shift = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w = logw.map(|l| (l - shift).exp());
    let s = w.sum();
    w / s
}

/// Hedge with persistent log-weights, used by the meta-learners.
///
/// Weights never round to exactly zero between rounds, so long runs with
/// extreme surrogate losses do not lose experts to underflow.
#[derive(Debug, Clone, PartialEq)]
pub struct Hedge {
    log_weights: DVector<f64>,
    rate: f64,
}

impl Hedge {
    pub fn new(prior: &DVector<f64>, rate: f64) -> Result<Self> {
        ensure(!prior.is_empty(), || "hedge needs at least one expert".into())?;
        ensure(rate.is_finite() && rate >= 0.0, || format!("invalid learning rate {rate}"))?;
        check_simplex(prior, 1e-12)?;
        Ok(Self { log_weights: prior.map(f64::ln), rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    pub fn weights(&self) -> DVector<f64> {
        normalize_log_weights(&self.log_weights)
    }

    pub fn step(&mut self, losses: &DVector<f64>) -> Result<()> {
        ensure(losses.len() == self.len(), || {
            format!("{} losses for {} experts", losses.len(), self.len())
        })?;
        if !all_finite_vec(losses) {
            return Err(Error::Numerical("hedge losses contain NaN or infinity".into()));
        }
        self.log_weights -= losses * self.rate;
        let shift = self.log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = shift + self.log_weights.iter().map(|l| (l - shift).exp()).sum::<f64>().ln();
        self.log_weights.add_scalar_mut(-lse);
        Ok(())
    }
}

pub(crate) fn check_simplex(p: &DVector<f64>, tol: f64) -> Result<()> {
    ensure(p.iter().all(|x| *x >= 0.0 && x.is_finite()), || "weights must be non-negative".into())?;
    ensure((p.sum() - 1.0).abs() <= tol, || format!("weights sum to {}", p.sum()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn interior_gradient_step() {
        let ball = DomainBall::new(2, 2.0).unwrap();
        let s = OmdState::new(dvector![0.0, 0.0], 0.1);
        let next = ogd_step(&s, &dvector![1.0, 0.0], &ball).unwrap();
        assert_eq!(next.point, dvector![-0.1, 0.0]);
    }

    #[test]
    fn zero_gradient_keeps_point() {
        let ball = DomainBall::new(3, 2.0).unwrap();
        let s = OmdState::new(dvector![0.3, -0.2, 0.1], 0.7);
        assert_eq!(ogd_step(&s, &dvector![0.0, 0.0, 0.0], &ball).unwrap().point, s.point);
    }

    #[test]
    fn outward_gradient_stays_on_sphere() {
        let ball = DomainBall::new(2, 2.0).unwrap();
        let s = OmdState::new(dvector![1.0, 0.0], 0.5);
        let next = ogd_step(&s, &dvector![-2.0, 0.0], &ball).unwrap();
        assert!((next.point.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hedge_hand_value() {
        let s = OmdState::new(dvector![0.5, 0.5], 1.0);
        let next = hedge_step(&s, &dvector![0.0, std::f64::consts::LN_2]).unwrap();
        assert!((next.point[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((next.point[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn hedge_equal_losses_keep_uniform() {
        let s = OmdState::new(dvector![0.25, 0.25, 0.25, 0.25], 3.0);
        let next = hedge_step(&s, &dvector![1.7, 1.7, 1.7, 1.7]).unwrap();
        for p in next.point.iter() {
            assert!((p - 0.25).abs() < 1e-16);
        }
    }

    #[test]
    fn hedge_preserves_zero_weight() {
        let s = OmdState::new(dvector![0.0, 0.4, 0.6], 2.0);
        let next = hedge_step(&s, &dvector![-5.0, 1.0, 0.0]).unwrap();
        assert_eq!(next.point[0], 0.0);
    }

    #[test]
    fn hedge_rejects_nan() {
        let s = OmdState::new(dvector![0.5, 0.5], 1.0);
        assert!(matches!(hedge_step(&s, &dvector![f64::NAN, 0.0]), Err(Error::Numerical(_))));
    }

    #[test]
    fn hedge_survives_extreme_losses() {
        let s = OmdState::new(dvector![0.5, 0.5], 1.0);
        let next = hedge_step(&s, &dvector![1e6, 1e6 + 1.0]).unwrap();
        assert!((next.point.sum() - 1.0).abs() < 1e-15);
        assert!(next.point[0] > next.point[1]);
    }

    #[test]
    fn omd_dispatch_matches_specialized_steps() {
        let ball = DomainBall::new(2, 2.0).unwrap();
        let s = OmdState::new(dvector![0.4, 0.1], 0.3);
        let g = dvector![0.7, -1.1];
        assert_eq!(
            omd_step(&s, &g, Regularizer::Euclidean, &Geometry::Ball(ball)).unwrap(),
            ogd_step(&s, &g, &ball).unwrap()
        );
        let p = OmdState::new(dvector![0.3, 0.7], 0.3);
        assert_eq!(
            omd_step(&p, &g, Regularizer::NegativeEntropy, &Geometry::Simplex).unwrap(),
            hedge_step(&p, &g).unwrap()
        );
        assert!(omd_step(&p, &g, Regularizer::Euclidean, &Geometry::Simplex).is_err());
    }

    #[test]
    fn persistent_hedge_matches_one_shot_hedge() {
        let prior = dvector![0.75, 0.25];
        let mut h = Hedge::new(&prior, 0.8).unwrap();
        let losses = dvector![0.3, -0.4];
        h.step(&losses).unwrap();
        let once = hedge_step(&OmdState::new(prior, 0.8), &losses).unwrap();
        assert!((h.weights() - once.point).amax() < 1e-15);
    }
}
