//! Disturbance-action controllers `u_t = -K x_t + sum_{k=1}^H M^[k] w_{t-k}`
//! and the truncated losses that turn control into OCO with memory.
//!
//! Blocks are addressed `1..=H`. Where a formula is written with 0-based
//! blocks `M^[i-1]`, the 1-based block `i` is used instead.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{ensure, Error, Result};
use crate::lds::LinearSystem;
use crate::linalg::{all_finite_vec, op_norm, powers, uniform_matrix};

/// Ordered blocks `M^[1..H]`, each `d_u x d_x`.
#[derive(Debug, Clone, PartialEq)]
pub struct DacParams {
    blocks: Vec<DMatrix<f64>>,
}

impl DacParams {
    pub fn new(blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        ensure(!blocks.is_empty(), || "DAC parameters need at least one block".into())?;
        let (r, c) = blocks[0].shape();
        ensure(blocks.iter().all(|b| b.shape() == (r, c)), || "DAC blocks must share one shape".into())?;
        Ok(Self { blocks })
    }

    pub fn zeros(h: usize, du: usize, dx: usize) -> Self {
        Self { blocks: vec![DMatrix::zeros(du, dx); h.max(1)] }
    }

    pub fn h(&self) -> usize {
        self.blocks.len()
    }

    pub fn input_dim(&self) -> usize {
        self.blocks[0].nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.blocks[0].ncols()
    }

    /// `M^[k]` for `1 <= k <= H`.
    pub fn block(&self, k: usize) -> &DMatrix<f64> {
        &self.blocks[k - 1]
    }

    pub fn block_mut(&mut self, k: usize) -> &mut DMatrix<f64> {
        &mut self.blocks[k - 1]
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn fro_norm(&self) -> f64 {
        self.blocks.iter().map(|b| b.norm_squared()).sum::<f64>().sqrt()
    }

    /// Blocks stacked column-major into one vector, `M^[1]` first.
    pub fn to_vector(&self) -> DVector<f64> {
        let n: usize = self.blocks.iter().map(|b| b.len()).sum();
        let mut v = DVector::zeros(n);
        let mut off = 0;
        for b in &self.blocks {
            v.rows_mut(off, b.len()).copy_from_slice(b.as_slice());
            off += b.len();
        }
        v
    }

    pub fn from_vector(v: &DVector<f64>, h: usize, du: usize, dx: usize) -> Result<Self> {
        ensure(v.len() == h * du * dx, || format!("vector of length {} cannot hold {h} blocks of {du}x{dx}", v.len()))?;
        let size = du * dx;
        Ok(Self {
            blocks: (0..h)
                .map(|k| DMatrix::from_column_slice(du, dx, &v.as_slice()[k * size..(k + 1) * size]))
                .collect(),
        })
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| (a - b).norm_squared())
            .sum::<f64>()
            .sqrt()
    }
}

/// Product of spectral-norm balls `||M^[i]|| <= c_i = kappa_B kappa^3 (1-gamma)^i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DacFeasibleSet {
    caps: Vec<f64>,
}

impl DacFeasibleSet {
    pub fn new(kappa_b: f64, kappa: f64, gamma: f64, h: usize) -> Result<Self> {
        ensure(h >= 1, || "H must be at least 1".into())?;
        ensure(gamma > 0.0 && gamma < 1.0, || format!("gamma must lie in (0, 1), got {gamma}"))?;
        ensure(kappa_b > 0.0 && kappa > 0.0, || "kappa and kappa_B must be positive".into())?;
        let tau = kappa_b * kappa.powi(3);
        Ok(Self { caps: (1..=h).map(|i| tau * (1.0 - gamma).powi(i as i32)).collect() })
    }

    pub fn from_caps(caps: Vec<f64>) -> Result<Self> {
        ensure(!caps.is_empty() && caps.iter().all(|c| *c > 0.0), || "caps must be positive".into())?;
        Ok(Self { caps })
    }

    pub fn h(&self) -> usize {
        self.caps.len()
    }

    /// `c_k` for `1 <= k <= H`.
    pub fn cap(&self, k: usize) -> f64 {
        self.caps[k - 1]
    }

    pub fn caps(&self) -> &[f64] {
        &self.caps
    }

    pub fn contains(&self, m: &DacParams, tol: f64) -> bool {
        m.h() == self.h() && m.blocks.iter().zip(&self.caps).all(|(b, c)| op_norm(b) <= c + tol)
    }

    /// Random feasible point: each block a random matrix scaled to a uniform fraction of its cap.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, du: usize, dx: usize) -> DacParams {
        let blocks = self
            .caps
            .iter()
            .map(|c| {
                let m = uniform_matrix(rng, du, dx);
                let n = op_norm(&m);
                if n == 0.0 {
                    m
                } else {
                    m * (c * rng.random::<f64>() / n)
                }
            })
            .collect();
        DacParams { blocks }
    }
}

/// Clip the singular values of one matrix at `cap`.
pub fn clip_singular_values(m: &DMatrix<f64>, cap: f64) -> DMatrix<f64> {
    if op_norm(m) <= cap {
        return m.clone();
    }
    // M V diag(min(1, cap / s_i)) V^T with V from the eigenvectors of M^T M;
    // unlike recomposing an SVD this stays exact when singular values repeat.
    let eig = (m.transpose() * m).symmetric_eigen();
    let v = &eig.eigenvectors;
    let scale = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|l| {
            let s = l.max(0.0).sqrt();
            if s > cap { cap / s } else { 1.0 }
        }),
    );
    m * v * DMatrix::from_diagonal(&scale) * v.transpose()
}

/// Frobenius projection onto the feasible set, block by block.
pub fn project_to_dac_set(m: &DacParams, set: &DacFeasibleSet) -> Result<DacParams> {
    ensure(m.h() == set.h(), || format!("parameters have {} blocks, set has {}", m.h(), set.h()))?;
    Ok(DacParams {
        blocks: m.blocks.iter().zip(&set.caps).map(|(b, c)| clip_singular_values(b, *c)).collect(),
    })
}

/// The last `capacity` disturbances, newest first; older entries read as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceWindow {
    dim: usize,
    capacity: usize,
    recent: VecDeque<DVector<f64>>,
    zero: DVector<f64>,
}

impl DisturbanceWindow {
    /// Capacity `2H + 1`, as the truncated loss needs.
    pub fn for_memory(h: usize, dim: usize) -> Self {
        Self::with_capacity(2 * h + 1, dim)
    }

    pub fn with_capacity(capacity: usize, dim: usize) -> Self {
        Self { dim, capacity, recent: VecDeque::with_capacity(capacity), zero: DVector::zeros(dim) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Record `w_{t-1}` once it is known; it becomes lag 1.
    pub fn push(&mut self, w: DVector<f64>) -> Result<()> {
        ensure(w.len() == self.dim, || format!("disturbance has {} entries, window holds {}", w.len(), self.dim))?;
        if self.recent.len() == self.capacity {
            self.recent.pop_back();
        }
        self.recent.push_front(w);
        Ok(())
    }

    /// `w_{t-i}` for `1 <= i <= capacity`.
    pub fn lag(&self, i: usize) -> &DVector<f64> {
        assert!(i >= 1 && i <= self.capacity, "lag {i} outside 1..={}", self.capacity);
        self.recent.get(i - 1).unwrap_or(&self.zero)
    }

    pub fn clear(&mut self) {
        self.recent.clear();
    }
}

/// `-K x + sum_{k=1}^H M^[k] w_{t-k}`.
pub fn dac_action(k: &DMatrix<f64>, m: &DacParams, x: &DVector<f64>, window: &DisturbanceWindow) -> Result<DVector<f64>> {
    ensure(k.ncols() == x.len() && k.nrows() == m.input_dim(), || "K does not match state or input dimension".into())?;
    ensure(m.state_dim() == x.len() && window.dim() == x.len(), || "DAC blocks do not match state dimension".into())?;
    ensure(window.capacity() >= m.h(), || "disturbance window shorter than H".into())?;
    let mut u = -(k * x);
    for i in 1..=m.h() {
        u += m.block(i) * window.lag(i);
    }
    Ok(u)
}

/// Cached powers `A_K^j` and products `A_K^j B` for `A_K = A - BK`.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub a_k: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub k: DMatrix<f64>,
    powers: Vec<DMatrix<f64>>,
    powers_b: Vec<DMatrix<f64>>,
}

impl ClosedLoop {
    pub fn new(system: &LinearSystem, k: &DMatrix<f64>, max_power: usize) -> Result<Self> {
        let a_k = system.closed_loop(k)?;
        let powers = powers(&a_k, max_power);
        let powers_b = powers.iter().map(|p| p * &system.b).collect();
        Ok(Self { a_k, b: system.b.clone(), k: k.clone(), powers, powers_b })
    }

    pub fn max_power(&self) -> usize {
        self.powers.len() - 1
    }

    pub fn power(&self, j: usize) -> &DMatrix<f64> {
        &self.powers[j]
    }

    pub fn power_b(&self, j: usize) -> &DMatrix<f64> {
        &self.powers_b[j]
    }

    pub fn state_dim(&self) -> usize {
        self.a_k.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }
}

/// `Psi_{t,i}^{K,h} = A_K^i 1{i <= h} + sum_{j=0}^h A_K^j B M_{t-j}^[i-j] 1{1 <= i-j <= H}`.
///
/// `history` holds `M_{t-h}, ..., M_t`, oldest first.
pub fn transfer_matrix(cl: &ClosedLoop, i: usize, h: usize, history: &[DacParams]) -> Result<DMatrix<f64>> {
    ensure(history.len() == h + 1, || format!("need {} parameter sets, got {}", h + 1, history.len()))?;
    let big_h = history[0].h();
    ensure(i <= h + big_h, || format!("index {i} outside 0..={}", h + big_h))?;
    ensure(cl.max_power() >= h.min(i), || "power cache too short".into())?;
    let n = cl.state_dim();
    let mut psi = if i <= h { cl.power(i).clone() } else { DMatrix::zeros(n, n) };
    for j in 0..=h.min(i) {
        let lag = i - j;
        if lag >= 1 && lag <= big_h {
            psi += cl.power_b(j) * history[h - j].block(lag);
        }
    }
    Ok(psi)
}

/// `x_t = sum_{i=0}^{t-1} Psi_{t-1,i}^{K,t-1} w_{t-1-i}` from `x_0 = 0`.
///
/// `history` holds `M_0..M_{t-1}` and `disturbances` holds `w_0..w_{t-1}`.
pub fn state_via_transfer(cl: &ClosedLoop, history: &[DacParams], disturbances: &[DVector<f64>], t: usize) -> Result<DVector<f64>> {
    ensure(history.len() >= t && disturbances.len() >= t, || "history shorter than t".into())?;
    let mut x = DVector::zeros(cl.state_dim());
    if t == 0 {
        return Ok(x);
    }
    let h = t - 1;
    for i in 0..t {
        let psi = transfer_matrix(cl, i, h, &history[..t])?;
        x += psi * &disturbances[t - 1 - i];
    }
    Ok(x)
}

/// Direct simulation of the DAC policy sequence from `x_0 = 0`; returns `x_0..x_T`.
pub fn simulate_dac(system: &LinearSystem, k: &DMatrix<f64>, history: &[DacParams], disturbances: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    ensure(history.len() == disturbances.len(), || "one parameter set per disturbance".into())?;
    let h = history.first().map_or(1, |m| m.h());
    let mut window = DisturbanceWindow::with_capacity(h, system.state_dim());
    let mut xs = vec![DVector::zeros(system.state_dim())];
    for (m, w) in history.iter().zip(disturbances) {
        let x = xs.last().expect("non-empty");
        let u = dac_action(k, m, x, &window)?;
        xs.push(crate::lds::step_dynamics(system, x, &u, w)?);
        window.push(w.clone())?;
    }
    Ok(xs)
}

/// Per-round convex cost `c_t(x, u)`; gradients are optional.
pub trait ControlCost {
    fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64;

    /// `(grad_x c, grad_u c)` when available.
    fn gradients(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
        None
    }
}

/// `||x - x*||^2 + r ||u||^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticTrackingCost {
    pub target: DVector<f64>,
    pub r: f64,
}

impl QuadraticTrackingCost {
    pub fn new(target: DVector<f64>, r: f64) -> Self {
        Self { target, r }
    }

    /// Gradient bound constant `G_c` for states and actions bounded by `d`:
    /// `||grad|| <= G_c d` with `G_c = max(2 (1 + ||x*|| / d), 2 r)`.
    pub fn gradient_constant(&self, d: f64) -> f64 {
        (2.0 * (1.0 + self.target.norm() / d)).max(2.0 * self.r)
    }
}

impl ControlCost for QuadraticTrackingCost {
    fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        (x - &self.target).norm_squared() + self.r * u.norm_squared()
    }

    fn gradients(&self, x: &DVector<f64>, u: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
        Some(((x - &self.target) * 2.0, u * (2.0 * self.r)))
    }
}

/// Wraps a cost and hides its gradients, forcing the finite-difference path.
#[derive(Debug, Clone)]
pub struct ValueOnly<C>(pub C);

impl<C: ControlCost> ControlCost for ValueOnly<C> {
    fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        self.0.eval(x, u)
    }
}

/// Truncated state and action.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedPoint {
    pub value: f64,
    pub y: DVector<f64>,
    pub v: DVector<f64>,
}

fn check_window(cl: &ClosedLoop, window: &DisturbanceWindow, h: usize) -> Result<()> {
    ensure(window.capacity() > 2 * h, || format!("need {} disturbances, window holds {}", 2 * h + 1, window.capacity()))?;
    ensure(cl.max_power() >= h, || "power cache shorter than H".into())?;
    ensure(window.dim() == cl.state_dim(), || "window dimension differs from state dimension".into())
}

/// `y_t = sum_{i=0}^{2H} Psi_{t-1,i}^{K,H} w_{t-1-i}` and `v_t = -K y_t + sum_k M_t^[k] w_{t-k}`,
/// with `params = [M_{t-1-H}, ..., M_t]`.
pub fn truncated_point(cl: &ClosedLoop, params: &[DacParams], window: &DisturbanceWindow) -> Result<(DVector<f64>, DVector<f64>)> {
    ensure(!params.is_empty(), || "empty parameter window".into())?;
    let h = params[0].h();
    ensure(params.len() == h + 2, || format!("need {} parameter sets, got {}", h + 2, params.len()))?;
    check_window(cl, window, h)?;
    let mut y = DVector::zeros(cl.state_dim());
    for i in 0..=h {
        y += cl.power(i) * window.lag(1 + i);
    }
    for j in 0..=h {
        let m = &params[h - j];
        let mut acc = DVector::zeros(cl.input_dim());
        for k in 1..=h {
            acc += m.block(k) * window.lag(1 + j + k);
        }
        y += cl.power_b(j) * acc;
    }
    let current = &params[h + 1];
    let mut v = -(&cl.k * &y);
    for k in 1..=h {
        v += current.block(k) * window.lag(k);
    }
    Ok((y, v))
}

/// `f_t(M_{t-1-H}, ..., M_t) = c_t(y_t, v_t)`.
pub fn truncated_loss<C: ControlCost + ?Sized>(cost: &C, cl: &ClosedLoop, params: &[DacParams], window: &DisturbanceWindow) -> Result<TruncatedPoint> {
    let (y, v) = truncated_point(cl, params, window)?;
    let value = cost.eval(&y, &v);
    if !value.is_finite() {
        return Err(Error::Numerical("truncated loss is not finite".into()));
    }
    Ok(TruncatedPoint { value, y, v })
}

/// Unary truncated loss `f_t(M, ..., M)`.
pub fn unary_truncated_loss<C: ControlCost + ?Sized>(cost: &C, cl: &ClosedLoop, m: &DacParams, window: &DisturbanceWindow) -> Result<TruncatedPoint> {
    let params = vec![m.clone(); m.h() + 2];
    truncated_loss(cost, cl, &params, window)
}

/// Gradient of the unary truncated loss with respect to every block.
///
/// With `g = grad_x c - K^T grad_u c`,
/// `d f / d M^[k] = sum_{j=0}^H (A_K^j B)^T g w_{t-1-j-k}^T + grad_u c w_{t-k}^T`.
/// Costs without gradients fall back to central finite differences.
pub fn unary_truncated_gradient<C: ControlCost + ?Sized>(cost: &C, cl: &ClosedLoop, m: &DacParams, window: &DisturbanceWindow) -> Result<DacParams> {
    let h = m.h();
    let point = unary_truncated_loss(cost, cl, m, window)?;
    let Some((gx, gu)) = cost.gradients(&point.y, &point.v) else {
        log::warn!("cost exposes no gradients; using finite differences");
        return finite_difference_gradient(cost, cl, m, window);
    };
    if !all_finite_vec(&gx) || !all_finite_vec(&gu) {
        return Err(Error::Numerical("cost gradient is not finite".into()));
    }
    let g = &gx - cl.k.transpose() * &gu;
    let pulled: Vec<DVector<f64>> = (0..=h).map(|j| cl.power_b(j).transpose() * &g).collect();
    let mut blocks = Vec::with_capacity(h);
    for k in 1..=h {
        let mut grad = &gu * window.lag(k).transpose();
        for (j, p) in pulled.iter().enumerate() {
            grad += p * window.lag(1 + j + k).transpose();
        }
        blocks.push(grad);
    }
    DacParams::new(blocks)
}

/// Central differences of the unary truncated loss, entry by entry.
pub fn finite_difference_gradient<C: ControlCost + ?Sized>(cost: &C, cl: &ClosedLoop, m: &DacParams, window: &DisturbanceWindow) -> Result<DacParams> {
    let base = m.to_vector();
    let (h, du, dx) = (m.h(), m.input_dim(), m.state_dim());
    let mut grad = DVector::zeros(base.len());
    for e in 0..base.len() {
        let step = 1e-6 * base[e].abs().max(1.0);
        let mut plus = base.clone();
        plus[e] += step;
        let mut minus = base.clone();
        minus[e] -= step;
        let fp = unary_truncated_loss(cost, cl, &DacParams::from_vector(&plus, h, du, dx)?, window)?.value;
        let fm = unary_truncated_loss(cost, cl, &DacParams::from_vector(&minus, h, du, dx)?, window)?.value;
        grad[e] = (fp - fm) / (2.0 * step);
    }
    DacParams::from_vector(&grad, h, du, dx)
}

/// Bounds used to tune the controller.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LipschitzConstants {
    /// Bound on states and actions.
    pub d: f64,
    pub l_f: f64,
    pub g_f: f64,
    pub d_f: f64,
    /// `(H + 2)^2 L_f`.
    pub lambda: f64,
    pub tau: f64,
}

/// Inputs of [`lipschitz_constants`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantInputs {
    pub kappa_b: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub h: usize,
    pub g_c: f64,
    pub w: f64,
    pub du: usize,
    pub dx: usize,
}

/// `tau = kappa_B kappa^3`,
/// `D = W kappa^3 (1 + H kappa_B tau) / (gamma (1 - kappa^2 (1-gamma)^{H+1})) + W tau / gamma`,
/// `L_f = 3 sqrt(H) G_c D W kappa_B kappa^3`, `G_f = 3 H d^2 G_c W kappa_B kappa^3 / gamma`,
/// `D_f = 2 sqrt(d) kappa_B kappa^3 / gamma` with `d = min(d_u, d_x)`.
pub fn lipschitz_constants(p: &ConstantInputs) -> Result<LipschitzConstants> {
    ensure(p.h >= 1, || "H must be at least 1".into())?;
    ensure(p.gamma > 0.0 && p.gamma < 1.0, || format!("gamma must lie in (0, 1), got {}", p.gamma))?;
    ensure(p.kappa >= 1.0 && p.kappa_b > 0.0 && p.g_c > 0.0 && p.w > 0.0, || "constants must be positive".into())?;
    let decay = p.kappa * p.kappa * (1.0 - p.gamma).powi(p.h as i32 + 1);
    ensure(decay < 1.0, || format!("kappa^2 (1-gamma)^(H+1) = {decay} must be below 1; increase H"))?;
    let k3 = p.kappa.powi(3);
    let tau = p.kappa_b * k3;
    let h = p.h as f64;
    let d = p.w * k3 * (1.0 + h * p.kappa_b * tau) / (p.gamma * (1.0 - decay)) + p.w * tau / p.gamma;
    let dim = p.du.min(p.dx) as f64;
    let l_f = 3.0 * h.sqrt() * p.g_c * d * p.w * p.kappa_b * k3;
    let g_f = 3.0 * h * dim * dim * p.g_c * p.w * p.kappa_b * k3 / p.gamma;
    let d_f = 2.0 * dim.sqrt() * p.kappa_b * k3 / p.gamma;
    let lambda = (h + 2.0).powi(2) * l_f;
    Ok(LipschitzConstants { d, l_f, g_f, d_f, lambda, tau })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn unit_inputs(h: usize) -> ConstantInputs {
        ConstantInputs { kappa_b: 1.0, kappa: 1.0, gamma: 0.5, h, g_c: 1.0, w: 1.0, du: 1, dx: 1 }
    }

    #[test]
    fn clipping_is_idempotent_with_repeated_singular_values() {
        let m = DMatrix::from_column_slice(
            3,
            3,
            &[-0.2208, 1.1003, 0.1820, -1.2290, 2.2840, -1.5667, 0.0852, -1.9274, -1.1683],
        );
        let cap = 0.55;
        let p = clip_singular_values(&m, cap);
        assert!(op_norm(&p) <= cap + 1e-12);
        assert!((clip_singular_values(&p, cap * (1.0 - 1e-15)) - &p).norm() < 1e-12);
        let small = m.scale(0.1);
        assert_eq!(clip_singular_values(&small, cap), small);
    }

    #[test]
    fn constants_hand_values() {
        let c = lipschitz_constants(&unit_inputs(1)).unwrap();
        assert!((c.d - 22.0 / 3.0).abs() < 1e-12);
        assert!((c.d_f - 4.0).abs() < 1e-12);
        assert!((c.lambda - 9.0 * c.l_f).abs() < 1e-9);
        let c5 = lipschitz_constants(&unit_inputs(5)).unwrap();
        assert_eq!(c5.d_f, c.d_f);
        assert!(c5.l_f > c.l_f);
    }

    #[test]
    fn constants_reject_slow_decay() {
        let mut p = unit_inputs(1);
        p.kappa = 2.0;
        assert!(lipschitz_constants(&p).is_err());
    }

    #[test]
    fn zero_params_give_linear_controller() {
        let k = DMatrix::from_row_slice(1, 2, &[0.5, -1.0]);
        let mut win = DisturbanceWindow::for_memory(2, 2);
        win.push(dvector![1.0, 2.0]).unwrap();
        let x = dvector![2.0, 1.0];
        assert_eq!(dac_action(&k, &DacParams::zeros(2, 1, 2), &x, &win).unwrap(), -(&k * &x));
    }

    #[test]
    fn identity_block_passes_disturbance() {
        let m = DacParams::new(vec![DMatrix::identity(2, 2)]).unwrap();
        let mut win = DisturbanceWindow::for_memory(1, 2);
        win.push(dvector![1.0, 0.0]).unwrap();
        let u = dac_action(&DMatrix::zeros(2, 2), &m, &dvector![3.0, 4.0], &win).unwrap();
        assert_eq!(u, dvector![1.0, 0.0]);
    }

    #[test]
    fn window_pads_with_zeros() {
        let mut win = DisturbanceWindow::with_capacity(3, 1);
        win.push(dvector![1.0]).unwrap();
        assert_eq!(win.lag(1)[0], 1.0);
        assert_eq!(win.lag(3)[0], 0.0);
        for v in 2..6 {
            win.push(dvector![v as f64]).unwrap();
        }
        assert_eq!((win.lag(1)[0], win.lag(3)[0]), (5.0, 3.0));
    }

    #[test]
    fn rank_one_block_is_halved() {
        let set = DacFeasibleSet::from_caps(vec![1.0]).unwrap();
        let m = DacParams::new(vec![DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0])]).unwrap();
        let p = project_to_dac_set(&m, &set).unwrap();
        assert!((p.block(1) - DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).norm() < 1e-12);
    }

    #[test]
    fn transfer_at_zero_is_identity() {
        let sys = LinearSystem::new(DMatrix::identity(2, 2) * 0.5, DMatrix::identity(2, 2), 1.0).unwrap();
        let cl = ClosedLoop::new(&sys, &DMatrix::zeros(2, 2), 4).unwrap();
        let hist = vec![DacParams::new(vec![DMatrix::identity(2, 2) * 0.3; 2]).unwrap(); 3];
        assert_eq!(transfer_matrix(&cl, 0, 2, &hist).unwrap(), DMatrix::identity(2, 2));
        assert!(transfer_matrix(&cl, 5, 2, &hist).is_err());
    }

    #[test]
    fn scalar_gradient_closed_form() {
        // a = 0.5, b = 1, K = 0, H = 1, c = y^2 + r v^2.
        // y = w1 + a w2 + m (w2 + a w3), v = m w1.
        let sys = LinearSystem::new(DMatrix::from_element(1, 1, 0.5), DMatrix::from_element(1, 1, 1.0), 1.0).unwrap();
        let cl = ClosedLoop::new(&sys, &DMatrix::zeros(1, 1), 1).unwrap();
        let mut win = DisturbanceWindow::for_memory(1, 1);
        let (w3, w2, w1) = (0.3, -0.2, 0.7);
        for w in [w3, w2, w1] {
            win.push(dvector![w]).unwrap();
        }
        let m = 0.4;
        let r = 0.1;
        let cost = QuadraticTrackingCost::new(dvector![0.0], r);
        let g = unary_truncated_gradient(&cost, &cl, &DacParams::new(vec![DMatrix::from_element(1, 1, m)]).unwrap(), &win).unwrap();
        let y = w1 + 0.5 * w2 + m * (w2 + 0.5 * w3);
        let expect = 2.0 * y * (w2 + 0.5 * w3) + 2.0 * r * m * w1 * w1;
        assert!((g.block(1)[(0, 0)] - expect).abs() < 1e-14);
    }

    #[test]
    fn zero_disturbances_zero_gradient() {
        let sys = LinearSystem::new(DMatrix::identity(2, 2) * 0.5, DMatrix::identity(2, 2), 1.0).unwrap();
        let cl = ClosedLoop::new(&sys, &DMatrix::zeros(2, 2), 3).unwrap();
        let win = DisturbanceWindow::for_memory(3, 2);
        let m = DacParams::new(vec![DMatrix::identity(2, 2) * 0.1; 3]).unwrap();
        let g = unary_truncated_gradient(&QuadraticTrackingCost::new(dvector![1.0, 0.0], 0.1), &cl, &m, &win).unwrap();
        assert_eq!(g.fro_norm(), 0.0);
    }

    #[test]
    fn value_only_cost_uses_finite_differences() {
        let sys = LinearSystem::new(DMatrix::from_element(1, 1, 0.5), DMatrix::from_element(1, 1, 1.0), 1.0).unwrap();
        let cl = ClosedLoop::new(&sys, &DMatrix::zeros(1, 1), 2).unwrap();
        let mut win = DisturbanceWindow::for_memory(2, 1);
        for w in [0.1, -0.4, 0.3, 0.2, 0.5] {
            win.push(dvector![w]).unwrap();
        }
        let m = DacParams::new(vec![DMatrix::from_element(1, 1, 0.2), DMatrix::from_element(1, 1, -0.1)]).unwrap();
        let cost = QuadraticTrackingCost::new(dvector![0.3], 0.1);
        let exact = unary_truncated_gradient(&cost, &cl, &m, &win).unwrap();
        let fd = unary_truncated_gradient(&ValueOnly(cost), &cl, &m, &win).unwrap();
        assert!(exact.distance(&fd) < 1e-7);
    }

    #[test]
    fn vector_round_trip() {
        let m = DacParams::new(vec![DMatrix::from_row_slice(2, 3, &[1., 2., 3., 4., 5., 6.]), DMatrix::from_element(2, 3, 7.0)]).unwrap();
        assert_eq!(DacParams::from_vector(&m.to_vector(), 2, 2, 3).unwrap(), m);
    }
}
