//! Energy models `p(x|θ) ∝ exp(f(x; θ))` with analytic `∇_x f` and `∇_θ f`.
//!
//! The Gaussian-Bernoulli RBM uses the joint
//! `x⊤Bh + b⊤x + c⊤h − ½||x||²` with `h ∈ {±1}^ℓ`, so that summing out `h`
//! gives the negative energy
//! `f(x) = b⊤x − ½||x||² + Σ_k log(e^{a_k} + e^{−a_k})`, `a = B⊤x + c`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::numerics::{dot, sq_dist, Layout, ParamVector, ParticleBatch, RngStream};

/// Largest hidden layer for which [`rbm_log_partition`] enumerates states.
pub const MAX_ENUM_HIDDEN: usize = 25;

/// A family of unnormalized densities indexed by a flat parameter vector.
pub trait EnergyModel {
    /// Dimension of the state space.
    fn dim(&self) -> usize;

    fn layout(&self) -> Layout;

    /// Negative energy `f(x; θ)`.
    fn f(&self, theta: &ParamVector, x: &[f64]) -> f64;

    /// Writes `∇_x f(x; θ)` into `out`.
    fn grad_x_into(&self, theta: &ParamVector, x: &[f64], out: &mut [f64]);

    /// Adds `weight · ∇_θ f(x; θ)` to `out`.
    fn grad_theta_acc(&self, theta: &ParamVector, x: &[f64], weight: f64, out: &mut [f64]);

    /// `log Z(θ)`, when available in closed form or by exact enumeration.
    fn log_partition(&self, _theta: &ParamVector) -> Result<f64> {
        Err(Error::NoExactPartition)
    }

    fn num_params(&self) -> usize {
        self.layout().len()
    }

    fn grad_x(&self, theta: &ParamVector, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.grad_x_into(theta, x, &mut out);
        out
    }

    fn grad_theta(&self, theta: &ParamVector, x: &[f64]) -> ParamVector {
        let mut out = ParamVector::zeros(self.layout());
        self.grad_theta_acc(theta, x, 1.0, out.as_mut_slice());
        out
    }

    /// Batch mean of `∇_θ f`.
    fn mean_grad_theta(&self, theta: &ParamVector, batch: &ParticleBatch) -> ParamVector {
        let mut out = ParamVector::zeros(self.layout());
        let w = 1.0 / batch.len() as f64;
        for x in batch.rows() {
            self.grad_theta_acc(theta, x, w, out.as_mut_slice());
        }
        out
    }

    fn mean_f(&self, theta: &ParamVector, batch: &ParticleBatch) -> f64 {
        batch.rows().map(|x| self.f(theta, x)).sum::<f64>() / batch.len() as f64
    }

    /// `∇_x f` at every row of the batch.
    fn scores(&self, theta: &ParamVector, batch: &ParticleBatch) -> ParticleBatch {
        let d = batch.dim();
        let mut out = vec![0.0; batch.len() * d];
        for (x, s) in batch.rows().zip(out.chunks_exact_mut(d)) {
            self.grad_x_into(theta, x, s);
        }
        ParticleBatch::from_flat(out, d).expect("dimension already validated")
    }
}

/// `log(e^a + e^{-a})` without overflow.
fn log_two_cosh(a: f64) -> f64 {
    let t = a.abs();
    t + (-2.0 * t).exp().ln_1p()
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

// ---------------------------------------------------------------------------
// Gaussian-Bernoulli RBM
// ---------------------------------------------------------------------------

/// Parameters `(B, b, c)`; `B` is `d × ℓ`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbRbmParams {
    pub visible: usize,
    pub hidden: usize,
    pub weights: Vec<f64>,
    pub visible_bias: Vec<f64>,
    pub hidden_bias: Vec<f64>,
}

/// Borrowed view of RBM parameters laid out as `[B row-major | b | c]`.
#[derive(Clone, Copy)]
struct RbmView<'a> {
    d: usize,
    l: usize,
    w: &'a [f64],
    b: &'a [f64],
    c: &'a [f64],
}

impl<'a> RbmView<'a> {
    fn from_flat(d: usize, l: usize, theta: &'a [f64]) -> Self {
        let (w, rest) = theta.split_at(d * l);
        let (b, c) = rest.split_at(d);
        Self { d, l, w, b, c }
    }

    /// `a = B⊤x + c`.
    fn activations(&self, x: &[f64]) -> Vec<f64> {
        let mut a = self.c.to_vec();
        for (i, xi) in x.iter().enumerate() {
            let row = &self.w[i * self.l..(i + 1) * self.l];
            for (ak, wik) in a.iter_mut().zip(row) {
                *ak += xi * wik;
            }
        }
        a
    }

    fn f(&self, x: &[f64]) -> f64 {
        let a = self.activations(x);
        dot(self.b, x) - 0.5 * dot(x, x) + a.iter().map(|&ak| log_two_cosh(ak)).sum::<f64>()
    }

    fn grad_x_into(&self, x: &[f64], out: &mut [f64]) {
        let t: Vec<f64> = self.activations(x).into_iter().map(f64::tanh).collect();
        for i in 0..self.d {
            let row = &self.w[i * self.l..(i + 1) * self.l];
            out[i] = self.b[i] - x[i] + dot(row, &t);
        }
    }

    fn grad_theta_acc(&self, x: &[f64], weight: f64, out: &mut [f64]) {
        let t: Vec<f64> = self.activations(x).into_iter().map(f64::tanh).collect();
        let (gw, rest) = out.split_at_mut(self.d * self.l);
        let (gb, gc) = rest.split_at_mut(self.d);
        for i in 0..self.d {
            let wx = weight * x[i];
            for (g, tk) in gw[i * self.l..(i + 1) * self.l].iter_mut().zip(&t) {
                *g += wx * tk;
            }
            gb[i] += weight * x[i];
        }
        for (g, tk) in gc.iter_mut().zip(&t) {
            *g += weight * tk;
        }
    }

    /// Exact log Z: for each `h` the Gaussian integral over `x` gives
    /// `(2π)^{d/2} exp(c⊤h + ½||b + Bh||²)`. States are visited in Gray-code
    /// order so each step updates `b + Bh` with one column.
    fn log_partition(&self) -> Result<f64> {
        if self.l > MAX_ENUM_HIDDEN {
            return Err(Error::EnumerationBudget { hidden: self.l, max: MAX_ENUM_HIDDEN });
        }
        let (d, l) = (self.d, self.l);
        let mut h = vec![-1.0f64; l];
        let mut v: Vec<f64> = (0..d)
            .map(|i| self.b[i] - self.w[i * l..(i + 1) * l].iter().sum::<f64>())
            .collect();
        let mut ch: f64 = -self.c.iter().sum::<f64>();

        let first = ch + 0.5 * dot(&v, &v);
        let mut max = first;
        let mut sum = 1.0;
        for t in 1u64..(1u64 << l) {
            let k = t.trailing_zeros() as usize;
            let s = h[k];
            h[k] = -s;
            for (i, vi) in v.iter_mut().enumerate() {
                *vi -= 2.0 * s * self.w[i * l + k];
            }
            ch -= 2.0 * s * self.c[k];
            let term = ch + 0.5 * dot(&v, &v);
            if term > max {
                sum = sum * (max - term).exp() + 1.0;
                max = term;
            } else {
                sum += (term - max).exp();
            }
        }
        Ok(0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln() + max + sum.ln())
    }
}

impl GbRbmParams {
    pub fn zeros(visible: usize, hidden: usize) -> Self {
        Self {
            visible,
            hidden,
            weights: vec![0.0; visible * hidden],
            visible_bias: vec![0.0; visible],
            hidden_bias: vec![0.0; hidden],
        }
    }

    /// Entries drawn i.i.d. `Normal(0, scale²)`.
    pub fn random(visible: usize, hidden: usize, scale: f64, rng: &mut RngStream) -> Self {
        let mut p = Self::zeros(visible, hidden);
        for v in p.weights.iter_mut().chain(&mut p.visible_bias).chain(&mut p.hidden_bias) {
            *v = scale * rng.normal();
        }
        p
    }

    pub fn layout(visible: usize, hidden: usize) -> Layout {
        Layout::new([("weights", visible * hidden), ("visible_bias", visible), ("hidden_bias", hidden)])
    }

    pub fn to_param_vector(&self) -> ParamVector {
        let values = self
            .weights
            .iter()
            .chain(&self.visible_bias)
            .chain(&self.hidden_bias)
            .copied()
            .collect();
        ParamVector::new(values, Self::layout(self.visible, self.hidden))
            .expect("params are consistent with their layout")
    }

    pub fn from_param_vector(visible: usize, hidden: usize, theta: &ParamVector) -> Result<Self> {
        check_dim(visible * hidden + visible + hidden, theta.len())?;
        let v = RbmView::from_flat(visible, hidden, theta.as_slice());
        Ok(Self {
            visible,
            hidden,
            weights: v.w.to_vec(),
            visible_bias: v.b.to_vec(),
            hidden_bias: v.c.to_vec(),
        })
    }

    fn view(&self) -> RbmView<'_> {
        RbmView {
            d: self.visible,
            l: self.hidden,
            w: &self.weights,
            b: &self.visible_bias,
            c: &self.hidden_bias,
        }
    }
}

pub fn rbm_f(params: &GbRbmParams, x: &[f64]) -> Result<f64> {
    check_dim(params.visible, x.len())?;
    Ok(params.view().f(x))
}

/// `b − x + B tanh(B⊤x + c)`.
pub fn rbm_grad_x(params: &GbRbmParams, x: &[f64]) -> Result<Vec<f64>> {
    check_dim(params.visible, x.len())?;
    let mut out = vec![0.0; params.visible];
    params.view().grad_x_into(x, &mut out);
    Ok(out)
}

/// Blocks: `x tanh(a)⊤`, `x`, `tanh(a)`.
pub fn rbm_grad_theta(params: &GbRbmParams, x: &[f64]) -> Result<ParamVector> {
    check_dim(params.visible, x.len())?;
    let mut out = ParamVector::zeros(GbRbmParams::layout(params.visible, params.hidden));
    params.view().grad_theta_acc(x, 1.0, out.as_mut_slice());
    Ok(out)
}

pub fn rbm_log_partition(params: &GbRbmParams) -> Result<f64> {
    params.view().log_partition()
}

/// Block Gibbs chain alternating `h | x` and `x | h`:
/// `p(h_k = +1 | x) = logistic(2 a_k)`, `x | h ~ Normal(b + Bh, I)`.
///
/// Runs `burn_in` sweeps, then keeps one sample every `max(thin, 1)` sweeps.
pub fn rbm_gibbs_sample(
    params: &GbRbmParams,
    n: usize,
    burn_in: usize,
    thin: usize,
    rng: &mut RngStream,
) -> Result<ParticleBatch> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be >= 1".into()));
    }
    let view = params.view();
    let (d, l) = (params.visible, params.hidden);
    let mut x: Vec<f64> = params.visible_bias.iter().map(|b| b + rng.normal()).collect();
    let mut h = vec![0.0; l];
    let mut sweep = |x: &mut Vec<f64>, rng: &mut RngStream| {
        let a = view.activations(x);
        for (hk, ak) in h.iter_mut().zip(&a) {
            *hk = if rng.uniform() < logistic(2.0 * ak) { 1.0 } else { -1.0 };
        }
        for i in 0..d {
            x[i] = view.b[i] + dot(&view.w[i * l..(i + 1) * l], &h) + rng.normal();
        }
    };
    for _ in 0..burn_in {
        sweep(&mut x, rng);
    }
    let stride = thin.max(1);
    let mut out = Vec::with_capacity(n * d);
    for _ in 0..n {
        for _ in 0..stride {
            sweep(&mut x, rng);
        }
        out.extend_from_slice(&x);
    }
    ParticleBatch::from_flat(out, d)
}

/// Exact i.i.d. samples: draws `h` from its marginal by enumerating all
/// `2^ℓ` states, then `x | h`. Intended for small `ℓ`.
pub fn rbm_exact_sample(params: &GbRbmParams, n: usize, rng: &mut RngStream) -> Result<ParticleBatch> {
    let (d, l) = (params.visible, params.hidden);
    if l > 16 {
        return Err(Error::EnumerationBudget { hidden: l, max: 16 });
    }
    let states: Vec<Vec<f64>> = (0..1usize << l)
        .map(|s| (0..l).map(|k| if s >> k & 1 == 1 { 1.0 } else { -1.0 }).collect())
        .collect();
    let means: Vec<Vec<f64>> = states
        .iter()
        .map(|h| {
            (0..d)
                .map(|i| params.visible_bias[i] + dot(&params.weights[i * l..(i + 1) * l], h))
                .collect()
        })
        .collect();
    let logw: Vec<f64> = states
        .iter()
        .zip(&means)
        .map(|(h, m)| dot(&params.hidden_bias, h) + 0.5 * dot(m, m))
        .collect();
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut cdf: Vec<f64> = logw.iter().map(|w| (w - max).exp()).collect();
    for i in 1..cdf.len() {
        cdf[i] += cdf[i - 1];
    }
    let total = *cdf.last().expect("at least one state");
    let mut out = Vec::with_capacity(n * d);
    for _ in 0..n {
        let u = rng.uniform() * total;
        let s = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
        out.extend(means[s].iter().map(|m| m + rng.normal()));
    }
    ParticleBatch::from_flat(out, d)
}

/// The RBM family as an [`EnergyModel`] over the flat layout `[B | b | c]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GbRbm {
    pub visible: usize,
    pub hidden: usize,
}

impl GbRbm {
    pub fn new(visible: usize, hidden: usize) -> Result<Self> {
        if visible == 0 || hidden == 0 {
            return Err(Error::InvalidArgument("RBM needs at least one visible and one hidden unit".into()));
        }
        Ok(Self { visible, hidden })
    }

    fn view<'a>(&self, theta: &'a ParamVector) -> RbmView<'a> {
        RbmView::from_flat(self.visible, self.hidden, theta.as_slice())
    }
}

impl EnergyModel for GbRbm {
    fn dim(&self) -> usize {
        self.visible
    }

    fn layout(&self) -> Layout {
        GbRbmParams::layout(self.visible, self.hidden)
    }

    fn f(&self, theta: &ParamVector, x: &[f64]) -> f64 {
        self.view(theta).f(x)
    }

    fn grad_x_into(&self, theta: &ParamVector, x: &[f64], out: &mut [f64]) {
        self.view(theta).grad_x_into(x, out)
    }

    fn grad_theta_acc(&self, theta: &ParamVector, x: &[f64], weight: f64, out: &mut [f64]) {
        self.view(theta).grad_theta_acc(x, weight, out)
    }

    fn log_partition(&self, theta: &ParamVector) -> Result<f64> {
        self.view(theta).log_partition()
    }
}

// ---------------------------------------------------------------------------
// Diagonal Gaussian
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagGaussianParams {
    pub mean: Vec<f64>,
    pub log_var: Vec<f64>,
}

impl DiagGaussianParams {
    pub fn standard(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], log_var: vec![0.0; dim] }
    }

    pub fn layout(dim: usize) -> Layout {
        Layout::new([("mean", dim), ("log_var", dim)])
    }

    pub fn to_param_vector(&self) -> ParamVector {
        let values = self.mean.iter().chain(&self.log_var).copied().collect();
        ParamVector::new(values, Self::layout(self.mean.len())).expect("consistent layout")
    }

    pub fn from_param_vector(theta: &ParamVector) -> Result<Self> {
        if theta.len() % 2 != 0 {
            return Err(Error::InvalidArgument("diagonal Gaussian needs an even parameter count".into()));
        }
        let (mean, log_var) = theta.as_slice().split_at(theta.len() / 2);
        Ok(Self { mean: mean.to_vec(), log_var: log_var.to_vec() })
    }

    pub fn sample(&self, n: usize, rng: &mut RngStream) -> ParticleBatch {
        let d = self.mean.len();
        let sd: Vec<f64> = self.log_var.iter().map(|lv| (0.5 * lv).exp()).collect();
        let flat = (0..n * d).map(|k| self.mean[k % d] + sd[k % d] * rng.normal()).collect();
        ParticleBatch::from_flat(flat, d).expect("nonzero dimension")
    }
}

/// `f(x) = −½ Σ (x_i − μ_i)² / σ_i²` with parameters `[μ | log σ²]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DiagGaussian {
    pub dim: usize,
}

impl DiagGaussian {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl EnergyModel for DiagGaussian {
    fn dim(&self) -> usize {
        self.dim
    }

    fn layout(&self) -> Layout {
        DiagGaussianParams::layout(self.dim)
    }

    fn f(&self, theta: &ParamVector, x: &[f64]) -> f64 {
        let (mu, lv) = theta.as_slice().split_at(self.dim);
        -0.5 * (0..self.dim).map(|i| (x[i] - mu[i]).powi(2) * (-lv[i]).exp()).sum::<f64>()
    }

    fn grad_x_into(&self, theta: &ParamVector, x: &[f64], out: &mut [f64]) {
        let (mu, lv) = theta.as_slice().split_at(self.dim);
        for i in 0..self.dim {
            out[i] = -(x[i] - mu[i]) * (-lv[i]).exp();
        }
    }

    fn grad_theta_acc(&self, theta: &ParamVector, x: &[f64], weight: f64, out: &mut [f64]) {
        let (mu, lv) = theta.as_slice().split_at(self.dim);
        for i in 0..self.dim {
            let prec = (-lv[i]).exp();
            let r = x[i] - mu[i];
            out[i] += weight * r * prec;
            out[self.dim + i] += weight * 0.5 * r * r * prec;
        }
    }

    fn log_partition(&self, theta: &ParamVector) -> Result<f64> {
        let lv = &theta.as_slice()[self.dim..];
        Ok(0.5 * self.dim as f64 * (2.0 * std::f64::consts::PI).ln() + 0.5 * lv.iter().sum::<f64>())
    }
}

pub fn gauss_f(params: &DiagGaussianParams, x: &[f64]) -> Result<f64> {
    check_dim(params.mean.len(), x.len())?;
    Ok(DiagGaussian::new(x.len()).f(&params.to_param_vector(), x))
}

pub fn gauss_grad_x(params: &DiagGaussianParams, x: &[f64]) -> Result<Vec<f64>> {
    check_dim(params.mean.len(), x.len())?;
    Ok(DiagGaussian::new(x.len()).grad_x(&params.to_param_vector(), x))
}

pub fn gauss_grad_theta(params: &DiagGaussianParams, x: &[f64]) -> Result<ParamVector> {
    check_dim(params.mean.len(), x.len())?;
    Ok(DiagGaussian::new(x.len()).grad_theta(&params.to_param_vector(), x))
}

pub fn gauss_log_partition(params: &DiagGaussianParams) -> f64 {
    DiagGaussian::new(params.mean.len())
        .log_partition(&params.to_param_vector())
        .expect("closed form")
}

// ---------------------------------------------------------------------------
// Quadratic oracle
// ---------------------------------------------------------------------------

/// `f(x; θ) = −θ ||x||² / 2` with a single precision parameter, so the
/// cross-derivative `∇_θ ∇_x f = −x` is known exactly.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QuadraticOracle {
    pub dim: usize,
}

impl EnergyModel for QuadraticOracle {
    fn dim(&self) -> usize {
        self.dim
    }

    fn layout(&self) -> Layout {
        Layout::new([("precision", 1)])
    }

    fn f(&self, theta: &ParamVector, x: &[f64]) -> f64 {
        -0.5 * theta.as_slice()[0] * dot(x, x)
    }

    fn grad_x_into(&self, theta: &ParamVector, x: &[f64], out: &mut [f64]) {
        let p = theta.as_slice()[0];
        for (o, xi) in out.iter_mut().zip(x) {
            *o = -p * xi;
        }
    }

    fn grad_theta_acc(&self, _theta: &ParamVector, x: &[f64], weight: f64, out: &mut [f64]) {
        out[0] -= weight * 0.5 * dot(x, x);
    }

    fn log_partition(&self, theta: &ParamVector) -> Result<f64> {
        let p = theta.as_slice()[0];
        if p <= 0.0 {
            return Err(Error::InvalidArgument("precision must be positive".into()));
        }
        Ok(0.5 * self.dim as f64 * (2.0 * std::f64::consts::PI / p).ln())
    }
}

// ---------------------------------------------------------------------------
// Fixed Gaussian mixture
// ---------------------------------------------------------------------------

/// Equal-weight isotropic Gaussian mixture with no learnable parameters.
/// Used as a fixed target when training a generator alone.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMixtureEnergy {
    centers: Vec<Vec<f64>>,
    std: f64,
}

impl GaussianMixtureEnergy {
    pub fn new(centers: Vec<Vec<f64>>, std: f64) -> Result<Self> {
        let d = centers.first().ok_or(Error::EmptyInput)?.len();
        for c in &centers {
            check_dim(d, c.len())?;
        }
        if !(std > 0.0) {
            return Err(Error::InvalidArgument("component std must be positive".into()));
        }
        Ok(Self { centers, std })
    }

    /// `k` centers evenly spaced on a circle in the plane.
    pub fn ring(k: usize, radius: f64, std: f64) -> Result<Self> {
        Self::new(ring_centers(k, radius), std)
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn std(&self) -> f64 {
        self.std
    }

    fn log_weights(&self, x: &[f64]) -> Vec<f64> {
        let s2 = self.std * self.std;
        self.centers.iter().map(|c| -sq_dist(x, c) / (2.0 * s2)).collect()
    }
}

pub fn ring_centers(k: usize, radius: f64) -> Vec<Vec<f64>> {
    (0..k)
        .map(|i| {
            let a = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
            vec![radius * a.cos(), radius * a.sin()]
        })
        .collect()
}

impl EnergyModel for GaussianMixtureEnergy {
    fn dim(&self) -> usize {
        self.centers[0].len()
    }

    fn layout(&self) -> Layout {
        Layout::default()
    }

    fn f(&self, _theta: &ParamVector, x: &[f64]) -> f64 {
        crate::numerics::logsumexp(&self.log_weights(x)).expect("at least one center")
    }

    fn grad_x_into(&self, _theta: &ParamVector, x: &[f64], out: &mut [f64]) {
        let lw = self.log_weights(x);
        let max = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = lw.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = w.iter().sum();
        let s2 = self.std * self.std;
        out.fill(0.0);
        for (wk, c) in w.iter().zip(&self.centers) {
            for ((o, xi), ci) in out.iter_mut().zip(x).zip(c) {
                *o += wk / total * (ci - xi) / s2;
            }
        }
    }

    fn grad_theta_acc(&self, _theta: &ParamVector, _x: &[f64], _weight: f64, _out: &mut [f64]) {}

    fn log_partition(&self, _theta: &ParamVector) -> Result<f64> {
        let d = self.dim() as f64;
        let k = self.centers.len() as f64;
        Ok(k.ln() + 0.5 * d * (2.0 * std::f64::consts::PI * self.std * self.std).ln())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN_2PI_HALF: f64 = 0.918_938_533_204_672_8;

    fn trivial() -> GbRbmParams {
        GbRbmParams::zeros(1, 1)
    }

    #[test]
    fn rbm_f_examples() {
        let p = trivial();
        assert!((rbm_f(&p, &[0.0]).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((rbm_f(&p, &[2.0]).unwrap() - (-2.0 + 2f64.ln())).abs() < 1e-15);
        let mut big = trivial();
        big.hidden_bias[0] = 1000.0;
        let v = rbm_f(&big, &[0.0]).unwrap();
        assert!(v.is_finite() && (v - 1000.0).abs() < 1e-9);
        assert!(rbm_f(&p, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn rbm_grad_x_standard_gaussian_when_uncoupled() {
        let mut p = GbRbmParams::zeros(3, 2);
        p.hidden_bias = vec![0.3, -0.2];
        let g = rbm_grad_x(&p, &[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(g, vec![-1.0, 2.0, -0.5]);
    }

    #[test]
    fn rbm_grad_x_vanishes_at_fixed_point() {
        let mut rng = RngStream::new(21);
        let p = GbRbmParams::random(3, 2, 0.3, &mut rng);
        // x = b + B tanh(B⊤x + c) is a contraction for small B
        let mut x = vec![0.0; 3];
        for _ in 0..500 {
            let a = p.view().activations(&x);
            x = (0..3)
                .map(|i| {
                    p.visible_bias[i]
                        + (0..2).map(|k| p.weights[i * 2 + k] * a[k].tanh()).sum::<f64>()
                })
                .collect();
        }
        let g = rbm_grad_x(&p, &x).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-12), "{g:?}");
    }

    #[test]
    fn rbm_grad_theta_blocks() {
        let p = GbRbmParams::zeros(2, 3);
        let g = rbm_grad_theta(&p, &[0.5, -1.5]).unwrap();
        assert_eq!(g.block("hidden_bias"), &[0.0, 0.0, 0.0]);
        assert_eq!(g.block("visible_bias"), &[0.5, -1.5]);
        let mut rng = RngStream::new(2);
        let p = GbRbmParams::random(2, 3, 1.0, &mut rng);
        let g = rbm_grad_theta(&p, &[0.25, 4.0]).unwrap();
        assert_eq!(g.block("visible_bias"), &[0.25, 4.0]);
    }

    #[test]
    fn rbm_log_partition_examples() {
        let z = rbm_log_partition(&trivial()).unwrap();
        assert!((z - (LN_2PI_HALF + 2f64.ln())).abs() < 1e-14);
        assert!((z - 1.612086).abs() < 1e-6);
        let mut p = trivial();
        p.weights[0] = 1.0;
        let z = rbm_log_partition(&p).unwrap();
        assert!((z - (LN_2PI_HALF + 2f64.ln() + 0.5)).abs() < 1e-14);
        assert!((z - 2.112086).abs() < 1e-6);
    }

    #[test]
    fn rbm_log_partition_rejects_large_hidden_layer() {
        let p = GbRbmParams::zeros(1, 26);
        assert!(matches!(rbm_log_partition(&p), Err(Error::EnumerationBudget { .. })));
    }

    #[test]
    fn rbm_log_partition_hidden_permutation_invariant() {
        let mut rng = RngStream::new(8);
        let p = GbRbmParams::random(3, 4, 0.7, &mut rng);
        let perm = [2usize, 0, 3, 1];
        let mut q = p.clone();
        for i in 0..3 {
            for (k, &src) in perm.iter().enumerate() {
                q.weights[i * 4 + k] = p.weights[i * 4 + src];
            }
        }
        for (k, &src) in perm.iter().enumerate() {
            q.hidden_bias[k] = p.hidden_bias[src];
        }
        let a = rbm_log_partition(&p).unwrap();
        let b = rbm_log_partition(&q).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn rbm_log_partition_matches_brute_force_enumeration() {
        let mut rng = RngStream::new(9);
        let p = GbRbmParams::random(3, 5, 0.8, &mut rng);
        let mut terms = Vec::new();
        for s in 0..32usize {
            let h: Vec<f64> = (0..5).map(|k| if s >> k & 1 == 1 { 1.0 } else { -1.0 }).collect();
            let v: Vec<f64> =
                (0..3).map(|i| p.visible_bias[i] + dot(&p.weights[i * 5..(i + 1) * 5], &h)).collect();
            terms.push(dot(&p.hidden_bias, &h) + 0.5 * dot(&v, &v));
        }
        let brute = 1.5 * (2.0 * std::f64::consts::PI).ln() + crate::numerics::logsumexp(&terms).unwrap();
        assert!((rbm_log_partition(&p).unwrap() - brute).abs() < 1e-12);
    }

    #[test]
    fn param_vector_round_trip() {
        let mut rng = RngStream::new(4);
        let p = GbRbmParams::random(4, 3, 0.5, &mut rng);
        let v = p.to_param_vector();
        assert_eq!(v.len(), 19);
        assert_eq!(GbRbmParams::from_param_vector(4, 3, &v).unwrap(), p);
        assert!(GbRbmParams::from_param_vector(4, 2, &v).is_err());
    }

    #[test]
    fn trait_matches_free_functions() {
        let mut rng = RngStream::new(12);
        let p = GbRbmParams::random(3, 2, 0.6, &mut rng);
        let model = GbRbm::new(3, 2).unwrap();
        let theta = p.to_param_vector();
        let x = [0.3, -0.7, 1.1];
        assert_eq!(model.f(&theta, &x), rbm_f(&p, &x).unwrap());
        assert_eq!(model.grad_x(&theta, &x), rbm_grad_x(&p, &x).unwrap());
        assert_eq!(model.grad_theta(&theta, &x), rbm_grad_theta(&p, &x).unwrap());
        assert_eq!(model.log_partition(&theta).unwrap(), rbm_log_partition(&p).unwrap());
    }

    #[test]
    fn gibbs_uncoupled_is_gaussian_and_deterministic() {
        let mut p = GbRbmParams::zeros(2, 2);
        p.visible_bias = vec![1.5, -0.5];
        let n = 4000;
        let s = rbm_gibbs_sample(&p, n, 10, 1, &mut RngStream::new(1)).unwrap();
        let mean = s.mean().unwrap();
        let tol = 4.0 / (n as f64).sqrt();
        assert!((mean[0] - 1.5).abs() < tol && (mean[1] + 0.5).abs() < tol, "{mean:?}");
        let again = rbm_gibbs_sample(&p, n, 10, 1, &mut RngStream::new(1)).unwrap();
        assert_eq!(s, again);
        assert!(rbm_gibbs_sample(&p, 0, 0, 0, &mut RngStream::new(1)).is_err());
    }

    #[test]
    fn gaussian_examples() {
        let p = DiagGaussianParams::standard(1);
        assert!((gauss_log_partition(&p) - LN_2PI_HALF).abs() < 1e-15);
        let p = DiagGaussianParams { mean: vec![0.5, -1.0], log_var: vec![0.3, -0.4] };
        assert_eq!(gauss_grad_x(&p, &[0.5, -1.0]).unwrap(), vec![0.0, 0.0]);
        assert!(gauss_f(&p, &[0.0]).is_err());
    }

    #[test]
    fn mixture_log_partition_normalizes() {
        let m = GaussianMixtureEnergy::ring(8, 4.0, 0.5).unwrap();
        let theta = ParamVector::zeros(Layout::default());
        // midpoint rule for ∫exp(f) over a box enclosing all modes
        let (lo, hi, n) = (-7.0, 7.0, 700);
        let step = (hi - lo) / n as f64;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = [lo + (i as f64 + 0.5) * step, lo + (j as f64 + 0.5) * step];
                total += m.f(&theta, &x).exp() * step * step;
            }
        }
        let z = m.log_partition(&theta).unwrap().exp();
        assert!((total / z - 1.0).abs() < 1e-6, "{total} vs {z}");
    }
}
