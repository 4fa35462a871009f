//! Parameter updates for energy models.
//!
//! Every rule estimates an ascent direction on the log-likelihood of the form
//! `mean ∇_θ f(positives) − mean ∇_θ f(negatives)` and hands it to an
//! [`OptimizerState`]. They differ in how negatives are produced:
//!
//! * CD-k: `k` Langevin steps from the data minibatch.
//! * SteinCD: one synchronous SVGD step from the data minibatch.
//! * Stein score matching: finite-difference estimates of
//!   `−E[∇_θ∇_x f(x) φ*(x)]`, one-sided (the SteinCD direction divided by ε)
//!   or symmetric.
//!
//! Negatives are treated as constants; nothing is differentiated through the
//! perturbation.

use serde::{Deserialize, Serialize};

use crate::energy::EnergyModel;
use crate::error::{check_dim, Error, Result};
use crate::kernels::KernelSpec;
use crate::numerics::{Layout, ParamVector, ParticleBatch, RngStream};
use crate::samplers::{langevin_chain, LangevinConfig};
use crate::svgd::{phi_star, svgd_move};

/// Smallest finite-difference step accepted by Stein score matching.
pub const MIN_FD_STEP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerKind {
    Sgd,
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_adam_eps")]
        eps: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam { beta1: default_beta1(), beta2: default_beta2(), eps: default_adam_eps() }
    }
}

impl Default for OptimizerKind {
    fn default() -> Self {
        Self::adam()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FiniteDifference {
    OneSided,
    Symmetric,
}

/// Step sizes, iteration counts and mixing constants for every learner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Energy-model learning rate μ.
    pub theta_lr: f64,
    /// Generator learning rate.
    pub generator_lr: f64,
    /// SVGD step ε used to perturb data (SteinCD, score matching).
    pub svgd_step: f64,
    /// SVGD steps per SteinCD perturbation.
    pub svgd_steps: usize,
    pub minibatch: usize,
    pub iterations: usize,
    pub optimizer: OptimizerKind,
    pub langevin: LangevinConfig,
    pub ssm_variant: FiniteDifference,
    /// Probability α of a SteinCD iteration in SteinCD-GAN(α).
    pub mix_alpha: f64,
    /// Negative-phase discount γ of the SteinGAN θ-update.
    pub discount: f64,
    /// Discount used when real data has higher energy than generated data.
    pub speedup_discount: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            theta_lr: 5e-4,
            generator_lr: 1e-3,
            svgd_step: 0.1,
            svgd_steps: 1,
            minibatch: 100,
            iterations: 2000,
            optimizer: OptimizerKind::adam(),
            langevin: LangevinConfig::default(),
            ssm_variant: FiniteDifference::OneSided,
            mix_alpha: 0.25,
            discount: 0.7,
            speedup_discount: 0.9,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Checks ranges; the error names the offending field.
    pub fn validate(&self) -> std::result::Result<(), (String, String)> {
        let bad = |field: &str, msg: String| Err((field.to_string(), msg));
        if !(self.theta_lr >= 0.0 && self.theta_lr.is_finite()) {
            return bad("theta_lr", format!("must be a nonnegative number, got {}", self.theta_lr));
        }
        if !(self.generator_lr >= 0.0 && self.generator_lr.is_finite()) {
            return bad("generator_lr", format!("must be a nonnegative number, got {}", self.generator_lr));
        }
        if !(self.svgd_step > 0.0 && self.svgd_step.is_finite()) {
            return bad("svgd_step", format!("must be positive, got {}", self.svgd_step));
        }
        if self.minibatch == 0 {
            return bad("minibatch", "must be at least 1".into());
        }
        if !(self.langevin.step > 0.0) {
            return bad("langevin.step", format!("must be positive, got {}", self.langevin.step));
        }
        for (name, v) in [
            ("mix_alpha", self.mix_alpha),
            ("discount", self.discount),
            ("speedup_discount", self.speedup_discount),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(name, format!("must lie in [0, 1], got {v}"));
            }
        }
        if let OptimizerKind::Adam { beta1, beta2, eps } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(eps > 0.0) {
                return bad("optimizer", "adam needs beta1, beta2 in [0, 1) and eps > 0".into());
            }
        }
        Ok(())
    }
}

/// Moment accumulators for one parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    kind: OptimizerKind,
    first: Vec<f64>,
    second: Vec<f64>,
    step: u64,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, layout: &Layout) -> Self {
        let n = match kind {
            OptimizerKind::Sgd => 0,
            OptimizerKind::Adam { .. } => layout.len(),
        };
        Self { kind, first: vec![0.0; n], second: vec![0.0; n], step: 0 }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }
}

/// Ascent step: returns `θ` moved along `gradient` with rate `lr`.
pub fn optimizer_step(
    state: &mut OptimizerState,
    theta: &ParamVector,
    gradient: &ParamVector,
    lr: f64,
) -> Result<ParamVector> {
    check_dim(theta.len(), gradient.len())?;
    let mut out = theta.clone();
    state.step += 1;
    match state.kind {
        OptimizerKind::Sgd => {
            for (t, g) in out.as_mut_slice().iter_mut().zip(gradient.as_slice()) {
                *t += lr * g;
            }
        }
        OptimizerKind::Adam { beta1, beta2, eps } => {
            check_dim(state.first.len(), theta.len())?;
            let t = state.step as i32;
            let c1 = 1.0 - beta1.powi(t);
            let c2 = 1.0 - beta2.powi(t);
            for (k, (p, g)) in out.as_mut_slice().iter_mut().zip(gradient.as_slice()).enumerate() {
                let m = &mut state.first[k];
                let v = &mut state.second[k];
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p += lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        }
    }
    Ok(out)
}

/// `mean ∇_θ f(positives) − mean ∇_θ f(negatives)`.
pub fn mle_gradient<M: EnergyModel + ?Sized>(
    model: &M,
    theta: &ParamVector,
    positives: &ParticleBatch,
    negatives: &ParticleBatch,
) -> Result<ParamVector> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::EmptyInput);
    }
    check_dim(model.dim(), positives.dim())?;
    check_dim(model.dim(), negatives.dim())?;
    let pos = model.mean_grad_theta(theta, positives);
    let neg = model.mean_grad_theta(theta, negatives);
    pos.add_scaled(-1.0, &neg)
}

/// Result of one parameter update.
#[derive(Clone, Debug)]
pub struct UpdateOutcome {
    pub theta: ParamVector,
    /// Direction handed to the optimizer.
    pub direction: ParamVector,
    pub negatives: ParticleBatch,
    pub mean_f_positive: f64,
    pub mean_f_negative: f64,
}

fn finish<M: EnergyModel + ?Sized>(
    model: &M,
    theta: &ParamVector,
    positives: &ParticleBatch,
    negatives: ParticleBatch,
    direction: ParamVector,
    optimizer: &mut OptimizerState,
    lr: f64,
) -> Result<UpdateOutcome> {
    let new_theta = optimizer_step(optimizer, theta, &direction, lr)?;
    Ok(UpdateOutcome {
        theta: new_theta,
        direction,
        mean_f_positive: model.mean_f(theta, positives),
        mean_f_negative: model.mean_f(theta, &negatives),
        negatives,
    })
}

/// CD-k with Langevin negatives.
pub fn cd_k_update<M: EnergyModel + ?Sized>(
    model: &M,
    theta: &ParamVector,
    optimizer: &mut OptimizerState,
    positives: &ParticleBatch,
    config: &TrainConfig,
    rng: &mut RngStream,
) -> Result<UpdateOutcome> {
    let negatives = langevin_chain(model, theta, positives, &config.langevin, rng)?;
    let direction = mle_gradient(model, theta, positives, &negatives)?;
    finish(model, theta, positives, negatives, direction, optimizer, config.theta_lr)
}

/// Negatives for SteinCD: `config.svgd_steps` SVGD steps from the positives.
pub fn steincd_negatives<M: EnergyModel + ?Sized>(
    model: &M,
    theta: &ParamVector,
    positives: &ParticleBatch,
    kernel: &KernelSpec,
    config: &TrainConfig,
) -> ParticleBatch {
    let mut negatives = positives.clone();
    for _ in 0..config.svgd_steps {
        negatives = svgd_move(model, theta, &negatives, kernel, config.svgd_step);
    }
    negatives
}

/// SteinCD: the negatives are the SVGD-perturbed positives.
pub fn steincd_update<M: EnergyModel + ?Sized>(
    model: &M,
    theta: &ParamVector,
    optimizer: &mut OptimizerState,
    positives: &ParticleBatch,
    kernel: &KernelSpec,
    config: &TrainConfig,
) -> Result<UpdateOutcome> {
    check_dim(model.dim(), positives.dim())?;
    let negatives = steincd_negatives(model, theta, positives, kernel, config);
    let direction = mle_gradient(model, theta, positives, &negatives)?;
    finish(model, theta, positives, negatives, direction, optimizer, config.theta_lr)
}

/// Finite-difference estimate of `−mean[∇_θ∇_x f(x) φ*(x)]`.
///
/// One-sided: `(1/ε) mean[∇_θ f(x) − ∇_θ f(x + εφ*)]`.
/// Symmetric: `(1/2ε) mean[∇_θ f(x − εφ*) − ∇_θ f(x + εφ*)]`.
pub fn stein_score_matching_direction<M: EnergyModel + ?Sized>(
    model: &M,
    theta: &ParamVector,
    positives: &ParticleBatch,
    kernel: &KernelSpec,
    eps: f64,
    variant: FiniteDifference,
) -> Result<(ParamVector, ParticleBatch)> {
    if !(eps.abs() >= MIN_FD_STEP) {
        return Err(Error::StepTooSmall(eps));
    }
    if positives.is_empty() {
        return Err(Error::EmptyInput);
    }
    check_dim(model.dim(), positives.dim())?;
    let phi = phi_star(model, theta, positives, kernel);
    let shifted = |sign: f64| {
        let flat = positives
            .as_flat()
            .iter()
            .zip(phi.as_flat())
            .map(|(x, v)| x + sign * eps * v)
            .collect();
        ParticleBatch::from_flat(flat, positives.dim()).expect("same shape")
    };
    let forward = shifted(1.0);
    let forward_grad = model.mean_grad_theta(theta, &forward);
    let direction = match variant {
        FiniteDifference::OneSided => {
            let base = model.mean_grad_theta(theta, positives);
            base.add_scaled(-1.0, &forward_grad)?.scaled(1.0 / eps)
        }
        FiniteDifference::Symmetric => {
            let backward = model.mean_grad_theta(theta, &shifted(-1.0));
            backward.add_scaled(-1.0, &forward_grad)?.scaled(0.5 / eps)
        }
    };
    Ok((direction, forward))
}

/// Stein score matching step using `config.svgd_step` as the difference step.
pub fn stein_score_matching_update<M: EnergyModel + ?Sized>(
    model: &M,
    theta: &ParamVector,
    optimizer: &mut OptimizerState,
    positives: &ParticleBatch,
    kernel: &KernelSpec,
    config: &TrainConfig,
    variant: FiniteDifference,
) -> Result<UpdateOutcome> {
    let (direction, negatives) =
        stein_score_matching_direction(model, theta, positives, kernel, config.svgd_step, variant)?;
    finish(model, theta, positives, negatives, direction, optimizer, config.theta_lr)
}
