//! MLP generator `x = G(ξ; η)` with hand-written reverse mode, and the two
//! amortized SVGD rules that train it.

use crate::energy::EnergyModel;
use crate::error::{check_dim, Error, Result};
use crate::kernels::KernelSpec;
use crate::learners::{optimizer_step, OptimizerState};
use crate::numerics::{Layout, ParamVector, ParticleBatch, RngStream};
use crate::svgd::phi_star;

/// Standard deviation of the initial weights.
pub const INIT_WEIGHT_STD: f64 = 0.02;

/// Fully connected network with tanh hidden layers and a linear output layer.
///
/// Layer `l` maps `sizes[l]` inputs to `sizes[l + 1]` outputs, where
/// `sizes = [noise_dim, layer_sizes...]`. Its weight block `w{l}` is stored
/// row-major with one row per output unit; the bias block is `b{l}`.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGenerator {
    noise_dim: usize,
    layer_sizes: Vec<usize>,
    params: ParamVector,
}

impl MlpGenerator {
    pub fn layout(noise_dim: usize, layer_sizes: &[usize]) -> Layout {
        let mut blocks = Vec::new();
        let mut fan_in = noise_dim;
        for (l, &out) in layer_sizes.iter().enumerate() {
            blocks.push((format!("w{l}"), out * fan_in));
            blocks.push((format!("b{l}"), out));
            fan_in = out;
        }
        Layout::new(blocks)
    }

    fn check_shape(noise_dim: usize, layer_sizes: &[usize]) -> Result<()> {
        if noise_dim == 0 || layer_sizes.is_empty() || layer_sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "generator needs positive noise_dim and layer sizes, got {noise_dim} and {layer_sizes:?}"
            )));
        }
        Ok(())
    }

    /// Weights `Normal(0, 0.02²)`, biases zero.
    pub fn new(noise_dim: usize, layer_sizes: &[usize], rng: &mut RngStream) -> Result<Self> {
        Self::check_shape(noise_dim, layer_sizes)?;
        let layout = Self::layout(noise_dim, layer_sizes);
        let mut values = vec![0.0; layout.len()];
        for block in layout.blocks().iter().filter(|b| b.name.starts_with('w')) {
            for v in &mut values[block.range()] {
                *v = INIT_WEIGHT_STD * rng.normal();
            }
        }
        Ok(Self { noise_dim, layer_sizes: layer_sizes.to_vec(), params: ParamVector::new(values, layout)? })
    }

    pub fn from_params(noise_dim: usize, layer_sizes: &[usize], params: ParamVector) -> Result<Self> {
        Self::check_shape(noise_dim, layer_sizes)?;
        let layout = Self::layout(noise_dim, layer_sizes);
        check_dim(layout.len(), params.len())?;
        if params.layout() != &layout {
            return Err(Error::InvalidArgument("generator parameter layout does not match its shape".into()));
        }
        if !params.all_finite() {
            return Err(Error::NonFinite("generator parameters"));
        }
        Ok(Self { noise_dim, layer_sizes: layer_sizes.to_vec(), params })
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("nonempty")
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn with_params(&self, params: ParamVector) -> Result<Self> {
        Self::from_params(self.noise_dim, &self.layer_sizes, params)
    }

    fn fan_in(&self, l: usize) -> usize {
        if l == 0 {
            self.noise_dim
        } else {
            self.layer_sizes[l - 1]
        }
    }

    /// Activations of every layer, input first.
    fn activations(&self, xi: &[f64]) -> Vec<Vec<f64>> {
        let n_layers = self.layer_sizes.len();
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(xi.to_vec());
        for l in 0..n_layers {
            let w = self.params.block(&format!("w{l}"));
            let b = self.params.block(&format!("b{l}"));
            let input = &acts[l];
            let fan_in = input.len();
            let mut out: Vec<f64> = b
                .iter()
                .enumerate()
                .map(|(o, bo)| bo + crate::numerics::dot(&w[o * fan_in..(o + 1) * fan_in], input))
                .collect();
            if l + 1 < n_layers {
                out.iter_mut().for_each(|z| *z = z.tanh());
            }
            acts.push(out);
        }
        acts
    }

    pub fn forward(&self, xi: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.noise_dim, xi.len())?;
        Ok(self.activations(xi).pop().expect("output layer"))
    }

    pub fn forward_batch(&self, noise: &ParticleBatch) -> Result<ParticleBatch> {
        check_dim(self.noise_dim, noise.dim())?;
        let mut flat = Vec::with_capacity(noise.len() * self.output_dim());
        for xi in noise.rows() {
            flat.extend(self.activations(xi).pop().expect("output layer"));
        }
        ParticleBatch::from_flat(flat, self.output_dim())
    }

    /// Adds `weight · ∂_η [G(ξ; η)ᵀ v]` into `out`.
    fn vjp_acc(&self, xi: &[f64], v: &[f64], weight: f64, out: &mut [f64]) {
        let acts = self.activations(xi);
        let layout = self.params.layout();
        let mut delta: Vec<f64> = v.iter().map(|vi| weight * vi).collect();
        for l in (0..self.layer_sizes.len()).rev() {
            let input = &acts[l];
            let fan_in = self.fan_in(l);
            let wb = layout.block(&format!("w{l}")).expect("weight block").range();
            let bb = layout.block(&format!("b{l}")).expect("bias block").range();
            for (o, d) in delta.iter().enumerate() {
                out[bb.start + o] += d;
                let row = &mut out[wb.start + o * fan_in..wb.start + (o + 1) * fan_in];
                for (g, a) in row.iter_mut().zip(input) {
                    *g += d * a;
                }
            }
            if l == 0 {
                break;
            }
            let w = self.params.block(&format!("w{l}"));
            let mut prev = vec![0.0; fan_in];
            for (o, d) in delta.iter().enumerate() {
                for (p, wi) in prev.iter_mut().zip(&w[o * fan_in..(o + 1) * fan_in]) {
                    *p += d * wi;
                }
            }
            // input to layer l is tanh output of layer l-1
            for (p, a) in prev.iter_mut().zip(input) {
                *p *= 1.0 - a * a;
            }
            delta = prev;
        }
    }

    /// `∂_η [G(ξ; η)ᵀ v]`.
    pub fn vjp(&self, xi: &[f64], v: &[f64]) -> Result<ParamVector> {
        check_dim(self.noise_dim, xi.len())?;
        check_dim(self.output_dim(), v.len())?;
        let mut out = ParamVector::zeros(self.params.layout().clone());
        self.vjp_acc(xi, v, 1.0, out.as_mut_slice());
        Ok(out)
    }

    /// `(1/m) Σ_i ∂_η [G(ξ_i; η)ᵀ v_i]`.
    pub fn mean_vjp(&self, noise: &ParticleBatch, vs: &ParticleBatch) -> Result<ParamVector> {
        check_dim(self.noise_dim, noise.dim())?;
        check_dim(self.output_dim(), vs.dim())?;
        check_dim(noise.len(), vs.len())?;
        if noise.is_empty() {
            return Err(Error::EmptyInput);
        }
        let w = 1.0 / noise.len() as f64;
        let mut out = ParamVector::zeros(self.params.layout().clone());
        for (xi, v) in noise.rows().zip(vs.rows()) {
            self.vjp_acc(xi, v, w, out.as_mut_slice());
        }
        Ok(out)
    }
}

pub fn gen_forward(gen: &MlpGenerator, xi: &[f64]) -> Result<Vec<f64>> {
    gen.forward(xi)
}

pub fn gen_vjp(gen: &MlpGenerator, xi: &[f64], v: &[f64]) -> Result<ParamVector> {
    gen.vjp(xi, v)
}

/// `n` noise vectors drawn uniformly from `[-1, 1]^noise_dim`.
pub fn sample_noise(n: usize, noise_dim: usize, rng: &mut RngStream) -> ParticleBatch {
    let flat = (0..n * noise_dim).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
    ParticleBatch::from_flat(flat, noise_dim).expect("rectangular")
}

/// Result of one generator update.
#[derive(Clone, Debug)]
pub struct AmortizedStep {
    pub generator: MlpGenerator,
    /// Direction handed to the optimizer (ascent convention).
    pub direction: ParamVector,
    /// Generator outputs before the update.
    pub samples: ParticleBatch,
}

/// Back-propagates the SVGD velocity through the generator:
/// `η ← opt(η, (1/m) Σ_i ∂_η G(ξ_i; η) φ*(x_i))`.
#[allow(clippy::too_many_arguments)]
pub fn amortized_update_chain<M: EnergyModel + ?Sized>(
    gen: &MlpGenerator,
    model: &M,
    theta: &ParamVector,
    noise: &ParticleBatch,
    kernel: &KernelSpec,
    lr: f64,
    optimizer: &mut OptimizerState,
) -> Result<AmortizedStep> {
    if noise.is_empty() {
        return Err(Error::EmptyInput);
    }
    check_dim(model.dim(), gen.output_dim())?;
    let samples = gen.forward_batch(noise)?;
    let phi = phi_star(model, theta, &samples, kernel);
    let direction = gen.mean_vjp(noise, &phi)?;
    let params = optimizer_step(optimizer, gen.params(), &direction, lr)?;
    Ok(AmortizedStep { generator: gen.with_params(params)?, direction, samples })
}

/// Fits the generator to the SVGD-moved particles `t_i = x_i + ε φ*(x_i)` by
/// `inner_steps` of gradient descent on `(1/2m) Σ ||G(ξ_i; η) − t_i||²`.
///
/// The returned direction is the total parameter change.
#[allow(clippy::too_many_arguments)]
pub fn amortized_update_projection<M: EnergyModel + ?Sized>(
    gen: &MlpGenerator,
    model: &M,
    theta: &ParamVector,
    noise: &ParticleBatch,
    kernel: &KernelSpec,
    eps: f64,
    inner_steps: usize,
    inner_lr: f64,
) -> Result<AmortizedStep> {
    if inner_steps == 0 {
        return Err(Error::InvalidArgument("projection needs at least one inner step".into()));
    }
    if noise.is_empty() {
        return Err(Error::EmptyInput);
    }
    check_dim(model.dim(), gen.output_dim())?;
    let samples = gen.forward_batch(noise)?;
    let phi = phi_star(model, theta, &samples, kernel);
    let targets: Vec<f64> = samples.as_flat().iter().zip(phi.as_flat()).map(|(x, v)| x + eps * v).collect();
    let targets = ParticleBatch::from_flat(targets, samples.dim())?;
    let mut current = gen.clone();
    for _ in 0..inner_steps {
        let out = current.forward_batch(noise)?;
        let resid: Vec<f64> = out.as_flat().iter().zip(targets.as_flat()).map(|(g, t)| g - t).collect();
        let resid = ParticleBatch::from_flat(resid, out.dim())?;
        let grad = current.mean_vjp(noise, &resid)?;
        current = current.with_params(current.params().add_scaled(-inner_lr, &grad)?)?;
    }
    let direction = current.params().add_scaled(-1.0, gen.params())?;
    Ok(AmortizedStep { generator: current, direction, samples })
}
