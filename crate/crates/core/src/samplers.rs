//! Unadjusted Langevin dynamics, the Markov transition behind the CD-k
//! baseline: `x' = x + ε ∇_x f(x) + sqrt(2ε) η`, `η ~ Normal(0, I)`.

use serde::{Deserialize, Serialize};

use crate::energy::EnergyModel;
use crate::error::{check_dim, Error, Result};
use crate::numerics::{ParamVector, ParticleBatch, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LangevinConfig {
    pub step: f64,
    pub steps: usize,
}

impl Default for LangevinConfig {
    fn default() -> Self {
        Self { step: 0.01, steps: 1 }
    }
}

/// One Langevin move per particle; particle `i` draws its noise from
/// `streams[i]`.
pub fn langevin_step_with_streams<M: EnergyModel + ?Sized>(
    model: &M,
    theta: &ParamVector,
    batch: &ParticleBatch,
    step: f64,
    streams: &mut [RngStream],
) -> Result<ParticleBatch> {
    check_dim(model.dim(), batch.dim())?;
    check_dim(batch.len(), streams.len())?;
    if !(step >= 0.0) {
        return Err(Error::InvalidArgument(format!("Langevin step must be nonnegative, got {step}")));
    }
    let noise = (2.0 * step).sqrt();
    let mut out = batch.clone();
    let mut grad = vec![0.0; batch.dim()];
    for (i, rng) in streams.iter_mut().enumerate() {
        model.grad_x_into(theta, batch.row(i), &mut grad);
        for (x, g) in out.row_mut(i).iter_mut().zip(&grad) {
            *x += step * g + noise * rng.normal();
        }
    }
    Ok(out)
}

/// Per-particle child streams keyed by one draw from `rng`.
fn particle_streams(rng: &mut RngStream, m: usize) -> Vec<RngStream> {
    let key = RngStream::new(rng.next_u64());
    (0..m as u64).map(|i| key.split(i)).collect()
}

pub fn langevin_step<M: EnergyModel + ?Sized>(
    model: &M,
    theta: &ParamVector,
    batch: &ParticleBatch,
    step: f64,
    rng: &mut RngStream,
) -> Result<ParticleBatch> {
    let mut streams = particle_streams(rng, batch.len());
    langevin_step_with_streams(model, theta, batch, step, &mut streams)
}

/// `config.steps` Langevin moves starting from `batch`; realizes `q_k` from `q_0`.
pub fn langevin_chain<M: EnergyModel + ?Sized>(
    model: &M,
    theta: &ParamVector,
    batch: &ParticleBatch,
    config: &LangevinConfig,
    rng: &mut RngStream,
) -> Result<ParticleBatch> {
    let mut current = batch.clone();
    for _ in 0..config.steps {
        current = langevin_step(model, theta, &current, config.step, rng)?;
    }
    Ok(current)
}
