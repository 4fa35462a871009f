//! Stein variational gradient descent.
//!
//! The velocity field at particle `x_i` is
//! `φ*(x_i) = (1/m) Σ_j [∇f(x_j) k(x_j, x_i) + ∇_{x_j} k(x_j, x_i)]`.
//! The first term drives particles toward high density, the second pushes
//! them apart. The RKHS-norm normalization of `φ*` is not applied; the step
//! size absorbs it.

use crate::energy::EnergyModel;
use crate::error::{check_dim, Error, Result};
use crate::kernels::{kernel_matrix_with_grads, KernelFamily, KernelSpec};
use crate::numerics::{dot, sq_dist, ParamVector, ParticleBatch};

/// Evaluates `φ*` at every particle of `batch` for the density `p(·|θ)`.
pub fn phi_star<M: EnergyModel + ?Sized>(
    model: &M,
    theta: &ParamVector,
    batch: &ParticleBatch,
    kernel: &KernelSpec,
) -> ParticleBatch {
    let scores = model.scores(theta, batch);
    phi_star_from_scores(&scores, batch, kernel)
}

/// [`phi_star`] with precomputed scores `∇_x f(x_j)`.
pub fn phi_star_from_scores(
    scores: &ParticleBatch,
    batch: &ParticleBatch,
    kernel: &KernelSpec,
) -> ParticleBatch {
    let m = batch.len();
    let d = batch.dim();
    let mut out = vec![0.0; m * d];
    match kernel.family {
        KernelFamily::Constant => {
            let mean = scores.mean().expect("nonempty batch");
            for row in out.chunks_exact_mut(d) {
                row.copy_from_slice(&mean);
            }
        }
        KernelFamily::Rbf => {
            let km = kernel_matrix_with_grads(kernel, batch);
            let inv_m = 1.0 / m as f64;
            for (i, phi) in out.chunks_exact_mut(d).enumerate() {
                for j in 0..m {
                    let k = km.k(j, i);
                    let g = km.grad(j, i);
                    let s = scores.row(j);
                    for c in 0..d {
                        phi[c] += inv_m * (s[c] * k + g[c]);
                    }
                }
            }
        }
    }
    ParticleBatch::from_flat(out, d).expect("dimension already validated")
}

/// Moves every particle by `step · φ*` evaluated on the pre-update batch.
pub fn svgd_move<M: EnergyModel + ?Sized>(
    model: &M,
    theta: &ParamVector,
    batch: &ParticleBatch,
    kernel: &KernelSpec,
    step: f64,
) -> ParticleBatch {
    let phi = phi_star(model, theta, batch, kernel);
    let mut moved = batch.clone();
    for i in 0..moved.len() {
        for (x, v) in moved.row_mut(i).iter_mut().zip(phi.row(i)) {
            *x += step * v;
        }
    }
    moved
}

/// Particles, step size and kernel of an SVGD run.
#[derive(Clone, Debug)]
pub struct SvgdState {
    pub particles: ParticleBatch,
    pub step_size: f64,
    pub kernel: KernelSpec,
    pub iteration: usize,
}

impl SvgdState {
    pub fn new(particles: ParticleBatch, step_size: f64, kernel: KernelSpec) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::EmptyInput);
        }
        if !(step_size >= 0.0) {
            return Err(Error::InvalidArgument(format!("step size must be nonnegative, got {step_size}")));
        }
        Ok(Self { particles, step_size, kernel, iteration: 0 })
    }
}

/// One synchronous SVGD update.
pub fn svgd_step<M: EnergyModel + ?Sized>(state: &SvgdState, model: &M, theta: &ParamVector) -> Result<SvgdState> {
    check_dim(model.dim(), state.particles.dim())?;
    Ok(SvgdState {
        particles: svgd_move(model, theta, &state.particles, &state.kernel, state.step_size),
        step_size: state.step_size,
        kernel: state.kernel,
        iteration: state.iteration + 1,
    })
}

/// Kernelized Stein discrepancy, V-statistic form:
/// `sqrt((1/m²) Σ_{i,j} u_p(x_i, x_j))` with Stein kernel
/// `u_p(x, y) = s(x)⊤s(y) k + s(x)⊤∇_y k + s(y)⊤∇_x k + tr(∇_x ∇_y k)`.
pub fn stein_discrepancy_diag<M: EnergyModel + ?Sized>(
    model: &M,
    theta: &ParamVector,
    batch: &ParticleBatch,
    kernel: &KernelSpec,
) -> Result<f64> {
    if batch.len() < 2 {
        return Err(Error::InvalidArgument("Stein discrepancy needs at least two points".into()));
    }
    check_dim(model.dim(), batch.dim())?;
    let scores = model.scores(theta, batch);
    let m = batch.len();
    let d = batch.dim() as f64;
    let total = match kernel.family {
        KernelFamily::Constant => {
            let mean = scores.mean()?;
            dot(&mean, &mean) * (m * m) as f64
        }
        KernelFamily::Rbf => {
            let h = kernel.resolve_bandwidth(batch);
            let mut total = 0.0;
            for i in 0..m {
                let (xi, si) = (batch.row(i), scores.row(i));
                total += dot(si, si) + 2.0 * d / h;
                for j in (i + 1)..m {
                    let (xj, sj) = (batch.row(j), scores.row(j));
                    let r2 = sq_dist(xi, xj);
                    let k = (-r2 / h).exp();
                    // ∇_x k = −(2/h)(x−y)k, ∇_y k = (2/h)(x−y)k
                    let mut cross = 0.0;
                    for c in 0..xi.len() {
                        cross += (si[c] - sj[c]) * (xi[c] - xj[c]);
                    }
                    let u = k * (dot(si, sj) + 2.0 / h * cross + 2.0 * d / h - 4.0 * r2 / (h * h));
                    total += 2.0 * u;
                }
            }
            total
        }
    };
    Ok((total / (m * m) as f64).max(0.0).sqrt())
}
