//! Kernels for SVGD and their spatial gradients.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::numerics::{median, sq_dist, ParticleBatch};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    /// `exp(-||x - y||² / h)`
    Rbf,
    /// `k ≡ 1`; removes the repulsive term from SVGD.
    Constant,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthPolicy {
    Fixed(f64),
    MedianHeuristic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub bandwidth: BandwidthPolicy,
}

impl KernelSpec {
    pub fn rbf_median() -> Self {
        Self { family: KernelFamily::Rbf, bandwidth: BandwidthPolicy::MedianHeuristic }
    }

    pub fn rbf_fixed(h: f64) -> Self {
        Self { family: KernelFamily::Rbf, bandwidth: BandwidthPolicy::Fixed(h) }
    }

    pub fn constant() -> Self {
        Self { family: KernelFamily::Constant, bandwidth: BandwidthPolicy::MedianHeuristic }
    }

    /// Bandwidth for this batch under the configured policy.
    pub fn resolve_bandwidth(&self, batch: &ParticleBatch) -> f64 {
        match self.bandwidth {
            BandwidthPolicy::Fixed(h) => h,
            BandwidthPolicy::MedianHeuristic => bandwidth_median_heuristic(batch),
        }
    }
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self::rbf_median()
    }
}

const FALLBACK_BANDWIDTH: f64 = 1.0;

/// `med² / ln m`, with `med` the median distance over distinct pairs.
///
/// Returns 1.0 when that is not a positive finite number (a single point,
/// coincident points).
pub fn bandwidth_median_heuristic(batch: &ParticleBatch) -> f64 {
    let m = batch.len();
    if m < 2 {
        return FALLBACK_BANDWIDTH;
    }
    let mut dists = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in (i + 1)..m {
            dists.push(sq_dist(batch.row(i), batch.row(j)).sqrt());
        }
    }
    let med = median(&dists).unwrap_or(0.0);
    let h = med * med / (m as f64).ln();
    if h.is_finite() && h > 0.0 {
        h
    } else {
        FALLBACK_BANDWIDTH
    }
}

pub fn kernel_eval(spec: &KernelSpec, h: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    check_dim(x.len(), y.len())?;
    Ok(match spec.family {
        KernelFamily::Rbf => (-sq_dist(x, y) / h).exp(),
        KernelFamily::Constant => 1.0,
    })
}

/// `∇_x k(x, y)`.
pub fn kernel_grad_x(spec: &KernelSpec, h: f64, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    let k = kernel_eval(spec, h, x, y)?;
    Ok(match spec.family {
        KernelFamily::Rbf => x.iter().zip(y).map(|(a, b)| -2.0 / h * (a - b) * k).collect(),
        KernelFamily::Constant => vec![0.0; x.len()],
    })
}

/// Gram matrix and gradient tensor of a batch.
#[derive(Clone, Debug)]
pub struct KernelMatrices {
    m: usize,
    d: usize,
    /// `k(x_i, x_j)`, row-major `m × m`.
    pub values: Vec<f64>,
    /// `∇_{x_i} k(x_i, x_j)`, laid out `[i][j][coord]`.
    pub grads: Vec<f64>,
    pub bandwidth: f64,
}

impl KernelMatrices {
    pub fn k(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.m + j]
    }

    pub fn grad(&self, i: usize, j: usize) -> &[f64] {
        let start = (i * self.m + j) * self.d;
        &self.grads[start..start + self.d]
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }
}

/// Evaluates `k` and `∇_x k` over all ordered pairs, resolving the
/// bandwidth once for the batch.
pub fn kernel_matrix_with_grads(spec: &KernelSpec, batch: &ParticleBatch) -> KernelMatrices {
    let m = batch.len();
    let d = batch.dim();
    let h = spec.resolve_bandwidth(batch);
    let mut values = vec![0.0; m * m];
    let mut grads = vec![0.0; m * m * d];
    match spec.family {
        KernelFamily::Constant => values.fill(1.0),
        KernelFamily::Rbf => {
            for i in 0..m {
                values[i * m + i] = 1.0;
                let xi = batch.row(i);
                for j in (i + 1)..m {
                    let xj = batch.row(j);
                    let k = (-sq_dist(xi, xj) / h).exp();
                    values[i * m + j] = k;
                    values[j * m + i] = k;
                    let ij = (i * m + j) * d;
                    let ji = (j * m + i) * d;
                    for c in 0..d {
                        let g = -2.0 / h * (xi[c] - xj[c]) * k;
                        grads[ij + c] = g;
                        grads[ji + c] = -g;
                    }
                }
            }
        }
    }
    KernelMatrices { m, d, values, grads, bandwidth: h }
}
