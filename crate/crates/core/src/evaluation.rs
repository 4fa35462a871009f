//! Held-out likelihood and sample-quality metrics.

use serde::{Deserialize, Serialize};

use crate::energy::EnergyModel;
use crate::error::{check_dim, Error, Result};
use crate::numerics::{sq_dist, ParamVector, ParticleBatch};

pub const METRICS_HEADER: &str =
    "iter,test_ll,stein_disc,moment_gap,mode_coverage,avg_pair_dist,mean_f_real,mean_f_fake,wall_ms";

/// One row of the metrics time series. Metrics that do not apply to a run
/// are NaN.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub iteration: usize,
    pub test_log_likelihood: f64,
    pub stein_discrepancy: f64,
    pub moment_gap: f64,
    pub mode_coverage: f64,
    pub avg_pairwise_dist: f64,
    pub mean_f_real: f64,
    pub mean_f_fake: f64,
    pub wall_ms: u64,
}

fn fmt_real(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v:.16e}")
    }
}

impl MetricsRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.iteration,
            fmt_real(self.test_log_likelihood),
            fmt_real(self.stein_discrepancy),
            fmt_real(self.moment_gap),
            fmt_real(self.mode_coverage),
            fmt_real(self.avg_pairwise_dist),
            fmt_real(self.mean_f_real),
            fmt_real(self.mean_f_fake),
            self.wall_ms
        )
    }
}

/// Header plus one line per record, newline terminated.
pub fn metrics_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// `mean_i f(x_i; θ) − log Z(θ)` in nats per point.
pub fn test_log_likelihood<M: EnergyModel + ?Sized>(model: &M, theta: &ParamVector, test: &ParticleBatch) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyInput);
    }
    check_dim(model.dim(), test.dim())?;
    let log_z = model.log_partition(theta)?;
    Ok(model.mean_f(theta, test) - log_z)
}

/// `||mean ∇_θ f(data) − mean ∇_θ f(model_samples)||₂`.
pub fn moment_gap<M: EnergyModel + ?Sized>(
    model: &M,
    theta: &ParamVector,
    data: &ParticleBatch,
    model_samples: &ParticleBatch,
) -> Result<f64> {
    Ok(crate::learners::mle_gradient(model, theta, data, model_samples)?.norm())
}

/// Fraction of `centers` with at least one sample within distance `radius`.
pub fn mode_coverage(samples: &ParticleBatch, centers: &[Vec<f64>], radius: f64) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!("mode radius must be positive, got {radius}")));
    }
    if centers.is_empty() {
        return Err(Error::EmptyInput);
    }
    let r2 = radius * radius;
    let mut covered = 0usize;
    for c in centers {
        check_dim(samples.dim(), c.len())?;
        if samples.rows().any(|x| sq_dist(x, c) <= r2) {
            covered += 1;
        }
    }
    Ok(covered as f64 / centers.len() as f64)
}

/// Mean Euclidean distance over distinct pairs.
pub fn avg_pairwise_distance(samples: &ParticleBatch) -> Result<f64> {
    let m = samples.len();
    if m < 2 {
        return Err(Error::InvalidArgument(format!("need at least two samples, got {m}")));
    }
    let mut total = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            total += sq_dist(samples.row(i), samples.row(j)).sqrt();
        }
    }
    Ok(total / (m * (m - 1) / 2) as f64)
}
