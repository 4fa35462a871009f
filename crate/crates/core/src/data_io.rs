//! Synthetic datasets, IDX image files and CSV persistence.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::energy::{rbm_gibbs_sample, GbRbmParams, MAX_ENUM_HIDDEN};
use crate::error::{Error, Result};
use crate::numerics::{ParticleBatch, RngStream};

/// Gibbs sweeps discarded before the first synthetic RBM sample.
pub const GIBBS_BURN_IN: usize = 1000;
/// Gibbs sweeps between kept synthetic RBM samples.
pub const GIBBS_THIN: usize = 10;
/// Default standard deviation of synthetic RBM parameters.
pub const DEFAULT_PARAM_SCALE: f64 = 0.5;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum IdxError {
    #[error("idx file truncated: {0}")]
    Truncated(String),
    #[error("idx wrong magic: expected {expected:#010x}, found {found:#010x}")]
    WrongMagic { expected: u32, found: u32 },
    #[error("idx label count {labels} does not match image count {images}")]
    LabelCountMismatch { images: usize, labels: usize },
}

impl IdxError {
    /// Short stable identifier of the failure.
    pub fn code(&self) -> &'static str {
        match self {
            IdxError::Truncated(_) => "truncated",
            IdxError::WrongMagic { .. } => "wrong magic",
            IdxError::LabelCountMismatch { .. } => "label count mismatch",
        }
    }
}

/// Where a dataset came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    GaussianMixture { centers: Vec<Vec<f64>>, component_std: f64 },
    Rbm { params: GbRbmParams },
    File { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub points: ParticleBatch,
    pub labels: Option<Vec<u32>>,
    pub source: Option<DatasetSource>,
}

impl Dataset {
    pub fn new(points: ParticleBatch) -> Self {
        Self { points, labels: None, source: None }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    /// First `n_first` points and the rest.
    pub fn split_at(&self, n_first: usize) -> (Dataset, Dataset) {
        let n_first = n_first.min(self.len());
        let head: Vec<usize> = (0..n_first).collect();
        let tail: Vec<usize> = (n_first..self.len()).collect();
        let part = |idx: &[usize]| Dataset {
            points: self.points.select(idx),
            labels: self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
            source: self.source.clone(),
        };
        (part(&head), part(&tail))
    }
}

/// `n` points, each from a uniformly chosen center plus isotropic noise.
/// Labels record the component.
pub fn make_gaussian_mixture(
    centers: &[Vec<f64>],
    component_std: f64,
    n: usize,
    rng: &mut RngStream,
) -> Result<Dataset> {
    if n == 0 || centers.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(component_std > 0.0) {
        return Err(Error::InvalidArgument(format!("component std must be positive, got {component_std}")));
    }
    let d = centers[0].len();
    if d == 0 || centers.iter().any(|c| c.len() != d) {
        return Err(Error::InvalidArgument("centers must share a positive dimension".into()));
    }
    let mut flat = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let k = rng.index(centers.len());
        labels.push(k as u32);
        flat.extend(centers[k].iter().map(|c| c + component_std * rng.normal()));
    }
    Ok(Dataset {
        points: ParticleBatch::from_flat(flat, d)?,
        labels: Some(labels),
        source: Some(DatasetSource::GaussianMixture { centers: centers.to_vec(), component_std }),
    })
}

/// Random RBM parameters with entries `Normal(0, param_scale²)` and `n`
/// Gibbs samples from it.
pub fn make_rbm_ground_truth(
    visible: usize,
    hidden: usize,
    param_scale: f64,
    n: usize,
    rng: &mut RngStream,
) -> Result<(Dataset, GbRbmParams)> {
    if hidden > MAX_ENUM_HIDDEN {
        return Err(Error::EnumerationBudget { hidden, max: MAX_ENUM_HIDDEN });
    }
    if !(param_scale >= 0.0) {
        return Err(Error::InvalidArgument(format!("param_scale must be nonnegative, got {param_scale}")));
    }
    let params = GbRbmParams::random(visible, hidden, param_scale, rng);
    let points = rbm_gibbs_sample(&params, n, GIBBS_BURN_IN, GIBBS_THIN, rng)?;
    let source = DatasetSource::Rbm { params: params.clone() };
    Ok((Dataset { points, labels: None, source: Some(source) }, params))
}

struct IdxFile {
    dims: Vec<usize>,
    data: Vec<u8>,
}

fn read_idx(path: &Path, expected_magic: u32) -> Result<IdxFile> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    parse_idx(&bytes, expected_magic).map_err(Error::from)
}

fn parse_idx(bytes: &[u8], expected_magic: u32) -> std::result::Result<IdxFile, IdxError> {
    let word = |i: usize| -> std::result::Result<u32, IdxError> {
        bytes
            .get(4 * i..4 * i + 4)
            .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| IdxError::Truncated(format!("header ends after {} bytes", bytes.len())))
    };
    let magic = word(0)?;
    if magic != expected_magic {
        return Err(IdxError::WrongMagic { expected: expected_magic, found: magic });
    }
    let ndims = (magic & 0xff) as usize;
    let dims = (1..=ndims).map(|i| word(i).map(|w| w as usize)).collect::<std::result::Result<Vec<_>, _>>()?;
    let start = 4 * (ndims + 1);
    let count: usize = dims.iter().product();
    let data = bytes
        .get(start..start + count)
        .ok_or_else(|| IdxError::Truncated(format!("expected {count} data bytes, found {}", bytes.len() - start)))?;
    Ok(IdxFile { dims, data: data.to_vec() })
}

/// Images as points in `[0, 1]^(rows·cols)`, flattened row-major.
pub fn load_idx(path: &Path) -> Result<Dataset> {
    let idx = read_idx(path, IDX_IMAGES_MAGIC)?;
    let d = idx.dims[1] * idx.dims[2];
    let flat = idx.data.iter().map(|&b| b as f64 / 255.0).collect();
    let points = if d == 0 { ParticleBatch::empty(d)? } else { ParticleBatch::from_flat(flat, d)? };
    Ok(Dataset { points, labels: None, source: Some(DatasetSource::File { path: path.to_path_buf() }) })
}

pub fn load_idx_labels(path: &Path) -> Result<Vec<u32>> {
    let idx = read_idx(path, IDX_LABELS_MAGIC)?;
    Ok(idx.data.iter().map(|&b| b as u32).collect())
}

/// Images with their labels; the counts must agree.
pub fn load_idx_pair(images: &Path, labels: &Path) -> Result<Dataset> {
    let mut ds = load_idx(images)?;
    let labels = load_idx_labels(labels)?;
    if labels.len() != ds.len() {
        return Err(IdxError::LabelCountMismatch { images: ds.len(), labels: labels.len() }.into());
    }
    ds.labels = Some(labels);
    Ok(ds)
}

/// Header `x0,…,x{d−1}[,label]`, values with 17 significant digits.
pub fn save_dataset_csv(path: &Path, dataset: &Dataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let mut header: Vec<String> = (0..dataset.dim()).map(|i| format!("x{i}")).collect();
    if dataset.labels.is_some() {
        header.push("label".into());
    }
    writeln!(w, "{}", header.join(","))?;
    for (i, x) in dataset.points.rows().enumerate() {
        let mut fields: Vec<String> = x.iter().map(|v| format!("{v:.16e}")).collect();
        if let Some(labels) = &dataset.labels {
            fields.push(labels[i].to_string());
        }
        writeln!(w, "{}", fields.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_dataset_csv(path: &Path) -> Result<Dataset> {
    let csv_err = |line: u64, message: String| Error::Csv { line, message };
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_path(path).map_err(|e| {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => csv_err(0, format!("{other:?}")),
        }
    })?;
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| csv_err(1, e.to_string()))?,
        None => return Err(csv_err(1, "missing header".into())),
    };
    let mut d = 0;
    let mut has_label = false;
    for (i, name) in header.iter().enumerate() {
        if name == format!("x{i}") && !has_label {
            d += 1;
        } else if name == "label" && i + 1 == header.len() {
            has_label = true;
        } else {
            return Err(csv_err(1, format!("unexpected column {name:?}")));
        }
    }
    if d == 0 {
        return Err(csv_err(1, "no coordinate columns".into()));
    }
    let width = d + usize::from(has_label);
    let mut flat = Vec::new();
    let mut labels = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            csv_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(csv_err(line, format!("expected {width} fields, found {}", rec.len())));
        }
        for field in rec.iter().take(d) {
            let v: f64 = field.trim().parse().map_err(|_| csv_err(line, format!("not a number: {field:?}")))?;
            flat.push(v);
        }
        if has_label {
            let field = &rec[d];
            labels.push(field.trim().parse().map_err(|_| csv_err(line, format!("bad label: {field:?}")))?);
        }
    }
    Ok(Dataset {
        points: ParticleBatch::from_flat(flat, d)?,
        labels: has_label.then_some(labels),
        source: Some(DatasetSource::File { path: path.to_path_buf() }),
    })
}
