//! Experiment configuration: a JSON tree with strict keys, defaults for every
//! field, and dotted-path overrides from the command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use stein_ebm::{KernelSpec, ModelSpec, TrainConfig};

/// A configuration problem, located by its dotted field path.
#[derive(Debug, thiserror::Error)]
#[error("config error at `{path}`: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self { path: path.into(), message: message.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorSpec {
    pub noise_dim: usize,
    /// Hidden layer widths; the output layer matches the model dimension.
    pub hidden: Vec<usize>,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self { noise_dim: 4, hidden: vec![32, 32] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    /// Samples from a random ground-truth RBM with the model's hidden size
    /// unless `hidden` is given.
    SyntheticRbm {
        #[serde(default)]
        visible: Option<usize>,
        #[serde(default)]
        hidden: Option<usize>,
        #[serde(default = "default_param_scale")]
        param_scale: f64,
        #[serde(default = "default_n_train")]
        n_train: usize,
        #[serde(default = "default_n_test")]
        n_test: usize,
        /// Defaults to the run seed.
        #[serde(default)]
        seed: Option<u64>,
    },
    /// Planar ring of equally weighted Gaussian components.
    GaussianMixture {
        #[serde(default = "default_components")]
        components: usize,
        #[serde(default = "default_radius")]
        radius: f64,
        #[serde(default = "default_component_std")]
        std: f64,
        #[serde(default = "default_n_train")]
        n_train: usize,
        #[serde(default = "default_n_test")]
        n_test: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
    Csv {
        train: PathBuf,
        #[serde(default)]
        test: Option<PathBuf>,
    },
    /// IDX image file; the last `n_test` images are held out.
    Idx {
        images: PathBuf,
        #[serde(default)]
        labels: Option<PathBuf>,
        #[serde(default)]
        n_test: usize,
    },
}

fn default_param_scale() -> f64 {
    stein_ebm::data_io::DEFAULT_PARAM_SCALE
}
fn default_n_train() -> usize {
    2000
}
fn default_n_test() -> usize {
    500
}
fn default_components() -> usize {
    8
}
fn default_radius() -> f64 {
    4.0
}
fn default_component_std() -> f64 {
    0.2
}

impl Default for DataSpec {
    fn default() -> Self {
        DataSpec::SyntheticRbm {
            visible: None,
            hidden: None,
            param_scale: default_param_scale(),
            n_train: default_n_train(),
            n_test: default_n_test(),
            seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSpec {
    /// Record metrics every `cadence` iterations and after the last one.
    pub cadence: usize,
    /// Generator samples drawn per metrics row.
    pub samples: usize,
    /// Mode-coverage radius; defaults to three component standard deviations.
    pub mode_radius: Option<f64>,
}

impl Default for MetricsSpec {
    fn default() -> Self {
        Self { cadence: 100, samples: 500, mode_radius: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub model: ModelSpec,
    /// Standard deviation of the random initial model parameters.
    pub init_scale: f64,
    pub kernel: KernelSpec,
    pub generator: GeneratorSpec,
    pub data: DataSpec,
    pub metrics: MetricsSpec,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            model: ModelSpec::GbRbm { visible: 4, hidden: 3 },
            init_scale: 0.1,
            kernel: KernelSpec::default(),
            generator: GeneratorSpec::default(),
            data: DataSpec::default(),
            metrics: MetricsSpec::default(),
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    /// Cross-field checks that need no data on disk.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.train.validate().map_err(|(field, msg)| ConfigError::new(format!("train.{field}"), msg))?;
        let dim = self.model.dim();
        match self.model {
            ModelSpec::GbRbm { visible, hidden } if visible == 0 || hidden == 0 => {
                return Err(ConfigError::new("model", "RBM needs at least one visible and one hidden unit"));
            }
            ModelSpec::DiagGaussian { dim: 0 } => return Err(ConfigError::new("model.dim", "must be positive")),
            ModelSpec::GaussianMixture { components, std, .. } if components == 0 || !(std > 0.0) => {
                return Err(ConfigError::new("model", "mixture needs components >= 1 and std > 0"));
            }
            _ => {}
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(ConfigError::new("init_scale", "must be a nonnegative number"));
        }
        if let stein_ebm::kernels::BandwidthPolicy::Fixed(h) = self.kernel.bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return Err(ConfigError::new("kernel.bandwidth", "fixed bandwidth must be positive"));
            }
        }
        if self.generator.noise_dim == 0 || self.generator.hidden.contains(&0) {
            return Err(ConfigError::new("generator", "noise_dim and hidden widths must be positive"));
        }
        if self.metrics.cadence == 0 {
            return Err(ConfigError::new("metrics.cadence", "must be at least 1"));
        }
        if let Some(r) = self.metrics.mode_radius {
            if !(r > 0.0) {
                return Err(ConfigError::new("metrics.mode_radius", "must be positive"));
            }
        }
        match &self.data {
            DataSpec::SyntheticRbm { visible, hidden, param_scale, n_train, .. } => {
                if let Some(v) = visible {
                    if *v != dim {
                        return Err(ConfigError::new(
                            "data.visible",
                            format!("data dimension {v} conflicts with model dimension {dim}"),
                        ));
                    }
                }
                let hidden = hidden.or(match self.model {
                    ModelSpec::GbRbm { hidden, .. } => Some(hidden),
                    _ => None,
                });
                match hidden {
                    Some(h) if h == 0 || h > stein_ebm::energy::MAX_ENUM_HIDDEN => {
                        return Err(ConfigError::new("data.hidden", "must be between 1 and 25"));
                    }
                    None => return Err(ConfigError::new("data.hidden", "required when the model is not an RBM")),
                    _ => {}
                }
                if !(*param_scale >= 0.0) {
                    return Err(ConfigError::new("data.param_scale", "must be nonnegative"));
                }
                if *n_train == 0 {
                    return Err(ConfigError::new("data.n_train", "must be at least 1"));
                }
            }
            DataSpec::GaussianMixture { components, std, n_train, .. } => {
                if dim != 2 {
                    return Err(ConfigError::new(
                        "data",
                        format!("mixture data is two-dimensional but the model dimension is {dim}"),
                    ));
                }
                if *components == 0 || !(*std > 0.0) || *n_train == 0 {
                    return Err(ConfigError::new("data", "mixture needs components, std and n_train positive"));
                }
            }
            DataSpec::Csv { .. } | DataSpec::Idx { .. } => {}
        }
        Ok(())
    }
}

fn train_field_names() -> Vec<String> {
    match serde_json::to_value(TrainConfig::default()) {
        Ok(Value::Object(map)) => map.keys().cloned().collect(),
        _ => Vec::new(),
    }
}

/// Maps a bare training-field name such as `mix_alpha` to `train.mix_alpha`;
/// dotted paths pass through.
pub fn qualify_key(key: &str) -> String {
    let head = key.split('.').next().unwrap_or(key);
    if train_field_names().iter().any(|f| f == head) {
        format!("train.{key}")
    } else {
        key.to_string()
    }
}

/// Parses a command-line value as JSON, falling back to a string.
pub fn parse_value(text: &str) -> Value {
    serde_json::from_str(text).unwrap_or_else(|_| Value::String(text.to_string()))
}

/// Sets `tree[path] = value`, creating intermediate objects.
pub fn set_path(tree: &mut Value, path: &str, value: Value) -> Result<(), ConfigError> {
    let mut node = tree;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(ConfigError::new(path, "empty path segment"));
        }
        let map = match node {
            Value::Object(map) => map,
            _ => return Err(ConfigError::new(parts[..i].join("."), "not an object")),
        };
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

/// Reads a config file; an empty or whitespace-only file means "all defaults".
pub fn read_config_tree(path: &Path) -> Result<Value, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("<file>", format!("cannot read {}: {e}", path.display())))?;
    if text.trim().is_empty() {
        return Ok(Value::Object(Default::default()));
    }
    serde_json::from_str(&text).map_err(|e| ConfigError::new("<file>", format!("invalid JSON: {e}")))
}

/// Deserializes a tree and runs the static checks.
pub fn resolve_config(tree: Value) -> Result<ExperimentConfig, ConfigError> {
    let config: ExperimentConfig = serde_path_to_error::deserialize(tree).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::new(if path == "." { "<root>".into() } else { path }, e.into_inner().to_string())
    })?;
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_tree_gives_defaults() {
        let c = resolve_config(Value::Object(Default::default())).unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.train.discount, 0.7);
        assert_eq!(c.train.speedup_discount, 0.9);
        assert_eq!(c.train.minibatch, 100);
    }

    #[test]
    fn unknown_keys_are_rejected_with_path() {
        let tree: Value = serde_json::from_str(r#"{"train": {"mix_alfa": 0.5}}"#).unwrap();
        let err = resolve_config(tree).unwrap_err();
        assert!(err.path.starts_with("train"), "{err}");
        assert!(err.message.contains("mix_alfa"));
    }

    #[test]
    fn out_of_range_alpha_names_field() {
        let tree: Value = serde_json::from_str(r#"{"train": {"mix_alpha": 2.0}}"#).unwrap();
        assert_eq!(resolve_config(tree).unwrap_err().path, "train.mix_alpha");
    }

    #[test]
    fn conflicting_dims_are_rejected() {
        let tree: Value = serde_json::from_str(
            r#"{"model": {"kind": "gb_rbm", "visible": 4, "hidden": 3},
                "data": {"kind": "synthetic_rbm", "visible": 5}}"#,
        )
        .unwrap();
        assert_eq!(resolve_config(tree).unwrap_err().path, "data.visible");
    }

    #[test]
    fn overrides_use_dotted_paths() {
        let mut tree = Value::Object(Default::default());
        set_path(&mut tree, &qualify_key("minibatch"), parse_value("50")).unwrap();
        set_path(&mut tree, &qualify_key("langevin.steps"), parse_value("10")).unwrap();
        set_path(&mut tree, "metrics.cadence", parse_value("7")).unwrap();
        let c = resolve_config(tree).unwrap();
        assert_eq!(c.train.minibatch, 50);
        assert_eq!(c.train.langevin.steps, 10);
        assert_eq!(c.metrics.cadence, 7);
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = ExperimentConfig::default();
        let text = serde_json::to_string_pretty(&c).unwrap();
        assert_eq!(resolve_config(serde_json::from_str(&text).unwrap()).unwrap(), c);
    }
}
