//! Model descriptions and the JSON checkpoint format.
//!
//! Parameter arrays are written as flat JSON number arrays with 17
//! significant digits, which reproduces every finite `f64` exactly.

use std::path::Path;

use serde::de::Error as _;
use serde::ser::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::value::RawValue;

use crate::energy::{DiagGaussian, EnergyModel, GaussianMixtureEnergy, GbRbm};
use crate::error::{Error, Result};
use crate::generator::MlpGenerator;
use crate::numerics::{Layout, ParamVector, RNG_ALGORITHM};

pub const CHECKPOINT_FORMAT: &str = "stein-ebm-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Which energy model a run trains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    GbRbm { visible: usize, hidden: usize },
    DiagGaussian { dim: usize },
    /// Fixed equal-weight mixture with `components` centers on a circle.
    GaussianMixture { components: usize, radius: f64, std: f64 },
}

impl ModelSpec {
    pub fn dim(&self) -> usize {
        match *self {
            ModelSpec::GbRbm { visible, .. } => visible,
            ModelSpec::DiagGaussian { dim } => dim,
            ModelSpec::GaussianMixture { .. } => 2,
        }
    }

    pub fn build(&self) -> Result<Box<dyn EnergyModel>> {
        Ok(match *self {
            ModelSpec::GbRbm { visible, hidden } => Box::new(GbRbm::new(visible, hidden)?),
            ModelSpec::DiagGaussian { dim } => {
                if dim == 0 {
                    return Err(Error::InvalidArgument("Gaussian dimension must be positive".into()));
                }
                Box::new(DiagGaussian::new(dim))
            }
            ModelSpec::GaussianMixture { components, radius, std } => {
                if components == 0 {
                    return Err(Error::InvalidArgument("mixture needs at least one component".into()));
                }
                Box::new(GaussianMixtureEnergy::ring(components, radius, std)?)
            }
        })
    }
}

fn serialize_reals<S: Serializer>(values: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(S::Error::custom("non-finite parameter"));
    }
    let body: Vec<String> = values.iter().map(|v| format!("{v:.16e}")).collect();
    let raw = RawValue::from_string(format!("[{}]", body.join(","))).map_err(S::Error::custom)?;
    raw.serialize(s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockEntry {
    pub name: String,
    pub len: usize,
}

/// A parameter vector with its block structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoredParams {
    pub layout: Vec<BlockEntry>,
    #[serde(serialize_with = "serialize_reals")]
    pub values: Vec<f64>,
}

impl StoredParams {
    pub fn from_params(p: &ParamVector) -> Self {
        Self {
            layout: p.layout().blocks().iter().map(|b| BlockEntry { name: b.name.clone(), len: b.len }).collect(),
            values: p.as_slice().to_vec(),
        }
    }

    pub fn to_params(&self) -> Result<ParamVector> {
        let layout = Layout::new(self.layout.iter().map(|b| (b.name.clone(), b.len)));
        ParamVector::new(self.values.clone(), layout)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoredGenerator {
    pub noise_dim: usize,
    pub layer_sizes: Vec<usize>,
    pub params: StoredParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub model: ModelSpec,
    pub theta: StoredParams,
    #[serde(default)]
    pub generator: Option<StoredGenerator>,
    pub iteration: usize,
    pub seed: u64,
    pub rng_algorithm: String,
}

fn check_header<'de, D: Deserializer<'de>>(ck: &Checkpoint) -> std::result::Result<(), D::Error> {
    if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
        return Err(D::Error::custom(format!("unsupported checkpoint {} v{}", ck.format, ck.version)));
    }
    Ok(())
}

impl Checkpoint {
    pub fn new(
        model: ModelSpec,
        theta: &ParamVector,
        generator: Option<&MlpGenerator>,
        iteration: usize,
        seed: u64,
    ) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            model,
            theta: StoredParams::from_params(theta),
            generator: generator.map(|g| StoredGenerator {
                noise_dim: g.noise_dim(),
                layer_sizes: g.layer_sizes().to_vec(),
                params: StoredParams::from_params(g.params()),
            }),
            iteration,
            seed,
            rng_algorithm: RNG_ALGORITHM.into(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Checkpoint(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    /// Parses and checks the parameters against the model description.
    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        check_header::<serde_json::Value>(&ck).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let model = ck.model.build()?;
        let theta = ck.theta()?;
        if theta.layout() != &model.layout() {
            return Err(Error::Checkpoint("parameter layout does not match the model".into()));
        }
        if let Some(g) = ck.generator()? {
            if g.output_dim() != model.dim() {
                return Err(Error::Checkpoint("generator output does not match the model dimension".into()));
            }
        }
        Ok(ck)
    }

    pub fn theta(&self) -> Result<ParamVector> {
        self.theta.to_params()
    }

    pub fn generator(&self) -> Result<Option<MlpGenerator>> {
        self.generator
            .as_ref()
            .map(|g| MlpGenerator::from_params(g.noise_dim, &g.layer_sizes, g.params.to_params()?))
            .transpose()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
