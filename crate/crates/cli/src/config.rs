//! Run configuration read from a TOML file. Every field has a default, and
//! command-line flags override whatever the file sets.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use opscale::approx_builder::SizeCaps;
use opscale::deeponet::TrainableArch;
use opscale::problems::ProblemConfig;
use opscale::scaling_lab::{AdamSettings, ArchSettings, SweepConfig, TestConfig};
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub out_dir: PathBuf,
    pub problem: ProblemConfig,
    pub caps: SizeCaps,
    pub verify: VerifyConfig,
    pub operator: OperatorConfig,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
    pub plot: bool,
    pub bounds: BoundsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            jobs: 0,
            out_dir: PathBuf::from("out"),
            problem: ProblemConfig::default(),
            caps: SizeCaps::default(),
            verify: VerifyConfig::default(),
            operator: OperatorConfig::default(),
            data: DataConfig::default(),
            train: TrainConfig::default(),
            sweep: SweepConfig::transport_data_scaling(),
            plot: true,
            bounds: BoundsConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// `psi`, `product`, `function`, `functional` or `functional-lowdim`.
    pub kind: String,
    pub d1: usize,
    pub eps: f64,
    pub b_u: usize,
    /// Number of test inputs, corner cases included.
    pub functions: usize,
    pub function_lipschitz: f64,
    pub function_sup: f64,
    /// `average`, `integral` or `squared-norm`.
    pub functional: String,
    pub functional_lipschitz: f64,
    pub functional_sup: f64,
    /// `squared-norm`, `integral` or `average`.
    pub lowdim_functional: String,
    pub coef_bound: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            kind: "function".into(),
            d1: 1,
            eps: 0.1,
            b_u: 2,
            functions: 20,
            function_lipschitz: 1.0,
            function_sup: 1.0,
            functional: "average".into(),
            functional_lipschitz: 0.25,
            functional_sup: 0.5,
            lowdim_functional: "squared-norm".into(),
            coef_bound: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorConfig {
    pub eps: f64,
    /// Fresh inputs and output points of the sup-error check.
    pub inputs: usize,
    pub points: usize,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        Self { eps: 0.25, inputs: 50, points: 512 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub n: usize,
    pub n_y: usize,
    pub sigma: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { n: 64, n_y: 16, sigma: 0.01 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Dataset file; empty means generate one from `[data]`.
    pub dataset: PathBuf,
    pub arch: ArchSettings,
    pub optimizer: AdamSettings,
    pub test: TestConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::new(),
            arch: ArchSettings::default(),
            optimizer: AdamSettings { steps: 2000, ..AdamSettings::default() },
            test: TestConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn arch(&self, input_dim: usize, output_dim: usize, fallback_clip: f64) -> TrainableArch {
        let a = &self.arch;
        TrainableArch::dense(input_dim, output_dim, a.pairs, a.depth, a.width, a.clip.unwrap_or(fallback_clip))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsConfig {
    /// `general-approx`, `general-gen`, `lowdim-approx` or `lowdim-gen`.
    pub case: String,
    pub d1: usize,
    pub d2: usize,
    pub b_u: usize,
    /// Sizes at which to tabulate the normalized predicted error.
    pub sizes: Vec<f64>,
    /// Optional budget table: `T1`, `T2`, `T8` or `T10`.
    pub theorem: Option<String>,
    pub eps: Option<f64>,
    pub samples: Option<f64>,
    pub constant: f64,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            case: "lowdim-gen".into(),
            d1: 1,
            d2: 1,
            b_u: 2,
            sizes: Vec::new(),
            theorem: None,
            eps: None,
            samples: None,
            constant: 1.0,
        }
    }
}

pub fn load(path: Option<&Path>) -> Result<RunConfig, Failure> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Failure::Usage(format!("malformed config {}: {e}", path.display())))
}

fn flatten(prefix: &str, value: &serde_json::Value, out: &mut BTreeMap<String, String>) {
    match value {
        serde_json::Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        serde_json::Value::Null => {
            out.insert(prefix.to_string(), "(unset)".into());
        }
        other => {
            out.insert(prefix.to_string(), other.to_string());
        }
    }
}

/// Every config field with its default, one per line.
pub fn field_listing() -> String {
    let value = serde_json::to_value(RunConfig::default()).expect("defaults serialize");
    let mut fields = BTreeMap::new();
    flatten("", &value, &mut fields);
    let width = fields.keys().map(|k| k.len()).max().unwrap_or(0);
    let mut s = String::from("Config fields (TOML, dotted keys are tables) and defaults:\n");
    for (k, v) in fields {
        s.push_str(&format!("  {k:width$}  {v}\n"));
    }
    s
}
