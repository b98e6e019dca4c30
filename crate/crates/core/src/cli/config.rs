use std::path::{Path, PathBuf};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::CliError;
use crate::data::SynthConfig;
use crate::model::TrainConfig;
use crate::pipeline::{ExplainSettings, ModelSettings};

/// Where every command reads and writes. Relative paths are taken from the
/// working directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub train: PathBuf,
    pub test: PathBuf,
    pub ground_truth: PathBuf,
    pub ordering: PathBuf,
    pub model: PathBuf,
    /// Directory for dendrogram, history, metrics and explanation reports.
    pub reports: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            train: "data/train.hds".into(),
            test: "data/test.hds".into(),
            ground_truth: "data/ground_truth.json".into(),
            ordering: "out/ordering.json".into(),
            model: "out/model.hdl".into(),
            reports: "out/reports".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct LabeledCsv {
    pub path: PathBuf,
    /// Class index; 0 is normal operation.
    pub class: usize,
}

/// CSV sources for `ingest`. The normalizer is fit on all training files together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSettings {
    pub class_names: Vec<String>,
    pub train: Vec<LabeledCsv>,
    pub test: Vec<LabeledCsv>,
    pub window: usize,
    /// Defaults to `window` (non-overlapping).
    pub stride: Option<usize>,
}

impl Default for IngestSettings {
    fn default() -> Self {
        Self {
            class_names: Vec::new(),
            train: Vec::new(),
            test: Vec::new(),
            window: 20,
            stride: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub synth: SynthConfig,
    pub ingest: IngestSettings,
    pub model: ModelSettings,
    pub train: TrainConfig,
    pub explain: ExplainSettings,
    /// Copied into every seeded component (generator, init, shuffling, background).
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            synth: SynthConfig::default(),
            ingest: IngestSettings::default(),
            model: ModelSettings::default(),
            train: TrainConfig::default(),
            explain: ExplainSettings::default(),
            seed: 0,
        }
    }
}

impl RunConfig {
    /// Reads `path` (or starts from defaults), applies `key=value` overrides,
    /// then the seed override, and propagates the seed.
    pub fn resolve(path: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<Self, CliError> {
        let mut doc = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_str::<Value>(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => serde_json::to_value(RunConfig::default()).expect("defaults serialize"),
        };
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let mut cfg: RunConfig = serde_json::from_value(doc).map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.synth.seed = cfg.seed;
        cfg.train.shuffle_seed = cfg.seed;
        cfg.synth.validate().map_err(|e| CliError::Config(e.to_string()))?;
        cfg.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn schema() -> String {
        serde_json::to_string_pretty(&schemars::schema_for!(RunConfig)).expect("schema serializes")
    }
}

/// `a.b.c=value`: the value is parsed as JSON when possible, else taken as a string.
/// Numeric segments index into arrays.
pub fn apply_override(doc: &mut Value, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{spec}` is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        let bad = || CliError::Config(format!("override key `{key}`: cannot descend into `{part}`"));
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = part.parse().map_err(|_| bad())?;
                let slot = items.get_mut(idx).ok_or_else(bad)?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            Value::Null if !last => {
                *node = Value::Object(Default::default());
                node.as_object_mut()
                    .unwrap()
                    .entry(part.to_string())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            _ => return Err(bad()),
        };
    }
    Err(CliError::Config(format!("empty override key in `{spec}`")))
}
