//! Run configuration: built-in defaults, overlaid by a TOML or JSON file,
//! then by `--set key.path=value` pairs, then by command flags.

use std::path::{Path, PathBuf};

use facefake_core::aggregation::AggregationConfig;
use facefake_core::detector::{CascadeConfig, DetectorTrainOptions};
use facefake_core::metrics::DEFAULT_THRESHOLD;
use facefake_core::preprocess::{ExternalDecoder, SamplingPlan, SsimParams};
use facefake_core::synth::SynthConfig;
use facefake_core::training::TrainingConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Global seed; replaces the seeds of the synth, detector-training and
    /// training sections.
    pub seed: u64,
    /// Worker threads; 0 uses every core. Results are only guaranteed
    /// reproducible with 1.
    pub workers: usize,
    pub synth: SynthConfig,
    pub detector: DetectorSection,
    pub preprocess: PreprocessSection,
    pub classifier: ClassifierSection,
    pub training: TrainingConfig,
    pub aggregation: AggregationConfig,
    pub evaluation: EvaluationSection,
    pub paths: PathsSection,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    pub cascade: CascadeConfig,
    /// Directory of trained stage scorers; the built-in colour-blob scorers
    /// are used when unset.
    pub weights: Option<PathBuf>,
    pub train: DetectorTrainOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessSection {
    pub sampling: SamplingPlan,
    pub ssim: SsimParams,
    pub margin: f64,
    /// External decoder for container files; frame directories need none.
    pub decoder: Option<ExternalDecoder>,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        Self {
            sampling: SamplingPlan::default(),
            ssim: SsimParams::default(),
            margin: 0.30,
            decoder: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSection {
    pub variant: String,
    pub width_budget: f64,
    /// Overrides the variant's native input resolution.
    pub input_size: Option<usize>,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        Self {
            variant: facefake_core::classifier::DEFAULT_VARIANT.into(),
            width_budget: 1.0,
            input_size: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    pub threshold: f64,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

/// Fallbacks for command path arguments.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub labels: Option<PathBuf>,
}

/// Parse a config file; `.json` files as JSON, anything else as TOML.
pub fn read_config_file(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        serde_json::from_str::<Value>(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str::<Value>(&text).map_err(|e| e.to_string())
    };
    let v = parsed.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if !v.is_object() {
        return Err(CliError::Config(format!(
            "{}: top level must be a table",
            path.display()
        )));
    }
    Ok(v)
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Set the dotted `key` inside `root`, creating tables on the way.
pub fn set_path(root: &mut Value, key: &str, value: Value) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("malformed key {key:?}")));
    }
    let mut cur = root;
    for part in &parts[..parts.len() - 1] {
        if !cur.is_object() {
            return Err(CliError::Config(format!("{key}: {part} is not a table")));
        }
        cur = cur
            .as_object_mut()
            .expect("checked above")
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    match cur.as_object_mut() {
        Some(obj) => {
            obj.insert(parts[parts.len() - 1].to_string(), value);
            Ok(())
        }
        None => Err(CliError::Config(format!("{key}: parent is not a table"))),
    }
}

/// `key=value`; the value is read as JSON when it parses, else as a string.
pub fn parse_assignment(s: &str) -> Result<(String, Value), CliError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set expects key=value, got {s:?}")))?;
    let value = serde_json::from_str(v.trim()).unwrap_or_else(|_| Value::String(v.trim().to_string()));
    Ok((k.trim().to_string(), value))
}

/// Resolve the effective configuration.
pub fn resolve(file: Option<&Path>, sets: &[String], flags: &[(String, Value)]) -> Result<RunConfig, CliError> {
    let mut v = serde_json::to_value(RunConfig::default()).expect("defaults serialize");
    if let Some(path) = file {
        merge(&mut v, read_config_file(path)?);
    }
    for s in sets {
        let (k, val) = parse_assignment(s)?;
        set_path(&mut v, &k, val)?;
    }
    for (k, val) in flags {
        set_path(&mut v, k, val.clone())?;
    }
    let mut cfg: RunConfig = serde_json::from_value(v).map_err(|e| CliError::Config(e.to_string()))?;
    cfg.synth.seed = cfg.seed;
    cfg.detector.train.seed = cfg.seed;
    cfg.training.seed = cfg.seed;
    Ok(cfg)
}
