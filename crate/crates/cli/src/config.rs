//! Experiment configuration: JSON file, defaults and `--key value` overrides.

use std::path::{Path, PathBuf};

use lengen::analysis::DistanceMode;
use lengen::harness::TrainConfig;
use lengen::posenc::PositionalScheme;
use lengen::tasks::{ExternalFormat, SplitSpec};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    /// Checkpoint to evaluate.
    pub checkpoint: Option<PathBuf>,
    /// Defaults to the vocabulary stored next to the checkpoint.
    pub vocab: Option<PathBuf>,
    /// Split of the generated dataset to score.
    pub split: String,
    /// Score a pre-made file instead of a generated split.
    pub external: Option<PathBuf>,
    pub format: ExternalFormat,
    pub batch_size: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            checkpoint: None,
            vocab: None,
            split: "test".into(),
            external: None,
            format: ExternalFormat::Tsv,
            batch_size: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSettings {
    pub checkpoints: Vec<PathBuf>,
    /// Test instances fed to every model.
    pub instances: usize,
    pub bins: usize,
    pub mode: DistanceMode,
    /// Attention dumps written per model.
    pub dumps: usize,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        Self {
            checkpoints: Vec::new(),
            instances: 50,
            bins: 20,
            mode: DistanceMode::Weighted,
            dumps: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoremSettings {
    pub absolute_lengths: Vec<usize>,
    pub absolute_seeds: Vec<u64>,
    pub absolute_d: usize,
    pub absolute_h: usize,
    pub relative_length: usize,
    pub relative_heads: Vec<usize>,
    pub relative_d: usize,
    pub relative_seeds: Vec<u64>,
    pub tolerance: f64,
}

impl Default for TheoremSettings {
    fn default() -> Self {
        Self {
            absolute_lengths: vec![1, 7, 64, 512],
            absolute_seeds: (0..10).collect(),
            absolute_d: 16,
            absolute_h: 4,
            relative_length: 128,
            relative_heads: vec![2, 4, 16],
            relative_d: 16,
            relative_seeds: (0..3).collect(),
            tolerance: 1e-9,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankSettings {
    /// Report files or directories; empty means `<out>/reports`.
    pub reports: Vec<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: SplitSpec,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub precision: Precision,
    /// Write datasets gzip-compressed.
    pub gzip: bool,
    pub eval: EvalSettings,
    pub analysis: AnalysisSettings,
    pub theorems: TheoremSettings,
    pub rank: RankSettings,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: SplitSpec::default(),
            train: TrainConfig::default(),
            seeds: vec![0],
            precision: Precision::F32,
            gzip: false,
            eval: EvalSettings::default(),
            analysis: AnalysisSettings::default(),
            theorems: TheoremSettings::default(),
            rank: RankSettings::default(),
            out: PathBuf::from("runs"),
        }
    }
}

/// A fully resolved configuration and how it was obtained.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub config: ExperimentConfig,
    /// Canonical JSON of `config`.
    pub json: Value,
    /// Keys set by the user, file and flags together, before defaults.
    pub user: Value,
    pub overrides: Vec<(String, String)>,
    pub file: Option<PathBuf>,
}

impl Resolved {
    pub fn sha256(&self) -> String {
        let bytes = serde_json::to_vec(&self.json).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Whether the user named this dotted key explicitly.
    pub fn user_sets(&self, key: &str) -> bool {
        lookup(&self.user, key).is_some()
    }
}

fn lookup<'a>(v: &'a Value, key: &str) -> Option<&'a Value> {
    key.split('.').try_fold(v, |v, part| v.get(part))
}

/// Recursively overlays `top` onto `base`; objects merge, anything else
/// replaces.
pub fn merge(base: &mut Value, top: &Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                merge(b.entry(k.clone()).or_insert(Value::Null), v);
            }
        }
        (b, t) => *b = t.clone(),
    }
}

/// Parses an override value against the type currently at that key.
fn parse_value(key: &str, raw: &str, current: Option<&Value>) -> Value {
    let as_string = || Value::String(raw.to_string());
    // Scratchpad masks are bit strings such as "10010", not numbers.
    if key.ends_with("scratchpad") {
        return if raw == "null" { Value::Null } else { as_string() };
    }
    match current {
        Some(Value::String(_)) => as_string(),
        Some(Value::Array(_)) => match serde_json::from_str::<Value>(raw) {
            Ok(v @ Value::Array(_)) => v,
            _ => Value::Array(
                raw.split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| serde_json::from_str(s.trim()).unwrap_or_else(|_| Value::String(s.trim().to_string())))
                    .collect(),
            ),
        },
        _ => serde_json::from_str(raw).unwrap_or_else(|_| as_string()),
    }
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Usage(format!("malformed key `--{key}`")));
    }
    let mut node = root;
    for part in &parts[..parts.len() - 1] {
        if !node.is_object() {
            *node = Value::Object(Map::new());
        }
        node = node
            .as_object_mut()
            .expect("just made an object")
            .entry(part.to_string())
            .or_insert(Value::Null);
    }
    if !node.is_object() {
        *node = Value::Object(Map::new());
    }
    node.as_object_mut()
        .expect("just made an object")
        .insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Splits `--key value` pairs; `--key=value` is accepted too.
pub fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(flag) = it.next() {
        let Some(key) = flag.strip_prefix("--") else {
            return Err(CliError::Usage(format!("expected `--key value`, found `{flag}`")));
        };
        if let Some((k, v)) = key.split_once('=') {
            out.push((k.to_string(), v.to_string()));
            continue;
        }
        let value = it
            .next()
            .ok_or_else(|| CliError::Usage(format!("flag `--{key}` is missing a value")))?;
        out.push((key.to_string(), value.clone()));
    }
    Ok(out)
}

/// A scheme may be written as a bare name.
fn normalize_scheme(v: &mut Value) -> Result<(), CliError> {
    if let Some(scheme) = v.pointer_mut("/train/model/scheme") {
        if let Value::String(name) = scheme {
            let parsed = PositionalScheme::from_name(name).map_err(|e| CliError::Config(e.to_string()))?;
            *scheme = serde_json::to_value(parsed).expect("scheme serializes");
        }
    }
    Ok(())
}

pub fn resolve(file: Option<&Path>, overrides: Vec<(String, String)>) -> Result<Resolved, CliError> {
    let mut user = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str::<Value>(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => Value::Object(Map::new()),
    };
    if !user.is_object() {
        return Err(CliError::Config("the config file must hold a JSON object".into()));
    }
    let mut merged = serde_json::to_value(ExperimentConfig::default()).expect("defaults serialize");
    merge(&mut merged, &user);
    for (key, raw) in &overrides {
        let value = parse_value(key, raw, lookup(&merged, key));
        set_path(&mut merged, key, value.clone())?;
        set_path(&mut user, key, value)?;
    }
    normalize_scheme(&mut merged)?;
    let config: ExperimentConfig = serde_json::from_value(merged).map_err(|e| CliError::Config(e.to_string()))?;
    let json = serde_json::to_value(&config).expect("config serializes");
    Ok(Resolved {
        config,
        json,
        user,
        overrides,
        file: file.map(Path::to_path_buf),
    })
}
