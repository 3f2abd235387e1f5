use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::context::{LocalErrorMode, SimulationConfig};
use crate::error::{Error, Result};
use crate::eval::FusionWeights;
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub train_features: Option<PathBuf>,
    pub test_features: Option<PathBuf>,
    pub encoder: Option<PathBuf>,
    pub kb: Option<PathBuf>,
    pub train_frames: Option<PathBuf>,
    pub test_frames: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub cr_scores: Option<PathBuf>,
    pub kr_scores: Option<PathBuf>,
    pub arch: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            train_features: None,
            test_features: None,
            encoder: None,
            kb: None,
            train_frames: None,
            test_frames: None,
            predictions: None,
            labels: None,
            cr_scores: None,
            kr_scores: None,
            arch: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl Paths {
    fn all(&self) -> Vec<(&'static str, &Path)> {
        let mut v: Vec<(&'static str, &Path)> = [
            ("train_features", &self.train_features),
            ("test_features", &self.test_features),
            ("encoder", &self.encoder),
            ("kb", &self.kb),
            ("train_frames", &self.train_frames),
            ("test_frames", &self.test_frames),
            ("predictions", &self.predictions),
            ("labels", &self.labels),
            ("cr_scores", &self.cr_scores),
            ("kr_scores", &self.kr_scores),
            ("arch", &self.arch),
        ]
        .into_iter()
        .filter_map(|(name, p)| p.as_deref().map(|p| (name, p)))
        .collect();
        v.push(("out_dir", &self.out_dir));
        v
    }
}

/// Hash encoder shape. `dim` is taken from the feature file when unset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HashParams {
    pub dim: Option<usize>,
    pub tables: usize,
    pub code_len: usize,
    pub seed: u64,
}

impl Default for HashParams {
    fn default() -> Self {
        Self {
            dim: None,
            tables: 8,
            code_len: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MleParams {
    /// Candidate window sizes for selection.
    pub windows: Vec<usize>,
    /// Window used by `score-cr`.
    pub window: Option<usize>,
    pub lambda_l1: f64,
    pub mode: LocalErrorMode,
}

impl Default for MleParams {
    fn default() -> Self {
        Self {
            windows: vec![16, 32, 64, 128, 256],
            window: None,
            lambda_l1: 1.0,
            mode: LocalErrorMode::WindowMean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Smoothing {
    /// Gaussian sigma in frames; `null` disables smoothing.
    pub sigma: Option<f64>,
}

impl Default for Smoothing {
    fn default() -> Self {
        Self { sigma: Some(3.0) }
    }
}

/// Temporal sampling: the context stream scores every `cr_rate`-th frame,
/// snippet anchors of the knowledge stream are `kr_rate` frames apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Rates {
    pub cr_rate: usize,
    pub kr_rate: usize,
}

impl Default for Rates {
    fn default() -> Self {
        Self {
            cr_rate: 2,
            kr_rate: 8,
        }
    }
}

/// Size of the toy dataset written by `synth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub train_videos: usize,
    pub test_videos: usize,
    pub frames: usize,
    pub frame_size: usize,
    pub feature_dim: usize,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            train_videos: 20,
            test_videos: 4,
            frames: 96,
            frame_size: 64,
            feature_dim: 64,
            seed: 0,
        }
    }
}

/// Everything a pipeline command needs, loaded from JSON and patched by
/// `--section.key=value` flags.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub hash: HashParams,
    pub train: TrainConfig,
    pub simulation: SimulationConfig,
    pub mle: MleParams,
    pub fusion: FusionWeights,
    pub smoothing: Smoothing,
    pub rates: Rates,
    pub synth: SynthParams,
}

impl PipelineConfig {
    /// Reads a JSON config; `None` starts from the defaults.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                serde_json::from_str::<Value>(&text).map_err(|e| {
                    Error::format(p.display().to_string(), e.column() as u64, e.to_string())
                })?
            }
            None => Value::Object(Default::default()),
        };
        // fill in defaults first so every key can be overridden
        let base: PipelineConfig =
            serde_json::from_value(value.clone()).map_err(|e| Error::invalid(e.to_string()))?;
        value = serde_json::to_value(&base).expect("config serializes");
        for (key, raw) in overrides {
            apply_override(&mut value, key, raw)?;
        }
        let cfg: PipelineConfig =
            serde_json::from_value(value).map_err(|e| Error::invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for (name, p) in self.paths.all() {
            if !seen.insert(p) {
                return Err(Error::invalid(format!(
                    "path {} ({name}) is used twice",
                    p.display()
                )));
            }
        }
        if self.rates.cr_rate == 0 || self.rates.kr_rate == 0 {
            return Err(Error::invalid("sampling rates must be at least 1"));
        }
        if self.hash.tables == 0 || self.hash.code_len == 0 {
            return Err(Error::invalid(
                "hash tables and code length must be positive",
            ));
        }
        if self.mle.windows.is_empty()
            || self.mle.windows.contains(&0)
            || self.mle.window == Some(0)
        {
            return Err(Error::invalid(
                "window sizes must be positive and the candidate set nonempty",
            ));
        }
        if self.mle.lambda_l1.is_nan() || self.mle.lambda_l1 < 0.0 {
            return Err(Error::invalid("lambda_l1 must be nonnegative"));
        }
        if let Some(s) = self.smoothing.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::invalid("smoothing sigma must be positive"));
            }
        }
        self.train.validate()?;
        self.simulation.validate()?;
        self.fusion.validate()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}

/// Sets `section.key` (any depth) to `raw`, parsed as JSON when possible and
/// as a plain string otherwise. The key must already exist.
pub fn apply_override(value: &mut Value, key: &str, raw: &str) -> Result<()> {
    let mut node = value;
    for part in key.split('.') {
        node = node
            .as_object_mut()
            .and_then(|m| m.get_mut(part))
            .ok_or_else(|| Error::invalid(format!("unknown config key `{key}`")))?;
    }
    *node = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok(())
}

/// Splits `--a.b=value` flags from the rest of the command line.
pub fn extract_overrides(args: Vec<String>) -> (Vec<String>, Vec<(String, String)>) {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    for arg in args {
        match arg.strip_prefix("--").and_then(|a| a.split_once('=')) {
            Some((key, value)) if key.contains('.') => {
                overrides.push((key.to_string(), value.to_string()))
            }
            _ => rest.push(arg),
        }
    }
    (rest, overrides)
}
