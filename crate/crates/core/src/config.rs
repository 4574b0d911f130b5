//! Flat `key = value` run configuration with dotted sections.

use std::fmt::Write as _;
use std::str::FromStr;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::attention::{Activation, EncoderConfig};
use crate::autodiff::AdamWConfig;
use crate::graph::{RelationSpec, SynthSpec, SynthTypeSpec};
use crate::train::{TrainConfig, ViewKind};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {line}: expected key = value")]
    Syntax { line: usize },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("bad value {value:?} for {key}: {msg}")]
    Value { key: String, value: String, msg: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

/// Every tunable of a run. Defaults follow the reference settings where
/// they exist; learning rate and weight decay are local choices.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub data_dir: String,
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub activation: Activation,
    pub lambda_u: f64,
    pub temperature: f64,
    pub k_ratio: f64,
    pub views: Vec<ViewKind>,
    pub epochs: usize,
    pub patience: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub precision: Precision,
    pub split: [f64; 3],
    pub restarts: usize,
    pub synth: SynthSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data_dir: String::new(),
            layers: 5,
            hidden: 64,
            heads: 8,
            activation: Activation::Tanh,
            lambda_u: 0.5,
            temperature: 0.2,
            k_ratio: 0.5,
            views: vec![ViewKind::FeatureExchange, ViewKind::EdgeAdd, ViewKind::EdgeRemove],
            epochs: 300,
            patience: 30,
            lr: 5e-3,
            weight_decay: 1e-4,
            precision: Precision::F32,
            split: [0.24, 0.06, 0.70],
            restarts: 10,
            synth: SynthSpec::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value {
        key: key.into(),
        value: value.into(),
        msg: e.to_string(),
    })
}

fn bad(key: &str, value: &str, msg: &str) -> ConfigError {
    ConfigError::Value {
        key: key.into(),
        value: value.into(),
        msg: msg.into(),
    }
}

/// Splits config text into `(key, value)` pairs. `#` starts a comment.
pub fn parse_text(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
        let k = k.trim();
        if k.is_empty() {
            return Err(ConfigError::Syntax { line: i + 1 });
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Parses a `k=v` override.
pub fn parse_override(s: &str) -> Result<(String, String), ConfigError> {
    let (k, v) = s.split_once('=').ok_or(ConfigError::Syntax { line: 0 })?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "seed" => self.seed = parse(key, value)?,
            "data.dir" => self.data_dir = value.to_string(),
            "encoder.layers" => self.layers = parse(key, value)?,
            "encoder.hidden" => self.hidden = parse(key, value)?,
            "encoder.heads" => self.heads = parse(key, value)?,
            "encoder.activation" => self.activation = value.parse().map_err(|e: String| bad(key, value, &e))?,
            "train.lambda_u" => self.lambda_u = parse(key, value)?,
            "train.temperature" => self.temperature = parse(key, value)?,
            "train.k_ratio" => self.k_ratio = parse(key, value)?,
            "train.views" => {
                self.views = value
                    .split(',')
                    .map(|v| v.trim().parse::<ViewKind>().map_err(|e| bad(key, value, &e)))
                    .collect::<Result<_, _>>()?
            }
            "train.epochs" => self.epochs = parse(key, value)?,
            "train.patience" => self.patience = parse(key, value)?,
            "train.lr" => self.lr = parse(key, value)?,
            "train.weight_decay" => self.weight_decay = parse(key, value)?,
            "train.precision" => {
                self.precision = match value {
                    "f32" => Precision::F32,
                    "f64" => Precision::F64,
                    _ => return Err(bad(key, value, "expected f32 or f64")),
                }
            }
            "split.train" => self.split[0] = parse(key, value)?,
            "split.val" => self.split[1] = parse(key, value)?,
            "split.test" => self.split[2] = parse(key, value)?,
            "eval.restarts" => self.restarts = parse(key, value)?,
            "synth.types" => {
                self.synth.types = value
                    .split(',')
                    .map(|item| {
                        let f: Vec<&str> = item.trim().split(':').collect();
                        if f.len() != 3 {
                            return Err(bad(key, value, "expected name:count:dim items"));
                        }
                        Ok(SynthTypeSpec {
                            name: f[0].to_string(),
                            count: parse(key, f[1])?,
                            feature_dim: parse(key, f[2])?,
                        })
                    })
                    .collect::<Result<_, _>>()?
            }
            "synth.relations" => {
                self.synth.relations = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|item| {
                        let f: Vec<&str> = item.trim().split(':').collect();
                        if f.len() != 4 {
                            return Err(bad(key, value, "expected name:src:dst:edges items"));
                        }
                        Ok(RelationSpec {
                            name: f[0].to_string(),
                            source: f[1].to_string(),
                            target: f[2].to_string(),
                            edges: parse(key, f[3])?,
                        })
                    })
                    .collect::<Result<_, _>>()?
            }
            "synth.target" => self.synth.target = value.to_string(),
            "synth.classes" => self.synth.classes = parse(key, value)?,
            "synth.homophily" => self.synth.homophily = parse(key, value)?,
            "synth.degree_exponent" => self.synth.degree_exponent = parse(key, value)?,
            "synth.feature_signal" => self.synth.feature_signal = parse(key, value)?,
            "synth.feature_noise" => self.synth.feature_noise = parse(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<(), ConfigError> {
        for (k, v) in pairs {
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Canonical `(key, value)` list; feeding it back through [`set`](Self::set)
    /// reproduces `self`.
    pub fn entries(&self) -> Vec<(String, String)> {
        let s = &self.synth;
        let views: Vec<String> = self.views.iter().map(|v| v.to_string()).collect();
        let types: Vec<String> = s
            .types
            .iter()
            .map(|t| format!("{}:{}:{}", t.name, t.count, t.feature_dim))
            .collect();
        let rels: Vec<String> = s
            .relations
            .iter()
            .map(|r| format!("{}:{}:{}:{}", r.name, r.source, r.target, r.edges))
            .collect();
        let pairs: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("data.dir", self.data_dir.clone()),
            ("encoder.layers", self.layers.to_string()),
            ("encoder.hidden", self.hidden.to_string()),
            ("encoder.heads", self.heads.to_string()),
            ("encoder.activation", self.activation.to_string()),
            ("train.lambda_u", self.lambda_u.to_string()),
            ("train.temperature", self.temperature.to_string()),
            ("train.k_ratio", self.k_ratio.to_string()),
            ("train.views", views.join(",")),
            ("train.epochs", self.epochs.to_string()),
            ("train.patience", self.patience.to_string()),
            ("train.lr", self.lr.to_string()),
            ("train.weight_decay", self.weight_decay.to_string()),
            (
                "train.precision",
                match self.precision {
                    Precision::F32 => "f32".into(),
                    Precision::F64 => "f64".into(),
                },
            ),
            ("split.train", self.split[0].to_string()),
            ("split.val", self.split[1].to_string()),
            ("split.test", self.split[2].to_string()),
            ("eval.restarts", self.restarts.to_string()),
            ("synth.types", types.join(",")),
            ("synth.relations", rels.join(",")),
            ("synth.target", s.target.clone()),
            ("synth.classes", s.classes.to_string()),
            ("synth.homophily", s.homophily.to_string()),
            ("synth.degree_exponent", s.degree_exponent.to_string()),
            ("synth.feature_signal", s.feature_signal.to_string()),
            ("synth.feature_noise", s.feature_noise.to_string()),
        ];
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Hex SHA-256 of the canonical text.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |m: String| Err(ConfigError::Invalid(m));
        if !(self.temperature > 0.0 && self.temperature <= 1.0) {
            return inv(format!("temperature {} outside (0, 1]", self.temperature));
        }
        if !(self.k_ratio > 0.0 && self.k_ratio <= 1.0) {
            return inv(format!("k_ratio {} outside (0, 1]", self.k_ratio));
        }
        if !(self.lambda_u >= 0.0) {
            return inv(format!("lambda_u {} must be non-negative", self.lambda_u));
        }
        if self.patience > self.epochs {
            return inv(format!("patience {} exceeds epochs {}", self.patience, self.epochs));
        }
        if self.views.is_empty() {
            return inv("at least one view is required".into());
        }
        if self.lambda_u > 0.0 && self.views.len() < 2 {
            return inv("consistency training needs at least two views".into());
        }
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) {
            return inv("learning rate must be positive and weight decay non-negative".into());
        }
        if self.hidden == 0 || self.heads == 0 || !self.hidden.is_multiple_of(self.heads) {
            return inv(format!("hidden {} not divisible by heads {}", self.hidden, self.heads));
        }
        Ok(())
    }

    pub fn synth_spec(&self) -> SynthSpec {
        SynthSpec {
            seed: self.seed,
            ..self.synth.clone()
        }
    }

    pub fn train_config(&self, classes: usize) -> TrainConfig {
        TrainConfig {
            encoder: EncoderConfig {
                layers: self.layers,
                hidden: self.hidden,
                heads: self.heads,
                classes,
                activation: self.activation,
            },
            lambda_u: self.lambda_u,
            temperature: self.temperature,
            k_ratio: self.k_ratio,
            views: self.views.clone(),
            epochs: self.epochs,
            patience: self.patience,
            optimizer: AdamWConfig {
                learning_rate: self.lr,
                weight_decay: self.weight_decay,
                ..AdamWConfig::default()
            },
            seed: self.seed,
        }
    }
}
