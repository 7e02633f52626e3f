use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::models::{CodebookInit, LossWeights, Method, ModelConfig, TrainSettings};
use crate::{ConfigError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    GaussianMixture,
    Idx,
}

/// Flat experiment configuration. Every key is optional; see [`TrainConfig::default`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub method: Method,
    pub dataset: DatasetKind,
    pub n_clusters: usize,
    pub points_per_cluster: usize,
    pub spread: f64,
    pub data_dim: usize,
    pub data_seed: u64,
    /// Relative paths are resolved against the config file's directory.
    pub idx_images: Option<PathBuf>,
    pub idx_labels: Option<PathBuf>,
    pub idx_limit: Option<usize>,
    pub codebook_size: usize,
    pub components: usize,
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub codebook_init: CodebookInit,
    pub batch_size: usize,
    pub iters: usize,
    pub lr: f64,
    pub lambda: f64,
    pub lambda_r: f64,
    pub beta_vqvae: f64,
    pub epsilon: f64,
    pub phi_iters: usize,
    pub phi_lr: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub log_every: usize,
    /// When false the `wallclock_ms` column is written as 0 so metrics files are reproducible.
    pub record_wallclock: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::Vqwae,
            dataset: DatasetKind::GaussianMixture,
            n_clusters: 8,
            points_per_cluster: 500,
            spread: 0.05,
            data_dim: 2,
            data_seed: 0,
            idx_images: None,
            idx_labels: None,
            idx_limit: None,
            codebook_size: 16,
            components: 1,
            latent_dim: 2,
            hidden: vec![128, 128],
            codebook_init: CodebookInit::Uniform,
            batch_size: 32,
            iters: 3000,
            lr: 1e-4,
            lambda: 1e-3,
            lambda_r: 1.0,
            beta_vqvae: 0.25,
            epsilon: 0.1,
            phi_iters: 5,
            phi_lr: 1e-2,
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            log_every: 50,
            record_wallclock: false,
        }
    }
}

impl TrainConfig {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            hidden: self.hidden.clone(),
            components: self.components,
            latent_dim: self.latent_dim,
            codebook_size: self.codebook_size,
            codebook_init: self.codebook_init,
        }
    }

    pub fn train_settings(&self) -> TrainSettings {
        TrainSettings {
            method: self.method,
            batch_size: self.batch_size,
            lr: self.lr,
            phi_lr: self.phi_lr,
            phi_iters: self.phi_iters,
            weights: LossWeights {
                beta_commit: self.beta_vqvae,
                lambda: self.lambda,
                lambda_r: self.lambda_r,
                eps: self.epsilon,
            },
        }
    }

    fn validate(&self) -> std::result::Result<(), ConfigError> {
        let invalid = |key: &str, reason: &str| {
            Err(ConfigError::Invalid {
                key: key.into(),
                reason: reason.into(),
            })
        };
        let positive = [
            ("n_clusters", self.n_clusters),
            ("points_per_cluster", self.points_per_cluster),
            ("data_dim", self.data_dim),
            ("codebook_size", self.codebook_size),
            ("components", self.components),
            ("latent_dim", self.latent_dim),
            ("batch_size", self.batch_size),
            ("log_every", self.log_every),
        ];
        for (key, v) in positive {
            if v == 0 {
                return invalid(key, "must be positive");
            }
        }
        if self.hidden.contains(&0) {
            return invalid("hidden", "layer widths must be positive");
        }
        let non_negative = [
            ("spread", self.spread),
            ("lr", self.lr),
            ("lambda", self.lambda),
            ("lambda_r", self.lambda_r),
            ("beta_vqvae", self.beta_vqvae),
            ("phi_lr", self.phi_lr),
        ];
        for (key, v) in non_negative {
            if !(v >= 0.0) || !v.is_finite() {
                return invalid(key, "must be finite and ≥ 0");
            }
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return invalid("epsilon", "must be finite and > 0");
        }
        if self.dataset == DatasetKind::Idx && self.idx_images.is_none() {
            return invalid("idx_images", "required when dataset is \"idx\"");
        }
        if self.idx_limit == Some(0) {
            return invalid("idx_limit", "must be positive");
        }
        Ok(())
    }
}

const METHOD_KEY: &str = "method";

/// Strictly parses a flat JSON object; each error names the offending key.
pub fn parse_config_str(text: &str) -> std::result::Result<TrainConfig, ConfigError> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| ConfigError::Malformed(e.to_string()))?;
    let Value::Object(obj) = value else {
        return Err(ConfigError::Malformed(
            "top level must be a JSON object".into(),
        ));
    };
    let known = serde_json::to_value(TrainConfig::default()).expect("serializable");
    let known = known.as_object().expect("struct");
    for (key, v) in &obj {
        if !known.contains_key(key) {
            return Err(ConfigError::UnknownKey(key.clone()));
        }
        if key == METHOD_KEY {
            if let Value::String(s) = v {
                if serde_json::from_value::<Method>(v.clone()).is_err() {
                    return Err(ConfigError::UnknownMethod(s.clone()));
                }
            }
        }
        let single = Value::Object(Map::from_iter([(key.clone(), v.clone())]));
        if let Err(e) = serde_json::from_value::<TrainConfig>(single) {
            return Err(ConfigError::TypeMismatch {
                key: key.clone(),
                detail: e.to_string(),
            });
        }
    }
    let cfg: TrainConfig = serde_json::from_value(Value::Object(obj))
        .map_err(|e| ConfigError::Malformed(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads and parses a config file, resolving dataset paths against its directory.
pub fn parse_config(path: &Path) -> Result<TrainConfig> {
    let text = fs::read_to_string(path)?;
    let mut cfg = parse_config_str(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    for p in [&mut cfg.idx_images, &mut cfg.idx_labels]
        .into_iter()
        .flatten()
    {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_default() {
        assert_eq!(parse_config_str("{}").unwrap(), TrainConfig::default());
    }

    #[test]
    fn single_override() {
        let c = parse_config_str(r#"{"lambda": 0.01}"#).unwrap();
        assert_eq!(c.lambda, 0.01);
        assert_eq!(TrainConfig { lambda: 1e-3, ..c }, TrainConfig::default());
    }

    #[test]
    fn errors_name_the_key() {
        assert!(matches!(
            parse_config_str(r#"{"method": "sqvae"}"#),
            Err(ConfigError::UnknownMethod(m)) if m == "sqvae"
        ));
        assert!(matches!(
            parse_config_str(r#"{"lamda": 0.01}"#),
            Err(ConfigError::UnknownKey(k)) if k == "lamda"
        ));
        assert!(matches!(
            parse_config_str(r#"{"iters": "many"}"#),
            Err(ConfigError::TypeMismatch { key, .. }) if key == "iters"
        ));
        assert!(matches!(
            parse_config_str(r#"{"method": 3}"#),
            Err(ConfigError::TypeMismatch { key, .. }) if key == "method"
        ));
        assert!(matches!(
            parse_config_str(r#"{"batch_size": 0}"#),
            Err(ConfigError::Invalid { key, .. }) if key == "batch_size"
        ));
        assert!(matches!(
            parse_config_str("[1]"),
            Err(ConfigError::Malformed(_))
        ));
        assert!(matches!(
            parse_config_str("{"),
            Err(ConfigError::Malformed(_))
        ));
    }

    #[test]
    fn idx_needs_images() {
        assert!(matches!(
            parse_config_str(r#"{"dataset": "idx"}"#),
            Err(ConfigError::Invalid { key, .. }) if key == "idx_images"
        ));
    }
}
