//! Run configuration: hyperparameters, ablation switches, file loading with
//! environment overrides, and the canonical config hash.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::objectives::Mode;

/// Ablation switches for infocomp mode (the rows of the ablation table),
/// plus the diagnostic freeze-S switch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationFlags {
    /// Drop the per-task P-Prompt from the input.
    pub no_p_prompt: bool,
    /// Drop the shared S-Prompt from the input.
    pub no_s_prompt: bool,
    /// Zero the bilinear prompt/classifier coupling term.
    pub no_p_info: bool,
    /// Zero the snapshot-alignment retention term.
    pub no_s_info: bool,
    /// Freeze the S-Prompt once task 1 completes; with every
    /// inference-relevant parameter frozen, later tasks cannot move earlier
    /// tasks' accuracy at all.
    pub freeze_s_after_first: bool,
}

/// All run hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub mode: Mode,
    /// P-Prompt rows.
    pub l_p: usize,
    /// S-Prompt rows.
    pub l_s: usize,
    /// Weight of the p-info term.
    pub lambda1: f64,
    /// Weight of the s-info term.
    pub lambda2: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Non-improving validation rounds tolerated before stopping a task.
    pub patience: usize,
    /// Validate every this many epochs.
    pub eval_every: usize,
    pub seed: u64,
    /// Tokenizer truncation length for raw text.
    pub max_text_len: usize,
    /// Masked-token pretraining steps before the continual run (0 = none).
    pub warmup_steps: usize,
    /// Validation examples withheld per class when a task arrives without a
    /// val split.
    pub val_per_class: usize,
    pub ablation: AblationFlags,
    pub encoder: EncoderConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: Mode::Infocomp,
            l_p: 35,
            l_s: 5,
            lambda1: 0.05,
            lambda2: 0.1,
            learning_rate: 1e-4,
            batch_size: 8,
            max_epochs: 40,
            patience: 5,
            eval_every: 1,
            seed: 0,
            max_text_len: 64,
            warmup_steps: 0,
            val_per_class: 20,
            ablation: AblationFlags::default(),
            encoder: EncoderConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 {
            return Err(Error::Config("lambda1 and lambda2 must be >= 0".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.patience < 1 {
            return Err(Error::Config("patience must be >= 1".into()));
        }
        if self.eval_every < 1 {
            return Err(Error::Config("eval_every must be >= 1".into()));
        }
        if self.encoder.max_len < self.l_p + self.l_s + 1 {
            return Err(Error::Config(format!(
                "max_len {} is below l_p + l_s + 1 = {}",
                self.encoder.max_len,
                self.l_p + self.l_s + 1
            )));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON serialization. Identifies a run's
    /// configuration in reports and checkpoints.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Load from a JSON file, then apply `INFOCOMP_*` environment overrides.
    pub fn from_file(path: &std::path::Path) -> Result<TrainConfig> {
        let text = std::fs::read_to_string(path)?;
        let mut value: serde_json::Value = serde_json::from_str(&text)?;
        apply_env_overrides(&mut value, std::env::vars())?;
        let config: TrainConfig = serde_json::from_value(value)?;
        config.validate()?;
        Ok(config)
    }
}

/// Override config keys from the environment. `INFOCOMP_SEED=7` sets `seed`;
/// nested fields use double underscores, e.g. `INFOCOMP_ENCODER__D_MODEL=32`.
/// Values are parsed as JSON, falling back to plain strings.
pub fn apply_env_overrides(
    value: &mut serde_json::Value,
    vars: impl Iterator<Item = (String, String)>,
) -> Result<()> {
    const PREFIX: &str = "INFOCOMP_";
    let mut overrides: Vec<(String, String)> = vars
        .filter_map(|(k, v)| k.strip_prefix(PREFIX).map(|rest| (rest.to_string(), v)))
        .collect();
    overrides.sort();
    for (key, raw) in overrides {
        let parsed: serde_json::Value = serde_json::from_str(&raw)
            .unwrap_or_else(|_| serde_json::Value::String(raw.clone()));
        let path: Vec<String> = key.split("__").map(|s| s.to_lowercase()).collect();
        let mut slot: &mut serde_json::Value = value;
        for (i, segment) in path.iter().enumerate() {
            slot = match slot {
                serde_json::Value::Object(map) => {
                    if i + 1 == path.len() {
                        map.insert(segment.clone(), parsed.clone());
                        break;
                    }
                    map.entry(segment.clone())
                        .or_insert_with(|| serde_json::Value::Object(Default::default()))
                }
                _ => {
                    return Err(Error::Config(format!(
                        "cannot override {key}: parent is not an object"
                    )))
                }
            };
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_settings() {
        let config = TrainConfig::default();
        assert_eq!(config.l_p, 35);
        assert_eq!(config.l_s, 5);
        assert_eq!(config.lambda1, 0.05);
        assert_eq!(config.lambda2, 0.1);
        assert_eq!(config.batch_size, 8);
        assert_eq!(config.learning_rate, 1e-4);
        assert_eq!(config.max_epochs, 40);
        config.validate().unwrap();
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = TrainConfig::default();
        let mut b = TrainConfig::default();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn env_overrides_apply_nested() {
        let mut value = serde_json::to_value(TrainConfig::default()).unwrap();
        let vars = vec![
            ("INFOCOMP_SEED".to_string(), "9".to_string()),
            ("INFOCOMP_MODE".to_string(), "\"shared_prompt\"".to_string()),
            ("INFOCOMP_ENCODER__D_MODEL".to_string(), "32".to_string()),
            ("HOME".to_string(), "/root".to_string()),
        ];
        apply_env_overrides(&mut value, vars.into_iter()).unwrap();
        let config: TrainConfig = serde_json::from_value(value).unwrap();
        assert_eq!(config.seed, 9);
        assert_eq!(config.mode, Mode::SharedPrompt);
        assert_eq!(config.encoder.d_model, 32);
    }

    #[test]
    fn validate_rejects_short_max_len() {
        let mut config = TrainConfig::default();
        config.encoder.max_len = 30;
        assert!(config.validate().is_err());
    }
}
