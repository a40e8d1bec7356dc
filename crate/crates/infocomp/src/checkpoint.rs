//! Single-file JSON checkpoints: config, named tensors for the encoder and
//! the prompt bank, optimizer state, and the config hash.
//!
//! Values are 64-bit floats serialized with shortest-roundtrip formatting,
//! so a save/load cycle is bit-exact. Tensor names follow
//! `encoder.<field>` / `bank.<field>` with the field names produced by
//! `EncoderWeights::named_tensors` and `PromptBank::named_tensors`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::config::TrainConfig;
use crate::continual::AdamState;
use crate::encoder::{EncoderConfig, EncoderWeights, LayerWeights};
use crate::error::{Error, Result};
use crate::prompts::PromptBank;

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorData {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub requires_grad: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub config_hash: String,
    pub config: TrainConfig,
    pub completed_tasks: usize,
    pub label_sets: BTreeMap<usize, Vec<String>>,
    pub tensors: BTreeMap<String, TensorData>,
    pub adam: Option<AdamState>,
}

fn tensor_data(t: &Tensor) -> TensorData {
    TensorData {
        shape: t.shape(),
        values: t.to_vec(),
        requires_grad: t.requires_grad(),
    }
}

fn tensor_from(data: &TensorData) -> Result<Tensor> {
    let t = Tensor::from_vec(data.values.clone(), &data.shape)?;
    t.set_requires_grad(data.requires_grad);
    Ok(t)
}

/// Capture the full run state into a checkpoint value.
pub fn capture(
    config: &TrainConfig,
    weights: &EncoderWeights,
    bank: &PromptBank,
    adam: Option<&AdamState>,
    completed_tasks: usize,
) -> Checkpoint {
    let mut tensors = BTreeMap::new();
    for (name, t) in weights.named_tensors() {
        tensors.insert(format!("encoder.{name}"), tensor_data(&t));
    }
    for (name, t) in bank.named_tensors() {
        tensors.insert(format!("bank.{name}"), tensor_data(&t));
    }
    Checkpoint {
        schema_version: CHECKPOINT_SCHEMA_VERSION,
        config_hash: config.hash(),
        config: config.clone(),
        completed_tasks,
        label_sets: bank.label_sets().clone(),
        tensors,
        adam: adam.cloned(),
    }
}

pub fn save(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let json = serde_json::to_string(checkpoint)?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let checkpoint: Checkpoint = serde_json::from_reader(std::io::BufReader::new(
        std::fs::File::open(path)?,
    ))?;
    if checkpoint.schema_version != CHECKPOINT_SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            found: checkpoint.schema_version,
            expected: CHECKPOINT_SCHEMA_VERSION,
        });
    }
    Ok(checkpoint)
}

impl Checkpoint {
    fn take(&self, name: &str) -> Result<Tensor> {
        let data = self
            .tensors
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name:?}")))?;
        tensor_from(data)
    }

    /// Rebuild the encoder weights recorded in this checkpoint.
    pub fn restore_weights(&self) -> Result<EncoderWeights> {
        let config: EncoderConfig = self.config.encoder.clone();
        let mut layers = Vec::with_capacity(config.n_layers);
        for i in 0..config.n_layers {
            layers.push(LayerWeights {
                attn_q: self.take(&format!("encoder.layer{i}.attn_q"))?,
                attn_k: self.take(&format!("encoder.layer{i}.attn_k"))?,
                attn_v: self.take(&format!("encoder.layer{i}.attn_v"))?,
                attn_o: self.take(&format!("encoder.layer{i}.attn_o"))?,
                ln1_gain: self.take(&format!("encoder.layer{i}.ln1_gain"))?,
                ln1_bias: self.take(&format!("encoder.layer{i}.ln1_bias"))?,
                ffn_in: self.take(&format!("encoder.layer{i}.ffn_in"))?,
                ffn_out: self.take(&format!("encoder.layer{i}.ffn_out"))?,
                ln2_gain: self.take(&format!("encoder.layer{i}.ln2_gain"))?,
                ln2_bias: self.take(&format!("encoder.layer{i}.ln2_bias"))?,
            });
        }
        Ok(EncoderWeights {
            config,
            token_emb: self.take("encoder.token_emb")?,
            pos_emb: self.take("encoder.pos_emb")?,
            layers,
            final_ln_gain: self.take("encoder.final_ln_gain")?,
            final_ln_bias: self.take("encoder.final_ln_bias")?,
        })
    }

    /// Rebuild the prompt bank recorded in this checkpoint.
    pub fn restore_bank(&self) -> Result<PromptBank> {
        let mut bank_tensors = BTreeMap::new();
        for (name, data) in &self.tensors {
            if let Some(rest) = name.strip_prefix("bank.") {
                bank_tensors.insert(rest.to_string(), tensor_from(data)?);
            }
        }
        PromptBank::from_named_tensors(
            self.config.encoder.d_model,
            &bank_tensors,
            self.label_sets.clone(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let config = TrainConfig {
            encoder: EncoderConfig::tiny(),
            l_s: 3,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let weights = EncoderWeights::init(&config.encoder, &mut rng).unwrap();
        let mut bank = PromptBank::new(&weights, 3, 7);
        bank.new_p_prompt(1, 4, &weights, 1).unwrap();
        bank.new_head(1, &["x".into(), "y".into()], 2).unwrap();
        bank.new_w1(1, 34, 64, 3).unwrap();
        bank.snapshot_s_prompt();
        bank.freeze_task_artifacts(1).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        let ckpt = capture(&config, &weights, &bank, Some(&AdamState::new()), 1);
        save(&ckpt, &path).unwrap();

        let loaded = load(&path).unwrap();
        assert_eq!(loaded.config_hash, config.hash());
        assert_eq!(loaded.completed_tasks, 1);

        let weights2 = loaded.restore_weights().unwrap();
        for ((na, a), (nb, b)) in weights.named_tensors().iter().zip(weights2.named_tensors()) {
            assert_eq!(*na, nb);
            assert!(a.bits_eq(&b), "tensor {na} drifted through the roundtrip");
        }
        let bank2 = loaded.restore_bank().unwrap();
        assert!(bank2.p_prompt(1).unwrap().bits_eq(bank.p_prompt(1).unwrap()));
        assert!(bank2.s_snapshot().unwrap().bits_eq(bank.s_snapshot().unwrap()));
        assert!(!bank2.p_prompt(1).unwrap().requires_grad());
        assert_eq!(bank2.labels(1).unwrap(), bank.labels(1).unwrap());
    }

    #[test]
    fn schema_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        let config = TrainConfig {
            encoder: EncoderConfig::tiny(),
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let weights = EncoderWeights::init(&config.encoder, &mut rng).unwrap();
        let bank = PromptBank::new(&weights, 3, 7);
        let mut ckpt = capture(&config, &weights, &bank, None, 0);
        ckpt.schema_version = 9;
        save(&ckpt, &path).unwrap();
        assert!(matches!(load(&path), Err(Error::SchemaVersion { .. })));
    }
}
