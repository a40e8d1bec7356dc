//! Small transformer encoder used as the frozen backbone.
//!
//! Pre-norm blocks with full bidirectional multi-head self-attention and a
//! GELU feed-forward, followed by a final layer norm. Pooling takes the row
//! of a dedicated classification token placed immediately after the prompt
//! prefix. The backbone stands in for a pretrained language model at desk
//! scale: it is optionally warmup-pretrained on a masked-token objective and
//! then frozen for the whole continual run.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ops, Tensor};
use crate::error::{Error, Result};

/// Token id reserved for the classification slot.
pub const CLS_TOKEN_ID: usize = 0;

/// Architecture hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct EncoderConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ffn: usize,
    pub vocab_size: usize,
    /// Maximum total sequence length: prompts + CLS + text.
    pub max_len: usize,
    pub ln_eps: f64,
    pub init_std: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            d_ffn: 256,
            vocab_size: 4096,
            max_len: 128,
            ln_eps: 1e-5,
            init_std: 0.02,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.vocab_size < 2 {
            return Err(Error::Config("vocab_size must be at least 2".into()));
        }
        if self.max_len == 0 || self.n_layers == 0 || self.d_ffn == 0 {
            return Err(Error::Config(
                "max_len, n_layers, and d_ffn must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Small configuration for tests and gradient checks.
    pub fn tiny() -> Self {
        EncoderConfig {
            d_model: 16,
            n_layers: 2,
            n_heads: 2,
            d_ffn: 32,
            vocab_size: 48,
            max_len: 32,
            ..Default::default()
        }
    }
}

/// One transformer block's parameters.
#[derive(Debug, Clone)]
pub struct LayerWeights {
    pub attn_q: Tensor,
    pub attn_k: Tensor,
    pub attn_v: Tensor,
    pub attn_o: Tensor,
    pub ln1_gain: Tensor,
    pub ln1_bias: Tensor,
    pub ffn_in: Tensor,
    pub ffn_out: Tensor,
    pub ln2_gain: Tensor,
    pub ln2_bias: Tensor,
}

/// All backbone parameters. Frozen (requires_grad = false) while any task
/// trains; trainable only during warmup pretraining or in finetune mode.
#[derive(Debug, Clone)]
pub struct EncoderWeights {
    pub config: EncoderConfig,
    pub token_emb: Tensor,
    pub pos_emb: Tensor,
    pub layers: Vec<LayerWeights>,
    pub final_ln_gain: Tensor,
    pub final_ln_bias: Tensor,
}

impl EncoderWeights {
    /// Fresh seeded random initialization. LN gains start at one, biases at
    /// zero, matrices at N(0, init_std).
    pub fn init<R: Rng>(config: &EncoderConfig, rng: &mut R) -> Result<EncoderWeights> {
        config.validate()?;
        let d = config.d_model;
        let std = config.init_std;
        let mat = |rng: &mut R, r: usize, c: usize| Tensor::randn(&[r, c], std, rng);
        let ones = |n: usize| Tensor::from_vec(vec![1.0; n], &[n]).expect("const shape");
        let zeros = |n: usize| Tensor::zeros(&[n]);

        let token_emb = mat(rng, config.vocab_size, d);
        let pos_emb = mat(rng, config.max_len, d);
        let mut layers = Vec::with_capacity(config.n_layers);
        for _ in 0..config.n_layers {
            layers.push(LayerWeights {
                attn_q: mat(rng, d, d),
                attn_k: mat(rng, d, d),
                attn_v: mat(rng, d, d),
                attn_o: mat(rng, d, d),
                ln1_gain: ones(d),
                ln1_bias: zeros(d),
                ffn_in: mat(rng, d, config.d_ffn),
                ffn_out: mat(rng, config.d_ffn, d),
                ln2_gain: ones(d),
                ln2_bias: zeros(d),
            });
        }
        Ok(EncoderWeights {
            config: config.clone(),
            token_emb,
            pos_emb,
            layers,
            final_ln_gain: ones(d),
            final_ln_bias: zeros(d),
        })
    }

    /// All parameters with stable names, in a fixed order. The names are the
    /// checkpoint field names.
    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = vec![
            ("token_emb".to_string(), self.token_emb.clone()),
            ("pos_emb".to_string(), self.pos_emb.clone()),
        ];
        for (i, layer) in self.layers.iter().enumerate() {
            out.push((format!("layer{i}.attn_q"), layer.attn_q.clone()));
            out.push((format!("layer{i}.attn_k"), layer.attn_k.clone()));
            out.push((format!("layer{i}.attn_v"), layer.attn_v.clone()));
            out.push((format!("layer{i}.attn_o"), layer.attn_o.clone()));
            out.push((format!("layer{i}.ln1_gain"), layer.ln1_gain.clone()));
            out.push((format!("layer{i}.ln1_bias"), layer.ln1_bias.clone()));
            out.push((format!("layer{i}.ffn_in"), layer.ffn_in.clone()));
            out.push((format!("layer{i}.ffn_out"), layer.ffn_out.clone()));
            out.push((format!("layer{i}.ln2_gain"), layer.ln2_gain.clone()));
            out.push((format!("layer{i}.ln2_bias"), layer.ln2_bias.clone()));
        }
        out.push(("final_ln_gain".to_string(), self.final_ln_gain.clone()));
        out.push(("final_ln_bias".to_string(), self.final_ln_bias.clone()));
        out
    }

    pub fn set_trainable(&self, trainable: bool) {
        for (_, t) in self.named_tensors() {
            t.set_requires_grad(trainable);
        }
    }

    pub fn is_frozen(&self) -> bool {
        self.named_tensors().iter().all(|(_, t)| !t.requires_grad())
    }

    /// Detached value snapshot, used by the freeze-invariant checks.
    pub fn snapshot(&self) -> Vec<(String, Tensor)> {
        self.named_tensors()
            .into_iter()
            .map(|(name, t)| (name, t.detached_copy()))
            .collect()
    }
}

/// Per-task linear classifier over the pooled representation.
#[derive(Debug, Clone)]
pub struct ClassifierHead {
    pub task_id: usize,
    /// [n_classes × d_model]
    pub weight: Tensor,
    /// [1 × n_classes]
    pub bias: Tensor,
}

impl ClassifierHead {
    pub fn new<R: Rng>(task_id: usize, n_classes: usize, d_model: usize, rng: &mut R) -> Self {
        let std = 1.0 / (d_model as f64).sqrt();
        let weight = Tensor::randn(&[n_classes, d_model], std, rng);
        weight.set_requires_grad(true);
        let bias = Tensor::zeros(&[1, n_classes]);
        bias.set_requires_grad(true);
        ClassifierHead {
            task_id,
            weight,
            bias,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.weight.rows()
    }

    pub fn set_trainable(&self, trainable: bool) {
        self.weight.set_requires_grad(trainable);
        self.bias.set_requires_grad(trainable);
    }
}

/// Token embedding + position embedding for a token id sequence.
///
/// `pos_offset` is the slot index of the first token in the final sequence;
/// text embedded behind a prompt prefix uses the prefix length as offset so
/// prompt vectors occupy the first slots.
pub fn embed_sequence(
    token_ids: &[usize],
    weights: &EncoderWeights,
    pos_offset: usize,
) -> Result<Tensor> {
    let max_len = weights.config.max_len;
    if pos_offset + token_ids.len() > max_len {
        return Err(Error::IndexOutOfRange {
            what: "sequence position",
            index: pos_offset + token_ids.len() - 1,
            len: max_len,
        });
    }
    let tok = ops::gather_rows(&weights.token_emb, token_ids)?;
    let positions: Vec<usize> = (pos_offset..pos_offset + token_ids.len()).collect();
    let pos = ops::gather_rows(&weights.pos_emb, &positions)?;
    ops::add(&tok, &pos)
}

/// Row-wise concatenation [P, S, X]; absent prompts contribute nothing.
pub fn prepend_prompts(
    p_prompt: Option<&Tensor>,
    s_prompt: Option<&Tensor>,
    x: &Tensor,
) -> Result<Tensor> {
    let mut parts: Vec<&Tensor> = Vec::with_capacity(3);
    if let Some(p) = p_prompt {
        parts.push(p);
    }
    if let Some(s) = s_prompt {
        parts.push(s);
    }
    if parts.is_empty() {
        return Ok(x.clone());
    }
    parts.push(x);
    ops::concat_rows(&parts)
}

/// Run the encoder over a stack of equal-length sequences laid out
/// [blocks·seq_len × d_model]. Attention stays within each block; the linear
/// parts run as single large matrix products, so per-row results match the
/// one-sequence path exactly.
pub fn encode_batch(seq: &Tensor, seq_len: usize, weights: &EncoderWeights) -> Result<Tensor> {
    let cfg = &weights.config;
    if seq.cols() != cfg.d_model {
        return Err(Error::ShapeMismatch {
            op: "encode",
            lhs: seq.shape(),
            rhs: vec![cfg.max_len, cfg.d_model],
        });
    }
    if seq_len > cfg.max_len {
        return Err(Error::IndexOutOfRange {
            what: "sequence length",
            index: seq_len,
            len: cfg.max_len,
        });
    }
    let mut x = seq.clone();
    for layer in &weights.layers {
        let normed = ops::layer_norm(&x, &layer.ln1_gain, &layer.ln1_bias, cfg.ln_eps)?;
        let q = ops::matmul(&normed, &layer.attn_q)?;
        let k = ops::matmul(&normed, &layer.attn_k)?;
        let v = ops::matmul(&normed, &layer.attn_v)?;
        let merged = ops::multi_head_attention(&q, &k, &v, cfg.n_heads, seq_len)?;
        let attn_out = ops::matmul(&merged, &layer.attn_o)?;
        x = ops::add(&x, &attn_out)?;

        let normed2 = ops::layer_norm(&x, &layer.ln2_gain, &layer.ln2_bias, cfg.ln_eps)?;
        let hidden = ops::gelu(&ops::matmul(&normed2, &layer.ffn_in)?);
        let ffn_out = ops::matmul(&hidden, &layer.ffn_out)?;
        x = ops::add(&x, &ffn_out)?;
    }
    ops::layer_norm(&x, &weights.final_ln_gain, &weights.final_ln_bias, cfg.ln_eps)
}

/// Run the full encoder stack over one embedded sequence [L × d_model].
pub fn encode(seq: &Tensor, weights: &EncoderWeights) -> Result<Tensor> {
    encode_batch(seq, seq.rows(), weights)
}

/// The pooled representation: the hidden row at the classification token.
pub fn pool_representation(hidden: &Tensor, cls_index: usize) -> Result<Tensor> {
    ops::slice_rows(hidden, cls_index, 1)
}

/// Task logits: weight · v + bias for each row of v [B × d_model].
pub fn classify(v: &Tensor, head: &ClassifierHead) -> Result<Tensor> {
    let scores = ops::matmul_nt(v, &head.weight)?;
    ops::add_row_broadcast(&scores, &head.bias)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_weights(seed: u64) -> EncoderWeights {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        EncoderWeights::init(&EncoderConfig::tiny(), &mut rng).unwrap()
    }

    #[test]
    fn embed_length_and_first_slot() {
        let w = tiny_weights(1);
        let seq = embed_sequence(&[0, 3, 5], &w, 0).unwrap();
        assert_eq!(seq.shape(), vec![3, 16]);

        // id 0 at position 0 is tokenEmb[0] + posEmb[0]
        let tok0 = &w.token_emb.to_vec()[..16];
        let pos0 = &w.pos_emb.to_vec()[..16];
        let got = &seq.to_vec()[..16];
        for i in 0..16 {
            assert_eq!(got[i], tok0[i] + pos0[i]);
        }
    }

    #[test]
    fn embed_respects_max_len() {
        let w = tiny_weights(1);
        let ids = vec![1; 40];
        assert!(embed_sequence(&ids, &w, 0).is_err());
        assert!(embed_sequence(&[1, 2], &w, 31).is_err());
    }

    #[test]
    fn seeded_init_differs_by_seed_same_shape() {
        let a = tiny_weights(1);
        let b = tiny_weights(2);
        assert_eq!(a.token_emb.shape(), b.token_emb.shape());
        assert!(!a.token_emb.bits_eq(&b.token_emb));
    }

    #[test]
    fn prepend_identity_when_absent() {
        let w = tiny_weights(1);
        let x = embed_sequence(&[0, 1], &w, 0).unwrap();
        let out = prepend_prompts(None, None, &x).unwrap();
        assert!(out.same_storage(&x));
    }

    #[test]
    fn prepend_length_arithmetic() {
        let d = 16;
        let p = Tensor::zeros(&[35, d]);
        let s = Tensor::zeros(&[5, d]);
        let x = Tensor::zeros(&[40, d]);
        let out = prepend_prompts(Some(&p), Some(&s), &x).unwrap();
        assert_eq!(out.rows(), 80);
    }

    #[test]
    fn encode_preserves_shape() {
        let w = tiny_weights(3);
        for len in [1usize, 5, 12] {
            let ids: Vec<usize> = (0..len).collect();
            let seq = embed_sequence(&ids, &w, 0).unwrap();
            let hidden = encode(&seq, &w).unwrap();
            assert_eq!(hidden.shape(), vec![len, 16]);
        }
    }

    #[test]
    fn encode_is_position_sensitive() {
        let w = tiny_weights(4);
        let a = encode(&embed_sequence(&[3, 7, 9], &w, 0).unwrap(), &w).unwrap();
        let b = encode(&embed_sequence(&[3, 9, 7], &w, 0).unwrap(), &w).unwrap();
        assert!(!a.bits_eq(&b));
    }

    #[test]
    fn encode_is_deterministic() {
        let w = tiny_weights(5);
        let seq = embed_sequence(&[2, 4, 6], &w, 0).unwrap();
        let a = encode(&seq, &w).unwrap();
        let b = encode(&seq, &w).unwrap();
        assert!(a.bits_eq(&b));
    }

    #[test]
    fn pool_takes_requested_row() {
        let hidden = Tensor::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[3, 2]).unwrap();
        let v = pool_representation(&hidden, 0).unwrap();
        assert_eq!(v.to_vec(), vec![1.0, 2.0]);
        assert!(pool_representation(&hidden, 3).is_err());
    }

    #[test]
    fn classify_zero_head_and_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let head = ClassifierHead::new(0, 2, 2, &mut rng);
        head.weight.set_values(&[0.0, 0.0, 0.0, 0.0]);
        let v = Tensor::from_vec(vec![1.0, 0.0], &[1, 2]).unwrap();
        assert_eq!(classify(&v, &head).unwrap().to_vec(), vec![0.0, 0.0]);

        head.weight.set_values(&[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(classify(&v, &head).unwrap().to_vec(), vec![1.0, 0.0]);
    }

    #[test]
    fn classify_argmax_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let head = ClassifierHead::new(0, 4, 8, &mut rng);
        head.bias
            .set_values(&(0..4).map(|i| i as f64 * 0.1).collect::<Vec<_>>());
        let v = Tensor::randn(&[1, 8], 1.0, &mut rng);
        let logits = classify(&v, &head).unwrap().to_vec();

        let wv = head.weight.to_vec();
        let bv = head.bias.to_vec();
        let xv = v.to_vec();
        let brute: Vec<f64> = (0..4)
            .map(|c| {
                bv[c]
                    + (0..8)
                        .map(|i| wv[c * 8 + i] * xv[i])
                        .sum::<f64>()
            })
            .collect();
        let argmax = |xs: &[f64]| {
            xs.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0
        };
        assert_eq!(argmax(&logits), argmax(&brute));
        for (a, b) in logits.iter().zip(&brute) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
