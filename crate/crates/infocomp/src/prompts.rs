//! Prompt storage and lifecycle across task boundaries.
//!
//! The bank holds one P-Prompt, classifier head, and bilinear coupling matrix
//! per task, a single shared S-Prompt, the frozen snapshot of the S-Prompt
//! taken at the previous task boundary, and the persistent alignment matrix
//! used by the retention loss. Completed-task artifacts are frozen and never
//! change again.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ops, Tensor};
use crate::encoder::{ClassifierHead, EncoderWeights};
use crate::error::{Error, Result};

#[derive(Debug)]
pub struct PromptBank {
    d_model: usize,
    p_prompts: BTreeMap<usize, Tensor>,
    s_prompt: Tensor,
    s_snapshot: Option<Tensor>,
    heads: BTreeMap<usize, ClassifierHead>,
    w1: BTreeMap<usize, Tensor>,
    w_q: Tensor,
    label_sets: BTreeMap<usize, Vec<String>>,
}

impl PromptBank {
    /// Create a bank with a fresh trainable S-Prompt of `l_s` rows sampled
    /// from the backbone's token embedding table.
    pub fn new(weights: &EncoderWeights, l_s: usize, seed: u64) -> PromptBank {
        let d_model = weights.config.d_model;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s_prompt = sample_embedding_rows(weights, l_s, &mut rng);
        s_prompt.set_requires_grad(true);
        // The alignment matrix starts as the identity so the retention loss
        // begins as plain cosine similarity.
        let mut eye = vec![0.0; d_model * d_model];
        for i in 0..d_model {
            eye[i * d_model + i] = 1.0;
        }
        let w_q = Tensor::param(eye, &[d_model, d_model]).expect("identity shape");
        PromptBank {
            d_model,
            p_prompts: BTreeMap::new(),
            s_prompt,
            s_snapshot: None,
            heads: BTreeMap::new(),
            w1: BTreeMap::new(),
            w_q,
            label_sets: BTreeMap::new(),
        }
    }

    pub fn d_model(&self) -> usize {
        self.d_model
    }

    pub fn s_prompt(&self) -> &Tensor {
        &self.s_prompt
    }

    pub fn s_snapshot(&self) -> Option<&Tensor> {
        self.s_snapshot.as_ref()
    }

    pub fn w_q(&self) -> &Tensor {
        &self.w_q
    }

    pub fn p_prompt(&self, task_id: usize) -> Result<&Tensor> {
        self.p_prompts
            .get(&task_id)
            .ok_or(Error::MissingPrompt(task_id))
    }

    pub fn head(&self, task_id: usize) -> Result<&ClassifierHead> {
        self.heads.get(&task_id).ok_or(Error::UnknownTask(task_id))
    }

    pub fn w1(&self, task_id: usize) -> Result<&Tensor> {
        self.w1.get(&task_id).ok_or(Error::UnknownTask(task_id))
    }

    pub fn labels(&self, task_id: usize) -> Option<&[String]> {
        self.label_sets.get(&task_id).map(|v| v.as_slice())
    }

    pub fn task_ids(&self) -> Vec<usize> {
        self.heads.keys().copied().collect()
    }

    /// New trainable P-Prompt for a task, rows copied from uniformly sampled
    /// token-embedding rows.
    pub fn new_p_prompt(
        &mut self,
        task_id: usize,
        length: usize,
        weights: &EncoderWeights,
        seed: u64,
    ) -> Result<Tensor> {
        if self.p_prompts.contains_key(&task_id) {
            return Err(Error::DuplicateTask(task_id));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prompt = sample_embedding_rows(weights, length, &mut rng);
        prompt.set_requires_grad(true);
        self.p_prompts.insert(task_id, prompt.clone());
        Ok(prompt)
    }

    /// New trainable classifier head for a task along with its label set.
    pub fn new_head(
        &mut self,
        task_id: usize,
        labels: &[String],
        seed: u64,
    ) -> Result<ClassifierHead> {
        if self.heads.contains_key(&task_id) {
            return Err(Error::DuplicateTask(task_id));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let head = ClassifierHead::new(task_id, labels.len(), self.d_model, &mut rng);
        self.heads.insert(task_id, head.clone());
        self.label_sets.insert(task_id, labels.to_vec());
        Ok(head)
    }

    /// New trainable coupling matrix W1 for the task's p-info loss,
    /// shaped [head parameter count × prompt parameter count]. Starts at
    /// zero: the bilinear term is unbounded below, and a zero start keeps it
    /// quiet until the task loss has taken hold (the best-validation restore
    /// discards any late runaway).
    pub fn new_w1(&mut self, task_id: usize, d_h: usize, d_p: usize, _seed: u64) -> Result<Tensor> {
        if self.w1.contains_key(&task_id) {
            return Err(Error::DuplicateTask(task_id));
        }
        let w1 = Tensor::zeros(&[d_h, d_p]);
        w1.set_requires_grad(true);
        self.w1.insert(task_id, w1.clone());
        Ok(w1)
    }

    /// Freeze the S-Prompt as the retention target for the next task.
    /// Called once per task boundary, after the best-validation restore.
    pub fn snapshot_s_prompt(&mut self) {
        self.s_snapshot = Some(self.s_prompt.detached_copy());
    }

    /// Freeze a completed task's P-Prompt, head, and W1.
    pub fn freeze_task_artifacts(&mut self, task_id: usize) -> Result<()> {
        let head = self.heads.get(&task_id).ok_or(Error::UnknownTask(task_id))?;
        head.set_trainable(false);
        if let Some(p) = self.p_prompts.get(&task_id) {
            p.set_requires_grad(false);
        }
        if let Some(w1) = self.w1.get(&task_id) {
            w1.set_requires_grad(false);
        }
        Ok(())
    }

    /// Growing prompt list [P_k, ..., P_1] for the progressive baseline.
    pub fn progprompt_concat(&self, k: usize) -> Result<Tensor> {
        let mut parts = Vec::with_capacity(k);
        for task in (1..=k).rev() {
            parts.push(
                self.p_prompts
                    .get(&task)
                    .ok_or(Error::MissingPrompt(task))?,
            );
        }
        if parts.len() == 1 {
            return Ok(parts[0].clone());
        }
        ops::concat_rows(&parts)
    }

    /// Everything the checkpoint stores, with stable names.
    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (id, p) in &self.p_prompts {
            out.push((format!("p_prompt.{id}"), p.clone()));
        }
        out.push(("s_prompt".to_string(), self.s_prompt.clone()));
        if let Some(s) = &self.s_snapshot {
            out.push(("s_snapshot".to_string(), s.clone()));
        }
        for (id, head) in &self.heads {
            out.push((format!("head.{id}.weight"), head.weight.clone()));
            out.push((format!("head.{id}.bias"), head.bias.clone()));
        }
        for (id, w1) in &self.w1 {
            out.push((format!("w1.{id}"), w1.clone()));
        }
        out.push(("w_q".to_string(), self.w_q.clone()));
        out
    }

    pub fn label_sets(&self) -> &BTreeMap<usize, Vec<String>> {
        &self.label_sets
    }

    /// Rebuild a bank from checkpoint tensors. Trainability flags are all
    /// cleared; the caller decides what trains next.
    pub fn from_named_tensors(
        d_model: usize,
        tensors: &BTreeMap<String, Tensor>,
        label_sets: BTreeMap<usize, Vec<String>>,
    ) -> Result<PromptBank> {
        let take = |name: &str| -> Result<Tensor> {
            tensors
                .get(name)
                .cloned()
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name:?}")))
        };
        let s_prompt = take("s_prompt")?;
        let w_q = take("w_q")?;
        let s_snapshot = tensors.get("s_snapshot").cloned();
        let mut bank = PromptBank {
            d_model,
            p_prompts: BTreeMap::new(),
            s_prompt,
            s_snapshot,
            heads: BTreeMap::new(),
            w1: BTreeMap::new(),
            w_q,
            label_sets,
        };
        for (name, tensor) in tensors {
            if let Some(id) = name.strip_prefix("p_prompt.") {
                let id: usize = id
                    .parse()
                    .map_err(|_| Error::Checkpoint(format!("bad tensor name {name:?}")))?;
                bank.p_prompts.insert(id, tensor.clone());
            } else if let Some(rest) = name.strip_prefix("head.") {
                if let Some(id) = rest.strip_suffix(".weight") {
                    let id: usize = id
                        .parse()
                        .map_err(|_| Error::Checkpoint(format!("bad tensor name {name:?}")))?;
                    let weight = tensor.clone();
                    let bias = take(&format!("head.{id}.bias"))?;
                    bank.heads.insert(
                        id,
                        ClassifierHead {
                            task_id: id,
                            weight,
                            bias,
                        },
                    );
                }
            } else if let Some(id) = name.strip_prefix("w1.") {
                let id: usize = id
                    .parse()
                    .map_err(|_| Error::Checkpoint(format!("bad tensor name {name:?}")))?;
                bank.w1.insert(id, tensor.clone());
            }
        }
        Ok(bank)
    }
}

fn sample_embedding_rows<R: Rng>(weights: &EncoderWeights, n: usize, rng: &mut R) -> Tensor {
    let d = weights.config.d_model;
    let vocab = weights.config.vocab_size;
    let mut values = Vec::with_capacity(n * d);
    weights.token_emb.with_values(|table| {
        for _ in 0..n {
            let row = rng.gen_range(0..vocab);
            values.extend_from_slice(&table[row * d..(row + 1) * d]);
        }
    });
    Tensor::from_vec(values, &[n, d]).expect("sampled rows shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;

    fn setup(seed: u64) -> (EncoderWeights, PromptBank) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = EncoderWeights::init(&EncoderConfig::tiny(), &mut rng).unwrap();
        let bank = PromptBank::new(&weights, 3, seed);
        (weights, bank)
    }

    #[test]
    fn p_prompt_shape_and_determinism() {
        let (weights, mut bank) = setup(1);
        let p = bank.new_p_prompt(1, 35, &weights, 42).unwrap();
        assert_eq!(p.shape(), vec![35, 16]);

        let (weights2, mut bank2) = setup(1);
        let p2 = bank2.new_p_prompt(1, 35, &weights2, 42).unwrap();
        assert!(p.bits_eq(&p2));
    }

    #[test]
    fn p_prompt_rows_come_from_embedding_table() {
        let (weights, mut bank) = setup(2);
        let p = bank.new_p_prompt(1, 8, &weights, 7).unwrap();
        let d = 16;
        let table = weights.token_emb.to_vec();
        let rows = p.to_vec();
        for r in 0..8 {
            let row = &rows[r * d..(r + 1) * d];
            let found = (0..weights.config.vocab_size)
                .any(|t| table[t * d..(t + 1) * d] == *row);
            assert!(found, "prompt row {r} not found in embedding table");
        }
    }

    #[test]
    fn duplicate_task_is_rejected() {
        let (weights, mut bank) = setup(3);
        bank.new_p_prompt(1, 4, &weights, 0).unwrap();
        assert!(matches!(
            bank.new_p_prompt(1, 4, &weights, 0),
            Err(Error::DuplicateTask(1))
        ));
    }

    #[test]
    fn snapshot_copies_and_detaches() {
        let (_, mut bank) = setup(4);
        let before = bank.s_prompt().to_vec();
        bank.snapshot_s_prompt();
        let snap = bank.s_snapshot().unwrap().clone();
        assert_eq!(snap.to_vec(), before);
        assert!(!snap.requires_grad());

        // Drift the live S-Prompt; the snapshot must not move.
        let drifted: Vec<f64> = before.iter().map(|v| v + 1.0).collect();
        bank.s_prompt().set_values(&drifted);
        assert_eq!(snap.to_vec(), before);
        assert_eq!(bank.s_prompt().to_vec(), drifted);
    }

    #[test]
    fn first_task_has_no_snapshot() {
        let (_, bank) = setup(5);
        assert!(bank.s_snapshot().is_none());
    }

    #[test]
    fn freeze_marks_all_task_artifacts() {
        let (weights, mut bank) = setup(6);
        bank.new_p_prompt(1, 4, &weights, 0).unwrap();
        bank.new_head(1, &["a".into(), "b".into()], 1).unwrap();
        bank.new_w1(1, 34, 64, 2).unwrap();
        bank.freeze_task_artifacts(1).unwrap();
        assert!(!bank.p_prompt(1).unwrap().requires_grad());
        assert!(!bank.head(1).unwrap().weight.requires_grad());
        assert!(!bank.head(1).unwrap().bias.requires_grad());
        assert!(!bank.w1(1).unwrap().requires_grad());

        assert!(matches!(
            bank.freeze_task_artifacts(9),
            Err(Error::UnknownTask(9))
        ));
    }

    #[test]
    fn progprompt_concat_orders_and_grows() {
        let (weights, mut bank) = setup(7);
        for task in 1..=3 {
            bank.new_p_prompt(task, 35, &weights, task as u64).unwrap();
        }
        let one = bank.progprompt_concat(1).unwrap();
        assert_eq!(one.rows(), 35);
        assert!(one.same_storage(bank.p_prompt(1).unwrap()));

        let three = bank.progprompt_concat(3).unwrap();
        assert_eq!(three.rows(), 105);
        // first block is P_3
        let p3 = bank.p_prompt(3).unwrap().to_vec();
        assert_eq!(&three.to_vec()[..p3.len()], &p3[..]);

        assert!(matches!(
            bank.progprompt_concat(4),
            Err(Error::MissingPrompt(4))
        ));
    }

    #[test]
    fn exactly_one_s_prompt() {
        let (weights, mut bank) = setup(8);
        let s = bank.s_prompt().clone();
        bank.new_p_prompt(1, 4, &weights, 0).unwrap();
        bank.new_p_prompt(2, 4, &weights, 1).unwrap();
        assert!(s.same_storage(bank.s_prompt()));
    }
}
