//! Task data: tokenization, synthetic suite generation, JSONL ingestion,
//! and split management.

mod jsonl;
mod synthetic;
mod tokenize;

pub use jsonl::{load_jsonl_task, load_manifest, write_jsonl_task, write_manifest, SequenceManifest};
pub use synthetic::{
    frequency_oracle_accuracy, gen_pretrain_corpus, gen_pretrain_corpus_texts, gen_suite,
    gen_synthetic_suite, SuiteKind, SynthConfig, SyntheticSuite,
};
pub use tokenize::{fnv1a64, tokenize_hash};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One classified text example. The raw text is kept so tasks can be
/// exported and re-tokenized losslessly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub text: String,
    pub token_ids: Vec<usize>,
    pub label: usize,
}

/// Where a task's data came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Synthetic,
    File,
}

/// One classification task with its splits and ordered label set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: usize,
    pub name: String,
    pub labels: Vec<String>,
    pub train: Vec<Example>,
    pub val: Vec<Example>,
    pub test: Vec<Example>,
    pub provenance: Provenance,
}

impl TaskSpec {
    pub fn n_classes(&self) -> usize {
        self.labels.len()
    }
}

/// An ordered task list with an order identifier.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskSequence {
    pub order_id: String,
    pub tasks: Vec<TaskSpec>,
}

impl TaskSequence {
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for task in &self.tasks {
            if !seen.insert(task.task_id) {
                return Err(Error::DuplicateTask(task.task_id));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }
}

/// Move `per_class` seeded, class-stratified samples from train into val.
///
/// Desk-scale rule: the effective count is min(per_class, smallest class
/// count / 10), applied uniformly so val stays class-balanced.
pub fn split_validation(spec: &TaskSpec, per_class: usize, seed: u64) -> Result<TaskSpec> {
    if per_class == 0 {
        let mut out = spec.clone();
        out.val.clear();
        return Ok(out);
    }
    let n_classes = spec.labels.len();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, ex) in spec.train.iter().enumerate() {
        by_class[ex.label].push(i);
    }
    let min_count = by_class.iter().map(Vec::len).min().unwrap_or(0);
    for (label, members) in by_class.iter().enumerate() {
        if members.is_empty() {
            return Err(Error::ClassTooSmall {
                label: spec.labels[label].clone(),
                have: 0,
                need: 1,
            });
        }
    }
    let effective = per_class.min(min_count / 10);
    for (label, members) in by_class.iter().enumerate() {
        if members.len() <= effective {
            return Err(Error::ClassTooSmall {
                label: spec.labels[label].clone(),
                have: members.len(),
                need: effective,
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = std::collections::BTreeSet::new();
    for members in &by_class {
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        for &idx in shuffled.iter().take(effective) {
            chosen.insert(idx);
        }
    }

    let mut out = spec.clone();
    out.train.clear();
    out.val.clear();
    for (i, ex) in spec.train.iter().enumerate() {
        if chosen.contains(&i) {
            out.val.push(ex.clone());
        } else {
            out.train.push(ex.clone());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_task(per_class: usize) -> TaskSpec {
        let mut train = Vec::new();
        for c in 0..2 {
            for i in 0..per_class {
                train.push(Example {
                    text: format!("c{c} e{i}"),
                    token_ids: vec![c + 1, i + 1],
                    label: c,
                });
            }
        }
        TaskSpec {
            task_id: 1,
            name: "toy".into(),
            labels: vec!["a".into(), "b".into()],
            train,
            val: Vec::new(),
            test: Vec::new(),
            provenance: Provenance::Synthetic,
        }
    }

    #[test]
    fn split_zero_leaves_train_untouched() {
        let spec = toy_task(20);
        let out = split_validation(&spec, 0, 1).unwrap();
        assert!(out.val.is_empty());
        assert_eq!(out.train.len(), 40);
    }

    #[test]
    fn split_counts_match_arithmetic() {
        let spec = toy_task(100);
        let out = split_validation(&spec, 10, 1).unwrap();
        assert_eq!(out.val.len(), 20);
        assert_eq!(out.train.len(), 180);
        // class balance in val
        let c0 = out.val.iter().filter(|e| e.label == 0).count();
        assert_eq!(c0, 10);
    }

    #[test]
    fn split_is_seed_deterministic() {
        let spec = toy_task(50);
        let a = split_validation(&spec, 5, 9).unwrap();
        let b = split_validation(&spec, 5, 9).unwrap();
        assert_eq!(a.val, b.val);
        assert_eq!(a.train, b.train);
        let c = split_validation(&spec, 5, 10).unwrap();
        assert!(a.val != c.val, "different seed should pick different members");
    }

    #[test]
    fn split_disjointness() {
        let spec = toy_task(60);
        let out = split_validation(&spec, 6, 3).unwrap();
        for v in &out.val {
            assert!(!out.train.contains(v));
        }
        assert_eq!(out.train.len() + out.val.len(), spec.train.len());
    }

    #[test]
    fn empty_class_is_an_error() {
        let mut spec = toy_task(20);
        spec.labels.push("ghost".into());
        let err = split_validation(&spec, 2, 0).unwrap_err();
        assert!(err.to_string().contains("ghost"));
    }

    #[test]
    fn duplicate_task_ids_rejected() {
        let t = toy_task(10);
        let mut u = toy_task(10);
        u.name = "other".into();
        let seq = TaskSequence {
            order_id: "o".into(),
            tasks: vec![t, u],
        };
        assert!(matches!(seq.validate(), Err(Error::DuplicateTask(1))));
    }
}
