//! Deterministic synthetic benchmark suites.
//!
//! Each task is keyword-signal classification: every class owns a small set
//! of signal words that are embedded at random positions inside filler text.
//! Word pools are rejection-sampled so every chosen word hashes to a distinct
//! token id (no aliasing between signals and filler). Three suite kinds:
//!
//! - `Disjoint`: every task has fresh signal words, no overlap across tasks.
//! - `Conflict`: every task's classes mix signals reused from one global
//!   pool — with the class assignment rotated per task, so a shared
//!   parameter trained on task k directly contradicts task k-1 — with
//!   per-task fresh signals that put capacity pressure on anything shared.
//! - `Transfer`: all tasks share the signal pool with a consistent
//!   assignment, and tasks after the first are few-shot, so carried-over
//!   shared knowledge has something to pay for.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tokenize::tokenize_hash;
use super::{Example, Provenance, TaskSequence, TaskSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteKind {
    Disjoint,
    Conflict,
    Transfer,
}

impl std::fmt::Display for SuiteKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SuiteKind::Disjoint => write!(f, "disjoint"),
            SuiteKind::Conflict => write!(f, "conflict"),
            SuiteKind::Transfer => write!(f, "transfer"),
        }
    }
}

/// Generation parameters. The defaults are the canonical 5-task benchmark
/// used by the desk-scale experiments.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub kind: SuiteKind,
    pub n_tasks: usize,
    pub classes_per_task: usize,
    pub train_per_class: usize,
    /// Training samples per class for tasks after the first (Transfer
    /// suites are few-shot past task 1); None means same as train_per_class.
    pub later_train_per_class: Option<usize>,
    pub test_per_class: usize,
    /// Words per generated text.
    pub text_len: usize,
    pub signals_per_class: usize,
    /// In Conflict suites, how many of `signals_per_class` come from the
    /// shared label-rotated pool; the rest are fresh per task.
    pub reused_signals_per_class: usize,
    pub signal_min_occ: usize,
    pub signal_max_occ: usize,
    pub filler_words: usize,
    /// Tokenizer id space used for collision-free word selection.
    pub vocab_size: usize,
    pub max_text_len: usize,
    /// Word count of pretraining-corpus documents; roughly the full
    /// prompts+text sequence length so warmup trains every position the
    /// continual run will use.
    pub pretrain_text_len: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            kind: SuiteKind::Conflict,
            n_tasks: 5,
            classes_per_task: 2,
            train_per_class: 200,
            later_train_per_class: None,
            test_per_class: 50,
            text_len: 6,
            signals_per_class: 4,
            reused_signals_per_class: 2,
            signal_min_occ: 2,
            signal_max_occ: 3,
            filler_words: 150,
            vocab_size: 512,
            max_text_len: 64,
            pretrain_text_len: 48,
            seed: 0,
        }
    }
}

/// A generated sequence plus the signal metadata the oracle checks need.
#[derive(Debug, Clone)]
pub struct SyntheticSuite {
    pub sequence: TaskSequence,
    /// signal_words[task_index][class] -> the words that mark that class.
    pub signal_words: Vec<Vec<Vec<String>>>,
    /// The same signals as token ids.
    pub signal_ids: Vec<Vec<Vec<usize>>>,
    /// All words the generator may emit, for pretraining corpora.
    pub filler_pool: Vec<String>,
    pub config: SynthConfig,
}

/// Pick `n` words with pairwise-distinct token ids, also distinct from
/// everything in `taken`.
fn pick_words(
    prefix: &str,
    n: usize,
    vocab_size: usize,
    taken: &mut std::collections::BTreeSet<usize>,
) -> Vec<String> {
    let mut words = Vec::with_capacity(n);
    let mut counter = 0usize;
    while words.len() < n {
        let word = format!("{prefix}{counter}");
        counter += 1;
        let id = tokenize_hash(&word, vocab_size, 1)[0];
        if taken.insert(id) {
            words.push(word);
        }
        assert!(
            counter < 100 * n + 10_000,
            "vocab_size {vocab_size} too small for the requested word pools"
        );
    }
    words
}

/// Spec-level entry point: conflict toggles between the disjoint-signal and
/// label-permuted reuse constructions.
pub fn gen_synthetic_suite(
    n_tasks: usize,
    classes_per_task: usize,
    samples_per_class: usize,
    seed: u64,
    conflict: bool,
) -> TaskSequence {
    let config = SynthConfig {
        kind: if conflict {
            SuiteKind::Conflict
        } else {
            SuiteKind::Disjoint
        },
        n_tasks,
        classes_per_task,
        train_per_class: samples_per_class,
        seed,
        ..Default::default()
    };
    gen_suite(&config).sequence
}

/// Full generator.
pub fn gen_suite(config: &SynthConfig) -> SyntheticSuite {
    assert!(config.n_tasks >= 1, "need at least one task");
    assert!(config.classes_per_task >= 2, "need at least two classes");
    assert!(config.signal_min_occ >= 1 && config.signal_max_occ >= config.signal_min_occ);
    assert!(config.text_len > config.signal_max_occ);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut taken = std::collections::BTreeSet::new();

    // Word pools first so they never depend on sample counts.
    let filler_pool = pick_words("w", config.filler_words, config.vocab_size, &mut taken);
    let reused_per_class = match config.kind {
        SuiteKind::Disjoint => 0,
        SuiteKind::Conflict => config.reused_signals_per_class.min(config.signals_per_class),
        SuiteKind::Transfer => config.signals_per_class,
    };
    let fresh_per_class = config.signals_per_class - reused_per_class;
    let mut shared_sets: Vec<Vec<String>> = Vec::with_capacity(config.classes_per_task);
    for s in 0..config.classes_per_task {
        shared_sets.push(pick_words(
            &format!("sig{s}x"),
            reused_per_class,
            config.vocab_size,
            &mut taken,
        ));
    }

    let mut tasks = Vec::with_capacity(config.n_tasks);
    let mut signal_words = Vec::with_capacity(config.n_tasks);
    let mut signal_ids = Vec::with_capacity(config.n_tasks);
    for t in 0..config.n_tasks {
        let per_class_sets: Vec<Vec<String>> = (0..config.classes_per_task)
            .map(|c| {
                // the Conflict pool rotates its class assignment one step
                // per task; fresh words are unique to this (task, class)
                let shared_index = match config.kind {
                    SuiteKind::Conflict => (c + t) % config.classes_per_task,
                    _ => c,
                };
                let mut set = shared_sets[shared_index].clone();
                set.extend(pick_words(
                    &format!("fs{t}x{c}x"),
                    fresh_per_class,
                    config.vocab_size,
                    &mut taken,
                ));
                set
            })
            .collect();

        let train_n = if t == 0 {
            config.train_per_class
        } else {
            config.later_train_per_class.unwrap_or(config.train_per_class)
        };
        let mut train = Vec::new();
        let mut test = Vec::new();
        for c in 0..config.classes_per_task {
            for _ in 0..train_n {
                train.push(gen_example(config, &per_class_sets[c], &filler_pool, c, &mut rng));
            }
            for _ in 0..config.test_per_class {
                test.push(gen_example(config, &per_class_sets[c], &filler_pool, c, &mut rng));
            }
        }
        let labels = (0..config.classes_per_task)
            .map(|c| format!("class{c}"))
            .collect();
        tasks.push(TaskSpec {
            task_id: t + 1,
            name: format!("{}-t{}", config.kind, t + 1),
            labels,
            train,
            val: Vec::new(),
            test,
            provenance: Provenance::Synthetic,
        });
        signal_ids.push(
            per_class_sets
                .iter()
                .map(|set| {
                    set.iter()
                        .map(|w| tokenize_hash(w, config.vocab_size, 1)[0])
                        .collect()
                })
                .collect(),
        );
        signal_words.push(per_class_sets);
    }

    SyntheticSuite {
        sequence: TaskSequence {
            order_id: format!("{}{}", config.kind, config.n_tasks),
            tasks,
        },
        signal_words,
        signal_ids,
        filler_pool,
        config: config.clone(),
    }
}

fn gen_example(
    config: &SynthConfig,
    signals: &[String],
    filler: &[String],
    label: usize,
    rng: &mut ChaCha8Rng,
) -> Example {
    let occ = rng.gen_range(config.signal_min_occ..=config.signal_max_occ);
    let mut words: Vec<&str> = (0..config.text_len)
        .map(|_| filler[rng.gen_range(0..filler.len())].as_str())
        .collect();
    // distinct positions for the signal occurrences
    let mut positions = std::collections::BTreeSet::new();
    while positions.len() < occ {
        positions.insert(rng.gen_range(0..config.text_len));
    }
    for &pos in &positions {
        words[pos] = signals[rng.gen_range(0..signals.len())].as_str();
    }
    let text = words.join(" ");
    let token_ids = tokenize_hash(&text, config.vocab_size, config.max_text_len);
    Example {
        text,
        token_ids,
        label,
    }
}

/// Unlabeled pretraining texts drawn from the same word distribution as the
/// suite's tasks (fillers plus the whole signal pool, label-free).
pub fn gen_pretrain_corpus_texts(suite: &SyntheticSuite, n_docs: usize, seed: u64) -> Vec<String> {
    let config = &suite.config;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut all_signals = Vec::new();
    for task in &suite.signal_words {
        for set in task {
            for w in set {
                if !all_signals.contains(w) {
                    all_signals.push(w.clone());
                }
            }
        }
    }
    let signal_rate = (config.signal_min_occ + config.signal_max_occ) as f64
        / (2.0 * config.text_len as f64);
    (0..n_docs)
        .map(|_| {
            let words: Vec<&str> = (0..config.pretrain_text_len)
                .map(|_| {
                    if !all_signals.is_empty() && rng.gen::<f64>() < signal_rate {
                        all_signals[rng.gen_range(0..all_signals.len())].as_str()
                    } else {
                        suite.filler_pool[rng.gen_range(0..suite.filler_pool.len())].as_str()
                    }
                })
                .collect();
            words.join(" ")
        })
        .collect()
}

/// The pretraining corpus as token id sequences.
pub fn gen_pretrain_corpus(suite: &SyntheticSuite, n_docs: usize, seed: u64) -> Vec<Vec<usize>> {
    let cap = suite.config.max_text_len.max(suite.config.pretrain_text_len);
    gen_pretrain_corpus_texts(suite, n_docs, seed)
        .iter()
        .map(|text| tokenize_hash(text, suite.config.vocab_size, cap))
        .collect()
}

/// Count each class's signal tokens and pick the max (ties to the lowest
/// class). This is the independent learnability oracle for generated tasks.
pub fn frequency_oracle_accuracy(task: &TaskSpec, signal_ids: &[Vec<usize>]) -> f64 {
    let mut correct = 0usize;
    for ex in &task.test {
        let mut best_class = 0;
        let mut best_count = -1i64;
        for (c, ids) in signal_ids.iter().enumerate() {
            let count = ex
                .token_ids
                .iter()
                .filter(|t| ids.contains(t))
                .count() as i64;
            if count > best_count {
                best_count = count;
                best_class = c;
            }
        }
        if best_class == ex.label {
            correct += 1;
        }
    }
    correct as f64 / task.test.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(kind: SuiteKind, seed: u64) -> SynthConfig {
        SynthConfig {
            kind,
            n_tasks: 3,
            train_per_class: 20,
            test_per_class: 20,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn generation_is_seed_deterministic() {
        let a = gen_suite(&small_config(SuiteKind::Conflict, 5));
        let b = gen_suite(&small_config(SuiteKind::Conflict, 5));
        let ja = serde_json::to_string(&a.sequence).unwrap();
        let jb = serde_json::to_string(&b.sequence).unwrap();
        assert_eq!(ja, jb);
    }

    #[test]
    fn disjoint_suites_have_disjoint_signal_vocabularies() {
        let suite = gen_suite(&small_config(SuiteKind::Disjoint, 3));
        let sets: Vec<std::collections::BTreeSet<&String>> = suite
            .signal_words
            .iter()
            .map(|task| task.iter().flatten().collect())
            .collect();
        for i in 0..sets.len() {
            for j in i + 1..sets.len() {
                assert!(sets[i].is_disjoint(&sets[j]), "tasks {i} and {j} overlap");
            }
        }
    }

    #[test]
    fn conflict_rotates_reused_signals_and_keeps_fresh_ones_apart() {
        let config = small_config(SuiteKind::Conflict, 4);
        let suite = gen_suite(&config);
        let reused = config.reused_signals_per_class;
        // task 1 class 0's reused signals become task 2 class 1's
        assert_eq!(
            suite.signal_words[0][0][..reused],
            suite.signal_words[1][1][..reused]
        );
        assert_eq!(
            suite.signal_words[0][1][..reused],
            suite.signal_words[1][0][..reused]
        );
        // fresh signals never repeat across tasks
        let fresh_a: Vec<&String> = suite.signal_words[0][0][reused..].iter().collect();
        let fresh_b: Vec<&String> = suite.signal_words[1][1][reused..].iter().collect();
        assert!(!fresh_a.is_empty());
        for w in &fresh_a {
            assert!(!fresh_b.contains(w));
        }
    }

    #[test]
    fn signal_and_filler_ids_never_collide() {
        let suite = gen_suite(&small_config(SuiteKind::Conflict, 9));
        let mut ids = std::collections::BTreeSet::new();
        for w in &suite.filler_pool {
            assert!(ids.insert(tokenize_hash(w, suite.config.vocab_size, 1)[0]));
        }
        for set in suite.signal_words[0].iter() {
            for w in set {
                assert!(ids.insert(tokenize_hash(w, suite.config.vocab_size, 1)[0]));
            }
        }
    }

    #[test]
    fn oracle_solves_every_generated_task() {
        for kind in [SuiteKind::Disjoint, SuiteKind::Conflict, SuiteKind::Transfer] {
            let suite = gen_suite(&small_config(kind, 11));
            for (t, task) in suite.sequence.tasks.iter().enumerate() {
                let acc = frequency_oracle_accuracy(task, &suite.signal_ids[t]);
                assert!(acc >= 0.95, "{kind} task {t} oracle accuracy {acc}");
            }
        }
    }

    #[test]
    fn transfer_suite_is_few_shot_after_first_task() {
        let config = SynthConfig {
            later_train_per_class: Some(5),
            ..small_config(SuiteKind::Transfer, 2)
        };
        let suite = gen_suite(&config);
        assert_eq!(suite.sequence.tasks[0].train.len(), 40);
        assert_eq!(suite.sequence.tasks[1].train.len(), 10);
        // consistent assignment across tasks
        assert_eq!(suite.signal_words[0], suite.signal_words[1]);
    }

    #[test]
    fn pretrain_corpus_is_deterministic_and_in_range() {
        let suite = gen_suite(&small_config(SuiteKind::Conflict, 13));
        let a = gen_pretrain_corpus(&suite, 10, 1);
        let b = gen_pretrain_corpus(&suite, 10, 1);
        assert_eq!(a, b);
        assert!(a.iter().all(|doc| doc.iter().all(|&id| id >= 1 && id < 512)));
    }
}
