//! Continual text classification with complementary prompts on a small
//! frozen transformer encoder.
//!
//! The library trains a sequence of classification tasks without replaying
//! earlier data. Each task gets a private P-Prompt and classifier head,
//! frozen at the task boundary; a single shared S-Prompt carries
//! task-invariant knowledge across the whole sequence. Two auxiliary losses
//! shape the prompts: a bilinear coupling between the P-Prompt and its
//! classifier, and a stop-gradient cosine alignment between representations
//! built with the current S-Prompt and its previous-task snapshot. Baseline
//! modes (full finetuning, a single shared prompt, per-task prompts, and a
//! growing progressive prompt list) share the same driver for comparison.
//!
//! Everything runs at desk scale on 64-bit floats over a hand-rolled
//! reverse-mode tape, so gradients are verifiable against central finite
//! differences and runs are bit-reproducible from `(config, seed)`.
//!
//! Start with the runnable examples:
//!
//! ```text
//! cargo run --release --example train_two_tasks
//! cargo run --release --example forgetting_benchmark
//! cargo run --release --example gradcheck_suite
//! cargo run --release --example ablation_table
//! cargo run --release --example pretrain_backbone
//! cargo run --release --example generate_suites
//! cargo run --release --example report_aggregation
//! ```
//!
//! The same capabilities are exposed by the `infocomp` binary
//! (`run`, `ablate`, `gradcheck`, `report`, `pretrain`, `gen-data`).

pub mod autodiff;
pub mod bench;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod continual;
pub mod data;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod gradsuite;
pub mod objectives;
pub mod prompts;
pub mod report;
pub mod runlog;

pub use config::TrainConfig;
pub use error::{Error, Result};
pub use objectives::Mode;
