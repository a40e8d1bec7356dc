//! Task-sequential training driver.
//!
//! Per task: minibatch Adam on the mode's objective with early stopping on
//! validation accuracy, then the fixed boundary protocol — restore the best
//! validation checkpoint, freeze the task's artifacts, snapshot the S-Prompt,
//! evaluate every seen task. Training for task k never reads data from any
//! other task; the access log proves it.

mod adam;

pub use adam::AdamState;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{backward_all, clear_graph, no_grad, ops, Tensor};
use crate::config::TrainConfig;
use crate::data::{fnv1a64, split_validation, Example, TaskSequence, TaskSpec};
use crate::encoder::{self, EncoderWeights, CLS_TOKEN_ID};
use crate::error::{Error, Result};
use crate::objectives::{self, LossBreakdown, Mode};
use crate::prompts::PromptBank;
use crate::report::{RunReport, TaskSummary, REPORT_SCHEMA_VERSION};
use crate::runlog::{AccessEvent, Phase, RunLog};

/// Derive an independent RNG stream from the run seed and a purpose tag.
pub fn sub_seed(seed: u64, tag: &str) -> u64 {
    fnv1a64(format!("{seed}:{tag}").as_bytes())
}

/// Learning-rate scale for the bilinear coupling matrix. The coupling term
/// is unbounded below, and Adam moves every W1 entry at the full rate toward
/// alignment no matter how small lambda1 is; at full rate the term overtakes
/// the task gradient on the classifier before the task fits. The reduced
/// rate keeps that crossover outside the early-stopping window.
const W1_LR_SCALE: f64 = 0.01;

/// Outcome of one task's optimization.
#[derive(Debug, Clone)]
pub struct TaskResult {
    pub task_id: usize,
    pub best_val_accuracy: f64,
    pub epochs_used: usize,
    pub final_breakdown: LossBreakdown,
}

/// Warmup pretraining statistics on the held-out corpus slice.
#[derive(Debug, Clone)]
pub struct WarmupStats {
    pub steps_run: usize,
    pub initial_holdout_loss: f64,
    pub final_holdout_loss: f64,
}

/// One live continual-learning run: model state, data, bookkeeping.
pub struct RunState {
    pub config: TrainConfig,
    pub weights: EncoderWeights,
    pub bank: PromptBank,
    pub log: RunLog,
    tasks: Vec<TaskSpec>,
    order_id: String,
    /// accuracy[k-1][j-1] = test accuracy on task j measured after task k.
    pub accuracy: Vec<Vec<f64>>,
    pub task_results: Vec<TaskResult>,
    completed: usize,
}

impl RunState {
    /// Initialize weights and the prompt bank, run warmup pretraining when
    /// configured, apply validation withholding, and freeze the backbone
    /// (finetune mode keeps it trainable).
    pub fn new(
        sequence: &TaskSequence,
        config: &TrainConfig,
        warmup_corpus: Option<&[Vec<usize>]>,
    ) -> Result<RunState> {
        Self::new_with_log(sequence, config, warmup_corpus, RunLog::in_memory())
    }

    /// Build a run around an already-initialized (typically warmed and
    /// frozen) backbone, skipping init and warmup. Used where many runs
    /// share one deterministic warmup result.
    pub fn new_prepared(
        sequence: &TaskSequence,
        config: &TrainConfig,
        weights: EncoderWeights,
        log: RunLog,
    ) -> Result<RunState> {
        config.validate()?;
        sequence.validate()?;
        if sequence.is_empty() {
            return Err(Error::Config("task sequence is empty".into()));
        }
        for (i, task) in sequence.tasks.iter().enumerate() {
            if task.task_id != i + 1 {
                return Err(Error::Config(format!(
                    "task ids must be 1..=n in sequence order, got id {} at position {}",
                    task.task_id,
                    i + 1
                )));
            }
        }
        clear_graph();
        weights.set_trainable(config.mode == Mode::Finetune);
        let bank = PromptBank::new(&weights, config.l_s, sub_seed(config.seed, "s-prompt"));
        let mut tasks = Vec::with_capacity(sequence.len());
        for task in &sequence.tasks {
            if task.val.is_empty() && config.val_per_class > 0 {
                tasks.push(split_validation(
                    task,
                    config.val_per_class,
                    sub_seed(config.seed, &format!("val-split-{}", task.task_id)),
                )?);
            } else {
                tasks.push(task.clone());
            }
        }
        Ok(RunState {
            config: config.clone(),
            weights,
            bank,
            log,
            tasks,
            order_id: sequence.order_id.clone(),
            accuracy: Vec::new(),
            task_results: Vec::new(),
            completed: 0,
        })
    }

    /// Like `new`, with an externally constructed run log (a file sink).
    pub fn new_with_log(
        sequence: &TaskSequence,
        config: &TrainConfig,
        warmup_corpus: Option<&[Vec<usize>]>,
        mut log: RunLog,
    ) -> Result<RunState> {
        config.validate()?;
        let mut init_rng = ChaCha8Rng::seed_from_u64(sub_seed(config.seed, "encoder-init"));
        let weights = EncoderWeights::init(&config.encoder, &mut init_rng)?;
        if config.warmup_steps > 0 {
            let corpus = warmup_corpus.ok_or_else(|| {
                Error::Config("warmup_steps > 0 but no pretraining corpus given".into())
            })?;
            let stats = warmup_pretrain(&weights, corpus, config.warmup_steps, config)?;
            log.event(serde_json::json!({
                "event": "warmup",
                "steps": stats.steps_run,
                "initial_holdout_loss": stats.initial_holdout_loss,
                "final_holdout_loss": stats.final_holdout_loss,
            }));
        }
        Self::new_prepared(sequence, config, weights, log)
    }

    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn task(&self, task_id: usize) -> Result<&TaskSpec> {
        self.tasks
            .iter()
            .find(|t| t.task_id == task_id)
            .ok_or(Error::UnknownTask(task_id))
    }

    fn position(&self, task_id: usize) -> Result<usize> {
        self.tasks
            .iter()
            .position(|t| t.task_id == task_id)
            .ok_or(Error::UnknownTask(task_id))
    }

    /// Train the k-th task (1-based position in the sequence) and run the
    /// boundary protocol. Tasks must be trained in order.
    pub fn run_task(&mut self, k: usize) -> Result<TaskResult> {
        assert_eq!(k, self.completed + 1, "tasks must be trained in order");
        let task_id = self.tasks[k - 1].task_id;
        let task_labels = self.tasks[k - 1].labels.clone();
        let n_train = self.tasks[k - 1].train.len();
        let has_val = !self.tasks[k - 1].val.is_empty();
        if n_train == 0 {
            return Err(Error::EmptySplit {
                task: task_id,
                split: "train",
            });
        }
        let config = self.config.clone();
        let mode = config.mode;
        let flags = config.ablation;
        let seed = config.seed;
        let started = std::time::Instant::now();

        // Fresh per-task artifacts.
        let uses_p = matches!(mode, Mode::PerTaskPrompt | Mode::Progprompt)
            || (mode == Mode::Infocomp && !flags.no_p_prompt);
        if uses_p {
            self.bank.new_p_prompt(
                task_id,
                config.l_p,
                &self.weights,
                sub_seed(seed, &format!("p-prompt-{task_id}")),
            )?;
        }
        let head = self.bank.new_head(
            task_id,
            &task_labels,
            sub_seed(seed, &format!("head-{task_id}")),
        )?;
        let uses_p_info = mode == Mode::Infocomp && !flags.no_p_prompt && !flags.no_p_info;
        if uses_p_info {
            let d_h = head.weight.numel() + head.bias.numel();
            let d_p = config.l_p * self.bank.d_model();
            self.bank.new_w1(
                task_id,
                d_h,
                d_p,
                sub_seed(seed, &format!("w1-{task_id}")),
            )?;
        }

        // Trainability for this task.
        let s_trainable = match mode {
            Mode::SharedPrompt => !(flags.freeze_s_after_first && k > 1),
            Mode::Infocomp => {
                !flags.no_s_prompt && !(flags.freeze_s_after_first && k > 1)
            }
            _ => false,
        };
        self.bank.s_prompt().set_requires_grad(s_trainable);
        let uses_s_info = mode == Mode::Infocomp
            && !flags.no_s_prompt
            && !flags.no_s_info
            && k > 1
            && !(flags.freeze_s_after_first && k > 1);
        self.bank.w_q().set_requires_grad(uses_s_info);

        let mut trainables: Vec<(String, Tensor)> = Vec::new();
        if uses_p {
            trainables.push((
                format!("p_prompt.{task_id}"),
                self.bank.p_prompt(task_id)?.clone(),
            ));
        }
        trainables.push((format!("head.{task_id}.weight"), head.weight.clone()));
        trainables.push((format!("head.{task_id}.bias"), head.bias.clone()));
        if uses_p_info {
            trainables.push((format!("w1.{task_id}"), self.bank.w1(task_id)?.clone()));
        }
        if s_trainable {
            trainables.push(("s_prompt".to_string(), self.bank.s_prompt().clone()));
        }
        if uses_s_info {
            trainables.push(("w_q".to_string(), self.bank.w_q().clone()));
        }
        if mode == Mode::Finetune {
            for (name, tensor) in self.weights.named_tensors() {
                trainables.push((format!("encoder.{name}"), tensor));
            }
        }

        let optimizer_groups: Vec<(String, Tensor, f64)> = trainables
            .iter()
            .map(|(name, tensor)| {
                let scale = if name.starts_with("w1.") { W1_LR_SCALE } else { 1.0 };
                (name.clone(), tensor.clone(), scale)
            })
            .collect();
        let mut optimizer = AdamState::new();
        let mut shuffle_rng =
            ChaCha8Rng::seed_from_u64(sub_seed(seed, &format!("shuffle-{task_id}")));

        let mut best_val = f64::NEG_INFINITY;
        let mut best_snapshot: Vec<Vec<f64>> = Vec::new();
        let mut stale_evals = 0usize;
        let mut epochs_used = 0usize;
        let mut last_breakdown = LossBreakdown {
            task_loss: 0.0,
            p_info: 0.0,
            s_info: 0.0,
            total: 0.0,
            lambda1: config.lambda1,
            lambda2: config.lambda2,
        };

        'epochs: for epoch in 1..=config.max_epochs {
            epochs_used = epoch;
            let mut order: Vec<usize> = (0..n_train).collect();
            order.shuffle(&mut shuffle_rng);
            for (step, chunk) in order.chunks(config.batch_size).enumerate() {
                self.log.record_access(AccessEvent {
                    phase: Phase::Training,
                    current_task: k,
                    accessed_task: task_id,
                    split: "train",
                });
                let batch: Vec<&Example> =
                    chunk.iter().map(|&i| &self.tasks[k - 1].train[i]).collect();
                let mut truncated = 0usize;
                let (total, breakdown) = match mode {
                    Mode::Infocomp => objectives::overall_loss(
                        &batch,
                        task_id,
                        &self.bank,
                        &self.weights,
                        config.lambda1,
                        config.lambda2,
                        &flags,
                        &mut truncated,
                    )?,
                    _ => {
                        let loss = objectives::task_loss(
                            &batch,
                            mode,
                            task_id,
                            &self.bank,
                            &self.weights,
                            &flags,
                            &mut truncated,
                        )?;
                        let value = loss.item();
                        (
                            loss,
                            LossBreakdown {
                                task_loss: value,
                                p_info: 0.0,
                                s_info: 0.0,
                                total: value,
                                lambda1: config.lambda1,
                                lambda2: config.lambda2,
                            },
                        )
                    }
                };
                self.log.truncations += truncated;
                if !breakdown.total.is_finite() {
                    clear_graph();
                    return Err(Error::Diverged {
                        task: task_id,
                        epoch,
                        step,
                    });
                }
                backward_all(&total)?;
                optimizer.adam_step_scaled(&optimizer_groups, config.learning_rate);
                last_breakdown = breakdown;
                if self.log.verbose {
                    let line = serde_json::json!({
                        "event": "step",
                        "task": task_id,
                        "epoch": epoch,
                        "step": step,
                        "loss": last_breakdown,
                    });
                    self.log.event(line);
                }
            }

            if epoch % config.eval_every == 0 {
                let val_acc = if has_val {
                    self.split_accuracy(k, task_id, "val")?
                } else {
                    self.split_accuracy(k, task_id, "train")?
                };
                self.log.event(serde_json::json!({
                    "event": "validation",
                    "task": task_id,
                    "epoch": epoch,
                    "accuracy": val_acc,
                    "loss": last_breakdown,
                }));
                if val_acc > best_val {
                    best_val = val_acc;
                    best_snapshot = trainables.iter().map(|(_, t)| t.to_vec()).collect();
                    stale_evals = 0;
                } else {
                    stale_evals += 1;
                    if stale_evals >= config.patience {
                        break 'epochs;
                    }
                }
            }
        }

        // Boundary protocol, in order: restore best -> freeze -> snapshot.
        if !best_snapshot.is_empty() {
            for ((_, tensor), values) in trainables.iter().zip(&best_snapshot) {
                tensor.set_values(values);
            }
        }
        self.log.event(serde_json::json!({
            "event": "restore_best",
            "task": task_id,
            "val_accuracy": best_val,
        }));

        self.bank.freeze_task_artifacts(task_id)?;
        if flags.freeze_s_after_first && k == 1 {
            self.bank.s_prompt().set_requires_grad(false);
        }
        self.log.event(serde_json::json!({
            "event": "freeze_artifacts",
            "task": task_id,
        }));

        let snapshots_s = matches!(mode, Mode::SharedPrompt | Mode::Infocomp)
            && !(mode == Mode::Infocomp && flags.no_s_prompt);
        if snapshots_s {
            self.bank.snapshot_s_prompt();
            self.log.event(serde_json::json!({
                "event": "snapshot_s_prompt",
                "task": task_id,
            }));
        }

        self.completed = k;
        let result = TaskResult {
            task_id,
            best_val_accuracy: best_val.max(0.0),
            epochs_used,
            final_breakdown: last_breakdown,
        };
        self.log.event(serde_json::json!({
            "event": "task_done",
            "task": task_id,
            "epochs": epochs_used,
            "wall_clock_secs": started.elapsed().as_secs_f64(),
        }));
        self.task_results.push(result.clone());
        Ok(result)
    }

    /// Accuracy of the current model on one split of a task, using the
    /// task's own frozen prompt/head (and the live S-Prompt where the mode
    /// uses one). Runs detached from the tape.
    fn split_accuracy(&mut self, current_k: usize, task_id: usize, split: &'static str) -> Result<f64> {
        let position = self.position(task_id)?;
        self.log.record_access(AccessEvent {
            phase: if split == "train" && current_k == position + 1 {
                Phase::Training
            } else {
                Phase::Evaluation
            },
            current_task: current_k,
            accessed_task: task_id,
            split,
        });
        let task = &self.tasks[position];
        let examples: &[Example] = match split {
            "train" => &task.train,
            "val" => &task.val,
            _ => &task.test,
        };
        if examples.is_empty() {
            return Err(Error::EmptySplit {
                task: task_id,
                split,
            });
        }
        let bank = &self.bank;
        let weights = &self.weights;
        let flags = self.config.ablation;
        let mode = self.config.mode;
        let mut correct = 0usize;
        let mut truncated = 0usize;
        no_grad(|| -> Result<()> {
            let prefix = objectives::prompt_prefix(mode, task_id, bank, &flags)?;
            let head = bank.head(task_id)?;
            for chunk in examples.chunks(64) {
                let refs: Vec<&Example> = chunk.iter().collect();
                let pooled = objectives::encode_batch_pooled(
                    &refs,
                    prefix.as_ref(),
                    weights,
                    &mut truncated,
                )?;
                let logits = encoder::classify(&pooled, head)?;
                let values = logits.to_vec();
                let classes = logits.cols();
                for (row, ex) in values.chunks_exact(classes).zip(chunk) {
                    let mut arg = 0usize;
                    for (i, v) in row.iter().enumerate() {
                        if *v > row[arg] {
                            arg = i;
                        }
                    }
                    if arg == ex.label {
                        correct += 1;
                    }
                }
            }
            Ok(())
        })?;
        self.log.truncations += truncated;
        Ok(correct as f64 / examples.len() as f64)
    }

    /// Test accuracy for every seen task at the current boundary; appends a
    /// row to the accuracy matrix.
    pub fn evaluate_seen(&mut self) -> Result<Vec<f64>> {
        let k = self.completed;
        let mut row = Vec::with_capacity(k);
        for position in 0..k {
            let task_id = self.tasks[position].task_id;
            row.push(self.split_accuracy(k, task_id, "test")?);
        }
        self.log.event(serde_json::json!({
            "event": "evaluate_seen",
            "after_task": k,
            "accuracy": row,
        }));
        self.accuracy.push(row.clone());
        Ok(row)
    }

    /// Assemble the report once every task has been trained and evaluated.
    pub fn report(&self) -> Result<RunReport> {
        let n = self.tasks.len();
        if self.accuracy.len() != n {
            return Err(Error::IncompleteReport(format!(
                "{} boundary evaluations for {n} tasks",
                self.accuracy.len()
            )));
        }
        let final_row = &self.accuracy[n - 1];
        let final_average = final_row.iter().sum::<f64>() / n as f64;
        let taskwise_curve: Vec<f64> = self
            .accuracy
            .iter()
            .map(|row| row.iter().sum::<f64>() / row.len() as f64)
            .collect();
        let forgetting: Vec<f64> = (0..n)
            .map(|j| {
                let peak = self.accuracy[j..]
                    .iter()
                    .map(|row| row[j])
                    .fold(f64::NEG_INFINITY, f64::max);
                peak - final_row[j]
            })
            .collect();
        Ok(RunReport {
            schema_version: REPORT_SCHEMA_VERSION,
            config_hash: self.config.hash(),
            mode: self.config.mode.to_string(),
            seed: self.config.seed,
            order_id: self.order_id.clone(),
            task_names: self.tasks.iter().map(|t| t.name.clone()).collect(),
            n_tasks: n,
            accuracy: self.accuracy.clone(),
            taskwise_curve,
            final_average,
            forgetting,
            task_results: self
                .task_results
                .iter()
                .map(|r| TaskSummary {
                    task_id: r.task_id,
                    best_val_accuracy: r.best_val_accuracy,
                    epochs_used: r.epochs_used,
                    final_loss: r.final_breakdown.clone(),
                })
                .collect(),
        })
    }
}

/// Everything a finished run hands back.
pub struct RunOutcome {
    pub report: RunReport,
    pub state: RunState,
}

/// Drive a full run: every task in order, boundary evaluations, report.
/// `on_boundary` fires after each task's boundary protocol completes
/// (checkpoint writing hooks in here).
pub fn run_sequence_with<F>(
    sequence: &TaskSequence,
    config: &TrainConfig,
    warmup_corpus: Option<&[Vec<usize>]>,
    on_boundary: F,
) -> Result<RunOutcome>
where
    F: FnMut(&RunState, usize) -> Result<()>,
{
    run_sequence_logged(
        sequence,
        config,
        warmup_corpus,
        RunLog::in_memory(),
        on_boundary,
    )
}

/// `run_sequence_with` plus a caller-provided run log sink.
pub fn run_sequence_logged<F>(
    sequence: &TaskSequence,
    config: &TrainConfig,
    warmup_corpus: Option<&[Vec<usize>]>,
    log: RunLog,
    mut on_boundary: F,
) -> Result<RunOutcome>
where
    F: FnMut(&RunState, usize) -> Result<()>,
{
    let mut state = RunState::new_with_log(sequence, config, warmup_corpus, log)?;
    for k in 1..=state.n_tasks() {
        state.run_task(k)?;
        state.evaluate_seen()?;
        on_boundary(&state, k)?;
    }
    let report = state.report()?;
    state.log.flush();
    Ok(RunOutcome { report, state })
}

/// Drive a full run with no boundary hook.
pub fn run_sequence(
    sequence: &TaskSequence,
    config: &TrainConfig,
    warmup_corpus: Option<&[Vec<usize>]>,
) -> Result<RunOutcome> {
    run_sequence_with(sequence, config, warmup_corpus, |_, _| Ok(()))
}

/// Masked-token warmup pretraining for the backbone.
///
/// Masks 15% of positions (at least one) per document, replacing them with
/// the CLS id as a blank marker, and predicts the original ids with logits
/// tied to the token embedding table. Freezes the backbone afterwards.
pub fn warmup_pretrain(
    weights: &EncoderWeights,
    corpus: &[Vec<usize>],
    steps: usize,
    config: &TrainConfig,
) -> Result<WarmupStats> {
    let usable: Vec<&Vec<usize>> = corpus.iter().filter(|doc| !doc.is_empty()).collect();
    if usable.is_empty() {
        return Err(Error::Config("pretraining corpus is empty".into()));
    }
    let holdout_n = (usable.len() / 10).max(1).min(usable.len().saturating_sub(1)).max(1);
    let (holdout, train) = if usable.len() == 1 {
        (&usable[..], &usable[..])
    } else {
        usable.split_at(holdout_n)
    };

    let holdout_loss = |weights: &EncoderWeights| -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(config.seed, "warmup-holdout"));
        let mut total = 0.0;
        no_grad(|| -> Result<()> {
            for doc in holdout {
                let loss = mlm_loss(weights, doc, &mut rng)?;
                total += loss.item();
            }
            Ok(())
        })?;
        Ok(total / holdout.len() as f64)
    };

    let initial_holdout_loss = holdout_loss(weights)?;
    if steps == 0 {
        return Ok(WarmupStats {
            steps_run: 0,
            initial_holdout_loss,
            final_holdout_loss: initial_holdout_loss,
        });
    }

    weights.set_trainable(true);
    let trainables = weights.named_tensors();
    let mut optimizer = AdamState::new();
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(config.seed, "warmup"));
    for step in 0..steps {
        let docs: Vec<&Vec<usize>> = (0..config.batch_size)
            .map(|_| train[rng.gen_range(0..train.len())])
            .collect();
        let loss = if docs.iter().all(|d| d.len() == docs[0].len()) {
            mlm_loss_batched(weights, &docs, &mut rng)?
        } else {
            let mut losses = Vec::with_capacity(docs.len());
            for doc in &docs {
                losses.push(mlm_loss(weights, doc, &mut rng)?);
            }
            let refs: Vec<&Tensor> = losses.iter().collect();
            ops::mean_all(&ops::concat_rows(&refs)?)
        };
        if !loss.item().is_finite() {
            clear_graph();
            return Err(Error::Diverged {
                task: 0,
                epoch: 0,
                step,
            });
        }
        backward_all(&loss)?;
        optimizer.adam_step(&trainables, config.warmup_lr());
    }
    weights.set_trainable(false);
    let final_holdout_loss = holdout_loss(weights)?;
    Ok(WarmupStats {
        steps_run: steps,
        initial_holdout_loss,
        final_holdout_loss,
    })
}

/// Masked-token loss over a stack of equal-length documents.
fn mlm_loss_batched(
    weights: &EncoderWeights,
    docs: &[&Vec<usize>],
    rng: &mut ChaCha8Rng,
) -> Result<Tensor> {
    let len = weights.config.max_len.min(docs[0].len());
    let mut masked_all = Vec::with_capacity(docs.len() * len);
    let mut positions_all = Vec::with_capacity(docs.len() * len);
    let mut mask_rows = Vec::new();
    let mut targets = Vec::new();
    for (b, doc) in docs.iter().enumerate() {
        let ids = &doc[..len];
        let start = masked_all.len();
        masked_all.extend_from_slice(ids);
        positions_all.extend(0..len);
        let mut any = false;
        for i in 0..len {
            if rng.gen::<f64>() < 0.15 {
                masked_all[start + i] = CLS_TOKEN_ID;
                mask_rows.push(b * len + i);
                targets.push(ids[i]);
                any = true;
            }
        }
        if !any {
            let i = rng.gen_range(0..len);
            masked_all[start + i] = CLS_TOKEN_ID;
            mask_rows.push(b * len + i);
            targets.push(ids[i]);
        }
    }
    let tok = ops::gather_rows(&weights.token_emb, &masked_all)?;
    let pos = ops::gather_rows(&weights.pos_emb, &positions_all)?;
    let seq = ops::add(&tok, &pos)?;
    let hidden = encoder::encode_batch(&seq, len, weights)?;
    let masked_hidden = ops::gather_rows(&hidden, &mask_rows)?;
    let logits = ops::matmul_nt(&masked_hidden, &weights.token_emb)?;
    ops::cross_entropy_mean(&logits, &targets)
}

/// Masked-token loss for one document.
fn mlm_loss(weights: &EncoderWeights, doc: &[usize], rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let max_text = weights.config.max_len.min(doc.len());
    let ids = &doc[..max_text];
    let mut masked = ids.to_vec();
    let mut positions = Vec::new();
    for (i, slot) in masked.iter_mut().enumerate() {
        if rng.gen::<f64>() < 0.15 {
            positions.push(i);
            *slot = CLS_TOKEN_ID;
        }
    }
    if positions.is_empty() {
        let i = rng.gen_range(0..masked.len());
        positions.push(i);
        masked[i] = CLS_TOKEN_ID;
    }
    let seq = encoder::embed_sequence(&masked, weights, 0)?;
    let hidden = encoder::encode(&seq, weights)?;
    let mut rows = Vec::with_capacity(positions.len());
    for &pos in &positions {
        rows.push(ops::slice_rows(&hidden, pos, 1)?);
    }
    let refs: Vec<&Tensor> = rows.iter().collect();
    let masked_hidden = ops::concat_rows(&refs)?;
    let logits = ops::matmul_nt(&masked_hidden, &weights.token_emb)?;
    let targets: Vec<usize> = positions.iter().map(|&p| ids[p]).collect();
    ops::cross_entropy_mean(&logits, &targets)
}

impl TrainConfig {
    /// Warmup uses a faster rate than prompt tuning; masked-token training
    /// from scratch stalls at 1e-4.
    pub fn warmup_lr(&self) -> f64 {
        self.learning_rate.max(1e-3)
    }
}
