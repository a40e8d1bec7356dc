//! Command implementations behind the `infocomp` binary. Everything here is
//! plain library code so the examples and tests can drive the same paths.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bench::{self, BatterySpec};
use crate::checkpoint;
use crate::config::TrainConfig;
use crate::continual::{self, run_sequence_logged, sub_seed};
use crate::data::{
    gen_pretrain_corpus, gen_pretrain_corpus_texts, gen_suite, load_manifest, tokenize_hash,
    write_manifest, TaskSequence,
};
use crate::encoder::EncoderWeights;
use crate::error::{Error, Result};
use crate::gradsuite;
use crate::objectives::Mode;
use crate::prompts::PromptBank;
use crate::report::{self, RunReport};
use crate::runlog::RunLog;

/// Arguments for `run`.
#[derive(Debug, Clone)]
pub struct RunArgs {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub order: Option<String>,
    pub mode: Option<Mode>,
    /// Synthetic suite name; ignored when a manifest is given.
    pub suite: String,
    pub manifest: Option<PathBuf>,
    /// JSONL text corpus for warmup when running from a manifest.
    pub corpus: Option<PathBuf>,
    pub out: PathBuf,
    pub verbose_log: bool,
    /// Seed for synthetic data generation, independent of the model seed.
    pub data_seed: u64,
}

impl RunArgs {
    pub fn new(config: PathBuf, out: PathBuf) -> RunArgs {
        RunArgs {
            config,
            seed: None,
            order: None,
            mode: None,
            suite: "conflict5".to_string(),
            manifest: None,
            corpus: None,
            out,
            verbose_log: false,
            data_seed: 0xbe9c4,
        }
    }
}

/// Reorder a sequence according to `--order`. A comma-separated permutation
/// of 1..=n (e.g. "3,1,2") reorders tasks and renumbers them by new
/// position; any other string just relabels the order id.
pub fn apply_order(mut sequence: TaskSequence, order: &str) -> Result<TaskSequence> {
    let n = sequence.tasks.len();
    let parsed: Option<Vec<usize>> = order
        .split(',')
        .map(|s| s.trim().parse::<usize>().ok())
        .collect();
    if let Some(perm) = parsed {
        let mut seen = vec![false; n + 1];
        if perm.len() != n || perm.iter().any(|&i| i == 0 || i > n || std::mem::replace(&mut seen[i], true)) {
            return Err(Error::Config(format!(
                "--order {order:?} is not a permutation of 1..={n}"
            )));
        }
        let mut tasks = Vec::with_capacity(n);
        for (new_pos, &old_id) in perm.iter().enumerate() {
            let mut task = sequence
                .tasks
                .iter()
                .find(|t| t.task_id == old_id)
                .cloned()
                .ok_or(Error::UnknownTask(old_id))?;
            task.task_id = new_pos + 1;
            tasks.push(task);
        }
        sequence.tasks = tasks;
    }
    sequence.order_id = order.to_string();
    Ok(sequence)
}

fn load_corpus_jsonl(path: &Path, vocab_size: usize, max_text_len: usize) -> Result<Vec<Vec<usize>>> {
    let text = std::fs::read_to_string(path)?;
    let mut docs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| Error::MalformedLine {
                path: path.display().to_string(),
                line: lineno + 1,
                msg: e.to_string(),
            })?;
        let doc = value
            .get("text")
            .and_then(|t| t.as_str())
            .ok_or_else(|| Error::MalformedLine {
                path: path.display().to_string(),
                line: lineno + 1,
                msg: "missing \"text\" field".to_string(),
            })?;
        docs.push(tokenize_hash(doc, vocab_size, max_text_len));
    }
    Ok(docs)
}

fn resolve_config(args: &RunArgs) -> Result<TrainConfig> {
    let mut config = TrainConfig::from_file(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(mode) = args.mode {
        config.mode = mode;
    }
    config.validate()?;
    Ok(config)
}

fn resolve_data(
    args: &RunArgs,
    config: &TrainConfig,
) -> Result<(TaskSequence, Option<Vec<Vec<usize>>>)> {
    let (mut sequence, corpus) = match &args.manifest {
        Some(path) => {
            let sequence =
                load_manifest(path, config.encoder.vocab_size, config.max_text_len)?;
            let corpus = match &args.corpus {
                Some(c) => Some(load_corpus_jsonl(
                    c,
                    config.encoder.vocab_size,
                    config.max_text_len,
                )?),
                None => None,
            };
            (sequence, corpus)
        }
        None => {
            let mut synth = bench::suite_config(&args.suite, args.data_seed)?;
            synth.vocab_size = config.encoder.vocab_size;
            synth.max_text_len = config.max_text_len;
            let suite = gen_suite(&synth);
            let corpus =
                gen_pretrain_corpus(&suite, 400, sub_seed(config.seed, "pretrain-corpus"));
            (suite.sequence, Some(corpus))
        }
    };
    if let Some(order) = &args.order {
        sequence = apply_order(sequence, order)?;
    }
    Ok((sequence, corpus))
}

/// `run`: one full continual run; writes report.json, summary.csv,
/// run.log.jsonl, and a checkpoint per task boundary under `--out`.
pub fn cmd_run(args: &RunArgs) -> Result<RunReport> {
    let config = resolve_config(args)?;
    let (sequence, corpus) = resolve_data(args, &config)?;
    if config.warmup_steps > 0 && corpus.is_none() {
        return Err(Error::Config(
            "warmup_steps > 0 needs --corpus when running from a manifest".into(),
        ));
    }
    std::fs::create_dir_all(&args.out)?;
    let mut log = RunLog::to_file(&args.out.join("run.log.jsonl"))?;
    log.verbose = args.verbose_log;
    let out_dir = args.out.clone();
    let config_for_hook = config.clone();
    let outcome = run_sequence_logged(
        &sequence,
        &config,
        corpus.as_deref(),
        log,
        |state, k| {
            let ckpt = checkpoint::capture(
                &config_for_hook,
                &state.weights,
                &state.bank,
                None,
                k,
            );
            checkpoint::save(&ckpt, &out_dir.join(format!("checkpoint_task{k}.json")))
        },
    )?;
    report::write_report(&outcome.report, &args.out.join("report.json"))?;
    report::write_run_csv(&outcome.report, &args.out.join("summary.csv"))?;
    Ok(outcome.report)
}

/// One ablation battery row result.
#[derive(Debug, Clone)]
pub struct AblateRow {
    pub variant: String,
    pub per_seed: Vec<(u64, f64)>,
    pub mean_final_average: f64,
}

/// `ablate`: the six table variants over shared seeds, in parallel.
/// Returns rows in table order (full last) and writes ablate.csv.
pub fn cmd_ablate(
    config_path: &Path,
    seeds: &[u64],
    suite: &str,
    out: &Path,
    with_freeze_s: bool,
) -> Result<Vec<AblateRow>> {
    let base = TrainConfig::from_file(config_path)?;
    let mut variants = bench::ablation_variants();
    if with_freeze_s {
        variants.insert(
            variants.len() - 1,
            (
                "freeze_s_after_first",
                crate::config::AblationFlags {
                    freeze_s_after_first: true,
                    ..Default::default()
                },
            ),
        );
    }
    let mut specs = Vec::new();
    for (name, flags) in &variants {
        for &seed in seeds {
            let mut spec = BatterySpec::new(name, suite, Mode::Infocomp, seed)
                .with_ablation(*flags);
            let mut config = base.clone();
            config.mode = Mode::Infocomp;
            config.seed = seed;
            config.ablation = *flags;
            spec.config = Some(config);
            specs.push(spec);
        }
    }
    let results = bench::run_battery(&specs)?;

    std::fs::create_dir_all(out)?;
    let mut rows = Vec::new();
    let mut csv = String::from("variant,seed,final_average\n");
    for (name, _) in &variants {
        let mut per_seed = Vec::new();
        for (spec, report) in &results {
            if spec.label == *name {
                per_seed.push((spec.seed, report.final_average));
                csv.push_str(&format!("{},{},{}\n", name, spec.seed, report.final_average));
            }
        }
        per_seed.sort_by_key(|(seed, _)| *seed);
        let mean = per_seed.iter().map(|(_, v)| v).sum::<f64>() / per_seed.len() as f64;
        rows.push(AblateRow {
            variant: name.to_string(),
            per_seed,
            mean_final_average: mean,
        });
    }
    std::fs::write(out.join("ablate.csv"), csv)?;
    Ok(rows)
}

/// `gradcheck`: run the finite-difference battery; true when every check
/// passed. Prints one line per check.
pub fn cmd_gradcheck(tol: f64) -> Result<bool> {
    let started = std::time::Instant::now();
    let checks = gradsuite::run_suite(tol, 1e-4, &[0, 1, 2])?;
    let mut all_ok = true;
    for check in &checks {
        let status = if check.passed() { "ok" } else { "FAIL" };
        println!(
            "{status:<5} {:<40} max_rel_err={:.3e}",
            check.name,
            check.report.max_rel_err()
        );
        if !check.passed() {
            all_ok = false;
            print!("{}", check.report);
        }
    }
    println!(
        "gradcheck: {} checks in {:.1}s -> {}",
        checks.len(),
        started.elapsed().as_secs_f64(),
        if all_ok { "PASS" } else { "FAIL" }
    );
    Ok(all_ok)
}

/// `report`: aggregate every report*.json under `--in` into summary.csv and
/// curves.svg under `--out`.
pub fn cmd_report(input: &Path, out: &Path) -> Result<report::Aggregate> {
    let mut paths = Vec::new();
    collect_reports(input, &mut paths)?;
    if paths.is_empty() {
        return Err(Error::Config(format!(
            "no report*.json files under {}",
            input.display()
        )));
    }
    paths.sort();
    let mut reports = Vec::with_capacity(paths.len());
    for path in &paths {
        reports.push(report::read_report(path)?);
    }
    let aggregate = report::aggregate(&reports)?;
    std::fs::create_dir_all(out)?;
    report::write_summary_csv(&aggregate, &out.join("summary.csv"))?;
    let series: Vec<(String, Vec<f64>)> = aggregate
        .groups
        .iter()
        .map(|g| (format!("{}@{}", g.mode, g.order_id), g.mean_curve.clone()))
        .collect();
    report::write_curves_svg(&series, &out.join("curves.svg"))?;
    Ok(aggregate)
}

fn collect_reports(dir: &Path, into: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        if path.is_dir() {
            collect_reports(&path, into)?;
        } else if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
            if name.starts_with("report") && name.ends_with(".json") {
                into.push(path);
            }
        }
    }
    Ok(())
}

/// `pretrain`: warmup a fresh backbone on a corpus and write it as a
/// checkpoint. Returns (initial, final) held-out masked-token loss.
pub fn cmd_pretrain(
    config_path: &Path,
    steps: usize,
    suite: &str,
    corpus_path: Option<&Path>,
    out: &Path,
) -> Result<(f64, f64)> {
    let mut config = TrainConfig::from_file(config_path)?;
    config.warmup_steps = steps;
    let corpus = match corpus_path {
        Some(path) => load_corpus_jsonl(path, config.encoder.vocab_size, config.max_text_len)?,
        None => {
            let mut synth = bench::suite_config(suite, 0xbe9c4)?;
            synth.vocab_size = config.encoder.vocab_size;
            synth.max_text_len = config.max_text_len;
            let suite = gen_suite(&synth);
            gen_pretrain_corpus(&suite, 400, sub_seed(config.seed, "pretrain-corpus"))
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(config.seed, "encoder-init"));
    let weights = EncoderWeights::init(&config.encoder, &mut rng)?;
    let stats = continual::warmup_pretrain(&weights, &corpus, steps, &config)?;
    let bank = PromptBank::new(&weights, config.l_s, sub_seed(config.seed, "s-prompt"));
    std::fs::create_dir_all(out)?;
    let ckpt = checkpoint::capture(&config, &weights, &bank, None, 0);
    checkpoint::save(&ckpt, &out.join("backbone.json"))?;
    Ok((stats.initial_holdout_loss, stats.final_holdout_loss))
}

/// `gen-data`: materialize a named synthetic suite as JSONL files plus a
/// manifest, a pretraining corpus, and the signal metadata.
pub fn cmd_gen_data(suite_name: &str, seed: u64, out: &Path) -> Result<PathBuf> {
    let synth = bench::suite_config(suite_name, seed)?;
    let suite = gen_suite(&synth);
    let manifest = write_manifest(&suite.sequence, out)?;

    let mut corpus_lines = String::new();
    for text in gen_pretrain_corpus_texts(&suite, 400, seed ^ 0xc0ffee) {
        corpus_lines.push_str(&serde_json::json!({ "text": text }).to_string());
        corpus_lines.push('\n');
    }
    std::fs::write(out.join("corpus.jsonl"), corpus_lines)?;

    let signals = serde_json::json!({
        "suite": suite_name,
        "seed": seed,
        "signal_words": suite.signal_words,
        "signal_ids": suite.signal_ids,
    });
    std::fs::write(
        out.join("signals.json"),
        serde_json::to_string_pretty(&signals)?,
    )?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apply_order_permutes_and_renumbers() {
        let sequence = crate::data::gen_synthetic_suite(3, 2, 4, 1, false);
        let ordered = apply_order(sequence.clone(), "3,1,2").unwrap();
        assert_eq!(ordered.order_id, "3,1,2");
        assert_eq!(ordered.tasks[0].name, sequence.tasks[2].name);
        assert_eq!(ordered.tasks[0].task_id, 1);
        assert_eq!(ordered.tasks[2].task_id, 3);

        // non-permutation strings only relabel
        let labeled = apply_order(sequence.clone(), "order-A").unwrap();
        assert_eq!(labeled.order_id, "order-A");
        assert_eq!(labeled.tasks[0].name, sequence.tasks[0].name);

        assert!(apply_order(sequence, "1,1,2").is_err());
    }
}
