//! Scratch calibration harness (not part of the deliverable surface).
//! Knobs come from env vars so sweeps are scriptable.

use infocomp::bench;
use infocomp::config::TrainConfig;
use infocomp::continual::{run_sequence, RunState};
use infocomp::data::{gen_pretrain_corpus, gen_suite, SuiteKind, SynthConfig};
use infocomp::objectives::Mode;

fn envf(name: &str, default: f64) -> f64 {
    std::env::var(name).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}
fn envu(name: &str, default: usize) -> usize {
    std::env::var(name).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}
fn envs(name: &str, default: &str) -> String {
    std::env::var(name).unwrap_or_else(|_| default.to_string())
}

fn main() -> infocomp::Result<()> {
    let mode: Mode = envs("CAL_MODE", "infocomp").parse()?;
    let n_tasks = envu("CAL_TASKS", 1);
    let synth = SynthConfig {
        kind: match envs("CAL_KIND", "conflict").as_str() {
            "disjoint" => SuiteKind::Disjoint,
            "transfer" => SuiteKind::Transfer,
            _ => SuiteKind::Conflict,
        },
        n_tasks,
        classes_per_task: 2,
        train_per_class: envu("CAL_TRAIN", 200),
        later_train_per_class: std::env::var("CAL_LATER").ok().and_then(|v| v.parse().ok()),
        test_per_class: 50,
        text_len: envu("CAL_TEXTLEN", 6),
        signals_per_class: envu("CAL_SIGNALS", 4),
        reused_signals_per_class: envu("CAL_REUSED", 2),
        signal_min_occ: envu("CAL_MINOCC", 2),
        signal_max_occ: envu("CAL_MAXOCC", 3),
        filler_words: envu("CAL_FILLERS", 150),
        vocab_size: 512,
        max_text_len: 32,
        pretrain_text_len: envu("CAL_PRETRAIN_LEN", 48),
        seed: 0xbe9c4,
    };
    let suite = gen_suite(&synth);
    let mut config = TrainConfig {
        mode,
        seed: envu("CAL_SEED", 0) as u64,
        encoder: bench::bench_encoder_config(),
        max_text_len: 32,
        warmup_steps: envu("CAL_WARMUP", 600),
        max_epochs: envu("CAL_EPOCHS", 150),
        patience: envu("CAL_PATIENCE", 8),
        learning_rate: envf("CAL_LR", 1e-4),
        val_per_class: 20,
        ..Default::default()
    };
    config.encoder.d_model = envu("CAL_DMODEL", 32);
    config.encoder.d_ffn = envu("CAL_FFN", 64);
    config.lambda1 = envf("CAL_L1", config.lambda1);
    config.lambda2 = envf("CAL_L2", config.lambda2);

    let corpus = gen_pretrain_corpus(&suite, envu("CAL_DOCS", 400), 1);
    let started = std::time::Instant::now();

    if let Ok(log_path) = std::env::var("CAL_LOG") {
        use infocomp::continual::run_sequence_logged;
        use infocomp::runlog::RunLog;
        let log = RunLog::to_file(std::path::Path::new(&log_path))?;
        let outcome = run_sequence_logged(&suite.sequence, &config, Some(&corpus), log, |_, _| Ok(()))?;
        let report = outcome.report;
        for (k, row) in report.accuracy.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|a| format!("{a:.2}")).collect();
            println!("  A[{}] = [{}]", k + 1, cells.join(", "));
        }
        println!(
            "  final_avg={:.3} elapsed={:.1}s (validation log at {log_path})",
            report.final_average,
            started.elapsed().as_secs_f64()
        );
        return Ok(());
    }

    let _ = RunState::new; // keep import useful for trace experiments
    let outcome = run_sequence(&suite.sequence, &config, Some(&corpus))?;
    let report = outcome.report;
    println!("mode={} tasks={}", report.mode, n_tasks);
    for (k, row) in report.accuracy.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|a| format!("{a:.2}")).collect();
        println!("  A[{}] = [{}]", k + 1, cells.join(", "));
    }
    let epochs: Vec<usize> = report.task_results.iter().map(|r| r.epochs_used).collect();
    let vals: Vec<String> = report
        .task_results
        .iter()
        .map(|r| format!("{:.2}", r.best_val_accuracy))
        .collect();
    println!(
        "  final_avg={:.3} peak={:.3} epochs={epochs:?} best_vals=[{}] elapsed={:.1}s",
        report.final_average,
        report.taskwise_curve.iter().cloned().fold(0.0, f64::max),
        vals.join(","),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}
