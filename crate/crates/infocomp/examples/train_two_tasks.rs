//! Minimal end-to-end run: two synthetic keyword tasks, complementary
//! prompts, full boundary protocol, report printed at the end.
//!
//! ```bash
//! cargo run --release --example train_two_tasks
//! ```

use infocomp::bench;
use infocomp::continual::run_sequence;
use infocomp::data::{gen_pretrain_corpus, gen_suite, SynthConfig};
use infocomp::objectives::Mode;

fn main() -> infocomp::Result<()> {
    let synth = SynthConfig {
        n_tasks: 2,
        train_per_class: 60,
        test_per_class: 30,
        seed: 7,
        ..Default::default()
    };
    let suite = gen_suite(&synth);
    let corpus = gen_pretrain_corpus(&suite, 200, 7);

    let mut config = bench::bench_config(Mode::Infocomp, 0);
    config.warmup_steps = 300;
    config.max_epochs = 8;

    let started = std::time::Instant::now();
    let outcome = run_sequence(&suite.sequence, &config, Some(&corpus))?;
    let report = outcome.report;

    println!("mode: {}  seed: {}", report.mode, report.seed);
    for (k, row) in report.accuracy.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|a| format!("{a:.3}")).collect();
        println!("after task {}: test accuracy per task = [{}]", k + 1, cells.join(", "));
    }
    for result in &report.task_results {
        println!(
            "task {}: best val {:.3} in {} epochs (final loss {:.4})",
            result.task_id,
            result.best_val_accuracy,
            result.epochs_used,
            result.final_loss.total
        );
    }
    println!("final average accuracy: {:.3}", report.final_average);
    println!("elapsed: {:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}
