//! Thin command-line front end; all behavior lives in the library.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use infocomp::cli::{self, RunArgs};
use infocomp::objectives::Mode;

#[derive(Parser)]
#[command(
    name = "infocomp",
    about = "Complementary-prompt continual text classification at desk scale",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one continual-learning sequence and write report.json + summary.csv.
    Run {
        /// JSON config file mirroring the training configuration fields.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Task order: a permutation like "3,1,2" or a plain label.
        #[arg(long)]
        order: Option<String>,
        /// Override the config's mode (finetune, shared_prompt,
        /// per_task_prompt, progprompt, infocomp).
        #[arg(long)]
        mode: Option<String>,
        /// Synthetic suite to run on (conflict5, disjoint5, transfer5).
        #[arg(long, default_value = "conflict5")]
        suite: String,
        /// Run from a JSONL task manifest instead of a synthetic suite.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// JSONL pretraining corpus ({"text": ...} per line) for manifest runs.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Output directory.
        #[arg(long, default_value = "out/run")]
        out: PathBuf,
        /// Log every optimization step to run.log.jsonl.
        #[arg(long)]
        verbose_log: bool,
        /// Seed for synthetic data generation (kept separate from the model
        /// seed so reruns see identical data).
        #[arg(long, default_value_t = 0xbe9c4)]
        data_seed: u64,
    },
    /// Run the six ablation variants over shared seeds and tabulate them.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated seeds, e.g. --seeds 0,1,2,3,4.
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long, default_value = "conflict5")]
        suite: String,
        #[arg(long, default_value = "out/ablate")]
        out: PathBuf,
        /// Add the freeze-S diagnostic variant as an extra row.
        #[arg(long)]
        with_freeze_s: bool,
    },
    /// Finite-difference verification of every primitive and loss mode.
    Gradcheck {
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
    /// Aggregate run reports into summary.csv and curves.svg.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Warmup-pretrain a backbone and save it as a checkpoint.
    Pretrain {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value = "conflict5")]
        suite: String,
        /// JSONL corpus file; generated from the suite when absent.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value = "out/pretrain")]
        out: PathBuf,
    },
    /// Materialize a synthetic suite as JSONL tasks + manifest.
    GenData {
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(command: Command) -> infocomp::Result<bool> {
    match command {
        Command::Run {
            config,
            seed,
            order,
            mode,
            suite,
            manifest,
            corpus,
            out,
            verbose_log,
            data_seed,
        } => {
            let mode = match mode {
                Some(m) => Some(m.parse::<Mode>()?),
                None => None,
            };
            let mut args = RunArgs::new(config, out.clone());
            args.seed = seed;
            args.order = order;
            args.mode = mode;
            args.suite = suite;
            args.manifest = manifest;
            args.corpus = corpus;
            args.verbose_log = verbose_log;
            args.data_seed = data_seed;
            let report = cli::cmd_run(&args)?;
            println!(
                "run complete: mode={} seed={} final_average={:.4}",
                report.mode, report.seed, report.final_average
            );
            println!("report: {}", out.join("report.json").display());
            Ok(true)
        }
        Command::Ablate {
            config,
            seeds,
            suite,
            out,
            with_freeze_s,
        } => {
            let rows = cli::cmd_ablate(&config, &seeds, &suite, &out, with_freeze_s)?;
            println!("{:<22} {:>8}  per-seed", "variant", "mean");
            for row in &rows {
                let per_seed = row
                    .per_seed
                    .iter()
                    .map(|(s, v)| format!("{s}:{v:.3}"))
                    .collect::<Vec<_>>()
                    .join(" ");
                println!(
                    "{:<22} {:>8.4}  {per_seed}",
                    row.variant, row.mean_final_average
                );
            }
            println!("table: {}", out.join("ablate.csv").display());
            Ok(true)
        }
        Command::Gradcheck { tol } => cli::cmd_gradcheck(tol),
        Command::Report { input, out } => {
            let aggregate = cli::cmd_report(&input, &out)?;
            println!(
                "aggregated {} groups, {} comparisons",
                aggregate.groups.len(),
                aggregate.comparisons.len()
            );
            println!("summary: {}", out.join("summary.csv").display());
            println!("curves:  {}", out.join("curves.svg").display());
            Ok(true)
        }
        Command::Pretrain {
            config,
            steps,
            suite,
            corpus,
            out,
        } => {
            let (initial, final_loss) =
                cli::cmd_pretrain(&config, steps, &suite, corpus.as_deref(), &out)?;
            println!(
                "warmup {steps} steps: held-out masked-token loss {initial:.4} -> {final_loss:.4}"
            );
            println!("backbone: {}", out.join("backbone.json").display());
            Ok(true)
        }
        Command::GenData { suite, seed, out } => {
            let manifest = cli::cmd_gen_data(&suite, seed, &out)?;
            println!("manifest: {}", manifest.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}
