use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ega_cli::commands::{
    cmd_ablate, cmd_gradcheck, cmd_run, cmd_sweep, format_table, gradcheck_failures, OutputLayout,
    SweepAxis,
};
use ega_cli::config::ExperimentConfig;
use ega_cli::Result;
use ega_core::gradcheck::GradcheckConfig;
use ega_core::train::Strategy;

#[derive(Parser)]
#[command(
    name = "ega",
    version,
    about = "Embedding graph alignment distillation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pre-train the teacher and distil one student.
    Run(ExperimentArgs),
    /// Baseline, without-node, without-edge and full variants on shared seeds.
    Ablate(ExperimentArgs),
    /// One set of runs per value of a hyperparameter axis.
    Sweep {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// graph_size, node_weight or edge_weight.
        #[arg(long, value_parser = clap::value_parser!(SweepAxis))]
        axis: SweepAxis,
        /// Comma-separated values; defaults depend on the axis.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
    /// Finite-difference check of every differentiable op.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        instances: usize,
        /// Pin the batch size instead of drawing B in 3..=8.
        #[arg(long)]
        batch: Option<usize>,
        /// Pin the embedding width instead of drawing D in 4..=16.
        #[arg(long)]
        dim: Option<usize>,
        /// Directory for gradcheck.json.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, hide = true)]
        corrupt: Option<String>,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Base seed; overrides `train.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output root; falls back to `out_dir` in the config, then `runs`.
    #[arg(long, env = "EGA_OUT_ROOT")]
    out: Option<PathBuf>,
    #[arg(long)]
    strategy: Option<StrategyArg>,
    /// Recompute teacher backbones instead of reusing cached ones.
    #[arg(long)]
    no_cache: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Simultaneous,
    Sequential,
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<(ExperimentConfig, OutputLayout)> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.train.seed = seed;
        }
        if let Some(s) = self.strategy {
            cfg.train.strategy = match s {
                StrategyArg::Simultaneous => Strategy::Simultaneous,
                StrategyArg::Sequential => Strategy::Sequential,
            };
        }
        let root = self
            .out
            .clone()
            .or_else(|| cfg.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("runs"));
        let mut layout = OutputLayout::new(root);
        if self.no_cache {
            layout = layout.without_cache();
        }
        cfg.validate()?;
        Ok((cfg, layout))
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let (cfg, out) = args.resolve()?;
            let m = cmd_run(&cfg, &out)?;
            println!(
                "seed {}: student {:.4}, teacher {:.4} ({} epochs)",
                m.seed, m.student_test_accuracy, m.teacher.final_test_accuracy, m.epochs_completed
            );
        }
        Command::Ablate(args) => {
            let (cfg, out) = args.resolve()?;
            let report = cmd_ablate(&cfg, &out)?;
            print!("{}", format_table("variant", &report.rows));
        }
        Command::Sweep { exp, axis, values } => {
            let (cfg, out) = exp.resolve()?;
            let report = cmd_sweep(&cfg, axis, values, &out)?;
            print!("{}", format_table(axis.name(), &report.rows));
        }
        Command::Gradcheck {
            seed,
            instances,
            batch,
            dim,
            out,
            corrupt,
        } => {
            let defaults = GradcheckConfig::default();
            let cfg = GradcheckConfig {
                seed,
                instances,
                batch_range: batch.map_or(defaults.batch_range, |b| (b, b)),
                dim_range: dim.map_or(defaults.dim_range, |d| (d, d)),
                corrupt,
                ..defaults
            };
            let reports = cmd_gradcheck(&cfg, out.as_deref())?;
            for r in &reports {
                println!("{}", serde_json::to_string(r).expect("report serialises"));
            }
            if let Some(e) = gradcheck_failures(&reports) {
                return Err(e);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
