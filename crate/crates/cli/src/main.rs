//! `maapnn`: train and evaluate MA-APNN models for linear radiative transfer.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use maapnn_core::experiments::{
    builtin_experiment, compute_reference, evaluate_checkpoint, plot_fields, run_experiment, ExperimentConfig,
    ExperimentResult, ReferenceSource, RunOptions, Scale, REFERENCE_CSV,
};
use maapnn_core::loss::LossMode;
use maapnn_core::problems::BuiltinId;
use maapnn_core::reference::ReferenceField;
use maapnn_core::Error;

#[derive(Parser)]
#[command(name = "maapnn", version, about = "Asymptotic-preserving neural networks for radiative transfer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a built-in example and report its error table.
    Reproduce {
        /// Example id, e.g. ex_4_1_3 or uq_problem_1.
        example: String,
        /// Replace the built-in configuration with this file.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Compute the reference density of a built-in example.
    Reference {
        example: String,
        #[arg(long, value_enum, default_value_t = Solver::Auto)]
        solver: Solver,
        /// Cells per axis (default from the example).
        #[arg(long)]
        cells: Option<usize>,
        /// Time steps over the whole horizon.
        #[arg(long)]
        time_steps: Option<usize>,
        #[arg(long)]
        paper_scale: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Train from a configuration file.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Evaluate a checkpoint; errors are reported when a reference exists.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Reference CSV to compare against instead of the configured one.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        no_plot: bool,
    },
    /// Overlay a prediction CSV and a reference CSV in an SVG file.
    Plot {
        prediction: PathBuf,
        reference: Option<PathBuf>,
        #[arg(long, default_value = "plot.svg")]
        out: PathBuf,
    },
    /// Print the configuration of a built-in example.
    Config {
        example: String,
        #[arg(long)]
        paper_scale: bool,
    },
}

#[derive(Args)]
struct RunFlags {
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_steps: Option<usize>,
    /// Zero the wall-clock column so reruns give identical files.
    #[arg(long)]
    deterministic: bool,
    #[arg(long)]
    paper_scale: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    no_plot: bool,
    /// No per-step progress on stderr.
    #[arg(long)]
    quiet: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    MaApnn,
    Pinn,
    PinnPlusDiffusion,
}

impl From<Mode> for LossMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::MaApnn => LossMode::MaApnn,
            Mode::Pinn => LossMode::Pinn,
            Mode::PinnPlusDiffusion => LossMode::PinnPlusDiffusion,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Solver {
    Auto,
    Exact,
    Diffusion,
    Transport,
}

fn scale(paper: bool) -> Scale {
    if paper {
        Scale::Paper
    } else {
        Scale::Desk
    }
}

fn builtin(example: &str, paper: bool) -> Result<ExperimentConfig, Error> {
    let id: BuiltinId = example.parse().map_err(|e: Error| Error::Config(e.to_string()))?;
    Ok(builtin_experiment(id, scale(paper)))
}

fn apply(mut cfg: ExperimentConfig, f: &RunFlags) -> Result<ExperimentConfig, Error> {
    if let Some(m) = f.mode {
        cfg.loss.mode = m.into();
    }
    if let Some(s) = f.seed {
        cfg.training.seed = s;
    }
    if let Some(n) = f.max_steps {
        cfg.training.max_steps = n;
    }
    if f.deterministic {
        cfg.training.deterministic = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn options(f: &RunFlags) -> RunOptions {
    RunOptions {
        progress: !f.quiet,
        plot: !f.no_plot,
    }
}

fn report(res: &ExperimentResult) {
    println!("problem {}  mode {}", res.problem, res.mode);
    if let (Some(a), Some(b)) = (res.initial_loss, res.final_loss) {
        println!("loss {a:.4e} -> {b:.4e}");
    }
    if res.errors.is_empty() {
        println!("no reference; prediction written to {}", res.prediction.display());
    } else {
        println!("{:>10}  {:>12}", "t", "l2_rel");
        for (t, e) in res.snapshots.iter().zip(&res.errors) {
            println!("{t:>10}  {e:>12.4e}");
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Reproduce { example, config, run } => {
            let cfg = match &config {
                Some(p) => ExperimentConfig::load(p)?,
                None => builtin(&example, run.paper_scale)?,
            };
            let cfg = apply(cfg, &run)?;
            report(&run_experiment(&cfg, &run.out, options(&run))?);
        }
        Command::Train { config, run } => {
            let cfg = apply(ExperimentConfig::load(&config)?, &run)?;
            report(&run_experiment(&cfg, &run.out, options(&run))?);
        }
        Command::Reference {
            example,
            solver,
            cells,
            time_steps,
            paper_scale,
            out,
        } => {
            let mut cfg = builtin(&example, paper_scale)?;
            cfg.evaluation.reference = match solver {
                Solver::Auto => ReferenceSource::Auto,
                Solver::Exact => ReferenceSource::Exact,
                Solver::Diffusion => ReferenceSource::Diffusion,
                Solver::Transport => ReferenceSource::Transport,
            };
            if let Some(c) = cells {
                cfg.evaluation.cells = c;
            }
            if let Some(n) = time_steps {
                cfg.evaluation.time_steps = n;
            }
            cfg.validate()?;
            let field = compute_reference(&cfg)?.ok_or_else(|| {
                Error::MissingReference(format!("no reference solver covers `{example}`"))
            })?;
            std::fs::create_dir_all(&out)?;
            let path = out.join(REFERENCE_CSV);
            field.write(&path)?;
            println!("{} ({}) -> {}", field.meta.problem, field.meta.scheme, path.display());
        }
        Command::Evaluate {
            config,
            checkpoint,
            reference,
            out,
            no_plot,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(r) = reference {
                cfg.evaluation.reference = ReferenceSource::File;
                cfg.evaluation.reference_file = Some(r);
            }
            let opts = RunOptions {
                progress: false,
                plot: !no_plot,
            };
            report(&evaluate_checkpoint(&cfg, &checkpoint, &out, opts)?);
        }
        Command::Plot {
            prediction,
            reference,
            out,
        } => {
            let pred = ReferenceField::read(&prediction)?;
            let r = reference.as_deref().map(ReferenceField::read).transpose()?;
            plot_fields(&pred, r.as_ref(), &out)?;
            println!("{}", out.display());
        }
        Command::Config { example, paper_scale } => {
            print!("{}", builtin(&example, paper_scale)?.to_toml()?);
        }
    }
    Ok(())
}

/// 2: configuration, 3: divergence, 4: missing reference, 1: anything else.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Diverged { .. } => 3,
        Error::MissingReference(_) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
