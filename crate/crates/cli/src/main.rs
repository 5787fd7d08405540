//! `pourkit`: data collection, model fitting, relabeling and closed-loop
//! evaluation for the simulated pouring setup.
//!
//! Exit codes: 0 on success, 1 on runtime errors, 2 on invalid input or
//! configuration.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use pourkit::config::ExperimentConfig;
use pourkit::experiment::{self, EstimatorKind, Lab};
use pourkit::filter::TransitionModel;
use pourkit::geometry::{fill_height, load_obj, M3_PER_ML, DEFAULT_FILL_TOL};

#[derive(Debug, Parser)]
#[command(name = "pourkit", version, about = "Simulated closed-loop pouring experiments")]
struct Cli {
    /// Experiment config (TOML)
    #[arg(long, global = true, default_value = "configs/default.toml")]
    config: PathBuf,
    /// Override the config seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory [default: the config's output_dir, else ./out]
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Estimator::ModelBased)]
    estimator: Estimator,
    /// Worker threads; 0 uses one per core
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Estimator {
    ModelBased,
    PixelCount,
}

impl From<Estimator> for EstimatorKind {
    fn from(e: Estimator) -> Self {
        match e {
            Estimator::ModelBased => EstimatorKind::ModelBased,
            Estimator::PixelCount => EstimatorKind::PixelCount,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the data-collection protocol into <out>/dataset
    Collect,
    /// Fit the volume transition matrix on the training split
    FitTransition {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Fit one pixel-count regressor per container on the training split
    FitRegressor {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Viterbi-decode every sequence and add a gt_ml column
    Relabel {
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Transition model [default: <out>/transition.json if present, else the prior]
        #[arg(long)]
        transition: Option<PathBuf>,
    },
    /// Run the evaluation protocol into <out>/eval/<estimator>
    Evaluate {
        /// [default: <out>/transition.json]
        #[arg(long)]
        transition: Option<PathBuf>,
    },
    /// Mesh utilities
    Mesh {
        #[command(subcommand)]
        command: MeshCommand,
    },
}

#[derive(Debug, Subcommand)]
enum MeshCommand {
    /// Print the enclosed volume in ml
    Volume { mesh: PathBuf },
    /// Print the liquid surface height in mm for a volume in ml
    FillHeight { mesh: PathBuf, volume_ml: f64 },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let invalid = e
                .chain()
                .any(|c| c.downcast_ref::<pourkit::Error>().is_some_and(pourkit::Error::is_invalid_input));
            ExitCode::from(if invalid { 2 } else { 1 })
        }
    }
}

struct Context_ {
    config: ExperimentConfig,
    out: PathBuf,
}

impl Context_ {
    fn load(cli: &Cli) -> Result<Self> {
        let mut config = ExperimentConfig::load(&cli.config)?;
        if let Some(seed) = cli.seed {
            config.seed = seed;
        }
        let out = match (&cli.out, &config.output_dir) {
            (Some(o), _) => o.clone(),
            (None, Some(o)) => config.resolve(o),
            (None, None) => PathBuf::from("out"),
        };
        Ok(Self { config, out })
    }

    fn dataset(&self, flag: &Option<PathBuf>) -> PathBuf {
        flag.clone().unwrap_or_else(|| self.out.join("dataset"))
    }

    fn transition_path(&self) -> PathBuf {
        self.out.join("transition.json")
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Command::Mesh { command } = &cli.command {
        return mesh(command);
    }
    let ctx = Context_::load(&cli)?;
    let jobs = cli.jobs;
    match &cli.command {
        Command::Collect => {
            let lab = Lab::new(ctx.config.clone())?;
            let dataset = ctx.out.join("dataset");
            let m = experiment::collect(&lab, &dataset, jobs)?;
            println!(
                "collected {} pours ({} train, {} eval) into {}",
                m.pours.len(),
                m.train,
                m.eval,
                dataset.display()
            );
        }
        Command::FitTransition { dataset } => {
            let dataset = ctx.dataset(dataset);
            let spec = ctx.config.spec()?;
            let trans = experiment::fit_transition_on(&dataset, &spec, ctx.config.protocol.transition_smoothing)?;
            std::fs::create_dir_all(&ctx.out).with_context(|| format!("creating {}", ctx.out.display()))?;
            let path = ctx.transition_path();
            trans.save(&path)?;
            println!("wrote {}", path.display());
        }
        Command::FitRegressor { dataset } => {
            let dataset = ctx.dataset(dataset);
            let regs = experiment::fit_regressors_on(&dataset)?;
            std::fs::create_dir_all(&ctx.out).with_context(|| format!("creating {}", ctx.out.display()))?;
            for (name, reg) in &regs {
                let path = experiment::regressor_path(&ctx.out, name);
                reg.save(&path)?;
                println!(
                    "wrote {} ({} breakpoints, sigma {:.2} ml)",
                    path.display(),
                    reg.breakpoints().len(),
                    reg.sigma_ml()
                );
            }
        }
        Command::Relabel { dataset, transition } => {
            let dataset = ctx.dataset(dataset);
            let lab = Lab::new(ctx.config.clone())?;
            let trans = match transition {
                Some(p) => TransitionModel::load(p)?,
                None if ctx.transition_path().is_file() => TransitionModel::load(ctx.transition_path())?,
                None => lab.bootstrap_transition(),
            };
            let report = experiment::relabel(&lab, &dataset, &trans, jobs)?;
            for s in &report.sequences {
                println!("{}\t{}\trmse {:.2} ml", s.csv.display(), s.container, s.rmse_ml);
            }
            println!(
                "relabeled {} sequences: mean rmse {:.2} ml, max {:.2} ml",
                report.sequences.len(),
                report.mean_rmse_ml,
                report.max_rmse_ml
            );
        }
        Command::Evaluate { transition } => {
            let lab = Lab::new(ctx.config.clone())?;
            let path = transition.clone().unwrap_or_else(|| ctx.transition_path());
            let trans = TransitionModel::load(&path).context("evaluate needs a fitted transition model (run fit-transition)")?;
            let kind = EstimatorKind::from(cli.estimator);
            let regs = match kind {
                EstimatorKind::ModelBased => None,
                EstimatorKind::PixelCount => Some(load_regressors(&ctx.out, &lab)?),
            };
            let eval = experiment::evaluate(&lab, &trans, kind, regs.as_ref(), jobs)?;
            let dir = ctx.out.join("eval").join(kind.to_string());
            experiment::write_evaluation(&eval, &dir)?;
            let s = &eval.summary;
            println!(
                "{}: {} pours, mean abs error {:.1} ml, max {:.1} ml, {} within 50 ml -> {}",
                kind,
                s.pours,
                s.mean_abs_err_ml,
                s.max_abs_err_ml,
                s.within_50_ml,
                dir.display()
            );
        }
        Command::Mesh { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn load_regressors(
    out: &Path,
    lab: &Lab,
) -> Result<std::collections::BTreeMap<String, pourkit::baseline::PixelCountRegressor>> {
    lab.rigs
        .iter()
        .map(|r| {
            let path = experiment::regressor_path(out, &r.name);
            let reg = pourkit::baseline::PixelCountRegressor::load(&path)
                .context("the pixel-count estimator needs fitted regressors (run fit-regressor)")?;
            Ok((r.name.clone(), reg))
        })
        .collect()
}

fn mesh(command: &MeshCommand) -> Result<()> {
    match command {
        MeshCommand::Volume { mesh } => {
            let m = load_obj(mesh)?;
            println!("{:.3} ml", m.volume() / M3_PER_ML);
        }
        MeshCommand::FillHeight { mesh, volume_ml } => {
            let m = load_obj(mesh)?;
            let h = fill_height(&m, volume_ml * M3_PER_ML, DEFAULT_FILL_TOL)?;
            println!("{:.3} mm", h * 1000.0);
        }
    }
    Ok(())
}
