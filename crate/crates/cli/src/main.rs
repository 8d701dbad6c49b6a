use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use vhvm_core::harness::{
    ingest, load_panel, portfolio_panels, rank_report, run_experiment, split, write_json, DataSource, ErrorClass,
    EvalReport, ExperimentConfig, HarnessError, PortfolioScores, SimSpec,
};
use vhvm_core::panel::ReturnsPanel;
use vhvm_core::vhvm::{evaluate_sequence, forecast_one_step, train, VhvmError, VhvmModel};

#[derive(Debug, Parser)]
#[command(name = "vhvm", version, about = "Covariance forecasting with a sequential variational model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic returns panel and its true covariances.
    Simulate {
        /// Simulation spec (JSON).
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn per-asset `date,price` files into an aligned log-return panel.
    Ingest {
        #[arg(required = true)]
        prices: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train VHVM on the training split and save a checkpoint.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Directory for the training log.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Forecast the covariance of the step after the end of a panel.
    Forecast {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        panel: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a checkpoint on the test split.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        include_2pi: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every configured model on every portfolio and rank them.
    Benchmark {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        include_2pi: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Average-rank table over one or more reports.
    Report {
        /// `report.json` files or JSON lists of portfolio scores.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, clap::Args)]
struct DataArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Returns panel CSV; replaces the config's data source.
    #[arg(long)]
    panel: Option<PathBuf>,
}

impl DataArgs {
    fn experiment(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => match &self.panel {
                Some(path) => ExperimentConfig::new(DataSource::Panel { path: path.clone() }),
                None => return Err(HarnessError::Config("either --config or --panel is required".into())),
            },
        };
        if let Some(path) = &self.panel {
            cfg.data = DataSource::Panel { path: path.clone() };
        }
        Ok(cfg)
    }
}

fn model_error(e: VhvmError) -> HarnessError {
    match e {
        VhvmError::Config(m) => HarnessError::Config(m),
        VhvmError::Dimension { .. } | VhvmError::Io(_) | VhvmError::Json(_) => HarnessError::Data(e.to_string()),
        other => HarnessError::Model(other.to_string()),
    }
}

fn load_checkpoint(path: &Path) -> Result<VhvmModel, HarnessError> {
    VhvmModel::load(path).map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))
}

/// The single portfolio a train/evaluate run works on.
fn single_portfolio(cfg: &ExperimentConfig) -> Result<ReturnsPanel, HarnessError> {
    let panel = load_panel(cfg)?;
    let mut panels = portfolio_panels(cfg, &panel)?;
    if panels.len() > 1 {
        log::warn!("config lists {} portfolios, using the first", panels.len());
    }
    Ok(panels.swap_remove(0))
}

fn create_dir(dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

fn run(cmd: Command) -> Result<ExitCode, HarnessError> {
    match cmd {
        Command::Simulate { config, seed, out } => {
            let text = std::fs::read_to_string(&config).map_err(|e| HarnessError::io(&config, e))?;
            let spec: SimSpec =
                serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", config.display())))?;
            let sim = spec.simulate(seed)?;
            create_dir(&out)?;
            sim.write(&out)?;
            println!("wrote {} rows x {} assets to {}", sim.returns.len(), sim.returns.n(), out.display());
        }
        Command::Ingest { prices, out } => {
            let panel = ingest(&prices)?;
            create_dir(&out)?;
            let path = out.join("returns.csv");
            panel.save_csv(&path)?;
            println!("wrote {} rows x {} assets to {}", panel.len(), panel.n(), path.display());
        }
        Command::Train {
            data,
            seed,
            checkpoint,
            out,
        } => {
            let mut cfg = data.experiment()?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            cfg.validate()?;
            let panel = single_portfolio(&cfg)?;
            let s = split(&panel, &cfg.split)?;
            let mut model = VhvmModel::new(cfg.vhvm.model_config(panel.n()), cfg.seed).map_err(model_error)?;
            let train_cfg = vhvm_core::vhvm::TrainConfig {
                seed: cfg.seed,
                ..cfg.vhvm.train.clone()
            };
            let log = train(&mut model, &s.train, &s.valid, &train_cfg).map_err(model_error)?;
            if let Some(parent) = checkpoint.parent().filter(|p| !p.as_os_str().is_empty()) {
                create_dir(parent)?;
            }
            model.save(&checkpoint).map_err(model_error)?;
            if let Some(out) = out {
                create_dir(&out)?;
                let path = out.join("train_log.jsonl");
                std::fs::write(&path, log.to_jsonl()).map_err(|e| HarnessError::io(&path, e))?;
            }
            let best = &log.epochs[log.best_epoch];
            println!(
                "best epoch {} of {}: train elbo {:.3}, valid ll {:.3}",
                log.best_epoch,
                log.epochs.len() - 1,
                best.train_elbo,
                best.valid_ll
            );
        }
        Command::Forecast { checkpoint, panel, out } => {
            let model = load_checkpoint(&checkpoint)?;
            let history = ReturnsPanel::load_csv(&panel)?;
            let cov = forecast_one_step(&model, &history).map_err(model_error)?;
            let value = json!({
                "after": history.timestamps().last(),
                "symbols": history.symbols(),
                "covariance": cov,
            });
            match out {
                Some(dir) => {
                    create_dir(&dir)?;
                    write_json(&dir.join("forecast.json"), &value)?;
                }
                None => println!("{}", serde_json::to_string_pretty(&value)?),
            }
        }
        Command::Evaluate {
            data,
            checkpoint,
            include_2pi,
            out,
        } => {
            let cfg = data.experiment()?;
            cfg.validate()?;
            let model = load_checkpoint(&checkpoint)?;
            let panel = single_portfolio(&cfg)?;
            let s = split(&panel, &cfg.split)?;
            let ll = evaluate_sequence(&model, &s.test, &s.warmup(), include_2pi || cfg.include_2pi)
                .map_err(model_error)?;
            println!("{} | VHVM {:.3}", panel.symbols().join(", "), ll.total);
            if let Some(dir) = out {
                create_dir(&dir)?;
                let value = json!({
                    "portfolio": panel.symbols().join(", "),
                    "test_rows": s.test.len(),
                    "include_2pi": include_2pi || cfg.include_2pi,
                    "cumulative_ll": ll.total,
                    "per_step_ll": ll.per_step,
                });
                write_json(&dir.join("evaluation.json"), &value)?;
            }
        }
        Command::Benchmark {
            config,
            seed,
            include_2pi,
            out,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            cfg.include_2pi |= include_2pi;
            let dir = out
                .or_else(|| cfg.output_dir.clone())
                .ok_or_else(|| HarnessError::Config("--out or output_dir is required".into()))?;
            let result = run_experiment(&cfg)?;
            result.write(&dir)?;
            print!("{}", result.report.format_table());
            let failed = result
                .report
                .portfolios
                .iter()
                .flat_map(|p| &p.models)
                .filter(|m| m.error.is_some())
                .count();
            if failed > 0 {
                eprintln!("{failed} model runs failed; see report.json");
                return Ok(ExitCode::from(3));
            }
        }
        Command::Report { reports, out } => {
            let mut scores = Vec::new();
            for path in &reports {
                let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
                match serde_json::from_str::<EvalReport>(&text) {
                    Ok(r) => scores.extend(r.portfolios.iter().map(|p| p.scores())),
                    Err(_) => {
                        let list: Vec<PortfolioScores> = serde_json::from_str(&text)
                            .map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))?;
                        scores.extend(list);
                    }
                }
            }
            let table = rank_report(&scores)?;
            print!("{}", table.format());
            if let Some(dir) = out {
                create_dir(&dir)?;
                write_json(&dir.join("ranks.json"), &table)?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Usage => 1,
                ErrorClass::Data => 2,
                ErrorClass::Model => 3,
            })
        }
    }
}
