use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use structid::grid::{validate_dataset, GridDataset};
use structid::harness::{overlay_toml, run_experiment, write_atomic, write_plots, ExperimentConfig, ExperimentReport};
use structid::pipeline::{fit_dictionary, FitOptions, Form};
use structid::sim::{simulate, SimConfig};
use structid::systems::System;
use structid::Error;

#[derive(Parser)]
#[command(name = "structid", version, about = "Structure-constrained sparse identification of ODEs and PDEs")]
struct Cli {
    /// Base seed for noise (benchmark) or initial-condition variants (simulate).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a benchmark dataset.
    Simulate {
        system: System,
        /// TOML overrides of the simulator settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit one dictionary to one dataset.
    Identify {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        dictionary: Library,
        #[arg(long, value_enum)]
        form: FormArg,
        /// System whose libraries to use, when the dataset carries no tag.
        #[arg(long)]
        system: Option<System>,
        /// TOML overrides of the fit options.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a full noise sweep and write CSV, JSON and plots.
    Benchmark {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-render boxplots from a JSON report.
    Plot {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Library {
    Baseline,
    Prior,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormArg {
    Strong,
    Weak,
}

impl From<FormArg> for Form {
    fn from(f: FormArg) -> Self {
        match f {
            FormArg::Strong => Form::Strong,
            FormArg::Weak => Form::Weak,
        }
    }
}

#[derive(Serialize)]
struct IdentifiedTerm {
    name: String,
    coefficient: f64,
}

#[derive(Serialize)]
struct ModelFile {
    system: System,
    dictionary: &'static str,
    form: Form,
    terms: Vec<IdentifiedTerm>,
    support: Vec<usize>,
    coefficients: Vec<f64>,
    residual_sq: f64,
    theta_star: Vec<usize>,
    diagnostics: Vec<String>,
}

fn read_text(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate { system, config, out } => {
            let mut cfg = SimConfig::for_system(system);
            if let Some(path) = config {
                cfg = overlay_toml(&cfg, &read_text(&path)?)?;
            }
            if cfg.system != system {
                return Err(Error::Config(format!("config names {}, command names {system}", cfg.system)));
            }
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            let d = simulate(&cfg)?;
            std::fs::create_dir_all(&out)?;
            let path = out.join(format!("{system}.grid"));
            d.write_container(&path)?;
            write_atomic(out.join(format!("{system}.sim.json")), serde_json::to_string_pretty(&cfg)?.as_bytes())?;
            println!("{} {:?} -> {}", system, d.values.shape(), path.display());
        }
        Command::Identify {
            data,
            dictionary,
            form,
            system,
            config,
            out,
        } => {
            let d = GridDataset::read_container(&data)?;
            for diag in validate_dataset(&d) {
                log::warn!("{diag}");
            }
            let system = match (system, &d.system) {
                (Some(s), _) => s,
                (None, Some(tag)) => tag.parse()?,
                (None, None) => return Err(Error::Config("dataset has no system tag; pass --system".into())),
            };
            let prior = matches!(dictionary, Library::Prior);
            let dict = system.library(prior)?;
            let mut opts = FitOptions::for_system(system);
            if let Some(path) = config {
                opts = overlay_toml(&opts, &read_text(&path)?)?;
            }
            opts.regression.validate()?;
            let fit = fit_dictionary(&dict, &d, form.into(), &opts)?;
            let m = &fit.model;
            let terms: Vec<IdentifiedTerm> = m
                .support
                .iter()
                .zip(&m.coefficients)
                .map(|(&j, &c)| IdentifiedTerm {
                    name: dict.terms[j].name.clone(),
                    coefficient: c,
                })
                .collect();
            for t in &terms {
                println!("{:>14.6}  {}", t.coefficient, t.name);
            }
            let file = ModelFile {
                system,
                dictionary: if prior { "prior" } else { "baseline" },
                form: form.into(),
                terms,
                support: m.support.clone(),
                coefficients: m.coefficients.clone(),
                residual_sq: m.residual_sq,
                theta_star: fit.groups.iter().map(|g| g.report.theta_star).collect(),
                diagnostics: fit.diagnostics.clone(),
            };
            if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            write_atomic(&out, serde_json::to_string_pretty(&file)?.as_bytes())?;
        }
        Command::Benchmark { config, out } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let dir = out
                .or_else(|| cfg.output_dir.clone())
                .ok_or_else(|| Error::Config("no output directory: pass --out or set output_dir".into()))?;
            let report = run_experiment(&cfg)?;
            report.write_all(&dir)?;
            for a in &report.aggregates {
                println!(
                    "{} {:<5} nsr {:<5} median TPR {:<6} ok {} failed {}",
                    report.system,
                    a.config,
                    a.nsr,
                    a.tpr_median.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into()),
                    a.n_ok,
                    a.n_failed
                );
            }
            println!("wrote {}", dir.display());
        }
        Command::Plot { report, out } => {
            let text = std::fs::read_to_string(&report)?;
            let r = ExperimentReport::from_json(&text)?;
            write_plots(&r, &out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::UnknownSystem(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
