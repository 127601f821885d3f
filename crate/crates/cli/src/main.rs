//! Command-line driver for convergence runs, self-tests and continuum oracles.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fracpolymer::harness::{emit_report, run_convergence, selftest, ExperimentConfig, ReportFormat};
use fracpolymer::polymer::{env_moment_oracle, EnvMoment, Mode};
use fracpolymer::she_oracle::{
    default_epsilon, silt_exponential_moment, skorohod_norm, skorohod_second_moment, Continuum, ContinuumParams,
    PathSampler, NORM1_TOL,
};
use fracpolymer::stable_walk::{calibrate_c_rho, IncrementLaw};
use fracpolymer::{disorder::FgnCovariance, Error};
use serde_json::json;

#[derive(Parser)]
#[command(name = "fracpolymer", version, about = "Convergence harness for long-range directed polymers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every convergence check and write report.json and report.csv.
    Converge {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Write the disorder of the first field at each N.
        #[arg(long)]
        dump_fields: bool,
    },
    /// Run the reduced-scale invariant suite.
    Selftest,
    /// Environment moments of the partition function at each N of the grid.
    Moments {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
        /// 1 for the mean of Z, 2 for the second moment of the Wick-corrected Z.
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        m: u8,
    },
    /// Continuum quantities for the configuration.
    Oracle {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Checks,
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Gate(_) | Error::InvalidParameter(_) | Error::Json(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load(path: &PathBuf, common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::from_json_file(path).map_err(|e| Failure::Config(e.to_string()))?;
    cfg.apply_env_overrides()?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    if let Some(o) = &common.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, Failure> {
    rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(|e| Failure::Runtime(e.to_string()))
}

fn continuum(cfg: &ExperimentConfig) -> Result<(IncrementLaw, Continuum), Failure> {
    let law = IncrementLaw::new(cfg.rho, cfg.zero_mass)?;
    let c_rho = calibrate_c_rho(&law)?;
    let cont = Continuum::new(ContinuumParams { h: cfg.h, rho: cfg.rho, c_rho, beta: cfg.beta, x0: cfg.x0 })?;
    Ok((law, cont))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Converge { config, common, dump_fields } => {
            let mut cfg = load(&config, &common)?;
            cfg.dump_fields |= dump_fields;
            let report = run_convergence(&cfg)?;
            for r in &report.records {
                println!("N={:<6} {:<14} estimate={:.6e} oracle={:.6e} z={:+.3} {}", r.n, r.check.name(), r.estimate, r.oracle, r.z, if r.pass { "pass" } else { "FAIL" });
            }
            for t in &report.trends {
                println!("trend {:<14} non_increasing={} enforced={}", t.check.name(), t.non_increasing, t.enforced);
            }
            let json = emit_report(&report, ReportFormat::Json, &cfg.output_dir)?;
            let csv = emit_report(&report, ReportFormat::Csv, &cfg.output_dir)?;
            println!("wrote {} and {}", json.display(), csv.display());
            if report.pass {
                Ok(())
            } else {
                Err(Failure::Checks)
            }
        }
        Command::Selftest => {
            let checks = selftest();
            let failed = checks.iter().filter(|c| !c.pass).count();
            for c in &checks {
                println!("{} {:<44} {}", if c.pass { "pass" } else { "FAIL" }, c.name, c.detail);
            }
            println!("{} checks, {failed} failed", checks.len());
            if failed == 0 {
                Ok(())
            } else {
                Err(Failure::Checks)
            }
        }
        Command::Moments { config, common, m } => {
            let cfg = load(&config, &common)?;
            let law = IncrementLaw::new(cfg.rho, cfg.zero_mass)?;
            let cov = FgnCovariance::new(cfg.h)?;
            let which = if m == 1 { EnvMoment::MeanZ } else { EnvMoment::SecondMomentZTilde };
            pool(cfg.workers)?.install(|| -> Result<(), Failure> {
                for &n in &cfg.n_grid {
                    let e = env_moment_oracle(&cfg.params(n)?, &law, &cov, cfg.moment_samples, which, cfg.seed)?;
                    println!("{}", json!({ "N": n, "m": m, "value": e.value, "stderr": e.stderr, "samples": e.samples }));
                }
                Ok(())
            })
        }
        Command::Oracle { config, common } => {
            let cfg = load(&config, &common)?;
            let (law, cont) = continuum(&cfg)?;
            pool(cfg.workers)?.install(|| -> Result<(), Failure> {
                let norm1 = skorohod_norm(1, &cont, NORM1_TOL)?;
                let series = skorohod_second_moment(&cont, 2)?;
                let mut out = json!({
                    "c_rho": cont.params.c_rho,
                    "theta": cont.params.theta(),
                    "norm1": norm1.value,
                    "variance_limit": cfg.beta * cfg.beta * norm1.value,
                    "second_moment": series,
                });
                if cfg.mode == Mode::Stratonovich {
                    let n = *cfg.n_grid.last().unwrap();
                    let s = silt_exponential_moment(&cont, n, default_epsilon(n, cfg.rho), cfg.silt_paths, cfg.seed, PathSampler::Walk(&law))?;
                    out["first_moment"] = serde_json::to_value(&s).map_err(|e| Failure::Runtime(e.to_string()))?;
                }
                println!("{}", serde_json::to_string_pretty(&out).map_err(|e| Failure::Runtime(e.to_string()))?);
                Ok(())
            })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks) => ExitCode::from(1),
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
