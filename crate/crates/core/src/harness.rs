//! Experiment configuration, convergence runs, self-tests and report files.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::disorder::{gamma_fgn, read_dump, Covariance, DisorderField, FgnCovariance};
use crate::error::{Error, Result};
use crate::numeric::{ks_pvalue, ks_statistic, mean_stderr};
use crate::polymer::{
    env_moment_oracle, estimate_partition, exact_variance_s1, EnvMoment, Mode, PartitionMode, PolymerParams,
};
use crate::rng::derive_key;
use crate::she_oracle::{
    default_epsilon, silt_exponential_moment, skorohod_norm, skorohod_second_moment, Continuum, ContinuumParams,
    MomentSeries, PathSampler, NORM1_TOL,
};
use crate::stable_walk::{calibrate_c_rho, IncrementLaw};

/// Environment variable overriding the worker count.
pub const ENV_WORKERS: &str = "FRACPOLYMER_WORKERS";
/// Environment variable overriding the output directory.
pub const ENV_OUTPUT_DIR: &str = "FRACPOLYMER_OUTPUT_DIR";

/// Acceptance thresholds used by [`run_convergence`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Largest relative error of the exact variance against the oracle at the largest `N`.
    pub variance_rel: f64,
    /// Largest accepted `|z|` for Monte Carlo comparisons.
    pub z_max: f64,
    /// Significance level of the Kolmogorov–Smirnov stabilization check.
    pub ks_alpha: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { variance_rel: 0.05, z_max: 3.0, ks_alpha: 0.01 }
    }
}

/// A convergence experiment. Serialized as JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    #[serde(rename = "H")]
    pub h: f64,
    pub rho: f64,
    pub beta: f64,
    #[serde(default)]
    pub x0: f64,
    #[serde(rename = "N_grid")]
    pub n_grid: Vec<usize>,
    #[serde(rename = "fields_per_N")]
    pub fields_per_n: usize,
    pub paths_per_field: usize,
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Atom at zero of the heavy-tailed step law (ignored for `rho = 2`).
    #[serde(default = "default_zero_mass")]
    pub zero_mass: f64,
    /// Path samples (or path pairs) for the environment-moment oracles.
    #[serde(default = "default_moment_samples")]
    pub moment_samples: usize,
    /// Paths for the continuum first-moment estimate.
    #[serde(default = "default_silt_paths")]
    pub silt_paths: usize,
    /// Write field dumps for the first field at each `N`.
    #[serde(default)]
    pub dump_fields: bool,
}

fn default_workers() -> usize {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_zero_mass() -> f64 {
    0.5
}

fn default_moment_samples() -> usize {
    20_000
}

fn default_silt_paths() -> usize {
    4_000
}

impl ExperimentConfig {
    /// Default Stratonovich experiment.
    pub fn stratonovich_default() -> Self {
        Self {
            mode: Mode::Stratonovich,
            h: 0.85,
            rho: 2.0,
            beta: 0.5,
            x0: 0.0,
            n_grid: vec![256, 1024, 4096],
            fields_per_n: 200,
            paths_per_field: 64,
            seed: 1,
            workers: 1,
            output_dir: default_output_dir(),
            tolerances: Tolerances::default(),
            zero_mass: default_zero_mass(),
            moment_samples: default_moment_samples(),
            silt_paths: default_silt_paths(),
            dump_fields: false,
        }
    }

    /// Default Skorohod experiment.
    pub fn skorohod_default() -> Self {
        Self { mode: Mode::Skorohod, h: 0.6, rho: 1.5, ..Self::stratonovich_default() }
    }

    /// Read and validate a JSON config.
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply the worker-count and output-directory environment overrides.
    pub fn apply_env_overrides(&mut self) -> Result<()> {
        if let Ok(w) = std::env::var(ENV_WORKERS) {
            self.workers = w.parse().map_err(|_| Error::Config(format!("{ENV_WORKERS} = {w:?} is not a positive integer")))?;
        }
        if let Ok(d) = std::env::var(ENV_OUTPUT_DIR) {
            self.output_dir = PathBuf::from(d);
        }
        Ok(())
    }

    pub fn params(&self, big_n: usize) -> Result<PolymerParams> {
        PolymerParams::new(big_n, self.beta, self.h, self.rho, self.x0)
    }

    /// Check the gates of the chosen mode and the shape of the grid.
    pub fn validate(&self) -> Result<()> {
        let p = self.params(1).map_err(|e| Error::Config(e.to_string()))?;
        p.check_gate(self.mode)?;
        if self.n_grid.is_empty() {
            return Err(Error::Config("N_grid must not be empty".into()));
        }
        if let Some(n) = self.n_grid.iter().find(|n| !n.is_power_of_two() || **n < 2) {
            return Err(Error::Config(format!("N_grid entries must be dyadic and at least 2, got {n}")));
        }
        if !self.n_grid.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config("N_grid must be strictly increasing".into()));
        }
        if self.fields_per_n < 4 || self.paths_per_field < 2 || self.moment_samples < 2 || self.silt_paths < 2 {
            return Err(Error::Config("need fields_per_N >= 4 and at least 2 paths or samples everywhere".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if !(self.zero_mass > 0.0 && self.zero_mass < 1.0) {
            return Err(Error::Config("zero_mass must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Names of the checks this configuration runs, in report order.
    pub fn checks(&self) -> Vec<Check> {
        let mut c = vec![Check::Variance, Check::WickMean, Check::SecondMoment];
        if self.mode == Mode::Stratonovich {
            c.push(Check::FirstMoment);
        }
        c.push(Check::KsStability);
        c
    }
}

/// The convergence checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    /// Exact variance of the first chaos term against the order-one norm.
    Variance,
    /// Grand mean of the Wick-corrected partition function against one.
    WickMean,
    /// Second moment of the Wick-corrected partition function against the chaos series.
    SecondMoment,
    /// Mean partition function against the continuum Feynman–Kac moment.
    FirstMoment,
    /// Two-sample KS statistic between partition-function samples at consecutive `N`.
    KsStability,
}

impl Check {
    pub fn name(&self) -> &'static str {
        match self {
            Check::Variance => "variance",
            Check::WickMean => "wick_mean",
            Check::SecondMoment => "second_moment",
            Check::FirstMoment => "first_moment",
            Check::KsStability => "ks_stability",
        }
    }

    /// Deterministic checks have an error bound rather than a standard error.
    pub fn deterministic(&self) -> bool {
        matches!(self, Check::Variance)
    }

    /// Checks whose discrepancy trend counts toward the overall verdict.
    pub fn trend_enforced(&self) -> bool {
        matches!(self, Check::Variance | Check::SecondMoment)
    }
}

/// One `(N, check)` outcome. For the variance check `z` is the relative
/// error; for the KS check `estimate` is the statistic and `z` its p-value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckRecord {
    #[serde(rename = "N")]
    pub n: usize,
    pub check: Check,
    pub estimate: f64,
    pub stderr: f64,
    pub oracle: f64,
    pub z: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Trend of the discrepancy of one check along the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrendVerdict {
    pub check: Check,
    pub errors: Vec<f64>,
    /// Discrepancy non-increasing over the last two refinements.
    pub non_increasing: bool,
    /// Whether this verdict counts toward the overall result.
    pub enforced: bool,
}

/// Run metadata that is not part of the reproducible payload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunEnvironment {
    pub seed: u64,
    pub workers: usize,
    pub version: String,
    pub wall_time_s: f64,
}

/// Continuum quantities shared by all `N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSummary {
    pub c_rho: f64,
    pub norm1: f64,
    pub series: MomentSeries,
}

/// Complete result of [`run_convergence`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub oracle: OracleSummary,
    pub records: Vec<CheckRecord>,
    pub trends: Vec<TrendVerdict>,
    pub pass: bool,
    pub environment: RunEnvironment,
}

impl RunReport {
    /// JSON of everything that must be reproducible: the report without
    /// wall time and worker count.
    pub fn payload_json(&self) -> Result<String> {
        let mut r = self.clone();
        r.environment.wall_time_s = 0.0;
        r.environment.workers = 0;
        r.config.workers = 0;
        r.config.output_dir = PathBuf::new();
        Ok(serde_json::to_string(&r)?)
    }

    /// Parse a report and check its structural invariants.
    pub fn validate_json(text: &str) -> Result<Self> {
        let r: RunReport = serde_json::from_str(text)?;
        let checks = r.config.checks();
        if r.records.len() != r.config.n_grid.len() * checks.len() {
            return Err(Error::Config(format!("expected {} records, found {}", r.config.n_grid.len() * checks.len(), r.records.len())));
        }
        for rec in &r.records {
            if !(rec.stderr >= 0.0) || !r.config.n_grid.contains(&rec.n) || !checks.contains(&rec.check) {
                return Err(Error::Config(format!("malformed record {rec:?}")));
            }
        }
        if r.trends.len() != checks.len() {
            return Err(Error::Config("one trend verdict per check expected".into()));
        }
        Ok(r)
    }
}

/// Discrepancy non-increasing over the last two steps of the grid.
pub fn non_increasing_tail(errors: &[f64]) -> bool {
    let k = errors.len();
    let tail = &errors[k.saturating_sub(3)..];
    tail.windows(2).all(|w| w[1].abs() <= w[0].abs())
}

/// Distance of `x` from the interval `[lo, hi]`.
fn distance_to_interval(x: f64, lo: f64, hi: f64) -> f64 {
    if x < lo {
        lo - x
    } else if x > hi {
        x - hi
    } else {
        0.0
    }
}

fn z_score(diff: f64, se: f64) -> f64 {
    if diff == 0.0 {
        0.0
    } else if se > 0.0 {
        diff / se
    } else {
        f64::MAX.copysign(diff)
    }
}

/// Run every check of the configuration at every `N` on a pool of `workers` threads.
pub fn run_convergence(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut report = pool.install(|| run_inner(config))?;
    report.environment.wall_time_s = start.elapsed().as_secs_f64();
    Ok(report)
}

fn run_inner(config: &ExperimentConfig) -> Result<RunReport> {
    let law = IncrementLaw::new(config.rho, config.zero_mass)?;
    let c_rho = calibrate_c_rho(&law)?;
    let cont = Continuum::new(ContinuumParams { h: config.h, rho: config.rho, c_rho, beta: config.beta, x0: config.x0 })?;
    let norm1 = skorohod_norm(1, &cont, NORM1_TOL)?.value;
    let series = skorohod_second_moment(&cont, 2)?;
    let cov: Arc<dyn Covariance> = Arc::new(FgnCovariance::new(config.h)?);
    let tol = config.tolerances;
    let checks = config.checks();
    let mut records = Vec::new();
    let mut prev_z: Option<Vec<f64>> = None;
    for &n in &config.n_grid {
        let p = config.params(n)?;
        let nseed = derive_key(config.seed, &[n as u64]);
        for &check in &checks {
            let rec = match check {
                Check::Variance => {
                    let v = exact_variance_s1(&p, &law, cov.as_ref())?;
                    let oracle = config.beta * config.beta * norm1;
                    let rel = if oracle == 0.0 { v.value.abs() } else { (v.value - oracle) / oracle };
                    let last = n == *config.n_grid.last().unwrap();
                    CheckRecord { n, check, estimate: v.value, stderr: v.error, oracle, z: rel, pass: !last || rel.abs() < tol.variance_rel, note: None }
                }
                Check::WickMean => {
                    let (wick, plain) = field_samples(config, &p, &law, &cov, nseed)?;
                    let (m, se) = mean_stderr(&wick);
                    let z = z_score(m - 1.0, se);
                    prev_z = Some(match prev_z.take() {
                        Some(old) => {
                            records_ks_pending(&mut records, n, &old, &plain, tol, true);
                            plain
                        }
                        None => {
                            let half = plain.len() / 2;
                            records_ks_pending(&mut records, n, &plain[..half], &plain[half..], tol, false);
                            plain
                        }
                    });
                    CheckRecord { n, check, estimate: m, stderr: se, oracle: 1.0, z, pass: z.abs() <= tol.z_max, note: None }
                }
                Check::SecondMoment => {
                    let e = env_moment_oracle(&p, &law, cov.as_ref(), config.moment_samples, EnvMoment::SecondMomentZTilde, derive_key(nseed, &[3]))?;
                    let lo = series.value;
                    let hi = series.value + series.remainder_bound;
                    let se = (e.stderr.powi(2) + series.stderr.powi(2)).sqrt();
                    let z = z_score(distance_to_interval(e.value, lo, hi), se);
                    let note = (!series.remainder_within_budget).then(|| format!("remainder bound {:.3e} exceeds a tenth of the order-two term", series.remainder_bound));
                    CheckRecord { n, check, estimate: e.value, stderr: e.stderr, oracle: lo, z, pass: z.abs() <= tol.z_max, note }
                }
                Check::FirstMoment => {
                    let e = env_moment_oracle(&p, &law, cov.as_ref(), config.moment_samples, EnvMoment::MeanZ, derive_key(nseed, &[4]))?;
                    let s = silt_exponential_moment(&cont, n.max(64), default_epsilon(n.max(64), config.rho), config.silt_paths, derive_key(nseed, &[5]), PathSampler::Walk(&law))?;
                    let se = (e.stderr.powi(2) + s.stderr.powi(2)).sqrt();
                    let z = z_score(e.value - s.value, se);
                    let note = (!s.stable).then(|| format!("refinement moved the continuum estimate to {:.6} +- {:.6}", s.refined_value, s.refined_stderr));
                    CheckRecord { n, check, estimate: e.value, stderr: e.stderr, oracle: s.value, z, pass: z.abs() <= tol.z_max && s.stable, note }
                }
                Check::KsStability => continue,
            };
            records.push(rec);
        }
    }
    // Place each KS record after the other checks of its N.
    records.sort_by_key(|r| (r.n, checks.iter().position(|c| *c == r.check).unwrap()));
    let trends: Vec<TrendVerdict> = checks
        .iter()
        .map(|&c| {
            let errors: Vec<f64> = records
                .iter()
                .filter(|r| r.check == c)
                .map(|r| match c {
                    Check::KsStability => r.estimate,
                    _ => r.z.abs(),
                })
                .collect();
            TrendVerdict { check: c, non_increasing: non_increasing_tail(&errors), errors, enforced: c.trend_enforced() }
        })
        .collect();
    if config.dump_fields {
        std::fs::create_dir_all(&config.output_dir).map_err(|e| Error::io(&config.output_dir, e))?;
        for &n in &config.n_grid {
            let p = config.params(n)?;
            let field = DisorderField::new(cov.clone(), n, derive_key(derive_key(config.seed, &[n as u64]), &[1, 0]))?;
            let w = 4 * (n as f64).powf(1.0 / config.rho).ceil() as i64;
            field.dump(&config.output_dir.join(format!("field_N{n}.dfld")), p.k() - w, p.k() + w)?;
        }
    }
    let pass = records.iter().all(|r| r.pass) && trends.iter().all(|t| !t.enforced || t.non_increasing);
    Ok(RunReport {
        config: config.clone(),
        oracle: OracleSummary { c_rho, norm1, series },
        records,
        trends,
        pass,
        environment: RunEnvironment { seed: config.seed, workers: config.workers, version: env!("CARGO_PKG_VERSION").to_string(), wall_time_s: 0.0 },
    })
}

fn records_ks_pending(records: &mut Vec<CheckRecord>, n: usize, a: &[f64], b: &[f64], tol: Tolerances, consecutive: bool) {
    let d = ks_statistic(a, b);
    let pv = ks_pvalue(d, a.len(), b.len());
    let note = Some(if consecutive { "against the previous N".to_string() } else { "split halves at the first N".to_string() });
    records.push(CheckRecord { n, check: Check::KsStability, estimate: d, stderr: 0.0, oracle: 0.0, z: pv, pass: pv >= tol.ks_alpha, note });
}

/// Per-field Wick-corrected and plain partition functions at one `N`.
fn field_samples(config: &ExperimentConfig, p: &PolymerParams, law: &IncrementLaw, cov: &Arc<dyn Covariance>, nseed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    let synth = crate::disorder::SiteSynthesizer::new(cov.as_ref(), p.big_n)?;
    let out: Vec<Result<(f64, f64)>> = (0..config.fields_per_n)
        .into_par_iter()
        .map(|f| {
            let field = DisorderField::with_synthesizer(cov.clone(), synth.clone(), derive_key(nseed, &[1, f as u64]), None);
            let pseed = derive_key(nseed, &[2, f as u64]);
            let w = estimate_partition(p, &field, law, config.paths_per_field, PartitionMode::WickCorrected, pseed)?;
            let z = estimate_partition(p, &field, law, config.paths_per_field, PartitionMode::Plain, pseed)?;
            Ok((w.value, z.value))
        })
        .collect();
    let pairs: Vec<(f64, f64)> = out.into_iter().collect::<Result<_>>()?;
    Ok(pairs.into_iter().unzip())
}

/// Output format of [`emit_report`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

/// CSV text with one row per `(N, check)`.
pub fn report_csv(report: &RunReport) -> String {
    let mut s = String::from("N,check,estimate,stderr,oracle,z,pass\n");
    for r in &report.records {
        s.push_str(&format!(
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
            r.n,
            r.check.name(),
            r.estimate,
            r.stderr,
            r.oracle,
            r.z,
            r.pass
        ));
    }
    s
}

/// Write `report.json` or `report.csv` into `dir` atomically; returns the path written.
pub fn emit_report(report: &RunReport, format: ReportFormat, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (name, text) = match format {
        ReportFormat::Json => ("report.json", serde_json::to_string_pretty(report)?),
        ReportFormat::Csv => ("report.csv", report_csv(report)),
    };
    let path = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    std::io::Write::write_all(&mut tmp, text.as_bytes()).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(&path).map_err(|e| Error::io(&path, e.error))?;
    Ok(path)
}

/// Outcome of one self-test check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// Faults injected into [`selftest_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Faults {
    /// Multiplier applied to the environment covariance.
    pub gamma_scale: f64,
}

impl Default for Faults {
    fn default() -> Self {
        Self { gamma_scale: 1.0 }
    }
}

/// Reduced-scale invariant suite of every module.
pub fn selftest() -> Vec<SelfCheck> {
    selftest_with(Faults::default())
}

/// [`selftest`] with injected faults.
pub fn selftest_with(faults: Faults) -> Vec<SelfCheck> {
    crate::selftest::run(faults)
}

/// Read a field dump back and compare it with the field it came from.
pub fn dump_roundtrip(field: &DisorderField, dir: &Path, lo: i64, hi: i64) -> Result<bool> {
    let path = dir.join("roundtrip.dfld");
    field.dump(&path, lo, hi)?;
    let d = read_dump(&path)?;
    Ok(d.sites.iter().all(|(k, seq)| field.site(*k).iter().zip(seq).all(|(a, b)| a.to_bits() == b.to_bits())))
}

/// `gamma(0)` of the reference fGn covariance, independent of any injected scale.
pub fn reference_gamma0(h: f64) -> Result<f64> {
    gamma_fgn(h, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(mode: Mode) -> ExperimentConfig {
        let base = if mode == Mode::Stratonovich { ExperimentConfig::stratonovich_default() } else { ExperimentConfig::skorohod_default() };
        ExperimentConfig { n_grid: vec![16, 32, 64], fields_per_n: 16, paths_per_field: 8, moment_samples: 200, silt_paths: 20, ..base }
    }

    #[test]
    fn config_json_roundtrip_and_gates() {
        let c = ExperimentConfig::stratonovich_default();
        let text = serde_json::to_string(&c).unwrap();
        assert!(text.contains(r#""N_grid""#) && text.contains(r#""H""#));
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), c);
        let boundary = ExperimentConfig { h: 0.75, ..c.clone() };
        let msg = boundary.validate().unwrap_err().to_string();
        assert!(msg.contains("> 1/2 strictly"), "{msg}");
        assert!(ExperimentConfig { n_grid: vec![64, 32], ..c.clone() }.validate().is_err());
        assert!(ExperimentConfig { n_grid: vec![48], ..c }.validate().is_err());
        assert!(ExperimentConfig::skorohod_default().validate().is_ok());
    }

    #[test]
    fn zero_beta_run_passes_trivially() {
        let c = ExperimentConfig { beta: 0.0, ..small(Mode::Skorohod) };
        let r = run_convergence(&c).unwrap();
        assert!(r.pass, "{:#?}", r.records);
        for rec in &r.records {
            match rec.check {
                Check::KsStability => assert_eq!(rec.estimate, 0.0),
                _ => assert_eq!(rec.z, 0.0, "{rec:?}"),
            }
        }
    }

    #[test]
    fn report_files_and_validation() {
        let c = small(Mode::Skorohod);
        let r = run_convergence(&c).unwrap();
        assert_eq!(r.records.len(), 3 * 4);
        let dir = tempfile::tempdir().unwrap();
        let csv = emit_report(&r, ReportFormat::Csv, dir.path()).unwrap();
        let text = std::fs::read_to_string(csv).unwrap();
        assert_eq!(text.lines().count(), 1 + 12);
        let json = emit_report(&r, ReportFormat::Json, dir.path()).unwrap();
        let back = RunReport::validate_json(&std::fs::read_to_string(json).unwrap()).unwrap();
        assert_eq!(back, r);
        let row = text.lines().nth(1).unwrap();
        let est: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(est.to_bits(), r.records[0].estimate.to_bits());
    }

    #[test]
    fn selftest_passes_and_detects_faults() {
        let clean = selftest();
        assert!(clean.len() >= 25);
        for c in &clean {
            assert!(c.pass, "{}: {}", c.name, c.detail);
        }
        let faulty = selftest_with(Faults { gamma_scale: 1.5 });
        let failed: Vec<&str> = faulty.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        assert!(failed.contains(&"disorder.variance_matches_fgn"), "{failed:?}");
        assert!(failed.contains(&"polymer.exact_variance_vs_norm"), "{failed:?}");
    }

    #[test]
    fn trend_helper() {
        assert!(non_increasing_tail(&[3.0, 2.0, 1.0]));
        assert!(non_increasing_tail(&[0.1, 3.0, 2.0, 2.0]));
        assert!(!non_increasing_tail(&[3.0, 1.0, 2.0]));
        assert!(non_increasing_tail(&[1.0]));
    }
}
