//! The discrete polymer: pinned backward walks, Hamiltonians, weighted
//! intersection local times, partition functions, chaos terms, U-statistics
//! and exact small-`N` oracles.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::disorder::{gamma_table, Covariance, DisorderField};
use crate::error::{Error, Result};
use crate::kernel_space::BlockGrid;
use crate::numeric::{exp_mean_stderr, log_sum_exp, mean_stderr, pairwise_sum};
use crate::rng::{substream, Stream};
use crate::stable_walk::{return_probabilities, IncrementLaw};
use crate::wick_algebra::{hermite, wick_value_general};

/// Paths drawn from one random substream.
pub const PATH_BLOCK: usize = 64;
/// Largest `N` accepted by exact enumeration.
pub const ENUM_MAX_N: usize = 8;

const TAG_PATHS: u64 = 0x7061_7468;
const TAG_PAIRS: u64 = 0x7061_6972;

/// Which solution concept a run targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Stratonovich,
    Skorohod,
}

/// Model parameters and the derived intermediate-disorder scaling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolymerParams {
    pub big_n: usize,
    pub beta: f64,
    pub h: f64,
    pub rho: f64,
    pub x0: f64,
}

impl PolymerParams {
    pub fn new(big_n: usize, beta: f64, h: f64, rho: f64, x0: f64) -> Result<Self> {
        if big_n == 0 {
            return Err(Error::InvalidParameter("N must be at least 1".into()));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta = {beta} must be finite and nonnegative")));
        }
        if !(h > 0.5 && h <= 1.0) {
            return Err(Error::InvalidParameter(format!("H = {h} must lie in (1/2, 1]")));
        }
        if !(rho > 1.0 && rho <= 2.0) {
            return Err(Error::InvalidParameter(format!("rho = {rho} must lie in (1, 2]")));
        }
        if !x0.is_finite() {
            return Err(Error::InvalidParameter("x0 must be finite".into()));
        }
        Ok(Self { big_n, beta, h, rho, x0 })
    }

    /// `theta = H - 1/(2 rho)`.
    pub fn theta(&self) -> f64 {
        self.h - 0.5 / self.rho
    }

    /// `beta N^(-theta)`.
    pub fn beta_hat(&self) -> f64 {
        self.beta * (self.big_n as f64).powf(-self.theta())
    }

    /// Pinned endpoint `round(N^(1/rho) x0)`.
    pub fn k(&self) -> i64 {
        ((self.big_n as f64).powf(1.0 / self.rho) * self.x0).round() as i64
    }

    /// Same parameters at a different `N`.
    pub fn with_n(&self, big_n: usize) -> Self {
        Self { big_n, ..*self }
    }

    /// Reject parameters outside the hypotheses of the chosen solution concept.
    pub fn check_gate(&self, mode: Mode) -> Result<()> {
        let theta = self.theta();
        match mode {
            Mode::Stratonovich if !(theta > 0.5) => Err(Error::Gate(format!(
                "stratonovich mode needs theta = H - 1/(2 rho) > 1/2 strictly, got theta = {theta} (H = {}, rho = {})",
                self.h, self.rho
            ))),
            Mode::Skorohod if !(theta > 0.0 && self.rho > 1.0) => Err(Error::Gate(format!(
                "skorohod mode needs theta = H - 1/(2 rho) > 0 and rho > 1 strictly, got theta = {theta}, rho = {}",
                self.rho
            ))),
            _ => Ok(()),
        }
    }
}

/// Plain or Wick-corrected partition function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMode {
    Plain,
    WickCorrected,
}

/// Monte Carlo estimate of a partition function for one field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionEstimate {
    pub value: f64,
    pub stderr: f64,
    pub paths: usize,
    pub mode: PartitionMode,
}

/// A Monte Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub samples: usize,
}

/// A deterministic value with an error bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounded {
    pub value: f64,
    pub error: f64,
}

fn require_symmetric(law: &IncrementLaw) -> Result<()> {
    if !law.symmetric() {
        return Err(Error::InvalidParameter("pinned paths need a symmetric step law".into()));
    }
    Ok(())
}

/// `(S_1, ..., S_N)` of the backward walk pinned at `S_(N+1) = K`.
pub fn pinned_path(params: &PolymerParams, law: &IncrementLaw, rng: &mut Stream) -> Result<Vec<i64>> {
    require_symmetric(law)?;
    let mut p = law.sample_path(params.big_n, params.k(), rng);
    p.reverse();
    Ok(p)
}

/// `m` pinned paths, drawn in blocks of [`PATH_BLOCK`] from substreams of `seed`.
pub fn sample_paths(params: &PolymerParams, law: &IncrementLaw, m: usize, seed: u64) -> Result<Vec<Vec<i64>>> {
    require_symmetric(law)?;
    let blocks = m.div_ceil(PATH_BLOCK);
    let out: Vec<Vec<i64>> = (0..blocks)
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut rng = substream(seed, &[TAG_PATHS, b as u64]);
            let count = PATH_BLOCK.min(m - b * PATH_BLOCK);
            (0..count).map(move |_| {
                let mut p = law.sample_path(params.big_n, params.k(), &mut rng);
                p.reverse();
                p
            })
            .collect::<Vec<_>>()
        })
        .collect();
    Ok(out)
}

fn group_by_site(path: &[i64]) -> Vec<(i64, Vec<usize>)> {
    let mut idx: Vec<usize> = (0..path.len()).collect();
    idx.sort_by_key(|&i| (path[i], i));
    let mut out: Vec<(i64, Vec<usize>)> = Vec::new();
    for i in idx {
        match out.last_mut() {
            Some((s, v)) if *s == path[i] => v.push(i),
            _ => out.push((path[i], vec![i])),
        }
    }
    out
}

/// `sum_{i,j} gamma(i - j) 1{S_i = S_j}`, diagonal included. `gamma[n]` holds `gamma(n)` for `n < N`.
pub fn intersection_local_time(gamma: &[f64], path: &[i64]) -> f64 {
    let mut total = 0.0;
    for (_, times) in group_by_site(path) {
        let mut s = times.len() as f64 * gamma[0];
        for (a, &ta) in times.iter().enumerate() {
            for &tb in &times[a + 1..] {
                s += 2.0 * gamma[tb - ta];
            }
        }
        total += s;
    }
    total
}

/// `sum_{i,j} gamma(i - j) 1{S_i = S'_j}` for two paths of equal length.
pub fn mutual_local_time(gamma: &[f64], a: &[i64], b: &[i64]) -> f64 {
    let ga = group_by_site(a);
    let gb = group_by_site(b);
    let (mut i, mut j) = (0, 0);
    let mut total = 0.0;
    while i < ga.len() && j < gb.len() {
        match ga[i].0.cmp(&gb[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                for &ta in &ga[i].1 {
                    for &tb in &gb[j].1 {
                        total += gamma[ta.abs_diff(tb)];
                    }
                }
                i += 1;
                j += 1;
            }
        }
    }
    total
}

/// `sum_n omega(n, S_n)`.
pub fn hamiltonian(field: &DisorderField, path: &[i64]) -> f64 {
    let mut cache: HashMap<i64, Arc<[f64]>> = HashMap::new();
    let mut acc = 0.0;
    for (n, &s) in path.iter().enumerate() {
        let site = cache.entry(s).or_insert_with(|| field.site(s));
        acc += site[n];
    }
    acc
}

fn check_field(params: &PolymerParams, field: &DisorderField) -> Result<()> {
    if field.len() != params.big_n {
        return Err(Error::InvalidParameter(format!("field length {} differs from N = {}", field.len(), params.big_n)));
    }
    Ok(())
}

/// Per-path log summand of the partition function.
fn log_summand(params: &PolymerParams, field: &DisorderField, gamma: &[f64], path: &[i64], mode: PartitionMode) -> f64 {
    let bh = params.beta_hat();
    let y = bh * hamiltonian(field, path);
    match mode {
        PartitionMode::Plain => y,
        PartitionMode::WickCorrected => y - 0.5 * bh * bh * intersection_local_time(gamma, path),
    }
}

/// Partition function estimated on the given paths.
pub fn partition_on_paths(params: &PolymerParams, field: &DisorderField, paths: &[Vec<i64>], mode: PartitionMode) -> Result<PartitionEstimate> {
    check_field(params, field)?;
    if paths.len() < 2 {
        return Err(Error::InvalidParameter("need at least 2 paths".into()));
    }
    let gamma = gamma_table(field.covariance(), params.big_n);
    let logs: Vec<f64> = paths.par_iter().map(|p| log_summand(params, field, &gamma, p, mode)).collect();
    let (_, value, stderr) = exp_mean_stderr(&logs);
    Ok(PartitionEstimate { value, stderr, paths: paths.len(), mode })
}

/// `Z` or the Wick-corrected `Z~` for one field, averaged over `m` pinned paths.
pub fn estimate_partition(params: &PolymerParams, field: &DisorderField, law: &IncrementLaw, m: usize, mode: PartitionMode, seed: u64) -> Result<PartitionEstimate> {
    if m < 2 {
        return Err(Error::InvalidParameter("need at least 2 paths".into()));
    }
    let paths = sample_paths(params, law, m, seed)?;
    partition_on_paths(params, field, &paths, mode)
}

fn finite_support(law: &IncrementLaw, big_n: usize) -> Result<Vec<(i64, f64)>> {
    let r = law.support_radius().ok_or_else(|| Error::InvalidParameter("exact enumeration needs a finite-support law".into()))? as i64;
    if big_n > ENUM_MAX_N {
        return Err(Error::SizeGuard(format!("exact enumeration limited to N <= {ENUM_MAX_N}, got {big_n}")));
    }
    Ok((-r..=r).map(|y| (y, law.weight(y))).filter(|&(_, w)| w > 0.0).collect())
}

/// Exact `E_S[...]` by depth-first enumeration of all backward paths.
pub fn enumerate_exact(params: &PolymerParams, field: &DisorderField, law: &IncrementLaw, mode: PartitionMode) -> Result<f64> {
    check_field(params, field)?;
    let steps = finite_support(law, params.big_n)?;
    let n = params.big_n;
    let gamma = gamma_table(field.covariance(), n);
    let omega: HashMap<i64, Arc<[f64]>> = {
        let r = law.support_radius().unwrap() as i64 * n as i64;
        (params.k() - r..=params.k() + r).map(|s| (s, field.site(s))).collect()
    };
    let bh = params.beta_hat();
    let mut leaves = Vec::with_capacity(steps.len().pow(n as u32));
    let mut path = vec![0i64; n];
    #[allow(clippy::too_many_arguments)]
    fn dfs(t: usize, pos: i64, lw: f64, h: f64, steps: &[(i64, f64)], omega: &HashMap<i64, Arc<[f64]>>, path: &mut [i64], out: &mut Vec<(f64, f64, Vec<i64>)>) {
        if t == 0 {
            out.push((lw, h, path.to_vec()));
            return;
        }
        for &(y, w) in steps {
            let s = pos + y;
            path[t - 1] = s;
            dfs(t - 1, s, lw + w.ln(), h + omega[&s][t - 1], steps, omega, path, out);
        }
    }
    let mut raw = Vec::new();
    dfs(n, params.k(), 0.0, 0.0, &steps, &omega, &mut path, &mut raw);
    for (lw, h, p) in raw {
        let mut l = lw + bh * h;
        if mode == PartitionMode::WickCorrected {
            l -= 0.5 * bh * bh * intersection_local_time(&gamma, &p);
        }
        leaves.push(l);
    }
    Ok(log_sum_exp(&leaves).exp())
}

/// Exact `E_S[...]` by an independent route: a transfer-matrix recursion for
/// the plain mode, and breadth-first expansion with the local-time
/// correction accumulated one step at a time for the Wick-corrected mode.
pub fn enumerate_exact_dp(params: &PolymerParams, field: &DisorderField, law: &IncrementLaw, mode: PartitionMode) -> Result<f64> {
    check_field(params, field)?;
    let steps = finite_support(law, params.big_n)?;
    let n = params.big_n;
    let bh = params.beta_hat();
    let cov = field.covariance();
    match mode {
        PartitionMode::Plain => {
            let mut w: HashMap<i64, f64> = HashMap::from([(params.k(), 1.0)]);
            for t in (1..=n).rev() {
                let mut next: HashMap<i64, f64> = HashMap::new();
                for (&s, &ws) in &w {
                    for &(y, p) in &steps {
                        *next.entry(s + y).or_insert(0.0) += ws * p;
                    }
                }
                for (s, v) in next.iter_mut() {
                    *v *= (bh * field.omega_at(t, *s)?).exp();
                }
                w = next;
            }
            let mut keys: Vec<_> = w.keys().copied().collect();
            keys.sort_unstable();
            Ok(pairwise_sum(&keys.iter().map(|k| w[k]).collect::<Vec<_>>()))
        }
        PartitionMode::WickCorrected => {
            // State: visited sites from time N down to t, and the log weight.
            let mut layer: Vec<(Vec<i64>, f64)> = vec![(vec![], 0.0)];
            for t in (1..=n).rev() {
                let mut next = Vec::with_capacity(layer.len() * steps.len());
                for (hist, lw) in &layer {
                    let pos = hist.last().copied().unwrap_or(params.k());
                    for &(y, p) in &steps {
                        let s = pos + y;
                        let mut corr = cov.gamma(0);
                        for (j, &u) in hist.iter().enumerate() {
                            if u == s {
                                let tu = n - j;
                                corr += 2.0 * cov.gamma((tu - t) as i64);
                            }
                        }
                        let l = lw + p.ln() + bh * field.omega_at(t, s)? - 0.5 * bh * bh * corr;
                        let mut h2 = hist.clone();
                        h2.push(s);
                        next.push((h2, l));
                    }
                }
                layer = next;
            }
            let logs: Vec<f64> = layer.into_iter().map(|(_, l)| l).collect();
            Ok(log_sum_exp(&logs).exp())
        }
    }
}

/// Path-average of `Y^m` (plain) or of the Wick power `sigma^m H_m(Y / sigma)`,
/// where `Y = beta_hat sum omega(n, S_n)` and `sigma^2 = beta_hat^2` times the
/// intersection local time.
pub fn chaos_term_on_paths(params: &PolymerParams, field: &DisorderField, paths: &[Vec<i64>], m: usize, wick: bool) -> Result<Estimate> {
    check_field(params, field)?;
    if paths.len() < 2 {
        return Err(Error::InvalidParameter("need at least 2 paths".into()));
    }
    let gamma = gamma_table(field.covariance(), params.big_n);
    let bh = params.beta_hat();
    let vals: Vec<f64> = paths
        .par_iter()
        .map(|p| {
            let y = bh * hamiltonian(field, p);
            if wick {
                let sigma = bh * intersection_local_time(&gamma, p).sqrt();
                if sigma == 0.0 {
                    return y.powi(m as i32);
                }
                sigma.powi(m as i32) * hermite(m, y / sigma)
            } else {
                y.powi(m as i32)
            }
        })
        .collect();
    let (value, stderr) = mean_stderr(&vals);
    Ok(Estimate { value, stderr, samples: vals.len() })
}

/// Chaos term of order `m` over `count` fresh pinned paths.
pub fn chaos_term(params: &PolymerParams, field: &DisorderField, law: &IncrementLaw, m: usize, count: usize, wick: bool, seed: u64) -> Result<Estimate> {
    let paths = sample_paths(params, law, count, seed)?;
    chaos_term_on_paths(params, field, &paths, m, wick)
}

/// `N^(-m(theta + 1/rho)) sum_cells :omega(n_1,k_1) ... omega(n_m,k_m): A_N f(cells)` for `m` in `{1, 2}`.
pub fn u_statistic(field: &DisorderField, grid: &BlockGrid, m: usize, params: &PolymerParams) -> Result<f64> {
    check_field(params, field)?;
    if m == 0 || m > 2 {
        return Err(Error::InvalidParameter(format!("u_statistic supports m in {{1, 2}}, got {m}")));
    }
    if grid.order() != m || grid.big_n() != params.big_n {
        return Err(Error::InvalidParameter("grid order or N does not match".into()));
    }
    let norm = (params.big_n as f64).powf(-(m as f64) * (params.theta() + 1.0 / params.rho));
    let cov = field.covariance();
    let mut terms = Vec::with_capacity(grid.len());
    for (cell, a) in grid.cells() {
        let values: Vec<f64> = cell.iter().map(|&(n, k)| field.omega_at(n as usize, k)).collect::<Result<_>>()?;
        let kappa = |block: &[usize]| match block {
            [i, j] => {
                let (ci, cj) = (cell[*i], cell[*j]);
                if ci.1 == cj.1 {
                    cov.gamma(ci.0 as i64 - cj.0 as i64)
                } else {
                    0.0
                }
            }
            _ => 0.0,
        };
        terms.push(a * wick_value_general(&values, &kappa));
    }
    Ok(norm * pairwise_sum(&terms))
}

/// Exact variance of the order-one U-statistic:
/// `N^(-2(theta + 1/rho)) sum_k sum_(n,n') gamma(n - n') A(n,k) A(n',k)`.
pub fn u_statistic_variance(grid: &BlockGrid, cov: &dyn Covariance, params: &PolymerParams) -> Result<f64> {
    if grid.order() != 1 {
        return Err(Error::InvalidParameter("exact variance implemented for order one".into()));
    }
    let mut by_site: HashMap<i64, Vec<(i64, f64)>> = HashMap::new();
    for (cell, a) in grid.cells() {
        by_site.entry(cell[0].1).or_default().push((cell[0].0 as i64, a));
    }
    let mut sites: Vec<_> = by_site.into_iter().collect();
    sites.sort_by_key(|s| s.0);
    let terms: Vec<f64> = sites
        .iter()
        .map(|(_, v)| {
            let mut s = 0.0;
            for &(n1, a1) in v {
                for &(n2, a2) in v {
                    s += cov.gamma(n1 - n2) * a1 * a2;
                }
            }
            s
        })
        .collect();
    let norm = (params.big_n as f64).powf(-2.0 * (params.theta() + 1.0 / params.rho));
    Ok(norm * pairwise_sum(&terms))
}

/// `Var(S_1) = beta_hat^2 sum_(n,n') gamma(n - n') P_(2N+2-n-n')(0)`, using
/// `sum_k P_a(K - k) P_b(K - k) = P_(a+b)(0)` for a symmetric law. The error
/// bound propagates the return-probability error.
pub fn exact_variance_s1(params: &PolymerParams, law: &IncrementLaw, cov: &dyn Covariance) -> Result<Bounded> {
    require_symmetric(law)?;
    let n = params.big_n;
    let (p, err) = return_probabilities(law, 2 * n);
    let gamma = gamma_table(cov, n);
    // Index by a = N+1-n in 1..=N: sum_(a,b) gamma(a - b) P_(a+b)(0).
    let rows: Vec<(f64, f64)> = (1..=n)
        .into_par_iter()
        .map(|a| {
            let mut s = 0.0;
            let mut g = 0.0;
            for b in 1..=n {
                let w = gamma[a.abs_diff(b)];
                s += w * p[a + b];
                g += w.abs();
            }
            (s, g)
        })
        .collect();
    let total = pairwise_sum(&rows.iter().map(|r| r.0).collect::<Vec<_>>());
    let abs_gamma = pairwise_sum(&rows.iter().map(|r| r.1).collect::<Vec<_>>());
    let bh2 = params.beta_hat().powi(2);
    Ok(Bounded { value: bh2 * total, error: bh2 * abs_gamma * err })
}

/// Environment moment computed from path functionals alone.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvMoment {
    /// `E_omega[Z] = E_S exp((beta_hat^2 / 2) L(S))`.
    MeanZ,
    /// `E_omega[Z~^2] = E_(S,S') exp(beta_hat^2 sum gamma(i-j) 1{S_i = S'_j})`.
    SecondMomentZTilde,
}

/// Log of the per-sample exponent of the environment moment.
pub fn env_moment_logs(params: &PolymerParams, law: &IncrementLaw, cov: &dyn Covariance, count: usize, which: EnvMoment, seed: u64) -> Result<Vec<f64>> {
    require_symmetric(law)?;
    if count < 2 {
        return Err(Error::InvalidParameter("need at least 2 samples".into()));
    }
    let gamma = gamma_table(cov, params.big_n);
    let bh2 = params.beta_hat().powi(2);
    let blocks = count.div_ceil(PATH_BLOCK);
    let logs: Vec<f64> = (0..blocks)
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut rng = substream(seed, &[TAG_PAIRS, b as u64]);
            let c = PATH_BLOCK.min(count - b * PATH_BLOCK);
            let gamma = &gamma;
            (0..c)
                .map(|_| {
                    let mut s = law.sample_path(params.big_n, params.k(), &mut rng);
                    s.reverse();
                    match which {
                        EnvMoment::MeanZ => 0.5 * bh2 * intersection_local_time(gamma, &s),
                        EnvMoment::SecondMomentZTilde => {
                            let mut t = law.sample_path(params.big_n, params.k(), &mut rng);
                            t.reverse();
                            bh2 * mutual_local_time(gamma, &s, &t)
                        }
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(logs)
}

/// Monte Carlo estimate of `E_omega[Z]` or `E_omega[Z~^2]` from path functionals.
pub fn env_moment_oracle(params: &PolymerParams, law: &IncrementLaw, cov: &dyn Covariance, count: usize, which: EnvMoment, seed: u64) -> Result<Estimate> {
    let logs = env_moment_logs(params, law, cov, count, which, seed)?;
    let (_, value, stderr) = exp_mean_stderr(&logs);
    Ok(Estimate { value, stderr, samples: count })
}

/// Exact value of the environment moment for a finite-support law by
/// enumerating all paths (or path pairs).
pub fn env_moment_exact(params: &PolymerParams, law: &IncrementLaw, cov: &dyn Covariance, which: EnvMoment) -> Result<f64> {
    let steps = finite_support(law, params.big_n)?;
    if params.big_n > 4 {
        return Err(Error::SizeGuard("exact environment moments limited to N <= 4".into()));
    }
    let n = params.big_n;
    let gamma = gamma_table(cov, n);
    let bh2 = params.beta_hat().powi(2);
    let mut paths: Vec<(Vec<i64>, f64)> = vec![(vec![], 0.0)];
    for _ in 0..n {
        paths = paths
            .into_iter()
            .flat_map(|(p, lw)| {
                let pos = p.last().copied().unwrap_or(params.k());
                steps.iter().map(move |&(y, w)| {
                    let mut q = p.clone();
                    q.push(pos + y);
                    (q, lw + w.ln())
                })
            })
            .collect();
    }
    for (p, _) in paths.iter_mut() {
        p.reverse();
    }
    let logs: Vec<f64> = match which {
        EnvMoment::MeanZ => paths.iter().map(|(p, lw)| lw + 0.5 * bh2 * intersection_local_time(&gamma, p)).collect(),
        EnvMoment::SecondMomentZTilde => paths
            .iter()
            .flat_map(|(p, lw)| paths.iter().map(|(q, lv)| lw + lv + bh2 * mutual_local_time(&gamma, p, q)).collect::<Vec<_>>())
            .collect(),
    };
    Ok(log_sum_exp(&logs).exp())
}

/// A field of length `N` for `params` with the fGn covariance.
pub fn fgn_field(params: &PolymerParams, seed: u64) -> Result<DisorderField> {
    let cov: Arc<dyn Covariance> = Arc::new(crate::disorder::FgnCovariance::new(params.h)?);
    DisorderField::new(cov, params.big_n, seed)
}
