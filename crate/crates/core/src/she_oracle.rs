//! Continuum oracle: the kernels `g_m` of the chaos expansion of the heat
//! equation solution, their Skorohod norms, the factorial-decay bound on
//! higher chaoses, Hu–Meyer coefficients and a Feynman–Kac estimate of the
//! Stratonovich first moment.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel_space::{singular_pair_draw, singular_pair_rule, QuadEstimate};
use crate::numeric::{exp_mean_stderr, ln_gamma, mean_stderr, GaussRule, Neumaier};
use crate::polymer::{Estimate, Mode};
use crate::rng::substream;
use crate::stable_walk::{IncrementLaw, StableDensity};

/// Largest order summed by the chaos remainder bound.
pub const REMAINDER_ORDER: usize = 60;
/// Default Monte Carlo points for the order-two norm.
pub const NORM2_SAMPLES: usize = 1 << 20;
/// Relative tolerance of the order-one norm quadrature.
pub const NORM1_TOL: f64 = 1e-8;
/// Margin by which the calibrated bound dominates the computed norms.
pub const BOUND_MARGIN: f64 = 1.5;

const TAG_NORM: u64 = 0x6e6f_726d;
const TAG_SILT: u64 = 0x7369_6c74;

/// Parameters of the continuum equation on the horizon `t = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuumParams {
    pub h: f64,
    pub rho: f64,
    pub c_rho: f64,
    pub beta: f64,
    pub x0: f64,
}

impl ContinuumParams {
    pub fn theta(&self) -> f64 {
        self.h - 0.5 / self.rho
    }

    /// Same admissibility gates as the discrete model.
    pub fn check_gate(&self, mode: Mode) -> Result<()> {
        crate::polymer::PolymerParams::new(1, self.beta, self.h, self.rho, self.x0)?.check_gate(mode)
    }
}

/// Continuum parameters together with the stable density they determine.
#[derive(Clone, Debug)]
pub struct Continuum {
    pub params: ContinuumParams,
    density: StableDensity,
}

impl Continuum {
    pub fn new(params: ContinuumParams) -> Result<Self> {
        if !(params.h > 0.5 && params.h <= 1.0) {
            return Err(Error::InvalidParameter(format!("H = {} must lie in (1/2, 1]", params.h)));
        }
        if !(params.beta >= 0.0) || !params.x0.is_finite() {
            return Err(Error::InvalidParameter("beta must be nonnegative and x0 finite".into()));
        }
        let density = StableDensity::new(params.rho, params.c_rho)?;
        Ok(Self { params, density })
    }

    pub fn density(&self) -> &StableDensity {
        &self.density
    }

    /// `g(t, 0) = t^(-1/rho) g(1, 0)`.
    pub fn g_at_zero(&self, t: f64) -> f64 {
        t.powf(-1.0 / self.params.rho) * self.density.g1(0.0)
    }

    /// `int g(a, u) g(c, u) g(e, u) du`.
    pub fn triple_overlap(&self, a: f64, c: f64, e: f64) -> f64 {
        if self.params.rho == 2.0 {
            let k = 2.0 * self.params.c_rho;
            let (v1, v2, v3) = (k * a, k * c, k * e);
            return 1.0 / (2.0 * PI * (v1 * v2 + v1 * v3 + v2 * v3).sqrt());
        }
        self.triple_overlap_quadrature(a, c, e)
    }

    /// The same overlap by one-dimensional quadrature on geometric panels.
    pub fn triple_overlap_quadrature(&self, a: f64, c: f64, e: f64) -> f64 {
        let rule = GaussRule::new(10);
        let p = 1.0 / self.params.rho;
        let (sa, sc, se) = (a.powf(-p), c.powf(-p), e.powf(-p));
        let d = &self.density;
        let f = |u: f64| sa * sc * se * d.g1(sa * u) * d.g1(sc * u) * d.g1(se * u);
        let lo_scale = 1.0 / sa.max(sc).max(se);
        let hi_scale = 1.0 / sa.min(sc).min(se);
        let mut acc = Neumaier::new();
        let mut lo = 0.0;
        let mut hi = 0.125 * lo_scale;
        // The product decays like |u|^(-3-3 rho); beyond 1e4 times the widest scale it is negligible.
        while lo < 1e4 * hi_scale {
            acc.add(rule.integrate(lo, hi, f));
            lo = hi;
            hi *= 2.0;
        }
        2.0 * acc.value()
    }
}

/// `prod_i g(t_(i+1) - t_i, x_(i+1) - x_i) 1{t_1 < ... < t_m}` with `(t_(m+1), x_(m+1)) = (1, x0)`.
pub fn g_m_eval(times: &[f64], xs: &[f64], cont: &Continuum) -> f64 {
    debug_assert_eq!(times.len(), xs.len());
    let m = times.len();
    let mut v = 1.0;
    for i in 0..m {
        let (tn, xn) = if i + 1 < m { (times[i + 1], xs[i + 1]) } else { (1.0, cont.params.x0) };
        let dt = tn - times[i];
        if !(dt > 0.0) || times[i] < 0.0 {
            return 0.0;
        }
        v *= cont.density.eval(dt, xn - xs[i]);
    }
    v
}

/// `||g_1||^2 = g(1,0) int int |s-t|^(2H-2) (2-s-t)^(-1/rho) ds dt`. The
/// integrand is homogeneous of degree `2H-2-1/rho` about the corner `s = t = 1`,
/// so the corner square `[1/2, 1]^2` carries the fraction `2^(-(2H-1/rho))` of
/// the total and only the L-shaped remainder is integrated, by the singular
/// pair rule.
fn norm1_quadrature(cont: &Continuum, tol: f64) -> QuadEstimate {
    let h = cont.params.h;
    let p = 1.0 / cont.params.rho;
    let corner_share = 0.5f64.powf(2.0 * h - p);
    let breaks: Vec<f64> = (1..=8).map(|j| 1.0 - 0.5f64.powi(j)).collect();
    let mut prev: Option<f64> = None;
    let mut last = QuadEstimate { value: f64::NAN, error: f64::INFINITY, converged: false, nodes: 0, monte_carlo: false };
    for q in [4usize, 8, 16, 32] {
        let rule = singular_pair_rule(h, &breaks, q);
        let mut acc = Neumaier::new();
        for &(s, t, w) in rule.iter().filter(|(s, t, _)| !(*s > 0.5 && *t > 0.5)) {
            acc.add(w * (2.0 - s - t).powf(-p));
        }
        let value = acc.value() / (1.0 - corner_share) * cont.density.g1(0.0);
        let error = prev.map_or(f64::INFINITY, |pv| (value - pv).abs());
        last = QuadEstimate { value, error, converged: error <= tol * value.abs(), nodes: rule.len() as u64, monte_carlo: false };
        if last.converged {
            break;
        }
        prev = Some(value);
    }
    last
}

/// Identity plus crossed pairing of the order-two kernel at two time pairs
/// with `s1 < s2`, after the spatial integrals are reduced by
/// Chapman–Kolmogorov. The symmetrized norm is half its integral.
fn norm2_integrand(cont: &Continuum, s1: f64, t1: f64, s2: f64, t2: f64) -> f64 {
    if !(s1 < s2) {
        return 0.0;
    }
    let mut v = 0.0;
    if t1 < t2 {
        v += cont.g_at_zero(s2 - s1 + t2 - t1) * cont.g_at_zero(2.0 - s2 - t2);
    }
    if t2 < t1 {
        v += cont.triple_overlap(s2 - s1, t1 - t2, 2.0 - s2 - t1);
    }
    v
}

fn norm1_integrand(cont: &Continuum, s: f64, t: f64) -> f64 {
    cont.g_at_zero(2.0 - s - t)
}

/// Stratified Monte Carlo estimate of `||g_m||^2` (symmetrized) for `m` in `{1, 2}`.
pub fn skorohod_norm_monte_carlo(m: usize, cont: &Continuum, samples: usize, batches: usize, seed: u64) -> Result<QuadEstimate> {
    if !(m == 1 || m == 2) {
        return Err(Error::InvalidParameter(format!("norm implemented for m in {{1, 2}}, got {m}")));
    }
    let per = samples.div_ceil(batches).max(1);
    let h = cont.params.h;
    let vals: Vec<f64> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(seed, &[TAG_NORM, m as u64, b as u64]);
            let perms: Vec<Vec<usize>> = (0..m)
                .map(|_| {
                    let mut p: Vec<usize> = (0..per).collect();
                    for i in (1..per).rev() {
                        p.swap(i, rng.gen_range(0..=i));
                    }
                    p
                })
                .collect();
            let mut acc = Neumaier::new();
            for j in 0..per {
                let draw = |a: usize, rng: &mut crate::rng::Stream| {
                    let v = (perms[a][j] as f64 + rng.gen::<f64>()) / per as f64;
                    singular_pair_draw(h, v, rng.gen(), rng.gen())
                };
                let (s1, t1, w1) = draw(0, &mut rng);
                if m == 1 {
                    acc.add(w1 * norm1_integrand(cont, s1, t1));
                } else {
                    let (s2, t2, w2) = draw(1, &mut rng);
                    // Both labellings of the pairs are sampled, doubling the integral.
                    let f = if s1 < s2 { norm2_integrand(cont, s1, t1, s2, t2) } else { norm2_integrand(cont, s2, t2, s1, t1) };
                    acc.add(w1 * w2 * 0.25 * f);
                }
            }
            acc.value() / per as f64
        })
        .collect();
    let (value, error) = mean_stderr(&vals);
    Ok(QuadEstimate { value, error, converged: true, nodes: (per * batches) as u64, monte_carlo: true })
}

/// `||g_m||^2` in the `m`-fold tensor space: quadrature for `m = 1`,
/// stratified Monte Carlo with [`NORM2_SAMPLES`] points for `m = 2`.
pub fn skorohod_norm(m: usize, cont: &Continuum, tol: f64) -> Result<QuadEstimate> {
    match m {
        1 => {
            let est = norm1_quadrature(cont, tol);
            if !est.converged {
                return Err(Error::Unconverged(format!("order-one norm: error {} above tolerance {tol}", est.error)));
            }
            Ok(est)
        }
        2 => skorohod_norm_monte_carlo(2, cont, NORM2_SAMPLES, 64, 0x6e32),
        _ => Err(Error::InvalidParameter(format!("norm implemented for m in {{1, 2}}, got {m}"))),
    }
}

/// Log of `(m!)^(H-1) (Gamma(theta/H)^m / Gamma(m theta/H + 1))^H`, the bound without its constant.
pub fn chaos_bound_ln_shape(m: usize, h: f64, theta: f64) -> f64 {
    let mf = m as f64;
    (h - 1.0) * ln_gamma(mf + 1.0) + h * (mf * ln_gamma(theta / h) - ln_gamma(mf * theta / h + 1.0))
}

/// `C^m (m!)^(H-1) (Gamma(theta/H)^m / Gamma(m theta/H + 1))^H`.
pub fn chaos_bound(m: usize, cp: &ContinuumParams, c: f64) -> Result<f64> {
    let theta = cp.theta();
    if !(theta > 0.0) {
        return Err(Error::Gate(format!("the chaos bound needs theta > 0, got {theta}")));
    }
    Ok((m as f64 * c.ln() + chaos_bound_ln_shape(m, cp.h, theta)).exp())
}

/// Smallest `C` with `bound(m) >= margin * sqrt(norm_m)` for the supplied orders.
pub fn calibrate_chaos_bound(cp: &ContinuumParams, norms: &[(usize, f64)], margin: f64) -> Result<f64> {
    let theta = cp.theta();
    if !(theta > 0.0) {
        return Err(Error::Gate(format!("the chaos bound needs theta > 0, got {theta}")));
    }
    let mut c: f64 = 0.0;
    for &(m, v) in norms {
        let ln_c = ((margin * v.sqrt()).ln() - chaos_bound_ln_shape(m, cp.h, theta)) / m as f64;
        c = c.max(ln_c.exp());
    }
    Ok(c)
}

/// Truncated second-moment series with its remainder bound.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MomentSeries {
    /// `||g_m||^2` for `m = 1..=m_max`.
    pub norms: Vec<f64>,
    pub norm_errors: Vec<f64>,
    /// `1 + sum m! beta^(2m) ||g_m||^2`.
    pub value: f64,
    /// Standard error carried from Monte Carlo norms.
    pub stderr: f64,
    pub remainder_bound: f64,
    pub bound_constant: f64,
    /// Whether the remainder bound is below a tenth of the order-two term.
    pub remainder_within_budget: bool,
}

/// `sum_(m_max < m <= 60) m! beta^(2m) bound(m)^2` in log space.
pub fn chaos_remainder(cp: &ContinuumParams, c: f64, m_max: usize) -> Result<f64> {
    if cp.beta == 0.0 {
        return Ok(0.0);
    }
    let mut acc = Neumaier::new();
    for m in m_max + 1..=REMAINDER_ORDER {
        let ln = ln_gamma(m as f64 + 1.0) + 2.0 * m as f64 * cp.beta.ln() + 2.0 * chaos_bound(m, cp, c)?.ln();
        acc.add(ln.exp());
    }
    Ok(acc.value())
}

/// `1 + sum_(m <= m_max) m! beta^(2m) ||g_m||^2` with the remainder bounded
/// through the calibrated chaos bound.
pub fn skorohod_second_moment(cont: &Continuum, m_max: usize) -> Result<MomentSeries> {
    if m_max > 2 {
        return Err(Error::InvalidParameter(format!("m_max = {m_max} exceeds 2")));
    }
    let cp = &cont.params;
    let n1 = skorohod_norm(1, cont, NORM1_TOL)?;
    let n2 = skorohod_norm(2, cont, NORM1_TOL)?;
    let c = calibrate_chaos_bound(cp, &[(1, n1.value), (2, n2.value)], BOUND_MARGIN)?;
    let all = [n1, n2];
    let used = &all[..m_max];
    let b2 = cp.beta * cp.beta;
    let mut value = 1.0;
    let mut var = 0.0;
    let mut fact = 1.0;
    for (i, est) in used.iter().enumerate() {
        let m = i + 1;
        fact *= m as f64;
        let coef = fact * b2.powi(m as i32);
        value += coef * est.value;
        if est.monte_carlo {
            var += (coef * est.error).powi(2);
        }
    }
    let remainder_bound = chaos_remainder(cp, c, m_max)?;
    let order_two = 2.0 * b2 * b2 * n2.value;
    Ok(MomentSeries {
        norms: used.iter().map(|e| e.value).collect(),
        norm_errors: used.iter().map(|e| e.error).collect(),
        value,
        stderr: var.sqrt(),
        remainder_bound,
        bound_constant: c,
        remainder_within_budget: remainder_bound <= 0.1 * order_two,
    })
}

/// `m! / (k! (m-2k)! 2^k)` in exact integer arithmetic.
pub fn hu_meyer_coeff(m: u32, k: u32) -> Result<u128> {
    if 2 * k > m {
        return Err(Error::InvalidParameter(format!("k = {k} exceeds m/2 for m = {m}")));
    }
    let overflow = || Error::SizeGuard(format!("coefficient ({m}, {k}) overflows 128 bits"));
    // m! / (m-2k)! is a falling factorial; divide by k! 2^k at the end.
    let mut num: u128 = 1;
    for j in (m - 2 * k + 1)..=m {
        num = num.checked_mul(j as u128).ok_or_else(overflow)?;
    }
    let mut den: u128 = 1;
    for j in 1..=k {
        den = den.checked_mul(2 * j as u128).ok_or_else(overflow)?;
    }
    Ok(num / den)
}

/// How the Feynman–Kac path is generated.
#[derive(Clone, Copy, Debug)]
pub enum PathSampler<'a> {
    /// The lattice walk rescaled by `n^(1/rho)`.
    Walk(&'a IncrementLaw),
    /// Exact Gaussian increments with variance `2 c_rho / n` (requires `rho = 2`).
    Gaussian,
}

/// Result of the mollified self-intersection exponential moment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiltEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n_steps: usize,
    pub epsilon: f64,
    /// Estimate at `(2 n_steps, epsilon / 2)` from independent paths.
    pub refined_value: f64,
    pub refined_stderr: f64,
    pub stable: bool,
}

/// Default mollifier variance for `n` time steps: one lattice spacing
/// `n^(-1/rho)` of the rescaled walk as standard deviation, the narrowest
/// width whose lattice samples still carry unit mass.
pub fn default_epsilon(n_steps: usize, rho: f64) -> f64 {
    (n_steps as f64).powf(-2.0 / rho)
}

/// `L_eps = n^(-2) sum_(i != j) |r_i - r_j|^(2H-2) p_eps(X_(r_i) - X_(r_j))` for one path.
fn mollified_local_time(h: f64, lattice: Option<&[i64]>, xs: &[f64], scale: f64, eps: f64) -> f64 {
    let n = xs.len();
    let lag: Vec<f64> = (0..n).map(|l| if l == 0 { 0.0 } else { (l as f64 / n as f64).powf(2.0 * h - 2.0) }).collect();
    let norm = 1.0 / (2.0 * PI * eps).sqrt();
    let cut = 8.0 * eps.sqrt();
    let mut acc = Neumaier::new();
    match lattice {
        Some(path) => {
            let w = (cut * scale).ceil() as i64;
            let kern: Vec<f64> = (0..=w).map(|d| norm * (-(d as f64 / scale).powi(2) / (2.0 * eps)).exp()).collect();
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by_key(|&i| (path[i], i));
            let mut groups: Vec<(i64, Vec<usize>)> = Vec::new();
            for i in idx {
                match groups.last_mut() {
                    Some((s, v)) if *s == path[i] => v.push(i),
                    _ => groups.push((path[i], vec![i])),
                }
            }
            for (ga, (sa, ta)) in groups.iter().enumerate() {
                for (sb, tb) in &groups[ga..] {
                    let d = sb - sa;
                    if d > w {
                        break;
                    }
                    let mut s = 0.0;
                    for &i in ta {
                        for &j in tb {
                            s += lag[i.abs_diff(j)];
                        }
                    }
                    acc.add(if d == 0 { s } else { 2.0 * s } * kern[d as usize]);
                }
            }
        }
        None => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
            for (p, &i) in idx.iter().enumerate() {
                let mut s = 0.0;
                for &j in &idx[p + 1..] {
                    let dx = xs[j] - xs[i];
                    if dx > cut {
                        break;
                    }
                    s += lag[i.abs_diff(j)] * (-dx * dx / (2.0 * eps)).exp();
                }
                acc.add(2.0 * norm * s);
            }
        }
    }
    acc.value() / (n as f64 * n as f64)
}

fn silt_single(cont: &Continuum, n: usize, eps: f64, count: usize, seed: u64, sampler: PathSampler<'_>, tag: u64) -> Result<Estimate> {
    let cp = cont.params;
    let scale = (n as f64).powf(1.0 / cp.rho);
    let block = crate::polymer::PATH_BLOCK;
    let blocks = count.div_ceil(block);
    let logs: Vec<f64> = (0..blocks)
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut rng = substream(seed, &[TAG_SILT, tag, b as u64]);
            let c = block.min(count - b * block);
            (0..c)
                .map(|_| {
                    let l = match sampler {
                        PathSampler::Walk(law) => {
                            let path = law.sample_path(n, 0, &mut rng);
                            let xs: Vec<f64> = path.iter().map(|&s| s as f64 / scale).collect();
                            mollified_local_time(cp.h, Some(&path), &xs, scale, eps)
                        }
                        PathSampler::Gaussian => {
                            let sd = (2.0 * cp.c_rho / n as f64).sqrt();
                            let mut x = 0.0;
                            let xs: Vec<f64> = (0..n)
                                .map(|_| {
                                    x += sd * rng.sample::<f64, _>(StandardNormal);
                                    x
                                })
                                .collect();
                            mollified_local_time(cp.h, None, &xs, scale, eps)
                        }
                    };
                    0.5 * cp.beta * cp.beta * l
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let (_, value, stderr) = exp_mean_stderr(&logs);
    Ok(Estimate { value, stderr, samples: count })
}

/// Monte Carlo estimate of `E_X[exp((beta^2/2) L_eps)]` over `count` paths of
/// `n_steps` steps, with a refinement at `(2 n_steps, epsilon/2)`.
pub fn silt_exponential_moment(cont: &Continuum, n_steps: usize, epsilon: f64, count: usize, seed: u64, sampler: PathSampler<'_>) -> Result<SiltEstimate> {
    cont.params.check_gate(Mode::Stratonovich)?;
    if n_steps < 64 {
        return Err(Error::InvalidParameter(format!("n_steps = {n_steps} must be at least 64")));
    }
    if !(epsilon > 0.0) || count < 2 {
        return Err(Error::InvalidParameter("epsilon must be positive and at least 2 paths are needed".into()));
    }
    if let PathSampler::Gaussian = sampler {
        if cont.params.rho != 2.0 {
            return Err(Error::InvalidParameter("Gaussian increments need rho = 2".into()));
        }
    }
    let base = silt_single(cont, n_steps, epsilon, count, seed, sampler, 0)?;
    let fine = silt_single(cont, 2 * n_steps, 0.5 * epsilon, count, seed, sampler, 1)?;
    let combined = (base.stderr.powi(2) + fine.stderr.powi(2)).sqrt();
    Ok(SiltEstimate {
        value: base.value,
        stderr: base.stderr,
        n_steps,
        epsilon,
        refined_value: fine.value,
        refined_stderr: fine.stderr,
        stable: (base.value - fine.value).abs() <= 3.0 * combined,
    })
}
