//! Acceptance suite. Prints one line per criterion and exits nonzero if any fails.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use fracpolymer::disorder::{Covariance, DisorderField, FgnCovariance, SiteSynthesizer};
use fracpolymer::harness::{run_convergence, ExperimentConfig};
use fracpolymer::kernel_space::simplex_gamma_integral;
use fracpolymer::numeric::{mean_stderr, GaussRule};
use fracpolymer::polymer::{
    chaos_term_on_paths, enumerate_exact, env_moment_oracle, estimate_partition, exact_variance_s1,
    intersection_local_time, sample_paths, EnvMoment, PartitionMode, PolymerParams,
};
use fracpolymer::rng::substream;
use fracpolymer::she_oracle::{
    default_epsilon, silt_exponential_moment, skorohod_norm, skorohod_second_moment, Continuum, ContinuumParams,
    PathSampler, NORM1_TOL,
};
use fracpolymer::stable_walk::{calibrate_c_rho, llt_residual, IncrementLaw, StableDensity};
use fracpolymer::wick_algebra::{
    gaussian_moment, hermite, wick_pair_expectation, wick_value, wick_value_brute, GaussianFamily, IndexMultiset,
};

const H: f64 = 0.85;
const BETA: f64 = 0.5;
const Z_MAX: f64 = 3.0;
const VARIANCE_REL: f64 = 0.05;
const LLT_MAX: f64 = 0.01;
const WICK_TOL: f64 = 1e-10;
const SIMPLEX_REL: f64 = 1e-6;
const SIMPLEX_PI_TOL: f64 = 1e-9;
const IDENTITY_REL: f64 = 1e-12;

type Outcome = Result<(bool, String), String>;

fn law2() -> IncrementLaw {
    IncrementLaw::new(2.0, 0.5).unwrap()
}

fn gaussian_continuum() -> Continuum {
    Continuum::new(ContinuumParams { h: H, rho: 2.0, c_rho: 0.5, beta: BETA, x0: 0.0 }).unwrap()
}

fn fgn() -> Arc<dyn Covariance> {
    Arc::new(FgnCovariance::new(H).unwrap())
}

fn e<E: std::fmt::Display>(x: E) -> String {
    x.to_string()
}

fn sci(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(" ")
}

fn non_increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] <= w[0])
}

/// Relative error of the exact discrete variance against the order-one norm.
fn variance_convergence() -> Outcome {
    let oracle = BETA * BETA * skorohod_norm(1, &gaussian_continuum(), NORM1_TOL).map_err(e)?.value;
    let cov = FgnCovariance::new(H).map_err(e)?;
    let mut errs = Vec::new();
    for n in [256, 1024, 4096] {
        let p = PolymerParams::new(n, BETA, H, 2.0, 0.0).map_err(e)?;
        let v = exact_variance_s1(&p, &law2(), &cov).map_err(e)?;
        errs.push(((v.value - oracle) / oracle).abs());
    }
    let pass = non_increasing(&errs) && errs[2] < VARIANCE_REL;
    Ok((pass, format!("oracle {oracle:.6}, relative errors {}", sci(&errs))))
}

/// Grand mean of the Wick-corrected partition function over 2000 fields of 64 paths at N = 512.
fn wick_mean() -> Outcome {
    let n = 512;
    let p = PolymerParams::new(n, BETA, H, 2.0, 0.0).map_err(e)?;
    let cov = fgn();
    let synth = SiteSynthesizer::new(cov.as_ref(), n).map_err(e)?;
    let law = law2();
    let zs: Vec<f64> = (0..2000u64)
        .into_par_iter()
        .map(|f| {
            let field = DisorderField::with_synthesizer(cov.clone(), synth.clone(), 0x5eed_0000 + f, None);
            estimate_partition(&p, &field, &law, 64, PartitionMode::WickCorrected, 0xa11 + f).unwrap().value
        })
        .collect();
    let (m, se) = mean_stderr(&zs);
    let z = (m - 1.0) / se;
    Ok((z.abs() <= Z_MAX, format!("grand mean {m:.5} +- {se:.5}, z = {z:+.2}")))
}

/// Second moment of the Wick-corrected partition function against the order-two chaos series.
fn second_moment() -> Outcome {
    let series = skorohod_second_moment(&gaussian_continuum(), 2).map_err(e)?;
    let (lo, hi) = (series.value, series.value + series.remainder_bound);
    let cov = FgnCovariance::new(H).map_err(e)?;
    let mut gaps = Vec::new();
    let mut detail = format!(
        "series {:.5} +- {:.5}, remainder bound {:.4e} (within a tenth of the order-two term: {})",
        series.value, series.stderr, series.remainder_bound, series.remainder_within_budget
    );
    let mut pass = true;
    for (n, seed) in [(512, 31u64), (2048, 32)] {
        let p = PolymerParams::new(n, BETA, H, 2.0, 0.0).map_err(e)?;
        let est = env_moment_oracle(&p, &law2(), &cov, 40_000, EnvMoment::SecondMomentZTilde, seed).map_err(e)?;
        let gap = if est.value < lo { lo - est.value } else if est.value > hi { est.value - hi } else { 0.0 };
        let se = (est.stderr.powi(2) + series.stderr.powi(2)).sqrt();
        pass &= gap <= Z_MAX * se;
        gaps.push(gap);
        detail.push_str(&format!("; N={n}: {:.5} +- {:.5}, gap {gap:.2e}", est.value, est.stderr));
    }
    pass &= non_increasing(&gaps);
    Ok((pass, detail))
}

/// Mean of the plain partition function at N = 4096 against the continuum exponential moment.
fn stratonovich_first_moment() -> Outcome {
    let n = 4096;
    let p = PolymerParams::new(n, BETA, H, 2.0, 0.0).map_err(e)?;
    let cov = FgnCovariance::new(H).map_err(e)?;
    let law = law2();
    let disc = env_moment_oracle(&p, &law, &cov, 20_000, EnvMoment::MeanZ, 41).map_err(e)?;
    let cont = Continuum::new(ContinuumParams { h: H, rho: 2.0, c_rho: calibrate_c_rho(&law).map_err(e)?, beta: BETA, x0: 0.0 }).map_err(e)?;
    let s = silt_exponential_moment(&cont, n, default_epsilon(n, 2.0), 4000, 42, PathSampler::Walk(&law)).map_err(e)?;
    let se = (disc.stderr.powi(2) + s.stderr.powi(2)).sqrt();
    let z = (disc.value - s.value) / se;
    let pass = z.abs() <= Z_MAX && s.stable;
    Ok((
        pass,
        format!(
            "discrete {:.5} +- {:.5}, continuum {:.5} +- {:.5} (refined {:.5} +- {:.5}, stable {}), z = {z:+.2}",
            disc.value, disc.stderr, s.value, s.stderr, s.refined_value, s.refined_stderr, s.stable
        ),
    ))
}

/// Monte Carlo partition functions against exhaustive enumeration at N = 6.
fn exact_enumeration() -> Outcome {
    let p = PolymerParams::new(6, BETA, H, 2.0, 0.0).map_err(e)?;
    let law = law2();
    let mut worst: f64 = 0.0;
    for f in 0..10u64 {
        let field = DisorderField::new(fgn(), 6, 600 + f).map_err(e)?;
        for mode in [PartitionMode::Plain, PartitionMode::WickCorrected] {
            let exact = enumerate_exact(&p, &field, &law, mode).map_err(e)?;
            let mc = estimate_partition(&p, &field, &law, 100_000, mode, 700 + f).map_err(e)?;
            worst = worst.max(((mc.value - exact) / mc.stderr).abs());
        }
    }
    Ok((worst <= Z_MAX, format!("largest |z| over 10 fields and both modes {worst:.2}")))
}

/// Perfect pairings of `items` with the sign `(-1)^(pairs)` folded into the covariance product.
fn signed_pairings(items: &[usize], q: &dyn Fn(usize, usize) -> f64) -> f64 {
    if items.is_empty() {
        return 1.0;
    }
    if items.len() % 2 == 1 {
        return 0.0;
    }
    let (a, rest) = (items[0], &items[1..]);
    (0..rest.len())
        .map(|j| {
            let others: Vec<usize> = rest.iter().enumerate().filter(|(i, _)| *i != j).map(|(_, x)| *x).collect();
            -q(a, rest[j]) * signed_pairings(&others, q)
        })
        .sum()
}

/// `E[:X_A: :X_B:]` by expanding both Wick products into monomials and taking Isserlis moments.
fn wick_pair_by_expansion(fam: &GaussianFamily, a: &[usize], b: &[usize]) -> f64 {
    let q = |i: usize, j: usize| fam.cov(i, j);
    let mut total = 0.0;
    for ma in 0..(1usize << a.len()) {
        let (keep_a, drop_a): (Vec<usize>, Vec<usize>) = split(a, ma);
        let ca = signed_pairings(&drop_a, &q);
        if ca == 0.0 {
            continue;
        }
        for mb in 0..(1usize << b.len()) {
            let (keep_b, drop_b) = split(b, mb);
            let cb = signed_pairings(&drop_b, &q);
            if cb == 0.0 {
                continue;
            }
            let mono: Vec<usize> = keep_a.iter().chain(keep_b.iter()).copied().collect();
            total += ca * cb * gaussian_moment(fam, &IndexMultiset::new(mono)).unwrap();
        }
    }
    total
}

fn split(xs: &[usize], mask: usize) -> (Vec<usize>, Vec<usize>) {
    let mut keep = Vec::new();
    let mut drop = Vec::new();
    for (i, &x) in xs.iter().enumerate() {
        if mask >> i & 1 == 1 {
            keep.push(x);
        } else {
            drop.push(x);
        }
    }
    (keep, drop)
}

fn random_family(rng: &mut impl Rng, dim: usize) -> GaussianFamily {
    let l: Vec<f64> = (0..dim * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut q = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            q[i * dim + j] = (0..dim).map(|k| l[i * dim + k] * l[j * dim + k]).sum::<f64>() + if i == j { 0.1 } else { 0.0 };
        }
    }
    let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
    GaussianFamily::new(dim, q).unwrap().with_sample(x).unwrap()
}

/// Recursion against subset expansion, fourth moment, orthogonality of Wick products, Hermite link.
fn wick_exactness() -> Outcome {
    let mut rng = substream(6, &[0]);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let dim = rng.gen_range(1..=4);
        let fam = random_family(&mut rng, dim);
        let len = rng.gen_range(0..=7);
        let a = IndexMultiset::new((0..len).map(|_| rng.gen_range(0..dim)).collect());
        let (r, b) = (wick_value(&fam, &a).map_err(e)?, wick_value_brute(&fam, &a).map_err(e)?);
        worst = worst.max((r - b).abs() / r.abs().max(1.0));
    }
    let unit = GaussianFamily::new(1, vec![1.0]).map_err(e)?;
    let fourth = gaussian_moment(&unit, &IndexMultiset::new(vec![0; 4])).map_err(e)?;
    let mut orth: f64 = 0.0;
    let mut same: f64 = 0.0;
    for _ in 0..50 {
        let fam = random_family(&mut rng, 3);
        let (na, nb) = (rng.gen_range(0..=4), rng.gen_range(0..=4));
        let a: Vec<usize> = (0..na).map(|_| rng.gen_range(0..3)).collect();
        let b: Vec<usize> = (0..nb).map(|_| rng.gen_range(0..3)).collect();
        let expanded = wick_pair_by_expansion(&fam, &a, &b);
        let direct = wick_pair_expectation(&fam, &IndexMultiset::new(a), &IndexMultiset::new(b)).map_err(e)?;
        if na != nb {
            orth = orth.max(expanded.abs()).max(direct.abs());
        } else {
            same = same.max((expanded - direct).abs());
        }
    }
    let mut herm: f64 = 0.0;
    for m in 0..=8 {
        for x in [-2.3, -0.4, 0.0, 0.9, 1.7] {
            let fam = GaussianFamily::new(1, vec![1.0]).map_err(e)?.with_sample(vec![x]).map_err(e)?;
            herm = herm.max((wick_value(&fam, &IndexMultiset::new(vec![0; m])).map_err(e)? - hermite(m, x)).abs());
        }
    }
    let pass = worst <= WICK_TOL && fourth == 3.0 && orth <= WICK_TOL && same <= WICK_TOL && herm <= WICK_TOL;
    Ok((pass, format!("recursion gap {worst:.1e}, E[X^4] = {fourth}, unequal orders {orth:.1e}, equal orders {same:.1e}, Hermite {herm:.1e}")))
}

/// Local limit residuals over n = 256, 1024, 4096.
fn local_limit() -> Outcome {
    let mut detail = String::new();
    let mut pass = true;
    for (rho, cap) in [(2.0, Some(LLT_MAX)), (1.5, None)] {
        let law = IncrementLaw::new(rho, 0.5).map_err(e)?;
        let sd = StableDensity::from_law(&law).map_err(e)?;
        let r: Vec<f64> = [256, 1024, 4096].iter().map(|&n| llt_residual(&law, &sd, n)).collect::<Result<_, _>>().map_err(e)?;
        pass &= r.windows(2).all(|w| w[1] < w[0]);
        if let Some(c) = cap {
            pass &= r[2] < c;
        }
        detail.push_str(&format!("rho={rho}: {} ", sci(&r)));
    }
    Ok((pass, detail.trim_end().to_string()))
}

/// `int_{0<r_1<...<r_m<t} prod (r_(i+1) - r_i)^(-alpha_i)` by nested Gauss
/// quadrature on panels graded toward both ends, with `t - r_m = t w^(1/(1-alpha_m))`
/// removing the endpoint singularity of each layer.
fn simplex_nested(alphas: &[f64], t: f64, rule: &GaussRule, edges: &[f64]) -> f64 {
    match alphas.split_last() {
        None => 1.0,
        Some((&a, rest)) => {
            let k = 1.0 / (1.0 - a);
            let sum: f64 = edges.windows(2).map(|w| rule.integrate(w[0], w[1], |u| simplex_nested(rest, t * (1.0 - u.powf(k)), rule, edges))).sum();
            t.powf(1.0 - a) * k * sum
        }
    }
}

fn graded_edges(levels: i32) -> Vec<f64> {
    let mut v: Vec<f64> = vec![0.0];
    v.extend((1..=levels).rev().map(|j| 0.5f64.powi(j)));
    v.extend((2..=levels).map(|j| 1.0 - 0.5f64.powi(j)));
    v.push(1.0);
    v
}

fn simplex_closed_form() -> Outcome {
    let rule = GaussRule::new(8);
    let edges = graded_edges(24);
    let mut rng = substream(8, &[0]);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let m = rng.gen_range(1..=3);
        let alphas: Vec<f64> = (0..m).map(|_| rng.gen_range(-0.5..0.8)).collect();
        let t = rng.gen_range(0.2..3.0);
        let closed = simplex_gamma_integral(&alphas, t).map_err(e)?;
        worst = worst.max(((closed - simplex_nested(&alphas, t, &rule, &edges)) / closed).abs());
    }
    let pi = simplex_gamma_integral(&[0.5, 0.5], 1.0).map_err(e)?;
    let pass = worst <= SIMPLEX_REL && (pi - PI).abs() <= SIMPLEX_PI_TOL;
    Ok((pass, format!("largest relative gap {worst:.2e}, half-half case {pi:.12}")))
}

/// Plain minus Wick second chaos terms equal the mean scaled local time on shared paths.
fn pathwise_wick_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    for (h, rho, n, seed) in [(0.85, 2.0, 64, 1u64), (0.95, 2.0, 256, 2), (0.7, 1.5, 128, 3), (0.6, 1.5, 512, 4), (1.0, 1.2, 100, 5)] {
        let law = IncrementLaw::new(rho, 0.5).map_err(e)?;
        let p = PolymerParams::new(n, BETA, h, rho, 0.0).map_err(e)?;
        let cov: Arc<dyn Covariance> = Arc::new(FgnCovariance::new(h).map_err(e)?);
        let field = DisorderField::new(cov.clone(), n, seed).map_err(e)?;
        let paths = sample_paths(&p, &law, 200, seed + 100).map_err(e)?;
        let plain = chaos_term_on_paths(&p, &field, &paths, 2, false).map_err(e)?.value;
        let wick = chaos_term_on_paths(&p, &field, &paths, 2, true).map_err(e)?.value;
        let gamma: Vec<f64> = (0..n as i64).map(|k| cov.gamma(k)).collect();
        let bh2 = p.beta_hat().powi(2);
        let lt = paths.iter().map(|x| bh2 * intersection_local_time(&gamma, x)).sum::<f64>() / paths.len() as f64;
        worst = worst.max(((plain - wick) - lt).abs() / lt.max(plain.abs()));
    }
    Ok((worst <= IDENTITY_REL, format!("largest relative gap {worst:.2e} over 5 configurations")))
}

/// Byte-identical payloads with one and eight workers.
fn determinism() -> Outcome {
    let mut detail = Vec::new();
    let mut pass = true;
    for base in [ExperimentConfig::stratonovich_default(), ExperimentConfig::skorohod_default()] {
        let cfg = ExperimentConfig { n_grid: vec![64, 128], fields_per_n: 32, paths_per_field: 16, moment_samples: 400, silt_paths: 64, seed: 10, ..base };
        let one = run_convergence(&ExperimentConfig { workers: 1, ..cfg.clone() }).map_err(e)?.payload_json().map_err(e)?;
        let eight = run_convergence(&ExperimentConfig { workers: 8, ..cfg }).map_err(e)?.payload_json().map_err(e)?;
        pass &= one == eight;
        detail.push(format!("{} bytes {}", one.len(), if one == eight { "identical" } else { "differ" }));
    }
    Ok((pass, detail.join(", ")))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("variance_convergence", variance_convergence),
        ("wick_corrected_mean", wick_mean),
        ("second_moment", second_moment),
        ("stratonovich_first_moment", stratonovich_first_moment),
        ("exact_enumeration", exact_enumeration),
        ("wick_algebra_exactness", wick_exactness),
        ("local_limit_theorem", local_limit),
        ("simplex_closed_form", simplex_closed_form),
        ("pathwise_wick_identity", pathwise_wick_identity),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = f().unwrap_or_else(|msg| (false, format!("error: {msg}")));
        let secs = start.elapsed().as_secs_f64();
        println!("criterion {:>2} {:<27} {} [{secs:.1} s] {detail}", i + 1, name, if pass { "PASS" } else { "FAIL" });
        failed += usize::from(!pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
