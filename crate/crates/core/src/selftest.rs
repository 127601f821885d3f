//! Reduced-scale invariant checks behind [`crate::harness::selftest`].

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;

use crate::disorder::{gamma_fgn, Covariance, DisorderField, FgnCovariance, SiteSynthesizer};
use crate::error::Result;
use crate::harness::{dump_roundtrip, report_csv, ExperimentConfig, Faults};
use crate::kernel_space::{jensen_time_sides, rect_weight, simplex_gamma_integral, SimpleFn};
use crate::numeric::{adaptive_integrate, ks_statistic, mean_stderr, pairwise_sum, Neumaier};
use crate::polymer::{
    enumerate_exact, enumerate_exact_dp, estimate_partition, exact_variance_s1, intersection_local_time, PartitionMode,
    PolymerParams,
};
use crate::rng::substream;
use crate::she_oracle::{calibrate_chaos_bound, hu_meyer_coeff, chaos_bound, skorohod_norm, Continuum, ContinuumParams};
use crate::stable_walk::{analytic_c_rho, calibrate_c_rho, llt_residual, IncrementLaw, StableDensity, TransitionKernel};
use crate::wick_algebra::{hermite, set_partitions, wick_value, wick_value_brute, GaussianFamily, IndexMultiset};

use crate::harness::SelfCheck;

type Outcome = Result<(bool, String)>;

fn check(name: &str, f: impl FnOnce() -> Outcome) -> SelfCheck {
    let (pass, detail) = match f() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    SelfCheck { name: name.to_string(), pass, detail }
}

fn law2() -> IncrementLaw {
    IncrementLaw::new(2.0, 0.5).expect("valid law")
}

pub(crate) fn run(faults: Faults) -> Vec<SelfCheck> {
    let h = 0.85;
    let cov = FgnCovariance::new(h).expect("valid H").with_scale(faults.gamma_scale);
    let cov: Arc<dyn Covariance> = Arc::new(cov);
    let mut out = Vec::new();

    out.push(check("rng.substreams_reproducible", || {
        let a: Vec<u64> = (0..8).map(|_| substream(7, &[1, 2]).gen()).collect();
        let mut s = substream(7, &[1, 2]);
        let b: u64 = s.gen();
        let c: u64 = substream(7, &[2, 1]).gen();
        Ok((a.iter().all(|x| *x == b) && b != c, format!("{b:#x} vs {c:#x}")))
    }));

    out.push(check("numeric.pairwise_sum_compensated", || {
        let xs: Vec<f64> = (0..10_000).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let mut n = Neumaier::new();
        xs.iter().for_each(|x| n.add(*x));
        let d = (pairwise_sum(&xs) - n.value()).abs();
        Ok((d < 1e-12, format!("difference {d:.3e}")))
    }));

    out.push(check("numeric.ks_statistic_extremes", || {
        let a: Vec<f64> = (0..50).map(f64::from).collect();
        let b: Vec<f64> = (100..150).map(f64::from).collect();
        let same = ks_statistic(&a, &a);
        let apart = ks_statistic(&a, &b);
        Ok((same == 0.0 && apart == 1.0, format!("{same} and {apart}")))
    }));

    out.push(check("stable_walk.law_normalized", || {
        let g = law2();
        let p = IncrementLaw::new(1.5, 0.5)?;
        let (a, b) = (g.total_mass(), p.total_mass());
        Ok(((a - 1.0).abs() < 1e-14 && (b - 1.0).abs() < 1e-9 && g.second_moment() == 1.0, format!("masses {a} {b}")))
    }));

    out.push(check("stable_walk.c_rho_calibration", || {
        let g = calibrate_c_rho(&law2())?;
        let law = IncrementLaw::new(1.5, 0.5)?;
        let (c, a) = (calibrate_c_rho(&law)?, analytic_c_rho(&law));
        Ok(((g - 0.5).abs() < 1e-6 && (c - a).abs() < 1e-3 * a, format!("rho=2: {g}, rho=1.5: {c} vs {a}")))
    }));

    out.push(check("stable_walk.two_step_kernel", || {
        let k = TransitionKernel::new(&law2(), 2, 8)?;
        let v = k.get(0);
        Ok(((v - 0.2734375).abs() < 1e-15, format!("P(S_2 = 0) = {v}")))
    }));

    out.push(check("stable_walk.local_limit_improves", || {
        let law = law2();
        let sd = StableDensity::from_law(&law)?;
        let (a, b) = (llt_residual(&law, &sd, 16)?, llt_residual(&law, &sd, 256)?);
        Ok((b < a && b < 0.05, format!("residuals {a:.3e} -> {b:.3e}")))
    }));

    out.push(check("disorder.variance_matches_fgn", || {
        let synth = SiteSynthesizer::new(cov.as_ref(), 64)?;
        let per_site: Vec<f64> = (0..1024u64)
            .map(|s| {
                let x = synth.generate(s);
                x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
            })
            .collect();
        let (m, se) = mean_stderr(&per_site);
        let g0 = gamma_fgn(h, 0)?;
        Ok(((m - g0).abs() <= 4.0 * se, format!("{m:.4} +- {se:.4} vs gamma(0) = {g0:.4}")))
    }));

    out.push(check("disorder.lag_one_covariance", || {
        let synth = SiteSynthesizer::new(cov.as_ref(), 64)?;
        let per_site: Vec<f64> = (0..1024u64)
            .map(|s| {
                let x = synth.generate(s ^ 0x5a5a);
                x.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / 63.0
            })
            .collect();
        let (m, se) = mean_stderr(&per_site);
        let g1 = gamma_fgn(h, 1)?;
        Ok(((m - g1).abs() <= 4.0 * se, format!("{m:.4} +- {se:.4} vs gamma(1) = {g1:.4}")))
    }));

    out.push(check("disorder.sites_keyed_by_seed", || {
        let a = DisorderField::new(cov.clone(), 16, 9)?;
        let b = DisorderField::new(cov.clone(), 16, 9)?;
        let same = a.site(-3).iter().zip(b.site(-3).iter()).all(|(x, y)| x.to_bits() == y.to_bits());
        let differ = a.site(-3)[0] != a.site(3)[0];
        Ok((same && differ, "site -3 reproduced, site 3 distinct".into()))
    }));

    out.push(check("disorder.dump_roundtrip", || {
        let dir = tempfile::tempdir().map_err(|e| crate::Error::Config(e.to_string()))?;
        let f = DisorderField::new(cov.clone(), 8, 3)?;
        let ok = dump_roundtrip(&f, dir.path(), -4, 4)?;
        Ok((ok, "bitwise identical".into()))
    }));

    out.push(check("wick.hermite_closed_forms", || {
        let x = 0.7f64;
        let d = (hermite(3, x) - (x.powi(3) - 3.0 * x)).abs() + (hermite(4, x) - (x.powi(4) - 6.0 * x * x + 3.0)).abs();
        Ok((d < 1e-14, format!("deviation {d:.3e}")))
    }));

    out.push(check("wick.recursion_matches_expansion", || {
        let fam = GaussianFamily::new(3, vec![1.0, 0.3, 0.1, 0.3, 2.0, -0.4, 0.1, -0.4, 1.5])?.with_sample(vec![0.4, -1.1, 0.8])?;
        let a = IndexMultiset::new(vec![0, 1, 1, 2, 0]);
        let (r, b) = (wick_value(&fam, &a)?, wick_value_brute(&fam, &a)?);
        Ok(((r - b).abs() < 1e-12, format!("{r} vs {b}")))
    }));

    out.push(check("wick.one_dimensional_hermite", || {
        let fam = GaussianFamily::new(1, vec![1.0])?.with_sample(vec![1.3])?;
        let w = wick_value(&fam, &IndexMultiset::new(vec![0; 5]))?;
        Ok(((w - hermite(5, 1.3)).abs() < 1e-12, format!("{w}")))
    }));

    out.push(check("wick.bell_numbers", || {
        let counts: Vec<usize> = (1..=6).map(|n| set_partitions(n).len()).collect();
        Ok((counts == [1, 2, 5, 15, 52, 203], format!("{counts:?}")))
    }));

    out.push(check("kernel_space.rect_weight_additive", || {
        let hh = 0.7;
        let whole = rect_weight(hh, 0.0, 1.0, 0.2, 0.9);
        let split = rect_weight(hh, 0.0, 0.4, 0.2, 0.9) + rect_weight(hh, 0.4, 1.0, 0.2, 0.9);
        Ok(((whole - split).abs() < 1e-13, format!("{whole} vs {split}")))
    }));

    out.push(check("kernel_space.simplex_dirichlet", || {
        let v = simplex_gamma_integral(&[0.5, 0.5], 1.0)?;
        Ok(((v - PI).abs() < 1e-12, format!("{v}")))
    }));

    out.push(check("kernel_space.inner_product_cauchy_schwarz", || {
        let mut rng = substream(11, &[0]);
        let f = SimpleFn::random(&mut rng, 4, 5, 2.0);
        let g = SimpleFn::random(&mut rng, 3, 4, 2.0);
        let (fg, ff, gg) = (f.inner_exact(&g, 0.75), f.inner_exact(&f, 0.75), g.inner_exact(&g, 0.75));
        Ok((fg * fg <= ff * gg * (1.0 + 1e-12) && ff > 0.0, format!("{fg:.4}^2 <= {ff:.4} * {gg:.4}")))
    }));

    out.push(check("kernel_space.jensen_time_average", || {
        let f = [0.3, -1.0, 0.5, 2.0, -0.2, 0.7, 1.1, -0.4];
        let g = [1.0, 0.2, -0.6, 0.4, 0.9, -1.3, 0.1, 0.5];
        let (lhs, rhs) = jensen_time_sides(&f, &g, 8, 0.8)?;
        Ok((lhs <= rhs, format!("{lhs:.4} <= {rhs:.4}")))
    }));

    out.push(check("polymer.local_time_of_constant_path", || {
        let gamma = vec![1.0; 4];
        let v = intersection_local_time(&gamma, &[0, 0, 0, 0]);
        Ok((v == 16.0, format!("{v}")))
    }));

    out.push(check("polymer.enumeration_routes_agree", || {
        let p = PolymerParams::new(5, 0.8, h, 2.0, 0.0)?;
        let field = DisorderField::new(cov.clone(), 5, 4)?;
        let law = law2();
        let mut worst: f64 = 0.0;
        for mode in [PartitionMode::Plain, PartitionMode::WickCorrected] {
            let (a, b) = (enumerate_exact(&p, &field, &law, mode)?, enumerate_exact_dp(&p, &field, &law, mode)?);
            worst = worst.max((a - b).abs() / a.abs());
        }
        Ok((worst < 1e-12, format!("relative gap {worst:.3e}")))
    }));

    out.push(check("polymer.zero_coupling_partition_is_one", || {
        let p = PolymerParams::new(32, 0.0, h, 2.0, 0.0)?;
        let field = DisorderField::new(cov.clone(), 32, 4)?;
        let z = estimate_partition(&p, &field, &law2(), 8, PartitionMode::WickCorrected, 1)?;
        Ok((z.value == 1.0, format!("{}", z.value)))
    }));

    out.push(check("polymer.wick_partition_mean_one", || {
        let p = PolymerParams::new(32, 0.5, h, 2.0, 0.0)?;
        let synth = SiteSynthesizer::new(cov.as_ref(), 32)?;
        let law = law2();
        let zs: Vec<f64> = (0..200u64)
            .map(|f| {
                let field = DisorderField::with_synthesizer(cov.clone(), synth.clone(), 1000 + f, None);
                estimate_partition(&p, &field, &law, 16, PartitionMode::WickCorrected, f).map(|e| e.value)
            })
            .collect::<Result<_>>()?;
        let (m, se) = mean_stderr(&zs);
        Ok(((m - 1.0).abs() <= 4.0 * se, format!("{m:.4} +- {se:.4}")))
    }));

    out.push(check("polymer.exact_variance_vs_norm", || {
        let p = PolymerParams::new(256, 0.5, h, 2.0, 0.0)?;
        let v = exact_variance_s1(&p, &law2(), cov.as_ref())?;
        let c = Continuum::new(ContinuumParams { h, rho: 2.0, c_rho: 0.5, beta: 0.5, x0: 0.0 })?;
        let oracle = 0.25 * skorohod_norm(1, &c, 1e-8)?.value;
        let rel = (v.value - oracle) / oracle;
        Ok((rel.abs() < 0.02, format!("{:.6} vs {oracle:.6}, relative error {rel:.3e}", v.value)))
    }));

    out.push(check("she_oracle.norm1_polar_reduction", || {
        let c = Continuum::new(ContinuumParams { h, rho: 2.0, c_rho: 0.5, beta: 0.5, x0: 0.0 })?;
        let q = skorohod_norm(1, &c, 1e-8)?.value;
        let e = 2.0 * h - 1.0;
        let a2 = 2.0 * h - 0.5;
        let f = |w: f64| ((1.0 + w.powf(1.0 / e)) / 2.0).powf(-a2);
        let polar = adaptive_integrate(&f, 0.0, 1.0, 1e-13) / (a2 * e) / (2.0 * PI).sqrt();
        Ok(((q - polar).abs() < 1e-7 * polar, format!("{q:.10} vs {polar:.10}")))
    }));

    out.push(check("she_oracle.hu_meyer_coefficients", || {
        let v = [hu_meyer_coeff(2, 1)?, hu_meyer_coeff(4, 2)?, hu_meyer_coeff(6, 3)?, hu_meyer_coeff(5, 0)?];
        Ok((v == [1, 3, 15, 1], format!("{v:?}")))
    }));

    out.push(check("she_oracle.bound_dominates_calibration", || {
        let cp = ContinuumParams { h, rho: 2.0, c_rho: 0.5, beta: 0.5, x0: 0.0 };
        let norms = [(1, 0.76), (2, 0.21)];
        let c = calibrate_chaos_bound(&cp, &norms, 1.5)?;
        let ok = norms.iter().all(|(m, n)| chaos_bound(*m, &cp, c).map(|b| b >= *n).unwrap_or(false));
        Ok((ok, format!("C = {c:.4}")))
    }));

    out.push(check("harness.gate_boundary_rejected", || {
        let cfg = ExperimentConfig { h: 0.75, ..ExperimentConfig::stratonovich_default() };
        let msg = cfg.validate().err().map(|e| e.to_string()).unwrap_or_default();
        Ok((msg.contains("> 1/2 strictly"), msg))
    }));

    out.push(check("harness.csv_header", || {
        let cfg = ExperimentConfig::skorohod_default();
        let report = crate::harness::RunReport {
            config: cfg.clone(),
            oracle: crate::harness::OracleSummary { c_rho: 0.0, norm1: 0.0, series: Default::default() },
            records: vec![],
            trends: vec![],
            pass: true,
            environment: crate::harness::RunEnvironment { seed: 0, workers: 1, version: String::new(), wall_time_s: 0.0 },
        };
        let csv = report_csv(&report);
        Ok((csv == "N,check,estimate,stderr,oracle,z,pass\n", csv))
    }));

    out
}
