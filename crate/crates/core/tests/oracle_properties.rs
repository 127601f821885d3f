use fracpolymer::numeric::adaptive_integrate;
use fracpolymer::she_oracle::{hu_meyer_coeff, chaos_bound, chaos_bound_ln_shape, skorohod_second_moment, Continuum, ContinuumParams};
use fracpolymer::rng::substream;
use rand::Rng;

fn continuum(h: f64, rho: f64, c_rho: f64, beta: f64) -> Continuum {
    Continuum::new(ContinuumParams { h, rho, c_rho, beta, x0: 0.0 }).unwrap()
}

fn ln_factorial(m: usize) -> f64 {
    (1..=m).map(|k| (k as f64).ln()).sum()
}

/// `int g(a, u) g(c, u) g(e, u) du` by adaptive quadrature of the density itself.
fn overlap_direct(cont: &Continuum, a: f64, c: f64, e: f64) -> f64 {
    let d = cont.density();
    let f = |u: f64| d.eval(a, u) * d.eval(c, u) * d.eval(e, u);
    let scale = a.min(c).min(e).powf(1.0 / cont.params.rho);
    let mut edges = vec![0.0];
    let mut x = scale / 8.0;
    while x < 1e5 * scale {
        edges.push(x);
        x *= 2.0;
    }
    2.0 * edges.windows(2).map(|w| adaptive_integrate(&f, w[0], w[1], 1e-13)).sum::<f64>()
}

#[test]
fn triple_overlap_two_routes() {
    let mut rng = substream(41, &[]);
    let gauss = continuum(0.85, 2.0, 0.5, 0.5);
    let heavy = continuum(0.8, 1.5, 0.6, 0.5);
    for _ in 0..20 {
        let (a, c, e) = (rng.gen_range(0.01..2.0), rng.gen_range(0.01..2.0), rng.gen_range(0.01..2.0));
        let closed = gauss.triple_overlap(a, c, e);
        let quad = gauss.triple_overlap_quadrature(a, c, e);
        assert!((closed - quad).abs() <= 1e-6 * closed, "({a}, {c}, {e}): {closed} vs {quad}");
        let fast = heavy.triple_overlap(a, c, e);
        let direct = overlap_direct(&heavy, a, c, e);
        assert!((fast - direct).abs() <= 1e-6 * direct, "({a}, {c}, {e}): {fast} vs {direct}");
    }
}

#[test]
fn chapman_kolmogorov_at_the_origin() {
    let mut rng = substream(42, &[]);
    for cont in [continuum(0.85, 2.0, 0.5, 0.5), continuum(0.8, 1.5, 0.6, 0.5)] {
        let d = cont.density();
        for _ in 0..20 {
            let (a, b) = (rng.gen_range(0.05..2.0), rng.gen_range(0.05..2.0));
            let f = |u: f64| d.eval(a, u) * d.eval(b, u);
            let mut total = 0.0;
            let mut lo = 0.0;
            let mut hi = 0.25;
            while lo < 1e6 {
                total += adaptive_integrate(&f, lo, hi, 1e-13);
                lo = hi;
                hi *= 2.0;
            }
            let lhs = 2.0 * total;
            let rhs = d.eval(a + b, 0.0);
            assert!((lhs - rhs).abs() <= 1e-6 * rhs, "rho = {}, ({a}, {b}): {lhs} vs {rhs}", d.rho());
        }
    }
}

#[test]
fn hermite_coefficients_recompose_factorials() {
    for m in 0u32..=30 {
        let m_fact: u128 = (1..=m as u128).product();
        for k in 0..=m / 2 {
            let c = hu_meyer_coeff(m, k).unwrap();
            let rest: u128 = (1..=(m - 2 * k) as u128).product::<u128>() * (1..=k as u128).product::<u128>() << k;
            assert_eq!(c * rest, m_fact, "m = {m}, k = {k}");
        }
    }
    assert!(hu_meyer_coeff(4, 3).is_err());
}

#[test]
fn series_terms_are_negligible_by_order_sixty() {
    let cont = continuum(0.85, 2.0, 0.5, 0.5);
    let series = skorohod_second_moment(&cont, 2).unwrap();
    let beta: f64 = 0.5;
    let term = |m: usize| (ln_factorial(m) + 2.0 * m as f64 * beta.ln() + 2.0 * chaos_bound(m, &cont.params, series.bound_constant).unwrap().ln()).exp();
    assert!(term(60) < 1e-12, "term(60) = {}", term(60));
    assert!((55..60).all(|m| term(m + 1) < term(m)));
}

/// For `rho > 1` the log-ratio of consecutive series terms tends to minus
/// infinity; for `rho = 1` it settles to a constant.
#[test]
fn ratio_of_series_terms() {
    let ln_term = |m: usize, h: f64, rho: f64| ln_factorial(m) + 2.0 * chaos_bound_ln_shape(m, h, h - 0.5 / rho);
    let step = |m: usize, h: f64, rho: f64| ln_term(m + 1, h, rho) - ln_term(m, h, rho);
    for (h, rho) in [(0.85, 2.0), (0.8, 1.5), (0.75, 1.2)] {
        let d: Vec<f64> = [100usize, 1_000, 10_000, 100_000].iter().map(|&m| step(m, h, rho)).collect();
        assert!(d.windows(2).all(|w| w[1] < w[0] - 0.1), "H = {h}, rho = {rho}: {d:?}");
    }
    for h in [0.7, 0.9] {
        let d: Vec<f64> = [1_000usize, 10_000, 100_000].iter().map(|&m| step(m, h, 1.0)).collect();
        assert!((d[2] - d[1]).abs() < 0.01 && (d[1] - d[0]).abs() < 0.05, "H = {h}: {d:?}");
    }
}
