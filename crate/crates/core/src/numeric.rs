//! Summation, special functions, quadrature rules and small statistics.

use std::f64::consts::PI;

/// Pairwise summation with a fixed tree shape, so the result depends only on
/// the order of the input slice.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BASE: usize = 32;
    if xs.len() <= BASE {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Neumaier compensated accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// `log(sum(exp(xs)))`, stable for large arguments. Returns `-inf` on empty input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let shifted: Vec<f64> = xs.iter().map(|&x| (x - m).exp()).collect();
    m + pairwise_sum(&shifted).ln()
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(xs) / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|&x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Mean and standard error of `exp(logs)`, computed relative to the largest
/// log so that huge exponents do not overflow before the final rescaling.
/// Returns `(log_mean, mean, stderr)`.
pub fn exp_mean_stderr(logs: &[f64]) -> (f64, f64, f64) {
    let n = logs.len() as f64;
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = logs.iter().map(|&l| (l - m).exp()).collect();
    let (mean_s, se_s) = mean_stderr(&scaled);
    let log_mean = m + (pairwise_sum(&scaled) / n).ln();
    let scale = m.exp();
    (log_mean, mean_s * scale, se_s * scale)
}

pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// Gamma function on the whole real line except non-positive integers.
pub fn gamma(x: f64) -> f64 {
    if x > 0.0 {
        ln_gamma(x).exp()
    } else {
        PI / ((PI * x).sin() * ln_gamma(1.0 - x).exp())
    }
}

const BERNOULLI_OVER_FACT: [f64; 8] = [
    1.0 / 6.0 / 2.0,
    -1.0 / 30.0 / 24.0,
    1.0 / 42.0 / 720.0,
    -1.0 / 30.0 / 40320.0,
    5.0 / 66.0 / 3628800.0,
    -691.0 / 2730.0 / 479001600.0,
    7.0 / 6.0 / 87178291200.0,
    -3617.0 / 510.0 / 20922789888000.0,
];

/// Hurwitz zeta `sum_{k>=0} (a+k)^(-s)` by Euler-Maclaurin, for real `s != 1`,
/// `a > 0` and moderate `|s|`.
pub fn hurwitz_zeta(s: f64, a: f64) -> f64 {
    const N: usize = 40;
    let mut acc = Neumaier::new();
    for k in 0..N {
        acc.add((a + k as f64).powf(-s));
    }
    let x = a + N as f64;
    acc.add(x.powf(1.0 - s) / (s - 1.0));
    acc.add(0.5 * x.powf(-s));
    // rising factorial s (s+1) ... (s+2j-2) times x^(-s-2j+1)
    let mut rising = s;
    let mut xp = x.powf(-s - 1.0);
    for (j, &b) in BERNOULLI_OVER_FACT.iter().enumerate() {
        acc.add(b * rising * xp);
        let j2 = 2.0 * j as f64;
        rising *= (s + j2 + 1.0) * (s + j2 + 2.0);
        xp /= x * x;
    }
    acc.value()
}

/// Riemann zeta for real `s != 1`; negative arguments go through the
/// functional equation.
pub fn zeta(s: f64) -> f64 {
    if s >= 0.0 {
        hurwitz_zeta(s, 1.0)
    } else {
        let t = 1.0 - s;
        2.0 * (2.0 * PI).powf(s - 1.0) * (0.5 * PI * s).sin() * ln_gamma(t).exp() * zeta(t)
    }
}

/// `ln|zeta(s)|` and the sign of `zeta(s)` for `s < 0`, without overflow.
pub fn ln_abs_zeta_negative(s: f64) -> (f64, f64) {
    debug_assert!(s < 0.0);
    let t = 1.0 - s;
    let sine = (0.5 * PI * s).sin();
    let z = zeta(t);
    let ln = 2f64.ln() + (s - 1.0) * (2.0 * PI).ln() + sine.abs().ln() + ln_gamma(t) + z.abs().ln();
    (ln, sine.signum() * z.signum())
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
                p1 = x;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// A Gauss-Legendre rule that can be mapped onto arbitrary intervals.
#[derive(Clone, Debug)]
pub struct GaussRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(n: usize) -> Self {
        let (nodes, weights) = gauss_legendre(n);
        Self { nodes, weights }
    }

    /// Integrate `f` over `[a, b]`.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let h = 0.5 * (b - a);
        let c = 0.5 * (b + a);
        let mut s = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s += w * f(c + h * x);
        }
        s * h
    }

    /// Mapped nodes and weights on `[a, b]`.
    pub fn on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let h = 0.5 * (b - a);
        let c = 0.5 * (b + a);
        self.nodes.iter().zip(&self.weights).map(move |(x, w)| (c + h * x, w * h))
    }
}

/// Adaptive Gauss-Kronrod-free bisection using two Gauss rules of different order.
/// Returns the integral of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let lo = GaussRule::new(10);
    let hi = GaussRule::new(20);
    fn rec(f: &dyn Fn(f64) -> f64, lo: &GaussRule, hi: &GaussRule, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let i1 = lo.integrate(a, b, f);
        let i2 = hi.integrate(a, b, f);
        if (i1 - i2).abs() <= tol || depth >= 40 {
            return i2;
        }
        let m = 0.5 * (a + b);
        rec(f, lo, hi, a, m, 0.5 * tol, depth + 1) + rec(f, lo, hi, m, b, 0.5 * tol, depth + 1)
    }
    rec(f, &lo, &hi, a, b, tol, 0)
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0f64);
    while i < x.len() && j < y.len() {
        let t = x[i].min(y[j]);
        while i < x.len() && x[i] <= t {
            i += 1;
        }
        while j < y.len() && y[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Asymptotic p-value of the two-sample KS statistic `d` for sample sizes `n`, `m`.
pub fn ks_pvalue(d: f64, n: usize, m: usize) -> f64 {
    let ne = (n as f64 * m as f64) / (n + m) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = 2.0 * (-1f64).powi(k - 1) * (-2.0 * kf * kf * lambda * lambda).exp();
        s += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    s.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zeta_reference_values() {
        assert_relative_eq!(zeta(2.0), PI * PI / 6.0, max_relative = 1e-14);
        assert_relative_eq!(zeta(4.0), PI.powi(4) / 90.0, max_relative = 1e-14);
        assert_relative_eq!(zeta(2.5), 1.341_487_257_250_917_2, max_relative = 1e-13);
        assert_relative_eq!(zeta(0.5), -1.460_354_508_809_586_8, max_relative = 1e-12);
        assert_relative_eq!(zeta(-1.0), -1.0 / 12.0, max_relative = 1e-12);
        assert_relative_eq!(zeta(-3.0), 1.0 / 120.0, max_relative = 1e-12);
        assert_relative_eq!(zeta(-2.5), 0.008_516_928_777_850_33, max_relative = 1e-10);
    }

    #[test]
    fn ln_abs_zeta_matches_direct() {
        for &s in &[-0.5, -1.5, -2.5, -5.5, -9.5] {
            let (l, sg) = ln_abs_zeta_negative(s);
            assert_relative_eq!(sg * l.exp(), zeta(s), max_relative = 1e-11);
        }
    }

    #[test]
    fn gamma_negative_arguments() {
        assert_relative_eq!(gamma(-0.5), -2.0 * PI.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(gamma(-1.5), 4.0 / 3.0 * PI.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn gauss_legendre_exact_for_polynomials() {
        let rule = GaussRule::new(8);
        let v = rule.integrate(0.0, 2.0, |x| x.powi(15));
        assert_relative_eq!(v, 2f64.powi(16) / 16.0, max_relative = 1e-13);
        let (_, w) = gauss_legendre(7);
        assert_relative_eq!(w.iter().sum::<f64>(), 2.0, max_relative = 1e-14);
    }

    #[test]
    fn pairwise_matches_naive() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let naive: f64 = xs.iter().sum();
        assert!((pairwise_sum(&xs) - naive).abs() < 1e-12);
    }

    #[test]
    fn log_sum_exp_handles_large() {
        let v = log_sum_exp(&[1000.0, 1000.0]);
        assert_relative_eq!(v, 1000.0 + 2f64.ln(), max_relative = 1e-15);
    }

    #[test]
    fn ks_identical_samples() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(ks_statistic(&a, &a), 0.0);
        let b: Vec<f64> = (0..100).map(|i| i as f64 + 1000.0).collect();
        assert_eq!(ks_statistic(&a, &b), 1.0);
        assert!(ks_pvalue(1.0, 100, 100) < 1e-10);
    }
}
