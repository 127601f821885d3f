//! Lattice random walks in the domain of attraction of a symmetric stable law.
//!
//! Two increment laws are provided. For `rho = 2` the walk uses the finite law
//! `{0: 3/8, ±1: 1/4, ±2: 1/16}`, which has unit variance. For `rho < 2` the
//! walk uses a Pareto law `P(Y = ±k) = c k^(-1-rho)` with an atom at zero.
//!
//! [`TransitionKernel`] holds the exact `n`-step distribution on a window and
//! [`StableDensity`] evaluates the limiting density `g(t, x)`.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::numeric::{gamma, hurwitz_zeta, ln_abs_zeta_negative, ln_gamma, zeta, GaussRule, Neumaier};
use crate::rng::Stream;

/// Largest offset stored explicitly in the Pareto table.
pub const TAIL_CUTOFF: u64 = 1_000_000;

const RHO2_WEIGHTS: [f64; 3] = [3.0 / 8.0, 1.0 / 4.0, 1.0 / 16.0];

#[derive(Clone, Debug)]
enum LawKind {
    Finite { weights: [f64; 3], cdf: [f64; 5] },
    Pareto {
        /// `P(Y = k) = c |k|^(-1-rho)` for `k != 0`.
        c: f64,
        cutoff: u64,
        /// Conditional CDF of `|Y|` given `Y != 0`, for `|Y| = 1..=cutoff`.
        cdf: Arc<[f64]>,
    },
}

/// Symmetric, aperiodic increment law on the integers.
#[derive(Clone, Debug)]
pub struct IncrementLaw {
    rho: f64,
    atom_zero: f64,
    kind: LawKind,
}

impl IncrementLaw {
    /// Build the increment law for index `rho`.
    ///
    /// `zero_mass` is the atom at zero for `rho < 2`; the `rho = 2` law is fixed
    /// and ignores it apart from validation.
    pub fn new(rho: f64, zero_mass: f64) -> Result<Self> {
        if !(rho > 1.0 && rho <= 2.0) {
            return Err(Error::InvalidParameter(format!("rho = {rho} must lie in (1, 2]")));
        }
        if !(zero_mass > 0.0 && zero_mass < 1.0) {
            return Err(Error::InvalidParameter(format!("zero_mass = {zero_mass} must lie in (0, 1)")));
        }
        if rho == 2.0 {
            let w = RHO2_WEIGHTS;
            let cdf = [w[2], w[2] + w[1], w[2] + w[1] + w[0], 1.0 - w[2], 1.0];
            return Ok(Self { rho, atom_zero: w[0], kind: LawKind::Finite { weights: w, cdf } });
        }
        let s = 1.0 + rho;
        let z = zeta(s);
        let c = 0.5 * (1.0 - zero_mass) / z;
        let mut acc = Neumaier::new();
        let cdf: Vec<f64> = (1..=TAIL_CUTOFF)
            .map(|k| {
                acc.add((k as f64).powf(-s));
                acc.value() / z
            })
            .collect();
        Ok(Self {
            rho,
            atom_zero: zero_mass,
            kind: LawKind::Pareto { c, cutoff: TAIL_CUTOFF, cdf: cdf.into() },
        })
    }

    /// Stability index.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Probability of a zero step.
    pub fn atom_zero(&self) -> f64 {
        self.atom_zero
    }

    /// Always true for the laws built here.
    pub fn symmetric(&self) -> bool {
        true
    }

    /// Radius of the support, if finite.
    pub fn support_radius(&self) -> Option<u64> {
        match self.kind {
            LawKind::Finite { .. } => Some(2),
            LawKind::Pareto { .. } => None,
        }
    }

    /// `P(Y = k)`.
    pub fn weight(&self, k: i64) -> f64 {
        let a = k.unsigned_abs();
        match &self.kind {
            LawKind::Finite { weights, .. } => weights.get(a as usize).copied().unwrap_or(0.0),
            LawKind::Pareto { c, .. } => {
                if a == 0 {
                    self.atom_zero
                } else {
                    c * (a as f64).powf(-1.0 - self.rho)
                }
            }
        }
    }

    /// `P(|Y| > w)`.
    pub fn tail_beyond(&self, w: u64) -> f64 {
        match &self.kind {
            LawKind::Finite { weights, .. } => weights.iter().enumerate().skip(w as usize + 1).map(|(_, p)| 2.0 * p).sum(),
            LawKind::Pareto { c, .. } => 2.0 * c * hurwitz_zeta(1.0 + self.rho, (w + 1) as f64),
        }
    }

    /// Total mass of the law: the explicit table plus the analytic tail.
    pub fn total_mass(&self) -> f64 {
        match &self.kind {
            LawKind::Finite { weights, .. } => weights[0] + 2.0 * (weights[1] + weights[2]),
            LawKind::Pareto { c, cutoff, .. } => {
                let mut acc = Neumaier::new();
                acc.add(self.atom_zero);
                for k in (1..=*cutoff).rev() {
                    acc.add(2.0 * c * (k as f64).powf(-1.0 - self.rho));
                }
                acc.add(self.tail_beyond(*cutoff));
                acc.value()
            }
        }
    }

    /// Constant `C` with `P(Y = k) <= C |k|^(-1-rho)` for all `k != 0`.
    pub fn tail_constant(&self) -> f64 {
        match &self.kind {
            LawKind::Finite { weights, .. } => (1..=2).map(|k| weights[k] * (k as f64).powf(1.0 + self.rho)).fold(0.0, f64::max),
            LawKind::Pareto { c, .. } => *c,
        }
    }

    /// `sum_k k^2 P(Y = k)`; infinite for `rho < 2`.
    pub fn second_moment(&self) -> f64 {
        match &self.kind {
            LawKind::Finite { weights, .. } => 2.0 * (weights[1] + 4.0 * weights[2]),
            LawKind::Pareto { .. } => f64::INFINITY,
        }
    }

    /// `1 - psi(u)`, evaluated without cancellation near `u = 0`.
    pub fn one_minus_char_fn(&self, u: f64) -> f64 {
        let u = u - 2.0 * PI * (u / (2.0 * PI)).round();
        match &self.kind {
            LawKind::Finite { weights, .. } => {
                let mut s = 0.0;
                for (k, w) in weights.iter().enumerate().skip(1) {
                    let h = (0.5 * k as f64 * u).sin();
                    s += 4.0 * w * h * h;
                }
                s
            }
            LawKind::Pareto { c, .. } => 2.0 * c * pareto_cosine_sum(self.rho, u.abs()),
        }
    }

    /// Characteristic function `psi(u) = sum_k P(Y = k) cos(k u)`.
    pub fn char_fn(&self, u: f64) -> f64 {
        1.0 - self.one_minus_char_fn(u)
    }

    /// The law restricted to `[-w, w]`, indexed from `-w`.
    pub fn pmf_window(&self, w: u64) -> Vec<f64> {
        (-(w as i64)..=w as i64).map(|k| self.weight(k)).collect()
    }

    /// Draw one increment.
    pub fn sample_step(&self, rng: &mut Stream) -> i64 {
        match &self.kind {
            LawKind::Finite { cdf, .. } => {
                let u: f64 = rng.gen();
                cdf.iter().position(|&c| u < c).unwrap_or(4) as i64 - 2
            }
            LawKind::Pareto { cutoff, cdf, .. } => {
                let u: f64 = rng.gen();
                if u < self.atom_zero {
                    return 0;
                }
                let v: f64 = rng.gen();
                let last = cdf[cdf.len() - 1];
                let mag = if v < last {
                    cdf.partition_point(|&c| c <= v) as u64 + 1
                } else {
                    let w = ((v - last) / (1.0 - last)).min(1.0 - f64::EPSILON);
                    let x = (*cutoff as f64 + 0.5) * (1.0 - w).powf(-1.0 / self.rho);
                    (x.round() as u64).max(cutoff + 1)
                };
                if rng.gen::<bool>() {
                    mag as i64
                } else {
                    -(mag as i64)
                }
            }
        }
    }

    /// Path `(S_1, ..., S_length)` of the walk started at `start`.
    pub fn sample_path(&self, length: usize, start: i64, rng: &mut Stream) -> Vec<i64> {
        let mut out = Vec::with_capacity(length);
        let mut s = start;
        for _ in 0..length {
            s += self.sample_step(rng);
            out.push(s);
        }
        out
    }
}

/// `sum_{k>=1} (1 - cos(k u)) k^(-1-rho)` for `0 <= u <= pi`, from the
/// polylogarithm expansion around `u = 0`.
fn pareto_cosine_sum(rho: f64, u: f64) -> f64 {
    if u == 0.0 {
        return 0.0;
    }
    let lead = -gamma(-rho) * (0.5 * PI * rho).cos() * u.powf(rho);
    let mut acc = Neumaier::new();
    acc.add(lead);
    acc.add(zeta(rho - 1.0) * u * u / 2.0);
    let lu = u.ln();
    for j in 2..200 {
        let s = 1.0 + rho - 2.0 * j as f64;
        let (lz, sg) = ln_abs_zeta_negative(s);
        let lt = lz + 2.0 * j as f64 * lu - ln_gamma(2.0 * j as f64 + 1.0);
        let sign = if j % 2 == 0 { -sg } else { sg };
        let term = sign * lt.exp();
        acc.add(term);
        if term.abs() < 1e-18 * acc.value().abs() {
            break;
        }
    }
    acc.value()
}

/// Closed form of `lim (1 - psi(u)) / |u|^rho` for the Pareto law.
pub fn analytic_c_rho(law: &IncrementLaw) -> f64 {
    match &law.kind {
        LawKind::Finite { .. } => 0.5 * law.second_moment(),
        LawKind::Pareto { c, .. } => {
            let rho = law.rho;
            c * PI / (ln_gamma(1.0 + rho).exp() * (0.5 * PI * rho).sin())
        }
    }
}

/// Estimate `c_rho = lim_{u -> 0} (1 - psi(u)) / |u|^rho` by Richardson
/// extrapolation along `u = 2^-j`.
pub fn calibrate_c_rho(law: &IncrementLaw) -> Result<f64> {
    let rho = law.rho;
    let p = if rho < 2.0 { 2.0 - rho } else { 2.0 };
    let r = 2f64.powf(p);
    let f = |j: i32| {
        let u = 2f64.powi(-j);
        law.one_minus_char_fn(u) / u.powf(rho)
    };
    let extrap: Vec<f64> = (4..24).map(|j| (r * f(j + 1) - f(j)) / (r - 1.0)).collect();
    let last = extrap[extrap.len() - 1];
    let prev = extrap[extrap.len() - 2];
    if !(last > 0.0) || ((last - prev) / last).abs() > 1e-4 {
        return Err(Error::Calibration(format!("c_rho ladder did not settle: {prev} vs {last}")));
    }
    Ok(last)
}

/// Exact distribution of `S_n - S_0` restricted to `[-window, window]`.
#[derive(Clone, Debug)]
pub struct TransitionKernel {
    n: u64,
    window: u64,
    probs: Vec<f64>,
    tail_mass: f64,
}

/// Largest tail mass accepted by [`TransitionKernel::new`].
pub const MAX_KERNEL_TAIL: f64 = 0.01;

impl TransitionKernel {
    /// `n`-step kernel by repeated doubling with FFT convolution.
    pub fn new(law: &IncrementLaw, n: u64, window: u64) -> Result<Self> {
        let len = 2 * window as usize + 1;
        let mut conv = Convolver::new(len);
        let mut result = Self::delta(window);
        let mut base = Self { n: 1, window, probs: law.pmf_window(window), tail_mass: law.tail_beyond(window) };
        base.renormalize();
        let mut m = n;
        while m > 0 {
            if m & 1 == 1 {
                result = conv.combine(&result, &base);
            }
            m >>= 1;
            if m > 0 {
                base = conv.combine(&base, &base);
            }
        }
        if result.tail_mass > MAX_KERNEL_TAIL {
            return Err(Error::KernelWindow { tail: result.tail_mass, limit: MAX_KERNEL_TAIL });
        }
        Ok(result)
    }

    /// Kernel with the recommended window `4 ceil(n^(1/rho))`, enlarged until the
    /// tail mass is below `tail_target`.
    pub fn with_tail_target(law: &IncrementLaw, n: u64, tail_target: f64) -> Result<Self> {
        let mut w = 4 * (n as f64).powf(1.0 / law.rho).ceil().max(1.0) as u64 + 4;
        loop {
            match Self::new(law, n, w) {
                Ok(k) if k.tail_mass <= tail_target => return Ok(k),
                Ok(_) | Err(Error::KernelWindow { .. }) if w < (1 << 24) => w *= 2,
                Ok(k) => return Ok(k),
                Err(e) => return Err(e),
            }
        }
    }

    fn delta(window: u64) -> Self {
        let mut probs = vec![0.0; 2 * window as usize + 1];
        probs[window as usize] = 1.0;
        Self { n: 0, window, probs, tail_mass: 0.0 }
    }

    fn renormalize(&mut self) {
        for p in &mut self.probs {
            if *p < 0.0 {
                *p = 0.0;
            }
        }
        let mut acc = Neumaier::new();
        for &p in &self.probs {
            acc.add(p);
        }
        let s = acc.value();
        if s > 0.0 {
            let f = (1.0 - self.tail_mass) / s;
            for p in &mut self.probs {
                *p *= f;
            }
        }
    }

    /// Self-convolution, truncated to the same window.
    pub fn convolve(&self, other: &TransitionKernel) -> TransitionKernel {
        assert_eq!(self.window, other.window, "kernels must share a window");
        Convolver::new(self.probs.len()).combine(self, other)
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn window(&self) -> u64 {
        self.window
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// Probabilities on `[-window, window]`.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `P_n(k)`, zero outside the window.
    pub fn get(&self, k: i64) -> f64 {
        let w = self.window as i64;
        if k < -w || k > w {
            0.0
        } else {
            self.probs[(k + w) as usize]
        }
    }
}

struct Convolver {
    len: usize,
    size: usize,
    fwd: Arc<dyn rustfft::Fft<f64>>,
    inv: Arc<dyn rustfft::Fft<f64>>,
}

impl Convolver {
    fn new(len: usize) -> Self {
        let size = (2 * len - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        Self { len, size, fwd: planner.plan_fft_forward(size), inv: planner.plan_fft_inverse(size) }
    }

    fn combine(&mut self, a: &TransitionKernel, b: &TransitionKernel) -> TransitionKernel {
        let w = a.window as usize;
        let mut fa: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); self.size];
        let mut fb = fa.clone();
        for i in 0..self.len {
            fa[i].re = a.probs[i];
            fb[i].re = b.probs[i];
        }
        self.fwd.process(&mut fa);
        self.fwd.process(&mut fb);
        for (x, y) in fa.iter_mut().zip(&fb) {
            *x *= y;
        }
        self.inv.process(&mut fa);
        let scale = 1.0 / self.size as f64;
        // Linear convolution index i corresponds to offset i - 2w.
        let mut inside = Neumaier::new();
        let mut total = Neumaier::new();
        let mut probs = vec![0.0; self.len];
        for (i, z) in fa.iter().take(2 * self.len - 1).enumerate() {
            let v = (z.re * scale).max(0.0);
            total.add(v);
            if i >= w && i < w + self.len {
                probs[i - w] = v;
                inside.add(v);
            }
        }
        let escaped = (total.value() - inside.value()).max(0.0);
        let (ta, tb) = (a.tail_mass, b.tail_mass);
        let tail = (ta + tb - ta * tb + escaped).min(1.0);
        let mut out = TransitionKernel { n: a.n + b.n, window: a.window, probs, tail_mass: tail };
        out.renormalize();
        out
    }
}

/// Return probabilities `P_m(0)` for `m = 0..=m_max` from powers of the
/// characteristic function on a DFT grid. Returns the values and an
/// aliasing error estimate (zero for finite-support laws on a large enough grid).
pub fn return_probabilities(law: &IncrementLaw, m_max: usize) -> (Vec<f64>, f64) {
    let powers = |l: usize| -> Vec<f64> {
        // psi is even, so half the grid suffices.
        let mut acc = vec![Neumaier::new(); m_max + 1];
        for j in 0..=l / 2 {
            let u = 2.0 * PI * j as f64 / l as f64;
            let psi = law.char_fn(u);
            let mult = if j == 0 || 2 * j == l { 1.0 } else { 2.0 };
            let mut p = mult;
            for a in acc.iter_mut() {
                a.add(p);
                p *= psi;
            }
        }
        acc.iter().map(|a| a.value() / l as f64).collect()
    };
    match law.support_radius() {
        Some(r) => {
            let l = (2 * r as usize * m_max + 2).next_power_of_two().max(64);
            (powers(l), 0.0)
        }
        None => {
            let base = (8.0 * (m_max as f64).powf(1.0 / law.rho)).ceil() as usize;
            let mut l = (base.max(1024)).next_power_of_two();
            let mut cur = powers(l);
            loop {
                let next = powers(2 * l);
                let err = cur.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                l *= 2;
                if err < 1e-9 || l > (1 << 22) {
                    return (next, err);
                }
                cur = next;
            }
        }
    }
}

/// Calibrated constant `C` in `P_n(k) <= C n^(-1/rho) min(|k n^(-1/rho)|^(-1-rho), 1)`
/// over the supplied step counts.
pub fn kernel_bound_constant(law: &IncrementLaw, ns: &[u64]) -> Result<f64> {
    let mut c: f64 = 0.0;
    for &n in ns {
        let kern = TransitionKernel::with_tail_target(law, n, 1e-3)?;
        let scale = (n as f64).powf(1.0 / law.rho);
        let w = kern.window as i64;
        for k in -w..=w {
            let y = (k as f64 / scale).abs();
            let envelope = scale.recip() * if y > 1.0 { y.powf(-1.0 - law.rho) } else { 1.0 };
            c = c.max(kern.get(k) / envelope);
        }
    }
    Ok(c)
}

const DENSITY_STEP: f64 = 1.0 / 32.0;
const DENSITY_RANGE: f64 = 64.0;

#[derive(Debug)]
struct DensityTable {
    values: Vec<f64>,
    derivs: Vec<f64>,
    /// Coefficients of `y^(-k rho - 1)` in the tail expansion, `k = 1..=6`.
    tail: [f64; 6],
}

/// Density `g(t, x)` of the symmetric stable law with characteristic function
/// `exp(-c_rho t |eta|^rho)`.
#[derive(Clone, Debug)]
pub struct StableDensity {
    rho: f64,
    c_rho: f64,
    table: Option<Arc<DensityTable>>,
}

impl StableDensity {
    /// Density for index `rho` and scale `c_rho`. For `rho < 2` this fills an
    /// interpolation table of `g(1, .)` on `[0, 64]`.
    pub fn new(rho: f64, c_rho: f64) -> Result<Self> {
        if !(rho > 1.0 && rho <= 2.0) || !(c_rho > 0.0) {
            return Err(Error::InvalidParameter(format!("stable density needs rho in (1,2], c_rho > 0; got {rho}, {c_rho}")));
        }
        let mut sd = Self { rho, c_rho, table: None };
        if rho < 2.0 {
            let nodes = sd.fourier_nodes(DENSITY_RANGE);
            let count = (DENSITY_RANGE / DENSITY_STEP).round() as usize + 1;
            let mut values = Vec::with_capacity(count);
            let mut derivs = Vec::with_capacity(count);
            for i in 0..count {
                let (v, d) = Self::fourier_eval(&nodes, i as f64 * DENSITY_STEP);
                values.push(v);
                derivs.push(d);
            }
            let mut tail = [0.0; 6];
            let mut ck = 1.0;
            for (i, t) in tail.iter_mut().enumerate() {
                let kf = (i + 1) as f64;
                ck *= c_rho;
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                *t = sign * (ln_gamma(kf * rho + 1.0) - ln_gamma(kf + 1.0)).exp() * (0.5 * kf * PI * rho).sin() * ck / PI;
            }
            sd.table = Some(Arc::new(DensityTable { values, derivs, tail }));
        }
        Ok(sd)
    }

    /// Density of the scaling limit of `law`, with `c_rho` calibrated from it.
    pub fn from_law(law: &IncrementLaw) -> Result<Self> {
        Self::new(law.rho, calibrate_c_rho(law)?)
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn c_rho(&self) -> f64 {
        self.c_rho
    }

    /// Quadrature nodes `(eta, weight * exp(-c eta^rho))` adequate for `|y| <= y_max`.
    fn fourier_nodes(&self, y_max: f64) -> Vec<(f64, f64)> {
        let rule = GaussRule::new(20);
        let eta_max = (40.0 / self.c_rho).powf(1.0 / self.rho);
        let mut edges = vec![0.0];
        for k in (0..=14).rev() {
            edges.push(2f64.powi(-k));
        }
        let h = (PI / y_max.max(1.0)).min(1.0);
        let panels = ((eta_max - 1.0) / h).ceil().max(1.0) as usize;
        let h = (eta_max - 1.0) / panels as f64;
        for i in 1..=panels {
            edges.push(1.0 + i as f64 * h);
        }
        let mut out = Vec::new();
        for win in edges.windows(2) {
            for (x, w) in rule.on(win[0], win[1]) {
                out.push((x, w * (-self.c_rho * x.powf(self.rho)).exp()));
            }
        }
        out
    }

    fn fourier_eval(nodes: &[(f64, f64)], y: f64) -> (f64, f64) {
        let mut v = Neumaier::new();
        let mut d = Neumaier::new();
        for &(eta, w) in nodes {
            let (s, c) = (y * eta).sin_cos();
            v.add(w * c);
            d.add(-w * eta * s);
        }
        (v.value() / PI, d.value() / PI)
    }

    /// `g(1, y)` and its derivative by direct quadrature of the Fourier integral.
    pub fn g1_quadrature(&self, y: f64) -> (f64, f64) {
        let nodes = self.fourier_nodes(y.abs());
        let (v, d) = Self::fourier_eval(&nodes, y.abs());
        (v, if y < 0.0 { -d } else { d })
    }

    /// Leading terms of the large-`|y|` expansion of `g(1, y)` for `rho < 2`.
    fn g1_asymptotic(tab: &DensityTable, rho: f64, y: f64) -> f64 {
        let y = y.abs();
        let z = y.powf(-rho);
        let s = tab.tail.iter().rev().fold(0.0, |acc, c| (acc + c) * z);
        s / y
    }

    /// Mass of `g(1, .)` beyond `|y| > x` on one side, from the tail expansion.
    pub fn g1_tail_mass(&self, x: f64) -> f64 {
        if self.rho == 2.0 {
            let var = 2.0 * self.c_rho;
            return 0.5 * statrs::function::erf::erfc(x / (2.0 * var).sqrt());
        }
        let mut s = 0.0;
        let mut ck = 1.0;
        for k in 1..=6 {
            let kf = k as f64;
            ck *= self.c_rho;
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            s += sign * (ln_gamma(kf * self.rho + 1.0) - ln_gamma(kf + 1.0)).exp() * (0.5 * kf * PI * self.rho).sin() * ck * x.powf(-kf * self.rho)
                / (kf * self.rho);
        }
        s / PI
    }

    /// `g(1, y)`.
    pub fn g1(&self, y: f64) -> f64 {
        match &self.table {
            None => {
                let var = 2.0 * self.c_rho;
                (-y * y / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
            }
            Some(tab) => {
                let a = y.abs();
                if a >= DENSITY_RANGE {
                    return Self::g1_asymptotic(tab, self.rho, a);
                }
                let pos = a / DENSITY_STEP;
                let i = (pos.floor() as usize).min(tab.values.len() - 2);
                let t = pos - i as f64;
                let (p0, p1) = (tab.values[i], tab.values[i + 1]);
                let (m0, m1) = (tab.derivs[i] * DENSITY_STEP, tab.derivs[i + 1] * DENSITY_STEP);
                let t2 = t * t;
                let t3 = t2 * t;
                (2.0 * t3 - 3.0 * t2 + 1.0) * p0 + (t3 - 2.0 * t2 + t) * m0 + (-2.0 * t3 + 3.0 * t2) * p1 + (t3 - t2) * m1
            }
        }
    }

    /// `g(t, x) = t^(-1/rho) g(1, t^(-1/rho) x)` without argument checks.
    #[inline]
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        let s = t.powf(-1.0 / self.rho);
        s * self.g1(s * x)
    }

    /// `g(t, x)` for `t > 0`.
    pub fn density(&self, t: f64, x: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::InvalidParameter(format!("stable density needs t > 0, got {t}")));
        }
        Ok(self.eval(t, x))
    }
}

/// `sup_k |n^(1/rho) P_n(k) - g(1, k n^(-1/rho))|` over a window of at least
/// `8 n^(1/rho)`, enlarged until the kernel tail is below `1e-3`.
pub fn llt_residual(law: &IncrementLaw, density: &StableDensity, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("llt_residual needs n >= 1".into()));
    }
    let scale = (n as f64).powf(1.0 / law.rho);
    let mut w = 8 * scale.ceil() as u64 + 8;
    let kern = loop {
        match TransitionKernel::new(law, n, w) {
            Ok(k) if k.tail_mass <= 1e-3 => break k,
            Ok(_) | Err(Error::KernelWindow { .. }) => w *= 2,
            Err(e) => return Err(e),
        }
    };
    let wi = kern.window as i64;
    Ok((-wi..=wi).map(|k| (scale * kern.get(k) - density.g1(k as f64 / scale)).abs()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use approx::assert_relative_eq;

    fn brute_one_minus_psi(law: &IncrementLaw, u: f64) -> f64 {
        let mut acc = Neumaier::new();
        for k in (1..=TAIL_CUTOFF as i64).rev() {
            let h = (0.5 * k as f64 * u).sin();
            acc.add(4.0 * law.weight(k) * h * h);
        }
        acc.value()
    }

    #[test]
    fn rho2_law_moments() {
        let law = IncrementLaw::new(2.0, 0.5).unwrap();
        assert_eq!(law.second_moment(), 1.0);
        assert_eq!(law.total_mass(), 1.0);
        assert_eq!(law.weight(3), 0.0);
        assert_eq!(law.char_fn(0.0), 1.0);
        assert!(law.char_fn(PI).abs() < 1e-15);
        assert!((law.char_fn(2.0 * PI) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pareto_law_normalization_and_ratio() {
        let law = IncrementLaw::new(1.5, 0.5).unwrap();
        assert!((law.total_mass() - 1.0).abs() < 1e-12);
        assert_relative_eq!(law.weight(3) / law.weight(1), 3f64.powf(-2.5), max_relative = 1e-14);
        assert_eq!(law.weight(-7), law.weight(7));
        for k in 1..100 {
            assert!(law.weight(k) <= law.tail_constant() * (k as f64).powf(-2.5) * (1.0 + 1e-15));
        }
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(IncrementLaw::new(1.0, 0.5).is_err());
        assert!(IncrementLaw::new(2.1, 0.5).is_err());
        assert!(IncrementLaw::new(1.5, 0.0).is_err());
        assert!(IncrementLaw::new(1.5, 1.0).is_err());
    }

    #[test]
    fn pareto_char_fn_matches_brute_series() {
        let law = IncrementLaw::new(1.5, 0.5).unwrap();
        for &u in &[0.01, 0.3, 1.0, 2.5, PI] {
            let series = law.one_minus_char_fn(u);
            let brute = brute_one_minus_psi(&law, u);
            // The brute sum omits |k| > cutoff, whose mass is below 1e-9.
            assert!((series - brute).abs() < 2e-9, "u={u}: {series} vs {brute}");
        }
    }

    #[test]
    fn c_rho_rho2_is_half() {
        let law = IncrementLaw::new(2.0, 0.5).unwrap();
        assert!((calibrate_c_rho(&law).unwrap() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn c_rho_pareto_matches_brute_and_closed_form() {
        let law = IncrementLaw::new(1.5, 0.5).unwrap();
        let c = calibrate_c_rho(&law).unwrap();
        let u = 1e-4;
        let brute = brute_one_minus_psi(&law, u) / u.powf(1.5);
        assert!(((c - brute) / c).abs() < 0.01, "{c} vs {brute}");
        assert_relative_eq!(c, analytic_c_rho(&law), max_relative = 1e-6);
    }

    #[test]
    fn kernel_small_n() {
        let law = IncrementLaw::new(2.0, 0.5).unwrap();
        let k0 = TransitionKernel::new(&law, 0, 8).unwrap();
        assert_eq!(k0.get(0), 1.0);
        assert_eq!(k0.get(1), 0.0);
        let k1 = TransitionKernel::new(&law, 1, 8).unwrap();
        for k in -3..=3 {
            assert!((k1.get(k) - law.weight(k)).abs() < 1e-15);
        }
        let k2 = TransitionKernel::new(&law, 2, 8).unwrap();
        assert!((k2.get(0) - 0.2734375).abs() < 1e-15);
    }

    #[test]
    fn kernel_window_too_small_is_error() {
        let law = IncrementLaw::new(2.0, 0.5).unwrap();
        assert!(matches!(TransitionKernel::new(&law, 1024, 8), Err(Error::KernelWindow { .. })));
    }

    #[test]
    fn sampler_zero_frequency() {
        let law = IncrementLaw::new(2.0, 0.5).unwrap();
        let mut rng = substream(11, &[0]);
        let n = 1_000_000;
        let zeros = (0..n).filter(|_| law.sample_path(1, 5, &mut rng)[0] == 5).count();
        let p = zeros as f64 / n as f64;
        let sd = (0.375 * 0.625 / n as f64).sqrt();
        assert!((p - 0.375).abs() < 3.0 * sd, "p = {p}");
    }

    #[test]
    fn pareto_sampler_matches_weights() {
        let law = IncrementLaw::new(1.5, 0.5).unwrap();
        let mut rng = substream(3, &[1]);
        let n = 400_000;
        let mut counts = [0usize; 5];
        for _ in 0..n {
            let y = law.sample_step(&mut rng);
            if y.abs() <= 2 {
                counts[(y + 2) as usize] += 1;
            }
        }
        for (i, &c) in counts.iter().enumerate() {
            let p = law.weight(i as i64 - 2);
            let sd = (p * (1.0 - p) / n as f64).sqrt();
            assert!((c as f64 / n as f64 - p).abs() < 4.0 * sd);
        }
    }

    #[test]
    fn gaussian_density_at_zero() {
        let sd = StableDensity::new(2.0, 0.5).unwrap();
        assert_relative_eq!(sd.eval(1.0, 0.0), 1.0 / (2.0 * PI).sqrt(), max_relative = 1e-15);
        assert!(sd.density(0.0, 1.0).is_err());
    }

    #[test]
    fn stable_table_matches_direct_quadrature() {
        let sd = StableDensity::new(1.5, 0.6).unwrap();
        // Reference values from an arbitrary-precision panel quadrature.
        let frozen = [
            (0.0, 0.403937828398483588),
            (0.013, 0.403888022646699594),
            (0.5, 0.337997057236799164),
            (1.77, 0.0727590260113301542),
            (5.3, 0.00325390273305263794),
            (20.1, 0.000101248382662614270),
            (63.9, 5.52076701716005085e-6),
        ];
        for &(y, want) in &frozen {
            let (direct, _) = sd.g1_quadrature(y);
            assert!((direct - want).abs() < 1e-12, "y={y}: {direct}");
            assert!((sd.g1(y) - want).abs() < 1e-8, "y={y}: {}", sd.g1(y));
            assert_eq!(sd.g1(-y), sd.g1(y));
        }
        // The asymptotic branch joins the table continuously.
        assert_relative_eq!(sd.g1(64.0), sd.g1_quadrature(64.0).0, max_relative = 1e-6);
    }

    #[test]
    fn stable_density_normalized() {
        for &(rho, c) in &[(1.5, 0.62), (1.2, 1.0), (1.9, 0.4)] {
            let sd = StableDensity::new(rho, c).unwrap();
            let rule = GaussRule::new(10);
            let mut acc = Neumaier::new();
            let h = 1.0 / 16.0;
            for i in 0..(64.0 / h) as usize {
                let a = i as f64 * h;
                acc.add(2.0 * rule.integrate(a, a + h, |y| sd.g1(y)));
            }
            let total = acc.value() + 2.0 * sd.g1_tail_mass(64.0);
            assert!((total - 1.0).abs() < 1e-6, "rho={rho}: {total}");
        }
    }

    #[test]
    fn llt_rho2_converges() {
        let law = IncrementLaw::new(2.0, 0.5).unwrap();
        let sd = StableDensity::from_law(&law).unwrap();
        let r1 = llt_residual(&law, &sd, 1).unwrap();
        let r4096 = llt_residual(&law, &sd, 4096).unwrap();
        assert!(r4096 < r1);
        assert!(r4096 < 0.01);
    }

    #[test]
    fn return_probabilities_match_kernels() {
        let law = IncrementLaw::new(2.0, 0.5).unwrap();
        let (p, err) = return_probabilities(&law, 64);
        assert_eq!(err, 0.0);
        for m in [0u64, 1, 2, 7, 64] {
            let k = TransitionKernel::new(&law, m, 200).unwrap();
            assert!((p[m as usize] - k.get(0)).abs() < 1e-14);
        }
    }
}
