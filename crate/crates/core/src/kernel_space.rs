//! Inner products with the singular time weight `|s - t|^(2H-2)`, the
//! `B`-norm, block averaging on the space-time lattice and simplex integrals.
//!
//! For an order-`m` kernel `f((t_1, x_1), ..., (t_m, x_m))` the inner product is
//!
//! ```text
//! <f, g> = int prod_i |s_i - t_i|^(2H-2) f(s, x) g(t, x) ds dt dx
//! ```
//!
//! The time weight is integrable but singular on the diagonal. Each axis pair
//! `(s_i, t_i)` is written as `(l, l + d)` or `(l + d, l)` and the gap is
//! mapped through `d = v^(1/(2H-1))`, which turns `d^(2H-2) dd` into a
//! constant multiple of `dv`.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numeric::{ln_gamma, mean_stderr, GaussRule, Neumaier};
use crate::rng::substream;

type EvalFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;

/// A kernel on `([0,1] x R)^m` that vanishes whenever some `|x_i| > support`.
#[derive(Clone)]
pub struct KernelFn {
    m: usize,
    support: f64,
    f: Arc<EvalFn>,
    time_breaks: Vec<f64>,
    space_breaks: Vec<f64>,
}

impl std::fmt::Debug for KernelFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KernelFn").field("m", &self.m).field("support", &self.support).finish()
    }
}

impl KernelFn {
    /// Kernel of order `m` evaluated as `f(times, xs)`.
    pub fn new(m: usize, support: f64, f: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("kernel order must be at least 1".into()));
        }
        if !(support.is_finite() && support > 0.0) {
            return Err(Error::InvalidParameter(format!("spatial support must be finite and positive, got {support}")));
        }
        Ok(Self { m, support, f: Arc::new(f), time_breaks: Vec::new(), space_breaks: Vec::new() })
    }

    /// Points in `(0, 1)` where the kernel may jump in any time argument.
    pub fn with_time_breaks(mut self, mut breaks: Vec<f64>) -> Self {
        breaks.retain(|&b| b > 0.0 && b < 1.0);
        self.time_breaks = breaks;
        self
    }

    /// Points where the kernel may jump in any space argument.
    pub fn with_space_breaks(mut self, breaks: Vec<f64>) -> Self {
        self.space_breaks = breaks;
        self
    }

    /// `1_{[0,1] x [0,1]}`.
    pub fn unit_indicator() -> Self {
        Self::new(1, 1.0, |_t, x| if (0.0..=1.0).contains(&x[0]) { 1.0 } else { 0.0 })
            .expect("valid kernel")
            .with_space_breaks(vec![0.0, 1.0])
    }

    pub fn order(&self) -> usize {
        self.m
    }

    pub fn support(&self) -> f64 {
        self.support
    }

    pub fn time_breaks(&self) -> &[f64] {
        &self.time_breaks
    }

    pub fn space_breaks(&self) -> &[f64] {
        &self.space_breaks
    }

    /// Value at `(times, xs)`.
    #[inline]
    pub fn eval(&self, times: &[f64], xs: &[f64]) -> f64 {
        if xs.iter().any(|x| x.abs() > self.support) {
            return 0.0;
        }
        (self.f)(times, xs)
    }

    /// `|f|`.
    pub fn abs(&self) -> Self {
        let f = self.f.clone();
        Self { f: Arc::new(move |t, x| f(t, x).abs()), ..self.clone() }
    }

    /// `c f`.
    pub fn scaled(&self, c: f64) -> Self {
        let f = self.f.clone();
        Self { f: Arc::new(move |t, x| c * f(t, x)), ..self.clone() }
    }

    /// `f + g`, on the union of supports and breakpoints.
    pub fn sum(&self, other: &KernelFn) -> Result<Self> {
        if self.m != other.m {
            return Err(Error::InvalidParameter("kernel orders differ".into()));
        }
        let (f, g) = (self.clone(), other.clone());
        let support = self.support.max(other.support);
        let mut tb = self.time_breaks.clone();
        tb.extend_from_slice(&other.time_breaks);
        let mut sb = self.space_breaks.clone();
        sb.extend_from_slice(&other.space_breaks);
        Ok(Self::new(self.m, support, move |t, x| f.eval(t, x) + g.eval(t, x))?.with_time_breaks(tb).with_space_breaks(sb))
    }
}

/// Result of a numerical integration.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QuadEstimate {
    pub value: f64,
    /// Error estimate: difference between successive rules, or the Monte Carlo standard error.
    pub error: f64,
    pub converged: bool,
    pub nodes: u64,
    pub monte_carlo: bool,
}

/// Node budget above which tensor quadrature gives way to Monte Carlo.
pub const MAX_TENSOR_NODES: u64 = 100_000_000;

fn sorted_unique(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    v
}

/// Nodes `(s, t, w)` integrating `|s - t|^(2H-2) phi(s, t)` over `[0,1]^2`
/// for `phi` smooth between the lines `s = b` and `t = b`, `b` in `breaks`.
pub fn singular_pair_rule(h: f64, breaks: &[f64], q: usize) -> Vec<(f64, f64, f64)> {
    let rule = GaussRule::new(q);
    let e = 2.0 * h - 1.0;
    let mut tau = vec![0.0, 1.0];
    tau.extend(breaks.iter().copied().filter(|&b| b > 0.0 && b < 1.0));
    let tau = sorted_unique(tau);
    let mut vs = vec![0.0, 1.0];
    for &a in &tau {
        for &b in &tau {
            if b > a {
                vs.push((b - a).powf(e));
            }
        }
    }
    let mut vs = sorted_unique(vs);
    // Geometric grading toward v = 0, where d(v) is not smooth.
    let first = vs[1];
    vs.extend((1..=16).map(|j| first * 0.25f64.powi(j)));
    let vs = sorted_unique(vs);
    let c = 1.0 / e;
    let mut out = Vec::new();
    for vw in vs.windows(2) {
        for (v, wv) in rule.on(vw[0], vw[1]) {
            let d = v.powf(1.0 / e);
            let top = 1.0 - d;
            if top <= 0.0 {
                continue;
            }
            let mut cuts = vec![0.0, top];
            for &b in &tau {
                if b > 0.0 && b < top {
                    cuts.push(b);
                }
                if b - d > 0.0 && b - d < top {
                    cuts.push(b - d);
                }
            }
            let cuts = sorted_unique(cuts);
            for lw in cuts.windows(2) {
                for (l, wl) in rule.on(lw[0], lw[1]) {
                    let w = c * wv * wl;
                    out.push((l, l + d, w));
                    out.push((l + d, l, w));
                }
            }
        }
    }
    out
}

/// Plain Gauss nodes on `[-r, r]` split at `breaks`.
fn space_rule(r: f64, breaks: &[f64], q: usize) -> Vec<(f64, f64)> {
    let rule = GaussRule::new(q);
    let mut edges = vec![-r, r];
    edges.extend(breaks.iter().copied().filter(|&b| b > -r && b < r));
    let edges = sorted_unique(edges);
    edges.windows(2).flat_map(|w| rule.on(w[0], w[1]).collect::<Vec<_>>()).collect()
}

fn tensor_inner(f: &KernelFn, g: &KernelFn, pairs: &[(f64, f64, f64)], space: &[(f64, f64)]) -> f64 {
    let m = f.m;
    let mut s = vec![0.0; m];
    let mut t = vec![0.0; m];
    let mut x = vec![0.0; m];
    fn rec(axis: usize, w: f64, f: &KernelFn, g: &KernelFn, pairs: &[(f64, f64, f64)], space: &[(f64, f64)], s: &mut [f64], t: &mut [f64], x: &mut [f64], acc: &mut Neumaier) {
        if axis == s.len() {
            let v = f.eval(s, x);
            if v != 0.0 {
                acc.add(w * v * g.eval(t, x));
            }
            return;
        }
        for &(xs, wx) in space {
            x[axis] = xs;
            for &(ss, tt, wp) in pairs {
                s[axis] = ss;
                t[axis] = tt;
                rec(axis + 1, w * wx * wp, f, g, pairs, space, s, t, x, acc);
            }
        }
    }
    let mut acc = Neumaier::new();
    rec(0, 1.0, f, g, pairs, space, &mut s, &mut t, &mut x, &mut acc);
    acc.value()
}

/// Draw `(s, t)` with weight from the singular pair measure: returns the pair
/// and the importance weight so that `E[w phi(s,t)] = int |s-t|^(2H-2) phi`.
/// `v` is the (possibly stratified) uniform driving the gap.
#[inline]
pub fn singular_pair_draw(h: f64, v: f64, l_unif: f64, flip: bool) -> (f64, f64, f64) {
    let e = 2.0 * h - 1.0;
    let d = v.powf(1.0 / e);
    let l = l_unif * (1.0 - d);
    let w = 2.0 * (1.0 - d) / e;
    if flip {
        (l + d, l, w)
    } else {
        (l, l + d, w)
    }
}

/// Stratified Monte Carlo estimate of `<f, g>` with `batches` independent
/// Latin-hypercube replicates of `per_batch` points each.
pub fn h_inner_monte_carlo(f: &KernelFn, g: &KernelFn, h: f64, per_batch: usize, batches: usize, seed: u64) -> QuadEstimate {
    let m = f.m;
    let r = f.support.min(g.support);
    let vals: Vec<f64> = (0..batches)
        .map(|b| {
            let mut rng = substream(seed, &[0x6b73, b as u64]);
            let perms: Vec<Vec<usize>> = (0..m)
                .map(|_| {
                    let mut p: Vec<usize> = (0..per_batch).collect();
                    for i in (1..p.len()).rev() {
                        p.swap(i, rng.gen_range(0..=i));
                    }
                    p
                })
                .collect();
            let mut acc = Neumaier::new();
            let (mut s, mut t, mut x) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
            for j in 0..per_batch {
                let mut w = 1.0;
                for a in 0..m {
                    let v = (perms[a][j] as f64 + rng.gen::<f64>()) / per_batch as f64;
                    let (sa, ta, wa) = singular_pair_draw(h, v, rng.gen(), rng.gen());
                    s[a] = sa;
                    t[a] = ta;
                    x[a] = r * (2.0 * rng.gen::<f64>() - 1.0);
                    w *= wa * 2.0 * r;
                }
                acc.add(w * f.eval(&s, &x) * g.eval(&t, &x));
            }
            acc.value() / per_batch as f64
        })
        .collect();
    let (mean, se) = mean_stderr(&vals);
    QuadEstimate { value: mean, error: se, converged: true, nodes: (per_batch * batches) as u64, monte_carlo: true }
}

/// `<f, g>` in the Hilbert space with time weight `|s - t|^(2H-2)`.
///
/// Tensor Gauss quadrature on the desingularized pair coordinates, refined
/// until two successive rules agree within `tol` (absolute, or relative for
/// values above one). Orders whose grid would exceed [`MAX_TENSOR_NODES`]
/// use stratified Monte Carlo instead.
pub fn h_inner(f: &KernelFn, g: &KernelFn, h: f64, tol: f64) -> Result<QuadEstimate> {
    if f.m != g.m {
        return Err(Error::InvalidParameter(format!("kernel orders differ: {} vs {}", f.m, g.m)));
    }
    if !(h > 0.5 && h <= 1.0) {
        return Err(Error::InvalidParameter(format!("H = {h} must lie in (1/2, 1]")));
    }
    let m = f.m;
    let r = f.support.min(g.support);
    let mut tb = f.time_breaks.clone();
    tb.extend_from_slice(&g.time_breaks);
    let mut sb = f.space_breaks.clone();
    sb.extend_from_slice(&g.space_breaks);
    let mut prev: Option<f64> = None;
    let mut last = QuadEstimate { value: f64::NAN, error: f64::INFINITY, converged: false, nodes: 0, monte_carlo: false };
    for q in [4usize, 8, 16, 32] {
        let pairs = singular_pair_rule(h, &tb, q);
        let space = space_rule(r, &sb, q);
        let nodes = ((pairs.len() * space.len()) as f64).powi(m as i32);
        if nodes > MAX_TENSOR_NODES as f64 {
            if prev.is_none() && m >= 2 {
                let mut est = h_inner_monte_carlo(f, g, h, 1 << 16, 16, 0x5eed);
                est.converged = est.error <= tol.max(tol * est.value.abs());
                return Ok(est);
            }
            break;
        }
        let value = tensor_inner(f, g, &pairs, &space);
        let error = prev.map_or(f64::INFINITY, |p| (value - p).abs());
        last = QuadEstimate { value, error, converged: error <= tol * value.abs().max(1.0), nodes: nodes as u64, monte_carlo: false };
        if last.converged {
            return Ok(last);
        }
        prev = Some(value);
    }
    Ok(last)
}

/// `||f||_B = sqrt(<|f|, |f|>)`.
pub fn b_norm(f: &KernelFn, h: f64) -> Result<QuadEstimate> {
    let a = f.abs();
    let mut est = h_inner(&a, &a, h, 1e-10)?;
    est.error /= 2.0 * est.value.sqrt().max(f64::MIN_POSITIVE);
    est.value = est.value.max(0.0).sqrt();
    Ok(est)
}

/// Averages of a kernel over the cells `((n-1)/N, n/N] x [k/N^(1/rho), (k+1)/N^(1/rho))`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockGrid {
    n: usize,
    rho: f64,
    m: usize,
    values: BTreeMap<Vec<(u32, i64)>, f64>,
}

impl BlockGrid {
    pub fn big_n(&self) -> usize {
        self.n
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn order(&self) -> usize {
        self.m
    }

    /// `N^(1/rho)`, the number of spatial cells per unit length.
    pub fn spatial_scale(&self) -> f64 {
        (self.n as f64).powf(1.0 / self.rho)
    }

    /// Nonzero cells as `((n_i, k_i) per axis, value)`.
    pub fn cells(&self) -> impl Iterator<Item = (&[(u32, i64)], f64)> {
        self.values.iter().map(|(k, &v)| (k.as_slice(), v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value on a cell, zero if absent.
    pub fn get(&self, cell: &[(u32, i64)]) -> f64 {
        self.values.get(cell).copied().unwrap_or(0.0)
    }

    /// The piecewise-constant function carried by the grid.
    pub fn to_kernel(&self) -> KernelFn {
        let grid = self.clone();
        let n = self.n as f64;
        let scale = self.spatial_scale();
        let (lo, hi) = self.values.keys().flat_map(|k| k.iter().map(|c| c.1)).fold((i64::MAX, i64::MIN), |(a, b), k| (a.min(k), b.max(k)));
        let support = if lo > hi { 1.0 } else { ((lo as f64).abs().max((hi + 1) as f64)) / scale };
        let tb: Vec<f64> = (1..self.n).map(|j| j as f64 / n).collect();
        let sb: Vec<f64> = if lo > hi { vec![] } else { (lo..=hi + 1).map(|k| k as f64 / scale).collect() };
        KernelFn::new(self.m, support.max(1e-12), move |t, x| {
            let key: Vec<(u32, i64)> = t.iter().zip(x).map(|(&ti, &xi)| ((ti * n).ceil().max(1.0) as u32, (xi * scale).floor() as i64)).collect();
            grid.get(&key)
        })
        .expect("valid kernel")
        .with_time_breaks(tb)
        .with_space_breaks(sb)
    }
}

/// Cell averages of `f` by the product rule with two interior points per coordinate.
pub fn block_average(f: &KernelFn, big_n: usize, rho: f64) -> Result<BlockGrid> {
    if big_n == 0 {
        return Err(Error::InvalidParameter("N must be at least 1".into()));
    }
    let m = f.m;
    let n = big_n as f64;
    let scale = n.powf(1.0 / rho);
    let k_lo = (-f.support * scale).floor() as i64;
    let k_hi = (f.support * scale).floor() as i64;
    let axis_cells: Vec<(u32, i64)> = (1..=big_n as u32).flat_map(|i| (k_lo..=k_hi).map(move |k| (i, k))).collect();
    let offsets = [0.25, 0.75];
    let mut values = BTreeMap::new();
    let mut idx = vec![0usize; m];
    let (mut t, mut x) = (vec![0.0; m], vec![0.0; m]);
    'outer: loop {
        let cell: Vec<(u32, i64)> = idx.iter().map(|&i| axis_cells[i]).collect();
        let mut acc = 0.0;
        for p in 0..(1usize << (2 * m)) {
            for a in 0..m {
                let (ci, ck) = cell[a];
                t[a] = (ci as f64 - 1.0 + offsets[(p >> (2 * a)) & 1]) / n;
                x[a] = (ck as f64 + offsets[(p >> (2 * a + 1)) & 1]) / scale;
            }
            acc += f.eval(&t, &x);
        }
        let v = acc / (1usize << (2 * m)) as f64;
        if v != 0.0 {
            values.insert(cell, v);
        }
        for a in (0..m).rev() {
            idx[a] += 1;
            if idx[a] < axis_cells.len() {
                continue 'outer;
            }
            idx[a] = 0;
        }
        break;
    }
    Ok(BlockGrid { n: big_n, rho, m, values })
}

/// `int_a^b int_c^d |s - t|^(2H-2) ds dt` in closed form.
pub fn rect_weight(h: f64, a: f64, b: f64, c: f64, d: f64) -> f64 {
    let e = 2.0 * h;
    let big_f = |u: f64| {
        if h == 1.0 {
            0.5 * u * u
        } else {
            u.abs().powf(e) / (e * (e - 1.0))
        }
    };
    big_f(b - c) + big_f(a - d) - big_f(a - c) - big_f(b - d)
}

/// `int_s^t int_s^t |r - r'|^(2H-2) dr dr' = (t - s)^(2H) / (H (2H - 1))`.
pub fn time_square_integral(h: f64, s: f64, t: f64) -> Result<f64> {
    if !(h > 0.5 && h <= 1.0) {
        return Err(Error::InvalidParameter(format!("H = {h} must lie in (1/2, 1]")));
    }
    if !(0.0 <= s && s < t && t <= 1.0) {
        return Err(Error::InvalidParameter(format!("need 0 <= s < t <= 1, got ({s}, {t})")));
    }
    if h == 1.0 {
        return Ok((t - s) * (t - s));
    }
    Ok((t - s).powf(2.0 * h) / (h * (2.0 * h - 1.0)))
}

/// `int_{0 < r_1 < ... < r_m < t} prod (r_{i+1} - r_i)^(-alpha_i) dr
/// = prod Gamma(1 - alpha_i) / Gamma(m - alpha + 1) t^(m - alpha)`, with `r_{m+1} = t`.
pub fn simplex_gamma_integral(alphas: &[f64], t: f64) -> Result<f64> {
    if let Some(a) = alphas.iter().find(|&&a| !(a < 1.0)) {
        return Err(Error::InvalidParameter(format!("exponent {a} must be below 1")));
    }
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("t = {t} must be positive")));
    }
    let m = alphas.len() as f64;
    let alpha: f64 = alphas.iter().sum();
    let ln = alphas.iter().map(|a| ln_gamma(1.0 - a)).sum::<f64>() - ln_gamma(m - alpha + 1.0) + (m - alpha) * t.ln();
    Ok(ln.exp())
}

/// Constant of the time-direction Jensen inequality for order one:
/// `max(1/(H(2H-1)), 2^(2-2H) int_1^2 int_0^1 |s-t|^(2H-2), 3^(2-2H))`.
pub fn jensen_time_constant(h: f64) -> f64 {
    let c0 = rect_weight(h, 0.0, 1.0, 0.0, 1.0);
    let c1 = 2f64.powf(2.0 - 2.0 * h) * rect_weight(h, 1.0, 2.0, 0.0, 1.0);
    let c2 = 3f64.powf(2.0 - 2.0 * h);
    c0.max(c1).max(c2)
}

/// Order-one kernel that is constant on rectangles `T_i x X_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimpleFn {
    /// Increasing edges in `[0, 1]`.
    pub time_edges: Vec<f64>,
    /// Increasing spatial edges.
    pub space_edges: Vec<f64>,
    /// `coeffs[i][j]` is the value on `(time_edges[i], time_edges[i+1]] x [space_edges[j], space_edges[j+1])`.
    pub coeffs: Vec<Vec<f64>>,
}

impl SimpleFn {
    pub fn new(time_edges: Vec<f64>, space_edges: Vec<f64>, coeffs: Vec<Vec<f64>>) -> Result<Self> {
        let ok_t = time_edges.len() >= 2 && time_edges.windows(2).all(|w| w[0] < w[1]) && time_edges[0] >= 0.0 && *time_edges.last().unwrap() <= 1.0;
        let ok_x = space_edges.len() >= 2 && space_edges.windows(2).all(|w| w[0] < w[1]);
        let ok_c = coeffs.len() + 1 == time_edges.len() && coeffs.iter().all(|r| r.len() + 1 == space_edges.len());
        if !(ok_t && ok_x && ok_c) {
            return Err(Error::InvalidParameter("malformed simple function".into()));
        }
        Ok(Self { time_edges, space_edges, coeffs })
    }

    /// Random simple function on a grid of `nt x nx` cells with edges drawn from `rng`.
    pub fn random(rng: &mut impl Rng, nt: usize, nx: usize, support: f64) -> Self {
        let mut te: Vec<f64> = (0..nt - 1).map(|_| rng.gen::<f64>()).collect();
        te.push(0.0);
        te.push(1.0);
        let te = sorted_unique(te);
        let mut xe: Vec<f64> = (0..nx - 1).map(|_| support * (2.0 * rng.gen::<f64>() - 1.0)).collect();
        xe.push(-support);
        xe.push(support);
        let xe = sorted_unique(xe);
        let coeffs = (0..te.len() - 1).map(|_| (0..xe.len() - 1).map(|_| 2.0 * rng.gen::<f64>() - 1.0).collect()).collect();
        Self { time_edges: te, space_edges: xe, coeffs }
    }

    fn locate(edges: &[f64], v: f64, left_open: bool) -> Option<usize> {
        if v < edges[0] || v > edges[edges.len() - 1] {
            return None;
        }
        let i = if left_open { edges.partition_point(|&e| e < v) } else { edges.partition_point(|&e| e <= v) };
        let i = i.saturating_sub(1).min(edges.len() - 2);
        Some(i)
    }

    pub fn value(&self, t: f64, x: f64) -> f64 {
        match (Self::locate(&self.time_edges, t, true), Self::locate(&self.space_edges, x, false)) {
            (Some(i), Some(j)) if x < self.space_edges[self.space_edges.len() - 1] => self.coeffs[i][j],
            _ => 0.0,
        }
    }

    pub fn abs(&self) -> Self {
        Self { coeffs: self.coeffs.iter().map(|r| r.iter().map(|c| c.abs()).collect()).collect(), ..self.clone() }
    }

    pub fn to_kernel(&self) -> KernelFn {
        let me = self.clone();
        let support = self.space_edges[0].abs().max(self.space_edges[self.space_edges.len() - 1].abs());
        KernelFn::new(1, support, move |t, x| me.value(t[0], x[0]))
            .expect("valid kernel")
            .with_time_breaks(self.time_edges.clone())
            .with_space_breaks(self.space_edges.clone())
    }

    /// `<f, g>` from the closed-form rectangle integrals.
    pub fn inner_exact(&self, other: &SimpleFn, h: f64) -> f64 {
        let mut overlap = vec![vec![0.0; other.space_edges.len() - 1]; self.space_edges.len() - 1];
        for (j, w) in self.space_edges.windows(2).enumerate() {
            for (l, u) in other.space_edges.windows(2).enumerate() {
                overlap[j][l] = (w[1].min(u[1]) - w[0].max(u[0])).max(0.0);
            }
        }
        let mut acc = Neumaier::new();
        for (i, ti) in self.time_edges.windows(2).enumerate() {
            for (k, tk) in other.time_edges.windows(2).enumerate() {
                let mut spatial = 0.0;
                for (j, row) in overlap.iter().enumerate() {
                    let c = self.coeffs[i][j];
                    if c == 0.0 {
                        continue;
                    }
                    for (l, &o) in row.iter().enumerate() {
                        if o > 0.0 {
                            spatial += c * other.coeffs[k][l] * o;
                        }
                    }
                }
                if spatial != 0.0 {
                    acc.add(spatial * rect_weight(h, ti[0], ti[1], tk[0], tk[1]));
                }
            }
        }
        acc.value()
    }

    /// `||f||_B` from the closed-form rectangle integrals.
    pub fn b_norm_exact(&self, h: f64) -> f64 {
        let a = self.abs();
        a.inner_exact(&a, h).max(0.0).sqrt()
    }

    fn refine(edges: &[f64], grid: &[f64]) -> Vec<f64> {
        let (lo, hi) = (edges[0], edges[edges.len() - 1]);
        let mut v = edges.to_vec();
        v.extend(grid.iter().copied().filter(|&g| g > lo && g < hi));
        sorted_unique(v)
    }

    /// Exact averages along one axis onto the grid `cells`, dropping cells outside the edges.
    fn average_axis(edges: &[f64], cells: &[f64], vals: impl Fn(usize) -> Vec<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
        let mut out_edges = Vec::new();
        let mut out = Vec::new();
        for w in cells.windows(2) {
            let (a, b) = (w[0], w[1]);
            let mut acc: Option<Vec<f64>> = None;
            for (i, e) in edges.windows(2).enumerate() {
                let o = (b.min(e[1]) - a.max(e[0])).max(0.0);
                if o > 0.0 {
                    let row = vals(i);
                    let acc = acc.get_or_insert_with(|| vec![0.0; row.len()]);
                    for (x, y) in acc.iter_mut().zip(&row) {
                        *x += y * o / (b - a);
                    }
                }
            }
            if let Some(r) = acc {
                out_edges.push((a, b));
                out.push(r);
            }
        }
        let mut edges_flat: Vec<f64> = out_edges.iter().map(|e| e.0).collect();
        if let Some(last) = out_edges.last() {
            edges_flat.push(last.1);
        }
        (edges_flat, out)
    }

    /// Exact average over time cells `((n-1)/N, n/N]`.
    pub fn time_average(&self, big_n: usize) -> Self {
        let cells: Vec<f64> = (0..=big_n).map(|j| j as f64 / big_n as f64).collect();
        let (te, coeffs) = Self::average_axis(&self.time_edges, &cells, |i| self.coeffs[i].clone());
        Self { time_edges: te, space_edges: self.space_edges.clone(), coeffs }
    }

    /// Exact average over spatial cells `[k, k+1) / N^(1/rho)`; cells that only
    /// partly meet the support are averaged with the zero extension.
    pub fn space_average(&self, big_n: usize, rho: f64) -> Self {
        let scale = (big_n as f64).powf(1.0 / rho);
        let lo = (self.space_edges[0] * scale).floor() as i64;
        let hi = (self.space_edges[self.space_edges.len() - 1] * scale).ceil() as i64;
        let cells: Vec<f64> = (lo..=hi).map(|k| k as f64 / scale).collect();
        let coeffs: Vec<Vec<f64>> = self
            .coeffs
            .iter()
            .map(|row| {
                let (_, avg) = Self::average_axis(&self.space_edges, &cells, |j| vec![row[j]]);
                avg.into_iter().map(|v| v[0]).collect()
            })
            .collect();
        let (edges, _) = Self::average_axis(&self.space_edges, &cells, |_| vec![0.0]);
        Self { time_edges: self.time_edges.clone(), space_edges: edges, coeffs }
    }

    /// Exact block average `A_N f`.
    pub fn block_average_exact(&self, big_n: usize, rho: f64) -> Self {
        self.space_average(big_n, rho).time_average(big_n)
    }

    /// Split the time cells at the points of `grid`.
    pub fn with_time_grid(&self, grid: &[f64]) -> Self {
        let te = Self::refine(&self.time_edges, grid);
        let coeffs = te
            .windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                let i = Self::locate(&self.time_edges, mid, true).unwrap();
                self.coeffs[i].clone()
            })
            .collect();
        Self { time_edges: te, space_edges: self.space_edges.clone(), coeffs }
    }
}

/// Both sides of the time-direction Jensen inequality for time-only simple
/// functions `f`, `g` (given as values on `k` equal pieces of each of the `N`
/// cells), computed by quadrature: returns
/// `(int w |f_N| |g_N|, int w |f| |g|)`.
pub fn jensen_time_sides(f: &[f64], g: &[f64], big_n: usize, h: f64) -> Result<(f64, f64)> {
    if f.len() != g.len() || f.is_empty() || f.len() % big_n != 0 {
        return Err(Error::InvalidParameter("piece counts must match and be a multiple of N".into()));
    }
    let k = f.len() / big_n;
    let avg = |v: &[f64]| -> Vec<f64> { v.chunks(k).map(|c| c.iter().map(|x| x.abs()).sum::<f64>() / k as f64).collect() };
    let (fa, ga) = (avg(f), avg(g));
    let mk = |vals: Vec<f64>| {
        let n = vals.len();
        let breaks: Vec<f64> = (1..n).map(|j| j as f64 / n as f64).collect();
        KernelFn::new(1, 1.0, move |t, _x| vals[((t[0] * n as f64).ceil().max(1.0) as usize - 1).min(n - 1)])
            .expect("valid kernel")
            .with_time_breaks(breaks)
            .with_space_breaks(vec![-1.0, 1.0])
    };
    // The spatial factor is the unit-height indicator of [-1, 1].
    let lhs = 0.5 * h_inner(&mk(fa), &mk(ga), h, 1e-10)?.value;
    let rhs = 0.5 * h_inner(&mk(f.iter().map(|x| x.abs()).collect()), &mk(g.iter().map(|x| x.abs()).collect()), h, 1e-10)?.value;
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn unit_square_inner_product() {
        let f = KernelFn::unit_indicator();
        let v = h_inner(&f, &f, 0.85, 1e-10).unwrap();
        assert!(v.converged);
        assert_relative_eq!(v.value, 1.0 / 0.595, max_relative = 1e-10);
        let v1 = h_inner(&f, &f, 1.0, 1e-12).unwrap();
        assert_relative_eq!(v1.value, 1.0, max_relative = 1e-12);
        let b = b_norm(&f, 0.85).unwrap();
        assert_relative_eq!(b.value, (1.0f64 / 0.595).sqrt(), max_relative = 1e-10);
        assert_relative_eq!(b.value, 1.296_407, max_relative = 1e-6);
    }

    #[test]
    fn disjoint_supports_are_orthogonal() {
        let f = KernelFn::new(1, 3.0, |_t, x| if x[0] < 0.0 { 1.0 } else { 0.0 }).unwrap().with_space_breaks(vec![0.0]);
        let g = KernelFn::new(1, 3.0, |_t, x| if x[0] >= 0.0 { 1.0 } else { 0.0 }).unwrap().with_space_breaks(vec![0.0]);
        assert_eq!(h_inner(&f, &g, 0.7, 1e-10).unwrap().value, 0.0);
    }

    #[test]
    fn norm_homogeneity() {
        let f = KernelFn::new(1, 1.0, |t, x| t[0] - x[0]).unwrap();
        let n = b_norm(&f, 0.8).unwrap().value;
        assert_relative_eq!(b_norm(&f.scaled(-1.0), 0.8).unwrap().value, n, max_relative = 1e-12);
        assert_relative_eq!(b_norm(&f.scaled(2.5), 0.8).unwrap().value, 2.5 * n, max_relative = 1e-12);
    }

    #[test]
    fn quadrature_matches_rectangle_formula() {
        let mut rng = substream(4, &[]);
        for _ in 0..10 {
            let f = SimpleFn::random(&mut rng, 4, 3, 1.5);
            let g = SimpleFn::random(&mut rng, 3, 4, 1.5);
            let exact = f.inner_exact(&g, 0.75);
            let quad = h_inner(&f.to_kernel(), &g.to_kernel(), 0.75, 1e-11).unwrap();
            assert!((quad.value - exact).abs() < 1e-9, "{} vs {}", quad.value, exact);
        }
    }

    #[test]
    fn monte_carlo_fallback_agrees_for_order_two() {
        let f = KernelFn::new(2, 1.0, |t, x| (1.0 + t[0] * t[1]) * if x[0] >= 0.0 && x[1] >= 0.0 { 1.0 } else { 0.0 }).unwrap().with_space_breaks(vec![0.0]);
        let quad = h_inner(&f, &f, 0.8, 1e-8).unwrap();
        assert!(!quad.monte_carlo);
        let mc = h_inner_monte_carlo(&f, &f, 0.8, 1 << 14, 16, 1);
        assert!((mc.value - quad.value).abs() < 4.0 * mc.error, "{} +- {} vs {}", mc.value, mc.error, quad.value);
    }

    #[test]
    fn block_average_basic_properties() {
        let c = KernelFn::new(1, 1.0, |_t, _x| 2.5).unwrap();
        let g = block_average(&c, 8, 2.0).unwrap();
        assert!(g.cells().all(|(_, v)| v == 2.5));
        let lin = KernelFn::new(1, 1.0, |t, _x| 3.0 * t[0] + 1.0).unwrap();
        let gl = block_average(&lin, 4, 2.0).unwrap();
        assert_relative_eq!(gl.get(&[(2, 0)]), 3.0 * 0.375 + 1.0, max_relative = 1e-15);
        let f = KernelFn::new(1, 1.0, |t, x| (t[0] * 7.0).sin() + x[0] * x[0]).unwrap();
        let a = block_average(&f, 8, 1.5).unwrap();
        let aa = block_average(&a.to_kernel(), 8, 1.5).unwrap();
        assert_eq!(a.len(), aa.len());
        for (cell, v) in a.cells() {
            assert_relative_eq!(aa.get(cell), v, max_relative = 1e-14);
        }
    }

    #[test]
    fn simplex_closed_form_values() {
        assert_relative_eq!(simplex_gamma_integral(&[0.0], 1.0).unwrap(), 1.0, max_relative = 1e-14);
        assert!((simplex_gamma_integral(&[0.5, 0.5], 1.0).unwrap() - PI).abs() < 1e-9);
        assert!(simplex_gamma_integral(&[1.0], 1.0).is_err());
    }

    #[test]
    fn time_square_values() {
        assert_relative_eq!(time_square_integral(0.85, 0.0, 1.0).unwrap(), 1.0 / 0.595, max_relative = 1e-14);
        assert_eq!(time_square_integral(1.0, 0.0, 1.0).unwrap(), 1.0);
        assert_relative_eq!(time_square_integral(0.85, 0.25, 0.75).unwrap(), 0.5f64.powf(1.7) / 0.595, max_relative = 1e-14);
        assert_relative_eq!(rect_weight(0.85, 0.25, 0.75, 0.25, 0.75), 0.5f64.powf(1.7) / 0.595, max_relative = 1e-13);
    }
}
