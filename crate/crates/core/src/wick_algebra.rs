//! Physical Wick products, Hermite polynomials and Gaussian moment formulas.
//!
//! Index multisets refer to coordinates of a [`GaussianFamily`]; repeated
//! indices denote repeated factors, so `{1, 1, 1}` is `:X_1^3:`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Largest multiset accepted by [`wick_value`] and [`gaussian_moment`].
pub const WICK_MAX: usize = 12;
/// Largest combined size accepted by [`wick_pair_expectation`].
pub const PAIR_MAX: usize = 16;

/// A jointly Gaussian vector with covariance `Q` and optionally one realization.
#[derive(Clone, Debug)]
pub struct GaussianFamily {
    dim: usize,
    q: Vec<f64>,
    mean: Option<Vec<f64>>,
    sample: Option<Vec<f64>>,
}

impl GaussianFamily {
    /// Centered family with row-major covariance `q`.
    pub fn new(dim: usize, q: Vec<f64>) -> Result<Self> {
        if q.len() != dim * dim {
            return Err(Error::InvalidParameter(format!("covariance has {} entries, expected {}", q.len(), dim * dim)));
        }
        for i in 0..dim {
            for j in 0..i {
                if (q[i * dim + j] - q[j * dim + i]).abs() > 1e-12 {
                    return Err(Error::InvalidParameter(format!("covariance not symmetric at ({i}, {j})")));
                }
            }
        }
        if dim > 0 {
            let m = DMatrix::from_row_slice(dim, dim, &q);
            let min = m.symmetric_eigenvalues().min();
            if min < -1e-10 {
                return Err(Error::InvalidParameter(format!("covariance has eigenvalue {min:.3e}")));
            }
        }
        Ok(Self { dim, q, mean: None, sample: None })
    }

    /// Attach a realization.
    pub fn with_sample(mut self, x: Vec<f64>) -> Result<Self> {
        if x.len() != self.dim {
            return Err(Error::InvalidParameter(format!("sample has length {}, expected {}", x.len(), self.dim)));
        }
        self.sample = Some(x);
        Ok(self)
    }

    /// Attach a mean vector. Wick evaluation requires it to vanish.
    pub fn with_mean(mut self, mu: Vec<f64>) -> Result<Self> {
        if mu.len() != self.dim {
            return Err(Error::InvalidParameter(format!("mean has length {}, expected {}", mu.len(), self.dim)));
        }
        self.mean = Some(mu);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn cov(&self, i: usize, j: usize) -> f64 {
        self.q[i * self.dim + j]
    }

    pub fn sample(&self) -> Option<&[f64]> {
        self.sample.as_deref()
    }

    fn centered(&self) -> Result<()> {
        match &self.mean {
            Some(mu) if mu.iter().any(|&m| m != 0.0) => Err(Error::InvalidParameter("Wick products are implemented for centered families only".into())),
            _ => Ok(()),
        }
    }

    fn realization(&self) -> Result<&[f64]> {
        self.sample.as_deref().ok_or_else(|| Error::InvalidParameter("family has no realization".into()))
    }

    fn check(&self, a: &IndexMultiset) -> Result<()> {
        match a.0.iter().find(|&&i| i >= self.dim) {
            Some(i) => Err(Error::InvalidParameter(format!("index {i} out of range for dimension {}", self.dim))),
            None => Ok(()),
        }
    }
}

/// A multiset of coordinate indices.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IndexMultiset(pub Vec<usize>);

impl IndexMultiset {
    pub fn new(indices: Vec<usize>) -> Self {
        Self(indices)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<usize>> for IndexMultiset {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

impl<const N: usize> From<[usize; N]> for IndexMultiset {
    fn from(v: [usize; N]) -> Self {
        Self(v.to_vec())
    }
}

/// Probabilists' Hermite polynomial `H_m(x)`.
pub fn hermite(m: usize, x: f64) -> f64 {
    let (mut h0, mut h1) = (1.0, x);
    if m == 0 {
        return h0;
    }
    for k in 1..m {
        let h2 = x * h1 - k as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

fn guard(n: usize, max: usize, what: &str) -> Result<()> {
    if n > max {
        return Err(Error::SizeGuard(format!("{what} of size {n} exceeds {max}")));
    }
    Ok(())
}

/// `:X_A:` at the family's realization, by the recursion
/// `:X_A: = X_a :X_(A-a): - sum_b Q_ab :X_(A-a-b):`.
pub fn wick_value(fam: &GaussianFamily, a: &IndexMultiset) -> Result<f64> {
    guard(a.len(), WICK_MAX, "Wick product")?;
    fam.check(a)?;
    fam.centered()?;
    let x = fam.realization()?;
    fn rec(fam: &GaussianFamily, x: &[f64], idx: &mut Vec<usize>) -> f64 {
        let Some(a) = idx.pop() else {
            return 1.0;
        };
        let mut v = x[a] * rec(fam, x, idx);
        for p in 0..idx.len() {
            let b = idx.remove(p);
            v -= fam.cov(a, b) * rec(fam, x, idx);
            idx.insert(p, b);
        }
        idx.push(a);
        v
    }
    let mut idx = a.0.clone();
    Ok(rec(fam, x, &mut idx))
}

/// `:X_A:` from the subset expansion over ordinary products with the
/// Gaussian cumulants of the family.
pub fn wick_value_brute(fam: &GaussianFamily, a: &IndexMultiset) -> Result<f64> {
    guard(a.len(), WICK_MAX, "Wick product")?;
    fam.check(a)?;
    fam.centered()?;
    let x = fam.realization()?;
    let values: Vec<f64> = a.0.iter().map(|&i| x[i]).collect();
    let kappa = |block: &[usize]| match block {
        [i, j] => fam.cov(a.0[*i], a.0[*j]),
        _ => 0.0,
    };
    Ok(wick_value_general(&values, &kappa))
}

/// `:X_1 ... X_n:` for arbitrary joint cumulants:
/// `sum_{B subset A} X_B sum_V (-1)^|V| prod kappa(V_i)` over partitions `V` of `A - B`.
///
/// `values[i]` is the realization of the `i`-th factor and `kappa` receives
/// positions into `values`. Blocks with zero cumulant are pruned.
pub fn wick_value_general(values: &[f64], kappa: &dyn Fn(&[usize]) -> f64) -> f64 {
    let n = values.len();
    assert!(n <= 20, "too many factors");
    let full = (1usize << n) - 1;
    let mut memo: Vec<Option<f64>> = vec![None; 1 << n];
    fn signed_partitions(mask: usize, kappa: &dyn Fn(&[usize]) -> f64, memo: &mut Vec<Option<f64>>) -> f64 {
        if mask == 0 {
            return 1.0;
        }
        if let Some(v) = memo[mask] {
            return v;
        }
        let low = mask & mask.wrapping_neg();
        let rest = mask ^ low;
        let mut total = 0.0;
        let mut sub = rest;
        loop {
            let block_mask = sub | low;
            let block: Vec<usize> = (0..usize::BITS as usize).filter(|b| block_mask >> b & 1 == 1).collect();
            let k = kappa(&block);
            if k != 0.0 {
                total -= k * signed_partitions(mask ^ block_mask, kappa, memo);
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
        memo[mask] = Some(total);
        total
    }
    let mut result = 0.0;
    for b in 0..=full {
        let coeff = signed_partitions(full ^ b, kappa, &mut memo);
        if coeff == 0.0 {
            continue;
        }
        let mut prod = 1.0;
        for (i, v) in values.iter().enumerate() {
            if b >> i & 1 == 1 {
                prod *= v;
            }
        }
        result += prod * coeff;
    }
    result
}

/// `E[X_A]` by summing over pair partitions, pairing the smallest unpaired position first.
pub fn gaussian_moment(fam: &GaussianFamily, a: &IndexMultiset) -> Result<f64> {
    guard(a.len(), WICK_MAX, "moment")?;
    fam.check(a)?;
    fam.centered()?;
    if a.len() % 2 == 1 {
        return Ok(0.0);
    }
    fn rec(fam: &GaussianFamily, idx: &[usize], used: u32) -> f64 {
        let Some(first) = (0..idx.len()).find(|&i| used >> i & 1 == 0) else {
            return 1.0;
        };
        let used = used | 1 << first;
        let mut s = 0.0;
        for j in first + 1..idx.len() {
            if used >> j & 1 == 0 {
                let q = fam.cov(idx[first], idx[j]);
                if q != 0.0 {
                    s += q * rec(fam, idx, used | 1 << j);
                }
            }
        }
        s
    }
    Ok(rec(fam, &a.0, 0))
}

/// `E[:X_A: :X_B:]`: zero unless `|A| = |B|`, else the sum over bijections
/// `A -> B` of the product of covariances.
pub fn wick_pair_expectation(fam: &GaussianFamily, a: &IndexMultiset, b: &IndexMultiset) -> Result<f64> {
    guard(a.len() + b.len(), PAIR_MAX, "pair expectation")?;
    fam.check(a)?;
    fam.check(b)?;
    fam.centered()?;
    if a.len() != b.len() {
        return Ok(0.0);
    }
    fn rec(fam: &GaussianFamily, a: &[usize], b: &[usize], pos: usize, used: u32) -> f64 {
        if pos == a.len() {
            return 1.0;
        }
        let mut s = 0.0;
        for j in 0..b.len() {
            if used >> j & 1 == 0 {
                let q = fam.cov(a[pos], b[j]);
                if q != 0.0 {
                    s += q * rec(fam, a, b, pos + 1, used | 1 << j);
                }
            }
        }
        s
    }
    Ok(rec(fam, &a.0, &b.0, 0, 0))
}

/// All set partitions of `0..n`, each as a list of blocks.
pub fn set_partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
    let mut out = Vec::new();
    fn rec(i: usize, n: usize, cur: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for b in 0..cur.len() {
            cur[b].push(i);
            rec(i + 1, n, cur, out);
            cur[b].pop();
        }
        cur.push(vec![i]);
        rec(i + 1, n, cur, out);
        cur.pop();
    }
    rec(0, n, &mut Vec::new(), &mut out);
    out
}

/// Minimum number of realizations for [`empirical_cumulant`].
pub const MIN_CUMULANT_SAMPLES: usize = 1000;

/// Joint cumulant of the coordinates in `A`, estimated from `samples` (one
/// realization per row) by the Moebius sum over partitions of `A`.
pub fn empirical_cumulant(samples: &[Vec<f64>], a: &IndexMultiset) -> Result<f64> {
    guard(a.len(), 4, "empirical cumulant")?;
    if samples.len() < MIN_CUMULANT_SAMPLES {
        return Err(Error::InvalidParameter(format!("{} samples, at least {MIN_CUMULANT_SAMPLES} required", samples.len())));
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    if let Some(&i) = a.0.iter().find(|&&i| samples.iter().any(|r| i >= r.len())) {
        return Err(Error::InvalidParameter(format!("index {i} exceeds sample width")));
    }
    let n = samples.len() as f64;
    let moment = |block: &[usize]| -> f64 {
        let v: Vec<f64> = samples.iter().map(|r| block.iter().map(|&p| r[a.0[p]]).product()).collect();
        crate::numeric::pairwise_sum(&v) / n
    };
    let mut total = 0.0;
    for part in set_partitions(a.len()) {
        let k = part.len();
        let fact: f64 = (1..k).map(|x| x as f64).product();
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        total += sign * fact * part.iter().map(|b| moment(b)).product::<f64>();
    }
    Ok(total)
}

/// [`empirical_cumulant`] with a standard error from `batches` disjoint batches.
pub fn empirical_cumulant_with_stderr(samples: &[Vec<f64>], a: &IndexMultiset, batches: usize) -> Result<(f64, f64)> {
    let est = empirical_cumulant(samples, a)?;
    let size = samples.len() / batches;
    if size < MIN_CUMULANT_SAMPLES {
        return Err(Error::InvalidParameter("batches too small for cumulant estimation".into()));
    }
    let vals: Vec<f64> = (0..batches).map(|b| empirical_cumulant(&samples[b * size..(b + 1) * size], a)).collect::<Result<_>>()?;
    let (_, se) = crate::numeric::mean_stderr(&vals);
    Ok((est, se))
}
