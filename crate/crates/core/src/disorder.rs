//! Gaussian environment `omega(n, k)`: stationary in time with covariance
//! `gamma`, independent across sites, generated lazily one site at a time.

use std::io::{BufWriter, Write};
use std::num::NonZeroUsize;
use std::path::Path;
use std::sync::{Arc, Mutex};

use dashmap::DashMap;
use lru::LruCache;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::rng::{derive_key, site_tag, substream};

/// A stationary temporal covariance `gamma(n)`.
pub trait Covariance: Send + Sync + std::fmt::Debug {
    /// Hurst-type exponent governing the decay `|n|^(2H-2)`.
    fn hurst(&self) -> f64;
    /// `gamma(n)`; must be even in `n`.
    fn gamma(&self, n: i64) -> f64;
}

/// Normalized fractional Gaussian noise autocovariance
/// `(|n+1|^2H - 2|n|^2H + |n-1|^2H) / (2H(2H-1))`, identically one when `H = 1`.
#[derive(Clone, Debug)]
pub struct FgnCovariance {
    h: f64,
    scale: f64,
}

impl FgnCovariance {
    pub fn new(h: f64) -> Result<Self> {
        if !(h > 0.5 && h <= 1.0) {
            return Err(Error::InvalidParameter(format!("H = {h} must lie in (1/2, 1]")));
        }
        Ok(Self { h, scale: 1.0 })
    }

    /// Multiply every value by `scale`. Used to inject faults in self-tests.
    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }
}

impl Covariance for FgnCovariance {
    fn hurst(&self) -> f64 {
        self.h
    }

    fn gamma(&self, n: i64) -> f64 {
        self.scale * fgn_value(self.h, n)
    }
}

fn fgn_value(h: f64, n: i64) -> f64 {
    if h == 1.0 {
        return 1.0;
    }
    let n = n.unsigned_abs() as f64;
    let e = 2.0 * h;
    ((n + 1.0).powf(e) - 2.0 * n.powf(e) + (n - 1.0).abs().powf(e)) / (e * (e - 1.0))
}

/// `gamma(n)` of the normalized fGn covariance.
pub fn gamma_fgn(h: f64, n: i64) -> Result<f64> {
    FgnCovariance::new(h).map(|c| c.gamma(n))
}

/// `gamma_N(t) = N^(2-2H) gamma(floor(|t| N))`.
pub fn scaled_covariance(h: f64, big_n: u64, t: f64) -> Result<f64> {
    if big_n == 0 {
        return Err(Error::InvalidParameter("N must be at least 1".into()));
    }
    let lag = (t.abs() * big_n as f64).floor() as i64;
    Ok((big_n as f64).powf(2.0 - 2.0 * h) * gamma_fgn(h, lag)?)
}

/// Table of `gamma(0..len)` for hot loops.
pub fn gamma_table(cov: &dyn Covariance, len: usize) -> Vec<f64> {
    (0..len as i64).map(|n| cov.gamma(n)).collect()
}

/// Spectral synthesizer for length-`N` sequences with a given covariance.
#[derive(Clone)]
pub struct SiteSynthesizer {
    len: usize,
    /// `sqrt(lambda_j / M)` for the circulant eigenvalues.
    amplitudes: Arc<[f64]>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SiteSynthesizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SiteSynthesizer").field("len", &self.len).field("embedding", &self.amplitudes.len()).finish()
    }
}

/// Tolerance below zero at which circulant eigenvalues are clipped rather than rejected.
const EIGEN_CLIP: f64 = 1e-9;

impl SiteSynthesizer {
    /// Build the circulant embedding of `(gamma(0), ..., gamma(N-1))`.
    pub fn new(cov: &dyn Covariance, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidParameter("sequence length must be at least 1".into()));
        }
        let mut m = (2 * (len - 1)).max(2);
        let mut planner = FftPlanner::new();
        for _ in 0..=4 {
            let fft = planner.plan_fft_forward(m);
            let mut buf: Vec<Complex64> = (0..m).map(|j| Complex64::new(cov.gamma(j.min(m - j) as i64), 0.0)).collect();
            fft.process(&mut buf);
            let min = buf.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
            if min >= -EIGEN_CLIP {
                let amplitudes: Vec<f64> = buf.iter().map(|z| (z.re.max(0.0) / m as f64).sqrt()).collect();
                return Ok(Self { len, amplitudes: amplitudes.into(), fft });
            }
            m *= 2;
        }
        Err(Error::Embedding(format!("negative circulant eigenvalues after 4 doublings (length {len})")))
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Size of the circulant embedding.
    pub fn embedding_size(&self) -> usize {
        self.amplitudes.len()
    }

    /// Sequence for the substream keyed by `site_seed`.
    pub fn generate(&self, site_seed: u64) -> Vec<f64> {
        let mut rng = substream(site_seed, &[]);
        let mut buf: Vec<Complex64> = self
            .amplitudes
            .iter()
            .map(|&a| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(a * re, a * im)
            })
            .collect();
        self.fft.process(&mut buf);
        buf.truncate(self.len);
        buf.into_iter().map(|z| z.re).collect()
    }
}

/// Generate one stationary sequence of length `len` with covariance `cov`.
pub fn generate_site_sequence(cov: &dyn Covariance, len: usize, site_seed: u64) -> Result<Vec<f64>> {
    Ok(SiteSynthesizer::new(cov, len)?.generate(site_seed))
}

enum SiteStore {
    Unbounded(DashMap<i64, Arc<[f64]>>),
    Capped(Mutex<LruCache<i64, Arc<[f64]>>>),
}

/// Lazily realized environment `omega(n, k)`, `1 <= n <= N`, `k` in the integers.
pub struct DisorderField {
    len: usize,
    master_seed: u64,
    cov: Arc<dyn Covariance>,
    synth: SiteSynthesizer,
    store: SiteStore,
}

impl std::fmt::Debug for DisorderField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DisorderField")
            .field("len", &self.len)
            .field("master_seed", &self.master_seed)
            .field("sites", &self.cached_sites())
            .finish()
    }
}

impl DisorderField {
    /// Field of temporal length `len` with an unbounded site cache.
    pub fn new(cov: Arc<dyn Covariance>, len: usize, master_seed: u64) -> Result<Self> {
        let synth = SiteSynthesizer::new(cov.as_ref(), len)?;
        Ok(Self::with_synthesizer(cov, synth, master_seed, None))
    }

    /// Field sharing a prebuilt synthesizer. `cap` bounds the number of cached sites.
    pub fn with_synthesizer(cov: Arc<dyn Covariance>, synth: SiteSynthesizer, master_seed: u64, cap: Option<NonZeroUsize>) -> Self {
        let store = match cap {
            None => SiteStore::Unbounded(DashMap::new()),
            Some(c) => SiteStore::Capped(Mutex::new(LruCache::new(c))),
        };
        Self { len: synth.len(), master_seed, cov, synth, store }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn covariance(&self) -> &dyn Covariance {
        self.cov.as_ref()
    }

    /// Seed of the substream that generates site `k`.
    pub fn site_seed(&self, k: i64) -> u64 {
        derive_key(self.master_seed, &[site_tag(k)])
    }

    /// The full sequence `(omega(1, k), ..., omega(N, k))`.
    pub fn site(&self, k: i64) -> Arc<[f64]> {
        match &self.store {
            SiteStore::Unbounded(map) => {
                if let Some(v) = map.get(&k) {
                    return v.clone();
                }
                let seq: Arc<[f64]> = self.synth.generate(self.site_seed(k)).into();
                map.entry(k).or_insert(seq).clone()
            }
            SiteStore::Capped(lru) => {
                if let Some(v) = lru.lock().expect("site cache poisoned").get(&k) {
                    return v.clone();
                }
                let seq: Arc<[f64]> = self.synth.generate(self.site_seed(k)).into();
                let mut guard = lru.lock().expect("site cache poisoned");
                if let Some(v) = guard.get(&k) {
                    return v.clone();
                }
                guard.put(k, seq.clone());
                seq
            }
        }
    }

    /// `omega(n, k)` for `1 <= n <= N`.
    pub fn omega_at(&self, n: usize, k: i64) -> Result<f64> {
        if n == 0 || n > self.len {
            return Err(Error::InvalidParameter(format!("time index {n} outside 1..={}", self.len)));
        }
        Ok(self.site(k)[n - 1])
    }

    /// Number of sites currently held in the cache.
    pub fn cached_sites(&self) -> usize {
        match &self.store {
            SiteStore::Unbounded(map) => map.len(),
            SiteStore::Capped(lru) => lru.lock().expect("site cache poisoned").len(),
        }
    }

    /// Approximate memory held by cached sequences, in bytes.
    pub fn cache_bytes(&self) -> usize {
        self.cached_sites() * self.len * std::mem::size_of::<f64>()
    }

    /// Write sites `lo..=hi` in the binary field format: a 16-byte header
    /// (`DFLD`, version, N, H as f32) followed by one record per site holding
    /// the site index and its N values, all little-endian.
    pub fn dump(&self, path: &Path, lo: i64, hi: i64) -> Result<()> {
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
        {
            let mut w = BufWriter::new(tmp.as_file());
            let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
            put(DFLD_MAGIC)?;
            put(&DFLD_VERSION.to_le_bytes())?;
            put(&(self.len as u32).to_le_bytes())?;
            put(&(self.cov.hurst() as f32).to_le_bytes())?;
            for k in lo..=hi {
                put(&k.to_le_bytes())?;
                for &v in self.site(k).iter() {
                    put(&v.to_le_bytes())?;
                }
            }
            w.flush().map_err(|e| Error::io(path, e))?;
        }
        tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
        Ok(())
    }
}

pub const DFLD_MAGIC: &[u8; 4] = b"DFLD";
pub const DFLD_VERSION: u32 = 1;

/// Contents of a field dump.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldDump {
    pub len: usize,
    pub hurst: f32,
    pub sites: Vec<(i64, Vec<f64>)>,
}

/// Read a dump written by [`DisorderField::dump`].
pub fn read_dump(path: &Path) -> Result<FieldDump> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = || Error::Config(format!("{} is not a valid field dump", path.display()));
    if bytes.len() < 16 || &bytes[..4] != DFLD_MAGIC {
        return Err(bad());
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    if u32_at(4) != DFLD_VERSION {
        return Err(bad());
    }
    let len = u32_at(8) as usize;
    let hurst = f32::from_le_bytes(bytes[12..16].try_into().unwrap());
    let rec = 8 + 8 * len;
    if (bytes.len() - 16) % rec != 0 {
        return Err(bad());
    }
    let sites = bytes[16..]
        .chunks_exact(rec)
        .map(|r| {
            let k = i64::from_le_bytes(r[..8].try_into().unwrap());
            let vals = r[8..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            (k, vals)
        })
        .collect();
    Ok(FieldDump { len, hurst, sites })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_reference_values() {
        assert_eq!(gamma_fgn(1.0, 17).unwrap(), 1.0);
        assert!((gamma_fgn(0.85, 0).unwrap() - 1.0 / 0.595).abs() < 1e-12);
        assert!(gamma_fgn(0.5, 0).is_err());
        assert!(gamma_fgn(1.1, 0).is_err());
        let n = 1_000_000u64;
        let v = (n as f64).powf(0.3) * gamma_fgn(0.85, (n / 2) as i64).unwrap();
        assert!((v / 0.5f64.powf(-0.3) - 1.0).abs() < 0.01);
    }

    #[test]
    fn scaled_covariance_limits() {
        assert_eq!(scaled_covariance(1.0, 37, 0.3).unwrap(), 1.0);
        assert!((scaled_covariance(0.85, 4096, 1.0).unwrap() - 1.0).abs() < 0.02);
    }

    #[test]
    fn gamma_bound_holds() {
        for &h in &[0.55, 0.7, 0.85, 0.95] {
            let g0 = gamma_fgn(h, 0).unwrap();
            for n in 1..20_000i64 {
                let g = gamma_fgn(h, n).unwrap();
                assert!(g <= g0);
                if n >= 16 {
                    assert!(g * (n as f64).powf(2.0 - 2.0 * h) <= 1.05);
                }
            }
        }
    }

    #[test]
    fn embedding_is_minimal_for_fgn() {
        let cov = FgnCovariance::new(0.85).unwrap();
        let s = SiteSynthesizer::new(&cov, 512).unwrap();
        assert_eq!(s.embedding_size(), 1022);
    }

    #[test]
    fn site_sequences_are_deterministic_and_order_independent() {
        let cov: Arc<dyn Covariance> = Arc::new(FgnCovariance::new(0.7).unwrap());
        let a = DisorderField::new(cov.clone(), 64, 99).unwrap();
        let b = DisorderField::new(cov, 64, 99).unwrap();
        let order_a: Vec<f64> = (-5..=5).map(|k| a.omega_at(3, k).unwrap()).collect();
        let mut order_b: Vec<f64> = (-5..=5).rev().map(|k| b.omega_at(3, k).unwrap()).collect();
        order_b.reverse();
        assert_eq!(order_a, order_b);
        assert_eq!(a.omega_at(3, 2).unwrap(), a.omega_at(3, 2).unwrap());
        assert!(a.omega_at(0, 0).is_err());
        assert!(a.omega_at(65, 0).is_err());
    }

    #[test]
    fn capped_cache_regenerates_identically() {
        let cov: Arc<dyn Covariance> = Arc::new(FgnCovariance::new(0.7).unwrap());
        let synth = SiteSynthesizer::new(cov.as_ref(), 32).unwrap();
        let capped = DisorderField::with_synthesizer(cov.clone(), synth.clone(), 5, NonZeroUsize::new(2));
        let free = DisorderField::with_synthesizer(cov, synth, 5, None);
        for k in [0, 1, 2, 3, 0, 1] {
            assert_eq!(capped.site(k)[..], free.site(k)[..]);
        }
        assert_eq!(capped.cached_sites(), 2);
    }

    #[test]
    fn dump_round_trip() {
        let cov: Arc<dyn Covariance> = Arc::new(FgnCovariance::new(0.85).unwrap());
        let f = DisorderField::new(cov, 16, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.dfld");
        f.dump(&path, -2, 2).unwrap();
        let d = read_dump(&path).unwrap();
        assert_eq!(d.len, 16);
        assert_eq!(d.hurst, 0.85f32);
        assert_eq!(d.sites.len(), 5);
        assert_eq!(d.sites[2].1[..], f.site(0)[..]);
        let raw = std::fs::read(&path).unwrap();
        assert_eq!(raw.len(), 16 + 5 * (8 + 16 * 8));
    }
}
