//! Discretized Brownian paths and the Gaussian absolute-moment constants.
//!
//! Paths vanish at time zero and have independent `N(0, σ²Δt)` increments per
//! coordinate on a uniform grid. Every random stream is a ChaCha12 generator
//! keyed by `(seed, stream)`, so chunked parallel sampling is reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multiindex::{MultiIndex, Site};
use crate::scalar::Real;

/// Per-unit-time coordinate variance of the sampled Wiener process.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VariancePreset {
    /// σ² = 1, the normalization of the absolute-moment identity.
    Paper,
    /// σ² = 2, the process generated by the Laplacian; the free symbol is `e^{-t|ξ|²}`.
    #[default]
    GeneratorLaplacian,
}

impl VariancePreset {
    pub fn variance<F: Real>(self) -> F {
        match self {
            VariancePreset::Paper => F::one(),
            VariancePreset::GeneratorLaplacian => F::lit(2.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            VariancePreset::Paper => "PAPER",
            VariancePreset::GeneratorLaplacian => "GENERATOR_LAPLACIAN",
        }
    }
}

/// Independent generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A Brownian path on `[0, t]` sampled at `n_steps + 1` uniform times.
///
/// Values are stored time-major: `point(i)` is `ω(iΔt)` over all sites.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscretePath<F> {
    t: F,
    n_steps: usize,
    sites: Vec<Site>,
    values: Vec<F>,
    variance_scale: F,
}

impl<F: Real> DiscretePath<F> {
    /// Builds a path from explicit per-site values (each of length `n_steps + 1`,
    /// starting at zero). Used for deterministic test paths.
    pub fn from_site_values(t: F, sites: Vec<Site>, per_site: &[Vec<F>], variance_scale: F) -> Result<Self> {
        if per_site.len() != sites.len() {
            return Err(Error::DimensionMismatch { expected: sites.len(), got: per_site.len() });
        }
        let len = per_site.first().map_or(2, Vec::len);
        if len < 2 || per_site.iter().any(|v| v.len() != len) {
            return Err(Error::InvalidArgument("per-site value arrays must share a length ≥ 2".into()));
        }
        if per_site.iter().any(|v| v[0] != F::zero()) {
            return Err(Error::InvalidArgument("paths must vanish at time zero".into()));
        }
        let n_steps = len - 1;
        let n = sites.len();
        let mut values = vec![F::zero(); (n_steps + 1) * n];
        for (j, v) in per_site.iter().enumerate() {
            for (i, &x) in v.iter().enumerate() {
                values[i * n + j] = x;
            }
        }
        Ok(Self { t, n_steps, sites, values, variance_scale })
    }

    pub fn t(&self) -> F {
        self.t
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> F {
        self.t / F::from_usize_lossy(self.n_steps)
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn variance_scale(&self) -> F {
        self.variance_scale
    }

    /// `ω(iΔt)` across all sites.
    pub fn point(&self, i: usize) -> &[F] {
        let n = self.sites.len();
        &self.values[i * n..(i + 1) * n]
    }

    /// `ω(t)`.
    pub fn endpoint(&self) -> &[F] {
        self.point(self.n_steps)
    }

    /// Trajectory of site position `j`.
    pub fn site_values(&self, j: usize) -> impl Iterator<Item = F> + '_ {
        let n = self.sites.len();
        (0..=self.n_steps).map(move |i| self.values[i * n + j])
    }
}

fn validate(t: f64, n_steps: usize, variance_scale: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("horizon t must be positive, got {t}")));
    }
    if n_steps == 0 {
        return Err(Error::InvalidArgument("n_steps must be ≥ 1".into()));
    }
    if !(variance_scale > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "variance scale must be positive, got {variance_scale}"
        )));
    }
    Ok(())
}

/// Fills `values` (time-major, `(n_steps+1)·n_sites`) with a fresh path.
pub(crate) fn fill_path<F: Real>(rng: &mut ChaCha12Rng, n_sites: usize, n_steps: usize, step_sd: F, values: &mut [F]) {
    values[..n_sites].fill(F::zero());
    for i in 1..=n_steps {
        let (prev, cur) = values[(i - 1) * n_sites..(i + 1) * n_sites].split_at_mut(n_sites);
        for (c, &p) in cur.iter_mut().zip(prev.iter()) {
            let z: f64 = StandardNormal.sample(rng);
            *c = p + step_sd * F::lit(z);
        }
    }
}

/// Samples one reproducible path for `seed`.
pub fn sample_path<F: Real>(seed: u64, t: F, n_steps: usize, sites: &[Site], variance_scale: F) -> Result<DiscretePath<F>> {
    validate(t.to_f64_lossy(), n_steps, variance_scale.to_f64_lossy())?;
    let n = sites.len();
    let mut values = vec![F::zero(); (n_steps + 1) * n];
    let step_sd = (variance_scale * t / F::from_usize_lossy(n_steps)).sqrt();
    fill_path(&mut stream_rng(seed, 0), n, n_steps, step_sd, &mut values);
    Ok(DiscretePath { t, n_steps, sites: sites.to_vec(), values, variance_scale })
}

/// `A_k = 2^{k/2} Γ((k+1)/2) / √π`, the absolute moment `E|Z|^k` of a standard normal.
///
/// Evaluated through `A_{k+2} = (k+1) A_k` from `A_0 = 1`, `A_1 = √(2/π)`.
pub fn a_constant<F: Real>(k: u32) -> F {
    let mut a = if k.is_multiple_of(2) { F::one() } else { (F::lit(2.0) / F::PI()).sqrt() };
    let mut j = k % 2;
    while j < k {
        a *= F::from_u32(j + 1).unwrap();
        j += 2;
    }
    a
}

/// `B_m = max_{k ≤ m} A_k`.
pub fn b_constant<F: Real>(m: u32) -> F {
    (0..=m).map(a_constant::<F>).fold(F::zero(), F::max)
}

/// `E ∏_j |ω_j(t)|^{β_j} = (σ²t)^{|β|/2} ∏_j A_{β_j}`.
pub fn absolute_moment_product<F: Real>(beta: &MultiIndex, t: F, variance_scale: F) -> F {
    let scale = (variance_scale * t).powf(F::from_u32(beta.total_order()).unwrap() / F::lit(2.0));
    beta.iter().map(|(_, k)| a_constant::<F>(k)).fold(scale, |acc, a| acc * a)
}

/// Sample mean of a statistic with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SampleMean<F> {
    pub mean: F,
    pub stderr: F,
    pub n: usize,
}

/// Running mean/variance (Welford), mergeable in a fixed order.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Welford<F> {
    pub n: usize,
    pub mean: F,
    pub m2: F,
}

impl<F: Real> Welford<F> {
    pub fn push(&mut self, x: F) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / F::from_usize_lossy(self.n);
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(self, other: Self) -> Self {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let (na, nb, nn) = (
            F::from_usize_lossy(self.n),
            F::from_usize_lossy(other.n),
            F::from_usize_lossy(n),
        );
        let d = other.mean - self.mean;
        Self {
            n,
            mean: self.mean + d * nb / nn,
            m2: self.m2 + other.m2 + d * d * na * nb / nn,
        }
    }

    pub fn stderr(&self) -> F {
        if self.n < 2 {
            return F::zero();
        }
        let n = F::from_usize_lossy(self.n);
        (self.m2 / (n - F::one()) / n).sqrt()
    }
}

/// Splits `n` items into `(chunk index, size)` pieces of at most `chunk`.
pub(crate) fn chunks(n: usize, chunk: usize) -> Vec<(u64, usize)> {
    let chunk = chunk.max(1);
    (0..n.div_ceil(chunk))
        .map(|c| (c as u64, chunk.min(n - c * chunk)))
        .collect()
}

/// Default number of samples per independent random stream.
pub const DEFAULT_CHUNK: usize = 1 << 12;

/// Monte Carlo estimate of `E ∏_j |ω_j(t)|^{β_j}` from path endpoints.
///
/// Only the endpoint enters, so it is sampled directly as `N(0, σ²t)` per site.
pub fn sample_absolute_moment<F: Real>(
    beta: &MultiIndex,
    t: F,
    variance_scale: F,
    n_paths: usize,
    seed: u64,
) -> Result<SampleMean<F>> {
    validate(t.to_f64_lossy(), 1, variance_scale.to_f64_lossy())?;
    if n_paths < 2 {
        return Err(Error::InvalidArgument("n_paths must be ≥ 2".into()));
    }
    let sd = (variance_scale * t).sqrt();
    let orders: Vec<u32> = beta.iter().map(|(_, k)| k).collect();
    let parts: Vec<Welford<F>> = chunks(n_paths, DEFAULT_CHUNK)
        .into_par_iter()
        .map(|(c, size)| {
            let mut rng = stream_rng(seed, c);
            let mut acc = Welford::default();
            for _ in 0..size {
                let mut prod = F::one();
                for &k in &orders {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    prod *= (sd * F::lit(z)).abs().powi(k as i32);
                }
                acc.push(prod);
            }
            acc
        })
        .collect();
    let acc = parts.into_iter().fold(Welford::default(), Welford::merge);
    Ok(SampleMean { mean: acc.mean, stderr: acc.stderr(), n: acc.n })
}

/// Endpoint statistics of `n_paths` sampled paths of one site with `n_steps` steps:
/// `(mean, stderr of mean, sample variance)`.
pub fn endpoint_statistics<F: Real>(
    t: F,
    n_steps: usize,
    variance_scale: F,
    n_paths: usize,
    seed: u64,
) -> Result<(F, F, F)> {
    validate(t.to_f64_lossy(), n_steps, variance_scale.to_f64_lossy())?;
    let step_sd = (variance_scale * t / F::from_usize_lossy(n_steps)).sqrt();
    let parts: Vec<Welford<F>> = chunks(n_paths, DEFAULT_CHUNK)
        .into_par_iter()
        .map(|(c, size)| {
            let mut rng = stream_rng(seed, c);
            let mut buf = vec![F::zero(); n_steps + 1];
            let mut acc = Welford::default();
            for _ in 0..size {
                fill_path(&mut rng, 1, n_steps, step_sd, &mut buf);
                acc.push(buf[n_steps]);
            }
            acc
        })
        .collect();
    let acc = parts.into_iter().fold(Welford::default(), Welford::merge);
    let var = if acc.n > 1 { acc.m2 / F::from_usize_lossy(acc.n - 1) } else { F::zero() };
    Ok((acc.mean, acc.stderr(), var))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn a_constant_matches_gamma_formula() {
        use statrs::function::gamma::gamma;
        for k in 0..20u32 {
            let expected = 2f64.powf(k as f64 / 2.0) * gamma((k as f64 + 1.0) / 2.0) / std::f64::consts::PI.sqrt();
            let got: f64 = a_constant(k);
            assert!((got - expected).abs() <= 1e-13 * expected, "k={k}: {got} vs {expected}");
        }
    }

    #[test]
    fn a_and_b_examples() {
        assert_eq!(a_constant::<f64>(0), 1.0);
        assert!((a_constant::<f64>(2) - 1.0).abs() < 1e-15);
        assert!((a_constant::<f64>(1) - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-15);
        assert_eq!(b_constant::<f64>(0), 1.0);
        assert_eq!(b_constant::<f64>(1), 1.0);
        assert!((b_constant::<f64>(4) - 3.0).abs() < 1e-15);
        for m in 4..12 {
            assert_eq!(b_constant::<f64>(m), a_constant::<f64>(m));
        }
        for m in 0..12 {
            assert!(b_constant::<f64>(m + 1) >= b_constant::<f64>(m));
        }
        assert!((a_constant::<f32>(3) - 1.595_769).abs() < 1e-6);
    }

    #[test]
    fn moment_product_examples() {
        let one: f64 = absolute_moment_product(&MultiIndex::zero(), 0.7, 1.0);
        assert_eq!(one, 1.0);
        let m: f64 = absolute_moment_product(&"1:2".parse().unwrap(), 1.0, 1.0);
        assert!((m - 1.0).abs() < 1e-15);
        let m: f64 = absolute_moment_product(&"1:1,2:1".parse().unwrap(), 4.0, 1.0);
        assert!((m - 4.0 * 2.0 / std::f64::consts::PI).abs() < 1e-14);
    }

    #[test]
    fn sample_path_is_deterministic_and_starts_at_zero() {
        let a = sample_path::<f64>(7, 1.5, 16, &[0, 3], 2.0).unwrap();
        let b = sample_path::<f64>(7, 1.5, 16, &[0, 3], 2.0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.point(0), &[0.0, 0.0]);
        assert_ne!(a, sample_path::<f64>(8, 1.5, 16, &[0, 3], 2.0).unwrap());
        let empty = sample_path::<f64>(1, 1.0, 4, &[], 1.0).unwrap();
        assert!(empty.endpoint().is_empty());
    }

    #[test]
    fn sample_path_rejects_bad_sizes() {
        assert!(sample_path::<f64>(1, 0.0, 4, &[0], 1.0).is_err());
        assert!(sample_path::<f64>(1, 1.0, 0, &[0], 1.0).is_err());
        assert!(sample_path::<f64>(1, 1.0, 4, &[0], -1.0).is_err());
    }

    #[test]
    fn endpoint_variance_and_symmetry() {
        let t = 0.8;
        // single step: endpoint is N(0, t)
        let (mean, se, var) = endpoint_statistics::<f64>(t, 1, 1.0, 100_000, 11).unwrap();
        assert!((var - t).abs() < 0.05 * t, "var {var}");
        assert!(mean.abs() < 4.0 * se);
        // many steps, GENERATOR_LAPLACIAN
        let (mean, se, var) = endpoint_statistics::<f64>(t, 32, 2.0, 100_000, 12).unwrap();
        assert!((var - 2.0 * t).abs() < 0.05 * 2.0 * t, "var {var}");
        assert!(mean.abs() < 4.0 * se);
    }

    #[test]
    fn increments_have_step_variance() {
        // pooled increments of one long path
        let n_steps = 20_000;
        let t = 2.0;
        let p = sample_path::<f64>(3, t, n_steps, &[0], 1.0).unwrap();
        let v: Vec<f64> = p.site_values(0).collect();
        let dt = t / n_steps as f64;
        let mut w = Welford::<f64>::default();
        for i in 1..v.len() {
            w.push(v[i] - v[i - 1]);
        }
        let var = w.m2 / (w.n - 1) as f64;
        assert!((var - dt).abs() < 0.05 * dt);
    }

    #[test]
    fn welford_merge_is_exact_concatenation() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut all = Welford::default();
        xs.iter().for_each(|&x| all.push(x));
        let (mut a, mut b) = (Welford::default(), Welford::default());
        xs[..37].iter().for_each(|&x| a.push(x));
        xs[37..].iter().for_each(|&x| b.push(x));
        let m = a.merge(b);
        assert!((m.mean - all.mean).abs() < 1e-14);
        assert!((m.m2 - all.m2).abs() < 1e-12);
    }

    #[test]
    fn chunk_split_covers_everything() {
        let c = chunks(10_000, 4096);
        assert_eq!(c, vec![(0, 4096), (1, 4096), (2, 1808)]);
        assert!(chunks(0, 4096).is_empty());
    }
}
