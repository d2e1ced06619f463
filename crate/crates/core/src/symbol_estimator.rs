//! Path-integral Monte Carlo estimates of the Weyl symbol `u(x, ξ, t)` and its derivatives.
//!
//! For a Brownian path `ω` with `ω(0) = 0`,
//!
//! ```text
//! u(x, ξ, t) = E[ e^{-i ω(t)·ξ} exp(-∫_0^t V(x - ω(t)/2 + ω(s)) ds) ].
//! ```
//!
//! Each sample averages the path `ω` with its reflection `-ω`. Samples are
//! drawn in fixed-size chunks, chunk `c` using the random stream `(seed, c)`,
//! and the per-chunk statistics are merged in chunk order, so results do not
//! depend on the number of worker threads.

use num_complex::Complex;
use rayon::prelude::*;
use serde::Serialize;

use crate::brownian::{chunks, fill_path, stream_rng, DiscretePath, VariancePreset, Welford, DEFAULT_CHUNK};
use crate::error::{Error, Result};
use crate::multiindex::{MultiIndex, Site};
use crate::potentials::PotentialSpec;
use crate::scalar::Real;

/// Phase-space point `(x, ξ)` over the sites of `Λ`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhasePoint<F> {
    pub x: Vec<F>,
    pub xi: Vec<F>,
}

impl<F: Real> PhasePoint<F> {
    pub fn new(x: Vec<F>, xi: Vec<F>) -> Result<Self> {
        if x.len() != xi.len() {
            return Err(Error::DimensionMismatch { expected: x.len(), got: xi.len() });
        }
        Ok(Self { x, xi })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

/// Sampling parameters shared by all estimators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct EstimatorParams {
    /// Number of antithetic pairs `(ω, -ω)`.
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub preset: VariancePreset,
    /// Pairs per random stream.
    pub chunk_size: usize,
}

impl EstimatorParams {
    pub fn new(n_paths: usize, n_steps: usize, seed: u64, preset: VariancePreset) -> Self {
        Self { n_paths, n_steps, seed, preset, chunk_size: DEFAULT_CHUNK }
    }

    fn validate(&self) -> Result<()> {
        if self.n_paths < 2 {
            return Err(Error::InvalidArgument("n_paths must be ≥ 2".into()));
        }
        if self.n_steps == 0 {
            return Err(Error::InvalidArgument("n_steps must be ≥ 1".into()));
        }
        if self.chunk_size == 0 {
            return Err(Error::InvalidArgument("chunk_size must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Monte Carlo estimate with componentwise standard errors of the mean.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SymbolEstimate<F> {
    pub value: Complex<F>,
    pub stderr_re: F,
    pub stderr_im: F,
    pub n_paths: usize,
    pub n_steps: usize,
    pub preset: VariancePreset,
    pub t: F,
}

impl<F: Real> SymbolEstimate<F> {
    /// Larger of the two componentwise standard errors.
    pub fn stderr(&self) -> F {
        self.stderr_re.max(self.stderr_im)
    }

    /// Standard error of `|value|` (upper bound via the componentwise errors).
    pub fn stderr_abs(&self) -> F {
        self.stderr_re.hypot(self.stderr_im)
    }
}

/// Trapezoidal approximation of `∫_0^t V(x - ω(t)/2 + ω(s)) ds` on the path grid.
pub fn path_action<F: Real>(v: &PotentialSpec<F>, path: &DiscretePath<F>, x: &[F]) -> Result<F> {
    let n = v.n_sites();
    for got in [path.sites().len(), x.len()] {
        if got != n {
            return Err(Error::DimensionMismatch { expected: n, got });
        }
    }
    let mut scratch = vec![F::zero(); n];
    let end = path.endpoint();
    let shift: Vec<F> = x.iter().zip(end).map(|(&xi, &e)| xi - e / F::lit(2.0)).collect();
    Ok(trapezoid(v, path.n_steps(), path.dt(), |i| path.point(i), &shift, F::one(), &mut scratch))
}

/// `Δt Σ' V(shift + sign·ω_i)`, endpoints weighted ½.
fn trapezoid<'a, F: Real>(
    v: &PotentialSpec<F>,
    n_steps: usize,
    dt: F,
    point: impl Fn(usize) -> &'a [F],
    shift: &[F],
    sign: F,
    scratch: &mut [F],
) -> F {
    if matches!(v.kind(), crate::potentials::PotentialKind::Zero) {
        return F::zero();
    }
    let mut acc = F::zero();
    for i in 0..=n_steps {
        for ((s, &c), &w) in scratch.iter_mut().zip(shift).zip(point(i)) {
            *s = c + sign * w;
        }
        let val = v.eval_unchecked(scratch);
        acc += if i == 0 || i == n_steps { val / F::lit(2.0) } else { val };
    }
    acc * dt
}

/// One stencil point of a finite-difference scheme in `x`.
#[derive(Clone, Debug)]
struct StencilPoint<F> {
    x: Vec<F>,
    weight: F,
}

/// Tensor-product central differences: order `k` at a site uses offsets
/// `(k/2 - i)h`, `i = 0..=k`, with weights `(-1)^i C(k, i) / h^k`.
fn stencil<F: Real>(x: &[F], alpha: &MultiIndex, h: F) -> Vec<StencilPoint<F>> {
    let mut pts = vec![StencilPoint { x: x.to_vec(), weight: F::one() }];
    for (site, k) in alpha.iter() {
        let s = site as usize;
        let mut next = Vec::with_capacity(pts.len() * (k as usize + 1));
        let hk = h.powi(k as i32);
        for p in &pts {
            let mut binom = F::one();
            for i in 0..=k {
                if i > 0 {
                    binom = binom * F::from_u32(k - i + 1).unwrap() / F::from_u32(i).unwrap();
                }
                let sign = if i % 2 == 0 { F::one() } else { -F::one() };
                let off = (F::from_u32(k).unwrap() / F::lit(2.0) - F::from_u32(i).unwrap()) * h;
                let mut q = p.x.clone();
                q[s] += off;
                next.push(StencilPoint { x: q, weight: p.weight * sign * binom / hk });
            }
        }
        pts = next;
    }
    pts
}

fn check_index(alpha: &MultiIndex, n: usize, what: &str) -> Result<()> {
    match alpha.support().find(|&s| s as usize >= n) {
        Some(s) => Err(Error::InvalidArgument(format!("{what} site {s} outside Λ of size {n}"))),
        None => Ok(()),
    }
}

/// `u(x, ξ, t)`.
pub fn estimate_u<F: Real>(
    v: &PotentialSpec<F>,
    p: &PhasePoint<F>,
    t: F,
    params: &EstimatorParams,
) -> Result<SymbolEstimate<F>> {
    estimate_derivative(v, p, t, &MultiIndex::zero(), &MultiIndex::zero(), None, params)
}

/// `∂_ξ^β u(x, ξ, t)`: the integrand gains the factor `Π_j (-i ω_j(t))^{β_j}`.
pub fn estimate_xi_derivative<F: Real>(
    v: &PotentialSpec<F>,
    p: &PhasePoint<F>,
    t: F,
    beta: &MultiIndex,
    params: &EstimatorParams,
) -> Result<SymbolEstimate<F>> {
    estimate_derivative(v, p, t, &MultiIndex::zero(), beta, None, params)
}

/// `∂_x^α u(x, ξ, t)` by central differences with common random numbers.
///
/// `h` defaults to `10⁻²·√(σ²t)`.
pub fn estimate_x_derivative<F: Real>(
    v: &PotentialSpec<F>,
    p: &PhasePoint<F>,
    t: F,
    alpha: &MultiIndex,
    h: Option<F>,
    params: &EstimatorParams,
) -> Result<SymbolEstimate<F>> {
    estimate_derivative(v, p, t, alpha, &MultiIndex::zero(), h, params)
}

/// Default finite-difference step `10⁻²·√(σ²t)`.
pub fn default_step<F: Real>(t: F, preset: VariancePreset) -> F {
    (preset.variance::<F>() * t).sqrt() * F::lit(1e-2)
}

/// `∂_x^α ∂_ξ^β u(x, ξ, t)`.
///
/// Every stencil point of the `x`-differences is evaluated on the same pair
/// of paths, so each sample is already a finite difference.
pub fn estimate_derivative<F: Real>(
    v: &PotentialSpec<F>,
    p: &PhasePoint<F>,
    t: F,
    alpha: &MultiIndex,
    beta: &MultiIndex,
    h: Option<F>,
    params: &EstimatorParams,
) -> Result<SymbolEstimate<F>> {
    params.validate()?;
    let n = v.n_sites();
    if p.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: p.dim() });
    }
    if !(t > F::zero()) || !t.is_finite() {
        return Err(Error::InvalidArgument("t must be positive".into()));
    }
    check_index(alpha, n, "α")?;
    check_index(beta, n, "β")?;
    let h = h.unwrap_or_else(|| default_step(t, params.preset));
    if !(h > F::zero()) {
        return Err(Error::InvalidArgument("finite-difference step h must be positive".into()));
    }

    let sigma2: F = params.preset.variance();
    let n_steps = params.n_steps;
    let dt = t / F::from_usize_lossy(n_steps);
    let step_sd = (sigma2 * dt).sqrt();
    let points = stencil(&p.x, alpha, h);
    let beta_sites: Vec<(usize, i32)> = beta.iter().map(|(s, k)| (s as usize, k as i32)).collect();
    // (-i)^{|β|}; the reflected path picks up (-1)^{|β|}
    let i_pow = match beta.total_order() % 4 {
        0 => Complex::new(F::one(), F::zero()),
        1 => Complex::new(F::zero(), -F::one()),
        2 => Complex::new(-F::one(), F::zero()),
        _ => Complex::new(F::zero(), F::one()),
    };
    let reflect_sign = if beta.total_order().is_multiple_of(2) { F::one() } else { -F::one() };
    let half = F::lit(0.5);

    let run_chunk = |(chunk, size): (u64, usize)| {
        let mut rng = stream_rng(params.seed, chunk);
        let mut path = vec![F::zero(); (n_steps + 1) * n];
        let mut scratch = vec![F::zero(); n];
        let mut shift_plus = vec![F::zero(); n];
        let mut shift_minus = vec![F::zero(); n];
        let (mut re, mut im) = (Welford::<F>::default(), Welford::<F>::default());
        for _ in 0..size {
            fill_path(&mut rng, n, n_steps, step_sd, &mut path);
            let end = &path[n_steps * n..];
            let phase_arg: F = end.iter().zip(&p.xi).map(|(&e, &k)| e * k).sum();
            let moment = beta_sites
                .iter()
                .fold(F::one(), |acc, &(s, k)| acc * end[s].powi(k));
            // e^{-iω(t)ξ} and its reflection
            let (sin, cos) = phase_arg.sin_cos();
            let phase_plus = i_pow * Complex::new(cos, -sin) * moment;
            let phase_minus = i_pow * Complex::new(cos, sin) * (moment * reflect_sign);
            let mut sample = Complex::new(F::zero(), F::zero());
            for sp in &points {
                for j in 0..n {
                    shift_plus[j] = sp.x[j] - end[j] * half;
                    shift_minus[j] = sp.x[j] + end[j] * half;
                }
                let point = |i: usize| &path[i * n..(i + 1) * n];
                let a_plus = trapezoid(v, n_steps, dt, point, &shift_plus, F::one(), &mut scratch);
                let a_minus = trapezoid(v, n_steps, dt, point, &shift_minus, -F::one(), &mut scratch);
                sample += (phase_plus * (-a_plus).exp() + phase_minus * (-a_minus).exp()) * (sp.weight * half);
            }
            re.push(sample.re);
            im.push(sample.im);
        }
        (re, im)
    };

    let parts: Vec<(Welford<F>, Welford<F>)> = chunks(params.n_paths, params.chunk_size)
        .into_par_iter()
        .map(run_chunk)
        .collect();
    let (re, im) = parts
        .into_iter()
        .fold((Welford::default(), Welford::default()), |(ar, ai), (br, bi)| (ar.merge(br), ai.merge(bi)));
    Ok(SymbolEstimate {
        value: Complex::new(re.mean, im.mean),
        stderr_re: re.stderr(),
        stderr_im: im.stderr(),
        n_paths: params.n_paths,
        n_steps,
        preset: params.preset,
        t,
    })
}

/// Sites `0..n` as used by potentials built over `Λ`.
pub fn site_list(n: usize) -> Vec<Site> {
    (0..n as Site).collect()
}
