//! Sweeps that compare estimates and oracle symbols with the a priori bounds.
//!
//! Monte Carlo samples are compared with `3·stderr` slack; deterministic
//! oracle quantities with a fixed quadrature tolerance.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::brownian::{absolute_moment_product, b_constant, stream_rng, VariancePreset};
use crate::error::{Error, Result};
use crate::faadibruno::theorem31_bound;
use crate::multiindex::MultiIndex;
use crate::oracle::{self, Grid, SymbolTable};
use crate::potentials::{PotentialSpec, ScalarFunction};
use crate::scalar::Real;
use crate::symbol_estimator::{estimate_derivative, EstimatorParams, PhasePoint, SymbolEstimate};

/// Number of standard errors tolerated before a sample counts as a violation.
pub const SLACK_SIGMAS: f64 = 3.0;

/// Tolerance for oracle quadratures of the `L¹` bound.
pub const L1_TOLERANCE: f64 = 1e-6;

/// Tolerance for `max |u| ≤ 1` on the oracle.
pub const ORACLE_LINF_TOLERANCE: f64 = 1e-8;

/// One observation against one bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundSample {
    pub observed: f64,
    pub bound: f64,
    pub slack: f64,
}

/// Worst case of a sweep.
///
/// The worst sample is the one with the smallest `margin + slack`; the report
/// is a violation exactly when that sample has `margin < -slack`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub id: String,
    pub samples: usize,
    /// `bound - observed` at the worst sample; negative means the bound is exceeded.
    pub worst_margin: f64,
    /// Allowed slack at the worst sample.
    pub slack: f64,
    pub worst_bound: f64,
    pub worst_observed: f64,
    pub violation: bool,
}

impl BoundReport {
    pub fn from_samples(id: impl Into<String>, samples: impl IntoIterator<Item = BoundSample>) -> Result<Self> {
        let id = id.into();
        let mut count = 0;
        let mut worst: Option<BoundSample> = None;
        for s in samples {
            count += 1;
            let key = |s: &BoundSample| s.bound - s.observed + s.slack;
            // NaN observations always win, so they surface as violations
            if worst.is_none_or(|w| key(&s).is_nan() || key(&s) < key(&w)) {
                worst = Some(s);
            }
        }
        let w = worst.ok_or_else(|| Error::InvalidArgument(format!("empty sweep for '{id}'")))?;
        let margin = w.bound - w.observed;
        Ok(Self {
            id,
            samples: count,
            worst_margin: margin,
            slack: w.slack,
            worst_bound: w.bound,
            worst_observed: w.observed,
            violation: !(margin >= -w.slack),
        })
    }
}

fn estimate_sample<F: Real>(e: &SymbolEstimate<F>, bound: f64) -> BoundSample {
    BoundSample {
        observed: e.value.norm().to_f64_lossy(),
        bound,
        slack: SLACK_SIGMAS * e.stderr_abs().to_f64_lossy(),
    }
}

/// `|u| ≤ 1` over a sweep of estimates.
pub fn check_linf<F: Real>(sweep: &[SymbolEstimate<F>]) -> Result<BoundReport> {
    BoundReport::from_samples("linf", sweep.iter().map(|e| estimate_sample(e, 1.0)))
}

/// `max |u| ≤ 1` over a whole oracle table, with [`ORACLE_LINF_TOLERANCE`].
pub fn check_linf_table(table: &SymbolTable) -> Result<BoundReport> {
    BoundReport::from_samples(
        "linf-oracle",
        table.values().iter().map(|v| BoundSample { observed: v.norm(), bound: 1.0, slack: ORACLE_LINF_TOLERANCE }),
    )
}

/// Product bound `(σ²t)^{|β|/2} ∏_j A_{β_j}` on `|∂_ξ^β u|`.
pub fn xi_bound_product<F: Real>(beta: &MultiIndex, t: F, preset: VariancePreset) -> F {
    absolute_moment_product(beta, t, preset.variance())
}

/// Coarse bound `B_m^{|β|} (σ²t)^{|β|/2}` with `m = max_j β_j`.
pub fn xi_bound_coarse<F: Real>(beta: &MultiIndex, t: F, preset: VariancePreset) -> F {
    let k = beta.total_order();
    b_constant::<F>(beta.max_order()).powi(k as i32)
        * (preset.variance::<F>() * t).powf(F::from_u32(k).unwrap() / F::lit(2.0))
}

/// Both `ξ`-derivative bounds over a sweep of `∂_ξ^β u` estimates:
/// `(product bound, coarse bound)`.
pub fn check_xi_derivative_bounds<F: Real>(
    sweep: &[SymbolEstimate<F>],
    beta: &MultiIndex,
    t: F,
    preset: VariancePreset,
) -> Result<(BoundReport, BoundReport)> {
    let fine = xi_bound_product(beta, t, preset).to_f64_lossy();
    let coarse = xi_bound_coarse(beta, t, preset).to_f64_lossy();
    Ok((
        BoundReport::from_samples("xi-deriv-product", sweep.iter().map(|e| estimate_sample(e, fine)))?,
        BoundReport::from_samples("xi-deriv-coarse", sweep.iter().map(|e| estimate_sample(e, coarse)))?,
    ))
}

/// Per-frequency results of the `L¹` check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct L1Report {
    pub report: BoundReport,
    pub xi: Vec<Vec<f64>>,
    /// `∫ |u(x, ξ)| dx` per probe.
    pub lhs: Vec<f64>,
    /// `∫ e^{-tV(x)} dx`.
    pub rhs: f64,
}

/// `∫ e^{-tV}` over the half-step rows of the region of interest.
///
/// A tail that does not decrease between `roi/2` and `roi` is reported as a
/// divergent integral; one that decreases but is still above `10⁻⁸` of the
/// peak means the region is too small.
fn boltzmann_integral(v: &PotentialSpec<f64>, t: f64, grid: &Grid) -> Result<f64> {
    let dim = grid.dim();
    let h = grid.dx() / 2.0;
    let xs: Vec<f64> = (0..grid.half_nodes())
        .map(|s| grid.half_node(s))
        .filter(|x| x.abs() <= grid.roi() + 1e-12)
        .collect();
    let n = xs.len();
    let mut total = 0.0;
    let mut peak = 0f64;
    let mut edge = 0f64;
    let mut mid = 0f64;
    let mut point = vec![0.0; dim];
    for flat in 0..n.pow(dim as u32) {
        let mut rest = flat;
        let mut on_edge = false;
        let mut max_abs = 0f64;
        for a in (0..dim).rev() {
            let i = rest % n;
            rest /= n;
            point[a] = xs[i];
            on_edge |= i == 0 || i == n - 1;
            max_abs = max_abs.max(xs[i].abs());
        }
        let w = (-t * v.eval(&point)?).exp();
        total += w;
        peak = peak.max(w);
        if on_edge {
            edge = edge.max(w);
        }
        if (max_abs - grid.roi() / 2.0).abs() <= h / 2.0 + 1e-12 {
            mid = mid.max(w);
        }
    }
    if edge > 1e-8 * peak {
        if edge >= 0.5 * mid {
            return Err(Error::Divergent(format!(
                "∫ e^{{-tV}} dx: integrand does not decay (|x| = {} gives {edge:.3e}, |x| = {} gives {mid:.3e})",
                grid.roi(),
                grid.roi() / 2.0
            )));
        }
        return Err(Error::InsufficientDecay { what: "e^{-tV} at the region boundary", value: edge / peak, limit: 1e-8 });
    }
    Ok(total * h.powi(dim as i32))
}

/// `∫ |u(x, ξ, t)| dx ≤ ∫ e^{-tV(x)} dx` on the grid oracle, per `ξ` probe.
pub fn check_l1_bound(v: &PotentialSpec<f64>, t: f64, xi_list: &[Vec<f64>], grid: &Grid) -> Result<L1Report> {
    let rhs = boltzmann_integral(v, t, grid)?;
    let h = oracle::build_hamiltonian(v, grid)?;
    let s = oracle::semigroup(&h, grid, t)?;
    let table = oracle::weyl_symbol_from_kernel(&s)?;
    let ratio = table.edge_ratio();
    if ratio > 1e-8 {
        return Err(Error::InsufficientDecay { what: "|u| at the region boundary", value: ratio, limit: 1e-8 });
    }
    let lhs = xi_list.iter().map(|xi| table.x_integral_abs_at(xi)).collect::<Result<Vec<_>>>()?;
    let report = BoundReport::from_samples(
        "l1",
        lhs.iter().map(|&l| BoundSample { observed: l, bound: rhs, slack: L1_TOLERANCE }),
    )?;
    Ok(L1Report { report, xi: xi_list.to_vec(), lhs, rhs })
}

/// A potential family defined for every `|Λ|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialFamily {
    /// One-dimensional chain.
    NearestNeighbor { f: ScalarFunction<f64>, g: ScalarFunction<f64> },
    MeanField {
        g: ScalarFunction<f64>,
        #[serde(default = "default_true")]
        include_diagonal: bool,
    },
}

fn default_true() -> bool {
    true
}

impl PotentialFamily {
    pub fn build<F: Real>(&self, n_sites: usize) -> Result<PotentialSpec<F>> {
        if n_sites == 0 {
            return Err(Error::InvalidArgument("|Λ| must be ≥ 1".into()));
        }
        match self {
            PotentialFamily::NearestNeighbor { f, g } => {
                f.validate()?;
                g.validate()?;
                Ok(PotentialSpec::chain(n_sites, f.cast(), g.cast()))
            }
            PotentialFamily::MeanField { g, include_diagonal } => {
                g.validate()?;
                Ok(PotentialSpec::mean_field(n_sites, g.cast(), *include_diagonal))
            }
        }
    }
}

/// Seeds for independent probes derived from one base seed.
fn probe_seed(seed: u64, k: usize) -> u64 {
    seed ^ ((k as u64 + 1) << 32)
}

/// `n` random phase points in `[-r, r]^{2|Λ|}`.
pub fn random_phase_points<F: Real>(n_sites: usize, n: usize, radius: f64, seed: u64) -> Vec<PhasePoint<F>> {
    let mut rng = stream_rng(seed, u64::MAX);
    (0..n)
        .map(|_| {
            let mut draw = || (0..n_sites).map(|_| F::lit(rng.random_range(-radius..=radius))).collect::<Vec<F>>();
            let x = draw();
            let xi = draw();
            PhasePoint { x, xi }
        })
        .collect()
}

/// Radius of the random probe box.
pub const PROBE_RADIUS: f64 = 1.5;

/// Results at one `|Λ|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeReport {
    pub n_sites: usize,
    pub c_m: f64,
    pub bound: f64,
    pub report: BoundReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeBoundReport {
    pub m: u32,
    pub t: f64,
    pub alpha: MultiIndex,
    pub beta: MultiIndex,
    pub sizes: Vec<SizeReport>,
    /// All sizes produced bitwise the same bound.
    pub bound_lambda_independent: bool,
}

impl DerivativeBoundReport {
    pub fn violation(&self) -> bool {
        self.sizes.iter().any(|s| s.report.violation)
    }
}

/// `|∂_x^α ∂_ξ^β u| ≤ m^{|S(α)|} e^{tC_m|S(α)|} B_m^{|S(β)|} (σ²t)^{|β|/2}` at
/// random phase points for each `|Λ|`, with the certified `C_m` of the family.
#[allow(clippy::too_many_arguments)]
pub fn check_theorem31<F: Real>(
    family: &PotentialFamily,
    m: u32,
    t: F,
    alpha: &MultiIndex,
    beta: &MultiIndex,
    sizes: &[usize],
    n_probes: usize,
    params: &EstimatorParams,
) -> Result<DerivativeBoundReport> {
    let sigma2: F = params.preset.variance();
    let mut out = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let v = family.build::<F>(n)?;
        let c_m = v.certified_cm(m)?;
        let bound = theorem31_bound(alpha, beta, m, t, c_m, sigma2)?.to_f64_lossy();
        let points = random_phase_points::<F>(n, n_probes, PROBE_RADIUS, params.seed ^ n as u64);
        let mut samples = Vec::with_capacity(n_probes);
        for (k, p) in points.iter().enumerate() {
            let probe = EstimatorParams { seed: probe_seed(params.seed, k), ..*params };
            let e = estimate_derivative(&v, p, t, alpha, beta, None, &probe)?;
            samples.push(estimate_sample(&e, bound));
        }
        out.push(SizeReport {
            n_sites: n,
            c_m: c_m.to_f64_lossy(),
            bound,
            report: BoundReport::from_samples(format!("thm31-L{n}"), samples)?,
        });
    }
    let bound_lambda_independent = out.windows(2).all(|w| w[0].bound.to_bits() == w[1].bound.to_bits());
    Ok(DerivativeBoundReport {
        m,
        t: t.to_f64_lossy(),
        alpha: alpha.clone(),
        beta: beta.clone(),
        sizes: out,
        bound_lambda_independent,
    })
}

/// Parameters of the class `S_m(M, ρ, δ)`: `|∂_x^α ∂_ξ^β u| ≤ M ∏_j ρ_j^{α_j} δ_j^{β_j}`
/// for `α, β ∈ 𝓜_m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolClassParams {
    #[serde(rename = "M")]
    pub amplitude: f64,
    pub rho: Vec<f64>,
    pub delta: Vec<f64>,
    pub m: u32,
}

impl SymbolClassParams {
    /// `M = 1`, `ρ_j = m e^{tC_m}`, `δ_j = B_m √(σ²t)` on every site.
    pub fn from_constants(n_sites: usize, m: u32, t: f64, c_m: f64, preset: VariancePreset) -> Result<Self> {
        if !(t > 0.0) || !(c_m >= 0.0) {
            return Err(Error::InvalidArgument("need t > 0 and C_m ≥ 0".into()));
        }
        let rho = m as f64 * (t * c_m).exp();
        let delta = b_constant::<f64>(m) * (preset.variance::<f64>() * t).sqrt();
        Ok(Self { amplitude: 1.0, rho: vec![rho; n_sites], delta: vec![delta; n_sites], m })
    }

    /// `M ∏_j ρ_j^{α_j} δ_j^{β_j}`.
    pub fn bound(&self, alpha: &MultiIndex, beta: &MultiIndex) -> Result<f64> {
        let mut b = self.amplitude;
        for (idx, per_site) in [(alpha, &self.rho), (beta, &self.delta)] {
            if !idx.in_class_m(self.m) {
                return Err(Error::OutsideClass { index: idx.to_string(), m: self.m });
            }
            for (s, k) in idx.iter() {
                let base = per_site
                    .get(s as usize)
                    .ok_or_else(|| Error::InvalidArgument(format!("site {s} outside Λ")))?;
                b *= base.powi(k as i32);
            }
        }
        Ok(b)
    }
}

/// Index pairs `(α, β)` in `𝓜_m` on the first two sites with `|α| + |β| ≤ 2`.
pub fn class_indices(m: u32, n_sites: usize) -> Vec<(MultiIndex, MultiIndex)> {
    let sites = n_sites.min(2) as u32;
    let mut singles = vec![MultiIndex::zero()];
    for s in 0..sites {
        for k in 1..=m.min(2) {
            singles.push(MultiIndex::single(s, k));
        }
    }
    if sites == 2 {
        singles.push(MultiIndex::from_pairs([(0, 1), (1, 1)]));
    }
    let mut out = Vec::new();
    for a in &singles {
        for b in &singles {
            if a.total_order() + b.total_order() <= 2 {
                out.push((a.clone(), b.clone()));
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMembership {
    pub params: SymbolClassParams,
    pub reports: Vec<BoundReport>,
}

impl ClassMembership {
    pub fn violation(&self) -> bool {
        self.reports.iter().any(|r| r.violation)
    }
}

/// Class parameters from the certified `C_m`, with one report per `(α, β)` of
/// [`class_indices`] over random phase points.
pub fn class_membership<F: Real>(
    v: &PotentialSpec<F>,
    m: u32,
    t: F,
    n_probes: usize,
    params: &EstimatorParams,
) -> Result<ClassMembership> {
    let n = v.n_sites();
    let c_m = v.certified_cm(m)?.to_f64_lossy();
    let class = SymbolClassParams::from_constants(n, m, t.to_f64_lossy(), c_m, params.preset)?;
    let points = random_phase_points::<F>(n, n_probes, PROBE_RADIUS, params.seed);
    let mut reports = Vec::new();
    for (alpha, beta) in class_indices(m, n) {
        let bound = class.bound(&alpha, &beta)?;
        let mut samples = Vec::with_capacity(n_probes);
        for (k, p) in points.iter().enumerate() {
            let probe = EstimatorParams { seed: probe_seed(params.seed, k), ..*params };
            let e = estimate_derivative(v, p, t, &alpha, &beta, None, &probe)?;
            samples.push(estimate_sample(&e, bound));
        }
        reports.push(BoundReport::from_samples(format!("class[a={alpha},b={beta}]"), samples)?);
    }
    Ok(ClassMembership { params: class, reports })
}
