//! Traces `Tr([A_j, e^{-tH}] Op^W(p))` on the grid oracle and their `√t` scaling.
//!
//! `A_j` is multiplication by a polynomial in `x_j` and `p ≥ 0` is a Gaussian
//! phase-space density of unit trace. The trace is computed from matrices and,
//! independently, as `(2π)^{-dim} ∬ F p` with `F` the Weyl symbol of the
//! commutator. Both `A_j` and `e^{-tH}` are real symmetric, so the commutator
//! is antisymmetric and the trace is purely imaginary.

use nalgebra::DMatrix;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{GridSemigroup, Grid, SpectralFactors, SymbolTable};

type C64 = Complex<f64>;

/// Relative size of `p` allowed at the edges of the region of interest and
/// of the frequency grid.
pub const EDGE_TOLERANCE: f64 = 1e-12;

/// A nonnegative symbol of unit trace on the oracle grid.
#[derive(Clone, Debug)]
pub struct WeylObservable {
    table: SymbolTable,
    normalization: f64,
}

impl WeylObservable {
    pub fn table(&self) -> &SymbolTable {
        &self.table
    }

    /// The constant `c` in `p = c·exp(...)`.
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    /// `(2π)^{-dim} ∬ p dx dξ`.
    pub fn trace(&self) -> f64 {
        self.table.phase_space_integral().re
    }
}

/// `p(x, ξ) = c·exp(-|x - x₀|²/2w_x² - |ξ - ξ₀|²/2w_ξ²)` with `(2π)^{-dim} ∬ p = 1`
/// by grid quadrature.
pub fn gaussian_state_symbol(grid: &Grid, x0: &[f64], xi0: &[f64], width_x: f64, width_xi: f64) -> Result<WeylObservable> {
    let dim = grid.dim();
    for c in [x0, xi0] {
        if c.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: c.len() });
        }
    }
    if !(width_x > 0.0) || !(width_xi > 0.0) {
        return Err(Error::InvalidArgument("widths must be positive".into()));
    }
    let raw = SymbolTable::from_fn(grid, |x, xi| {
        let q: f64 = x.iter().zip(x0).map(|(a, b)| (a - b).powi(2) / (2.0 * width_x * width_x)).sum::<f64>()
            + xi.iter().zip(xi0).map(|(a, b)| (a - b).powi(2) / (2.0 * width_xi * width_xi)).sum::<f64>();
        C64::new((-q).exp(), 0.0)
    });
    if raw.edge_ratio() > EDGE_TOLERANCE {
        return Err(Error::SupportViolation(format!(
            "p does not vanish at the edge of the region of interest |x| ≤ {}",
            grid.roi()
        )));
    }
    if raw.frequency_edge_ratio() > EDGE_TOLERANCE {
        return Err(Error::SupportViolation("p does not vanish at the edge of the frequency grid".into()));
    }
    let c = 1.0 / raw.phase_space_integral().re;
    let table = SymbolTable::from_fn(grid, |x, xi| {
        let q: f64 = x.iter().zip(x0).map(|(a, b)| (a - b).powi(2) / (2.0 * width_x * width_x)).sum::<f64>()
            + xi.iter().zip(xi0).map(|(a, b)| (a - b).powi(2) / (2.0 * width_xi * width_xi)).sum::<f64>();
        C64::new(c * (-q).exp(), 0.0)
    });
    Ok(WeylObservable { table, normalization: c })
}

/// `Op^W(p)` as a Hermitian grid matrix.
pub fn op_weyl_matrix(p: &WeylObservable) -> Result<DMatrix<C64>> {
    let ratio = p.table.frequency_edge_ratio();
    if ratio > EDGE_TOLERANCE {
        return Err(Error::InsufficientDecay { what: "p at the frequency-grid edge (aliasing)", value: ratio, limit: EDGE_TOLERANCE });
    }
    Ok(p.table.quantize())
}

/// `A(x) = Σ_k a_k x^k`, degree at most 4, acting on site `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub coefficients: Vec<f64>,
}

impl Polynomial {
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.is_empty() || coefficients.len() > 5 {
            return Err(Error::InvalidArgument("A needs 1 to 5 coefficients (degree ≤ 4)".into()));
        }
        Ok(Self { coefficients })
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }
}

/// Both routes for one `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommutatorTrace {
    pub t: f64,
    /// `Tr((A_j S - S A_j) P)`.
    pub matrix: Complex<f64>,
    /// `(2π)^{-dim} ∬ F p dx dξ`.
    pub symbol: Complex<f64>,
    /// `max |F|` over the symbol table.
    pub sup_symbol: f64,
}

impl CommutatorTrace {
    /// `|matrix - symbol| / max(|matrix|, |symbol|)`, zero when both vanish.
    pub fn route_mismatch(&self) -> f64 {
        let scale = self.matrix.norm().max(self.symbol.norm());
        if scale == 0.0 {
            0.0
        } else {
            (self.matrix - self.symbol).norm() / scale
        }
    }

    /// The trace magnitude used for the scaling fit.
    pub fn magnitude(&self) -> f64 {
        self.matrix.norm()
    }
}

fn check_site(grid: &Grid, site: usize) -> Result<()> {
    if site >= grid.dim() {
        return Err(Error::InvalidArgument(format!("site {site} outside a {}-dimensional grid", grid.dim())));
    }
    Ok(())
}

/// `Tr([A_j, S] P)` by the matrix and symbol routes.
pub fn commutator_trace(a: &Polynomial, site: usize, s: &GridSemigroup, p: &DMatrix<C64>, obs: &WeylObservable) -> Result<CommutatorTrace> {
    let grid = &s.grid;
    check_site(grid, site)?;
    let n = grid.size();
    if p.nrows() != n || obs.table.grid() != grid {
        return Err(Error::InvalidArgument("observable lives on a different grid".into()));
    }
    let a_diag: Vec<f64> = (0..n).map(|i| a.eval(grid.point(i)[site])).collect();
    let c = DMatrix::from_fn(n, n, |y, z| (a_diag[y] - a_diag[z]) * s.matrix[(y, z)]);
    let mut matrix = C64::default();
    for y in 0..n {
        for z in 0..n {
            matrix += p[(z, y)] * c[(y, z)];
        }
    }
    let f = SymbolTable::of_matrix(&c, grid)?;
    let symbol = f.pair_with(obs.table())? / (2.0 * std::f64::consts::PI).powi(grid.dim() as i32);
    Ok(CommutatorTrace { t: s.t, matrix, symbol, sup_symbol: f.max_abs() })
}

/// The trace over a list of times, reusing one eigendecomposition.
pub fn commutator_sweep(
    a: &Polynomial,
    site: usize,
    factors: &SpectralFactors,
    obs: &WeylObservable,
    times: &[f64],
) -> Result<Vec<CommutatorTrace>> {
    let p = op_weyl_matrix(obs)?;
    times
        .iter()
        .map(|&t| commutator_trace(a, site, &factors.semigroup(t)?, &p, obs))
        .collect()
}

/// Least-squares slope of `log|value|` against `log t`, and `C = max |value|/√t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub c_fit: f64,
    pub n_points: usize,
}

/// Fit over `(t, |value|)` pairs: at least five points spanning two decades.
pub fn scaling_fit(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 5 {
        return Err(Error::InvalidArgument(format!("scaling fit needs ≥ 5 points, got {}", points.len())));
    }
    if points.iter().any(|&(t, _)| !(t > 0.0)) {
        return Err(Error::InvalidArgument("times must be positive".into()));
    }
    let (lo, hi) = t_range(points);
    if hi / lo < 100.0 * (1.0 - 1e-12) {
        return Err(Error::InvalidArgument(format!("times span {:.3} decades, need ≥ 2", (hi / lo).log10())));
    }
    if points.iter().any(|&(_, v)| v == 0.0 || !v.is_finite()) {
        return Err(Error::Degenerate("scaling fit needs nonzero finite values".into()));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|&(t, _)| t.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, v)| v.abs().ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(ScalingFit { slope: sxy / sxx, c_fit: c_over_sqrt_t(points), n_points: points.len() })
}

fn t_range(points: &[(f64, f64)]) -> (f64, f64) {
    points.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &(t, _)| (lo.min(t), hi.max(t)))
}

fn c_over_sqrt_t(points: &[(f64, f64)]) -> f64 {
    points.iter().map(|&(t, v)| v.abs() / t.sqrt()).fold(0.0, f64::max)
}

/// `C = max |value|/√t` refitted on the lower and upper halves of the
/// log-time range, split at `√(t_min t_max)` (the midpoint belongs to both).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfRangeRefit {
    pub c_full: f64,
    pub c_lower: f64,
    pub c_upper: f64,
    /// `max(|c_lower - c_full|, |c_upper - c_full|) / c_full`.
    pub max_relative_change: f64,
}

pub fn half_range_refit(points: &[(f64, f64)]) -> Result<HalfRangeRefit> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("no points to refit".into()));
    }
    let (lo, hi) = t_range(points);
    let mid = (lo * hi).sqrt();
    let tol = 1e-12 * mid;
    let lower: Vec<_> = points.iter().copied().filter(|&(t, _)| t <= mid + tol).collect();
    let upper: Vec<_> = points.iter().copied().filter(|&(t, _)| t >= mid - tol).collect();
    let c_full = c_over_sqrt_t(points);
    if c_full == 0.0 {
        return Err(Error::Degenerate("all values are zero".into()));
    }
    let c_lower = c_over_sqrt_t(&lower);
    let c_upper = c_over_sqrt_t(&upper);
    let max_relative_change = ((c_lower - c_full).abs()).max((c_upper - c_full).abs()) / c_full;
    Ok(HalfRangeRefit { c_full, c_lower, c_upper, max_relative_change })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{build_hamiltonian, semigroup};
    use crate::potentials::{PotentialSpec, ScalarFunction};

    fn harmonic() -> PotentialSpec<f64> {
        PotentialSpec::on_site(ScalarFunction::Quadratic { coef: 1.0 })
    }

    fn grid() -> Grid {
        Grid::new(10.0, 256, 1).unwrap().with_roi(6.0).unwrap()
    }

    #[test]
    fn gaussian_symbol_normalization() {
        let g = grid();
        let p = gaussian_state_symbol(&g, &[0.5], &[1.0], 0.6, 0.8).unwrap();
        assert!((p.trace() - 1.0).abs() < 1e-12);
        assert!(p.table().values().iter().all(|v| v.re >= 0.0 && v.im == 0.0));
        // peak = c, and c·2π w_x w_ξ/(2π) = 1 for a fully resolved Gaussian
        assert!((p.normalization() * 0.6 * 0.8 - 1.0).abs() < 1e-8);
        let narrow = gaussian_state_symbol(&g, &[0.5], &[1.0], 0.3, 0.8).unwrap();
        assert!((narrow.normalization() / p.normalization() - 2.0).abs() < 1e-8);
        assert!(matches!(gaussian_state_symbol(&g, &[5.5], &[0.0], 0.6, 0.8), Err(Error::SupportViolation(_))));
        assert!(gaussian_state_symbol(&g, &[0.0], &[0.0], 0.0, 1.0).is_err());
    }

    #[test]
    fn op_weyl_is_hermitian_with_unit_trace() {
        let g = grid();
        let p = gaussian_state_symbol(&g, &[0.5], &[1.0], 0.6, 0.8).unwrap();
        let m = op_weyl_matrix(&p).unwrap();
        assert!((&m - m.adjoint()).camax() <= 1e-10);
        let tr: C64 = m.diagonal().iter().sum();
        assert!((tr.re - 1.0).abs() < 1e-8 && tr.im.abs() < 1e-10, "{tr}");
    }

    #[test]
    fn constant_symbol_is_rejected_and_flat_symbol_acts_as_identity() {
        let g = Grid::new(8.0, 256, 1).unwrap().with_roi(8.0).unwrap();
        let one = WeylObservable { table: SymbolTable::from_fn(&g, |_, _| C64::new(1.0, 0.0)), normalization: 1.0 };
        assert!(matches!(op_weyl_matrix(&one), Err(Error::InsufficientDecay { .. })));
        // p = exp(-ξ²/2w²) is a Fourier multiplier: ⟨Pf, f⟩ = (1 + s²/w²)^{-1/2}
        // for a Gaussian state whose momentum variance is s² = 1/(2 width²)
        let w = 3.0;
        let flat = WeylObservable {
            table: SymbolTable::from_fn(&g, |_, k| C64::new((-k[0] * k[0] / (2.0 * w * w)).exp(), 0.0)),
            normalization: 1.0,
        };
        let p = op_weyl_matrix(&flat).unwrap();
        let f = crate::oracle::gaussian_state(&g, &[0.0], &[0.0], 1.0);
        let pf: Vec<C64> = (0..g.size()).map(|y| (0..g.size()).map(|z| p[(y, z)] * f[z]).sum()).collect();
        let got = crate::oracle::inner(&pf, &f, &g);
        let exact = (1.0 + 0.5 / (w * w)).powf(-0.5);
        assert!((got.re - exact).abs() < 1e-8 && got.im.abs() < 1e-12, "{got} vs {exact}");
    }

    #[test]
    fn routes_agree_and_trace_is_imaginary() {
        let g = grid();
        let h = build_hamiltonian(&harmonic(), &g).unwrap();
        let factors = SpectralFactors::new(&h, &g).unwrap();
        let obs = gaussian_state_symbol(&g, &[0.5], &[3.0], 0.5, 0.5).unwrap();
        let a = Polynomial::new(vec![0.0, 1.0]).unwrap();
        for r in commutator_sweep(&a, 0, &factors, &obs, &[0.01, 0.1, 1.0]).unwrap() {
            assert!(r.route_mismatch() < 1e-6, "{r:?}");
            assert!(r.matrix.re.abs() <= 1e-10, "{r:?}");
            assert!(r.matrix.im.abs() > 1e-6);
        }
    }

    #[test]
    fn parity_kills_the_trace() {
        let g = Grid::new(10.0, 256, 1).unwrap().with_roi(5.0).unwrap();
        let s = semigroup(&build_hamiltonian(&PotentialSpec::zero(1), &g).unwrap(), &g, 0.3).unwrap();
        let obs = gaussian_state_symbol(&g, &[0.0], &[0.0], 0.5, 0.7).unwrap();
        let p = op_weyl_matrix(&obs).unwrap();
        let r = commutator_trace(&Polynomial::new(vec![0.0, 1.0]).unwrap(), 0, &s, &p, &obs).unwrap();
        assert!(r.matrix.norm() < 1e-8 && r.symbol.norm() < 1e-8, "{r:?}");
    }

    #[test]
    fn small_time_trace_vanishes() {
        let g = grid();
        let h = build_hamiltonian(&harmonic(), &g).unwrap();
        let factors = SpectralFactors::new(&h, &g).unwrap();
        let obs = gaussian_state_symbol(&g, &[0.5], &[3.0], 0.5, 0.5).unwrap();
        let a = Polynomial::new(vec![0.0, 1.0]).unwrap();
        let times = [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0];
        let sweep = commutator_sweep(&a, 0, &factors, &obs, &times).unwrap();
        let pts: Vec<_> = sweep.iter().map(|r| (r.t, r.magnitude())).collect();
        let fit = scaling_fit(&pts).unwrap();
        let tiny = commutator_sweep(&a, 0, &factors, &obs, &[1e-4]).unwrap()[0].magnitude();
        assert!(tiny <= 0.1 * 1e-2 * fit.c_fit, "{tiny} vs C = {}", fit.c_fit);
    }

    #[test]
    fn harmonic_run_slope() {
        let g = Grid::new(14.0, 512, 1).unwrap().with_roi(8.4).unwrap();
        let h = build_hamiltonian(&harmonic(), &g).unwrap();
        let factors = SpectralFactors::new(&h, &g).unwrap();
        let obs = gaussian_state_symbol(&g, &[0.5], &[1.0], 1.0, 1.0).unwrap();
        let a = Polynomial::new(vec![0.0, 1.0]).unwrap();
        let times = [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0];
        let pts: Vec<_> = commutator_sweep(&a, 0, &factors, &obs, &times)
            .unwrap()
            .iter()
            .map(|r| (r.t, r.magnitude()))
            .collect();
        let fit = scaling_fit(&pts).unwrap();
        assert!(fit.slope >= 0.4 && fit.c_fit.is_finite(), "{fit:?}");
        assert!(pts.iter().all(|&(t, v)| v <= fit.c_fit * t.sqrt()));
    }

    #[test]
    fn fit_self_tests() {
        let times = [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0];
        let sqrt: Vec<_> = times.iter().map(|&t: &f64| (t, 2.0 * t.sqrt())).collect();
        let fit = scaling_fit(&sqrt).unwrap();
        assert!((fit.slope - 0.5).abs() < 1e-12);
        assert!((fit.c_fit - 2.0).abs() < 1e-12);
        let refit = half_range_refit(&sqrt).unwrap();
        assert!(refit.max_relative_change < 1e-12);
        let lin: Vec<_> = times.iter().map(|&t| (t, 3.0 * t)).collect();
        assert!((scaling_fit(&lin).unwrap().slope - 1.0).abs() < 1e-12);
        assert!(scaling_fit(&lin[..4]).is_err());
        assert!(scaling_fit(&lin[2..]).is_err());
        let zeros: Vec<_> = times.iter().map(|&t| (t, 0.0)).collect();
        assert!(matches!(scaling_fit(&zeros), Err(Error::Degenerate(_))));
        assert!(matches!(half_range_refit(&zeros), Err(Error::Degenerate(_))));
    }

    #[test]
    fn polynomial_validation() {
        assert!(Polynomial::new(vec![]).is_err());
        assert!(Polynomial::new(vec![1.0; 6]).is_err());
        assert_eq!(Polynomial::new(vec![1.0, 0.0, 2.0]).unwrap().eval(3.0), 19.0);
    }
}
