//! Low-dimensional ground truth: `e^{-tH}` on a grid and its Weyl symbol.
//!
//! The grid has `n_grid - 1` interior nodes per axis at `-L + iΔx`,
//! `Δx = 2L/n_grid`, with Dirichlet conditions at `±L`. A matrix `M` acting on
//! grid functions has kernel `K(y, z) = M_{yz}/Δx^dim`, and its Weyl symbol
//!
//! ```text
//! u(x, ξ) = ∫ K(x + v/2, x - v/2) e^{-i v·ξ} dv
//! ```
//!
//! is sampled at every midpoint `x = (y + z)/2`, i.e. on the half-step grid,
//! and at `ξ_q = q·π/(2L)`, `q ∈ [-n/2, n/2)`. With this choice the discrete
//! pairing `∬ u·H(f, g)` reproduces `⟨Mf, g⟩` exactly.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::potentials::PotentialSpec;
use crate::scalar::Real;

type C64 = Complex<f64>;

/// Default bound on kernel magnitudes reaching the boundary.
pub const DEFAULT_DECAY_LIMIT: f64 = 1e-12;

/// Uniform Dirichlet grid on `[-L, L]^dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    half_width: f64,
    n_grid: usize,
    dim: usize,
    roi: f64,
    decay_limit: f64,
}

impl Grid {
    /// `n_grid` must be a power of two ≥ 16; `dim ∈ {1, 2}`. The region of
    /// interest defaults to `|x_a| ≤ L/2`.
    pub fn new(half_width: f64, n_grid: usize, dim: usize) -> Result<Self> {
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::InvalidArgument("grid half width must be positive".into()));
        }
        if n_grid < 16 || !n_grid.is_power_of_two() {
            return Err(Error::InvalidArgument(format!("n_grid must be a power of two ≥ 16, got {n_grid}")));
        }
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidArgument(format!("oracle supports dimension 1 or 2, got {dim}")));
        }
        Ok(Self { half_width, n_grid, dim, roi: half_width / 2.0, decay_limit: DEFAULT_DECAY_LIMIT })
    }

    /// Half width of the region of interest where symbol values are reported.
    pub fn with_roi(mut self, roi: f64) -> Result<Self> {
        if !(roi > 0.0) || roi > self.half_width {
            return Err(Error::InvalidArgument(format!("region of interest {roi} outside (0, L]")));
        }
        self.roi = roi;
        Ok(self)
    }

    pub fn with_decay_limit(mut self, limit: f64) -> Self {
        self.decay_limit = limit;
        self
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn n_grid(&self) -> usize {
        self.n_grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn roi(&self) -> f64 {
        self.roi
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.n_grid as f64
    }

    pub fn dxi(&self) -> f64 {
        std::f64::consts::PI / (2.0 * self.half_width)
    }

    /// Interior nodes per axis.
    pub fn nodes_per_axis(&self) -> usize {
        self.n_grid - 1
    }

    /// Number of grid points (matrix size).
    pub fn size(&self) -> usize {
        self.nodes_per_axis().pow(self.dim as u32)
    }

    /// Coordinate of interior node `i ∈ 0..n_grid-1`.
    pub fn node(&self, i: usize) -> f64 {
        -self.half_width + (i + 1) as f64 * self.dx()
    }

    /// Per-axis node indices of flat point `idx` (axis 0 slowest).
    pub fn unflatten(&self, mut idx: usize) -> Vec<usize> {
        let m = self.nodes_per_axis();
        let mut out = vec![0; self.dim];
        for a in (0..self.dim).rev() {
            out[a] = idx % m;
            idx /= m;
        }
        out
    }

    pub fn flatten(&self, multi: &[usize]) -> usize {
        let m = self.nodes_per_axis();
        multi.iter().fold(0, |acc, &i| acc * m + i)
    }

    /// Coordinates of flat point `idx`.
    pub fn point(&self, idx: usize) -> Vec<f64> {
        self.unflatten(idx).into_iter().map(|i| self.node(i)).collect()
    }

    /// Coordinate of half-step index `s ∈ 0..=2n_grid-4` (midpoint of nodes `y + z = s`).
    pub fn half_node(&self, s: usize) -> f64 {
        -self.half_width + (s + 2) as f64 * self.dx() / 2.0
    }

    pub fn half_nodes(&self) -> usize {
        2 * self.n_grid - 3
    }

    /// Sorted frequency axis.
    pub fn xi_axis(&self) -> Vec<f64> {
        let n = self.n_grid as i64;
        (-n / 2..n / 2).map(|q| q as f64 * self.dxi()).collect()
    }

    fn fft_index(&self, sorted: usize) -> usize {
        (sorted + self.n_grid / 2) % self.n_grid
    }
}

/// Second-order Dirichlet discretization of `-Δ + V` (dense, symmetric).
pub fn build_hamiltonian(v: &PotentialSpec<f64>, grid: &Grid) -> Result<DMatrix<f64>> {
    if v.n_sites() != grid.dim() {
        return Err(Error::DimensionMismatch { expected: grid.dim(), got: v.n_sites() });
    }
    let size = grid.size();
    let m = grid.nodes_per_axis();
    let inv_dx2 = 1.0 / (grid.dx() * grid.dx());
    let mut h = DMatrix::zeros(size, size);
    for idx in 0..size {
        let multi = grid.unflatten(idx);
        h[(idx, idx)] = 2.0 * grid.dim() as f64 * inv_dx2 + v.eval(&grid.point(idx))?;
        for a in 0..grid.dim() {
            if multi[a] + 1 < m {
                let mut nb = multi.clone();
                nb[a] += 1;
                let j = grid.flatten(&nb);
                h[(idx, j)] = -inv_dx2;
                h[(j, idx)] = -inv_dx2;
            }
        }
    }
    Ok(h)
}

fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0f64;
    for i in 0..n {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Cached eigendecomposition `H = Q Λ Qᵀ`, reused for every `t`.
#[derive(Clone, Debug)]
pub struct SpectralFactors {
    grid: Grid,
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
}

impl SpectralFactors {
    pub fn new(h: &DMatrix<f64>, grid: &Grid) -> Result<Self> {
        if h.nrows() != grid.size() || h.ncols() != grid.size() {
            return Err(Error::DimensionMismatch { expected: grid.size(), got: h.nrows() });
        }
        let asym = asymmetry(h);
        if asym > 1e-12 * h.amax().max(1.0) {
            return Err(Error::NotSymmetric(asym));
        }
        let eig = SymmetricEigen::new(h.clone());
        Ok(Self {
            grid: grid.clone(),
            eigenvalues: eig.eigenvalues.iter().copied().collect(),
            eigenvectors: eig.eigenvectors,
        })
    }

    /// Eigenvalues of `H` in increasing order.
    pub fn spectrum(&self) -> Vec<f64> {
        let mut s = self.eigenvalues.clone();
        s.sort_by(f64::total_cmp);
        s
    }

    pub fn semigroup(&self, t: f64) -> Result<GridSemigroup> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::InvalidArgument("t must be positive".into()));
        }
        let decay: Vec<f64> = self.eigenvalues.iter().map(|&l| (-t * l).exp()).collect();
        let mut scaled = self.eigenvectors.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= decay[j];
        }
        let matrix = &scaled * self.eigenvectors.transpose();
        Ok(GridSemigroup { grid: self.grid.clone(), t, matrix, eigenvalues: decay })
    }
}

/// Dense `e^{-tH}` on a grid.
#[derive(Clone, Debug)]
pub struct GridSemigroup {
    pub grid: Grid,
    pub t: f64,
    pub matrix: DMatrix<f64>,
    /// Eigenvalues of `e^{-tH}` (unsorted, matching the cached basis).
    pub eigenvalues: Vec<f64>,
}

/// `e^{-tH}` for a symmetric `H`.
pub fn semigroup(h: &DMatrix<f64>, grid: &Grid, t: f64) -> Result<GridSemigroup> {
    SpectralFactors::new(h, grid)?.semigroup(t)
}

/// Symbol samples on the half-step grid (rows inside the region of interest)
/// times the full frequency grid.
#[derive(Clone, Debug)]
pub struct SymbolTable {
    grid: Grid,
    /// Half-step indices kept per axis.
    rows: Vec<usize>,
    /// `values[row_flat * n^dim + xi_flat]`, frequencies in sorted order.
    values: Vec<C64>,
    /// Antidiagonal samples `2^dim M_{yz}` per row, frequency index in FFT order.
    coeffs: Vec<C64>,
}

struct AxisPair {
    k: usize,
    y: usize,
    z: usize,
}

/// For half-step index `s`, all node pairs `(y, z)` with `y + z = s`.
fn axis_pairs(grid: &Grid, s: usize) -> Vec<AxisPair> {
    let n = grid.n_grid();
    let last = grid.nodes_per_axis() - 1;
    let p = s % 2;
    let reach = s.min(2 * last - s) as i64;
    let mut out = Vec::new();
    let mut d = -reach;
    while d <= reach {
        let y = ((s as i64 + d) / 2) as usize;
        let z = ((s as i64 - d) / 2) as usize;
        let k = (d - p as i64).div_euclid(2).rem_euclid(n as i64) as usize;
        out.push(AxisPair { k, y, z });
        d += 2;
    }
    out
}

/// Cartesian product over axes of `(k_flat, y_flat, z_flat, touches_boundary)`.
fn product_pairs(grid: &Grid, per_axis: &[Vec<AxisPair>]) -> Vec<(usize, usize, usize, bool)> {
    let n = grid.n_grid();
    let m = grid.nodes_per_axis();
    let mut acc = vec![(0usize, 0usize, 0usize, false)];
    for pairs in per_axis {
        let mut next = Vec::with_capacity(acc.len() * pairs.len());
        for &(k, y, z, b) in &acc {
            for p in pairs {
                let edge = p.y == 0 || p.z == 0 || p.y == m - 1 || p.z == m - 1;
                next.push((k * n + p.k, y * m + p.y, z * m + p.z, b || edge));
            }
        }
        acc = next;
    }
    acc
}

struct NdFft {
    n: usize,
    dim: usize,
    plan: Arc<dyn Fft<f64>>,
}

impl NdFft {
    fn new(n: usize, dim: usize, forward: bool) -> Self {
        let mut planner = FftPlanner::new();
        let plan = if forward { planner.plan_fft_forward(n) } else { planner.plan_fft_inverse(n) };
        Self { n, dim, plan }
    }

    fn process(&self, buf: &mut [C64]) {
        let n = self.n;
        match self.dim {
            1 => self.plan.process(buf),
            _ => {
                // rows (last axis contiguous), then columns
                for row in buf.chunks_mut(n) {
                    self.plan.process(row);
                }
                let mut col = vec![C64::default(); n];
                for c in 0..n {
                    for r in 0..n {
                        col[r] = buf[r * n + c];
                    }
                    self.plan.process(&mut col);
                    for r in 0..n {
                        buf[r * n + c] = col[r];
                    }
                }
            }
        }
    }
}

/// Iterates the multi-indices of `extent^dim`, axis 0 slowest.
fn multi_indices(extent: usize, dim: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..extent.pow(dim as u32)).map(move |mut i| {
        let mut out = vec![0; dim];
        for a in (0..dim).rev() {
            out[a] = i % extent;
            i /= extent;
        }
        out
    })
}

impl SymbolTable {
    fn kept_rows(grid: &Grid) -> Vec<usize> {
        (0..grid.half_nodes())
            .filter(|&s| grid.half_node(s).abs() <= grid.roi() + 1e-12)
            .collect()
    }

    /// Weyl symbol of an arbitrary real grid operator.
    pub fn of_matrix(m: &DMatrix<f64>, grid: &Grid) -> Result<Self> {
        Self::of_complex_matrix(&m.map(|v| C64::new(v, 0.0)), grid)
    }

    pub fn of_complex_matrix(m: &DMatrix<C64>, grid: &Grid) -> Result<Self> {
        if m.nrows() != grid.size() || m.ncols() != grid.size() {
            return Err(Error::DimensionMismatch { expected: grid.size(), got: m.nrows() });
        }
        let dim = grid.dim();
        let n = grid.n_grid();
        let nd = n.pow(dim as u32);
        let rows = Self::kept_rows(grid);
        let n_rows = rows.len().pow(dim as u32);
        let fft = NdFft::new(n, dim, true);
        let scale = 2f64.powi(dim as i32);
        let kernel_scale = grid.dx().powi(-(dim as i32));
        let xi = grid.xi_axis();
        let dx = grid.dx();

        let mut values = vec![C64::default(); n_rows * nd];
        let mut coeffs = vec![C64::default(); n_rows * nd];
        let mut worst_edge = 0f64;
        for (row_flat, row) in multi_indices(rows.len(), dim).enumerate() {
            let s: Vec<usize> = row.iter().map(|&r| rows[r]).collect();
            let per_axis: Vec<Vec<AxisPair>> = s.iter().map(|&sa| axis_pairs(grid, sa)).collect();
            let buf = &mut coeffs[row_flat * nd..(row_flat + 1) * nd];
            for (k, y, z, edge) in product_pairs(grid, &per_axis) {
                let entry = m[(y, z)];
                if edge {
                    worst_edge = worst_edge.max(entry.norm() * kernel_scale);
                }
                buf[k] = entry * scale;
            }
            let mut spectrum = buf.to_vec();
            fft.process(&mut spectrum);
            let out = &mut values[row_flat * nd..(row_flat + 1) * nd];
            for (j, q) in multi_indices(n, dim).enumerate() {
                let fidx = q.iter().fold(0, |acc, &qa| acc * n + grid.fft_index(qa));
                let phase: f64 = q.iter().zip(&s).map(|(&qa, &sa)| (sa % 2) as f64 * dx * xi[qa]).sum();
                out[j] = spectrum[fidx] * C64::from_polar(1.0, -phase);
            }
        }
        if worst_edge > grid.decay_limit {
            return Err(Error::InsufficientDecay {
                what: "kernel at grid boundary",
                value: worst_edge,
                limit: grid.decay_limit,
            });
        }
        Ok(Self { grid: grid.clone(), rows, values, coeffs })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Kept half-step coordinates (same on every axis).
    pub fn x_axis(&self) -> Vec<f64> {
        self.rows.iter().map(|&s| self.grid.half_node(s)).collect()
    }

    pub fn xi_axis(&self) -> Vec<f64> {
        self.grid.xi_axis()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len().pow(self.grid.dim() as u32)
    }

    pub fn n_xi(&self) -> usize {
        self.grid.n_grid().pow(self.grid.dim() as u32)
    }

    /// Symbol at row multi-index and sorted frequency multi-index.
    pub fn value(&self, row: &[usize], xi: &[usize]) -> C64 {
        let r = row.iter().fold(0, |acc, &i| acc * self.rows.len() + i);
        let q = xi.iter().fold(0, |acc, &i| acc * self.grid.n_grid() + i);
        self.values[r * self.n_xi() + q]
    }

    /// All samples, `[row_flat][xi_flat]`.
    pub fn values(&self) -> &[C64] {
        &self.values
    }

    /// Iterates `(x, ξ, u)` over the table.
    pub fn entries(&self) -> impl Iterator<Item = (Vec<f64>, Vec<f64>, C64)> + '_ {
        let xs = self.x_axis();
        let xis = self.xi_axis();
        let dim = self.grid.dim();
        let n_xi = self.n_xi();
        multi_indices(self.rows.len(), dim).enumerate().flat_map(move |(ri, row)| {
            let x: Vec<f64> = row.iter().map(|&r| xs[r]).collect();
            let xis = xis.clone();
            multi_indices(self.grid.n_grid(), dim).enumerate().map(move |(qi, q)| {
                (x.clone(), q.iter().map(|&i| xis[i]).collect(), self.values[ri * n_xi + qi])
            })
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_im(&self) -> f64 {
        self.values.iter().map(|v| v.im.abs()).fold(0.0, f64::max)
    }

    /// `(2π)^{-dim} ∬ u dx dξ` by grid quadrature.
    pub fn phase_space_integral(&self) -> C64 {
        let w = self.cell() / (2.0 * std::f64::consts::PI).powi(self.grid.dim() as i32);
        self.values.iter().sum::<C64>() * w
    }

    /// Phase-space cell `(Δx/2)^dim Δξ^dim`.
    pub fn cell(&self) -> f64 {
        (self.grid.dx() / 2.0 * self.grid.dxi()).powi(self.grid.dim() as i32)
    }

    /// `∫ |u(x, ξ)| dx` over the kept rows, one value per frequency sample.
    pub fn x_integral_abs(&self) -> Vec<f64> {
        let n_xi = self.n_xi();
        let w = (self.grid.dx() / 2.0).powi(self.grid.dim() as i32);
        (0..n_xi)
            .map(|q| (0..self.n_rows()).map(|r| self.values[r * n_xi + q].norm()).sum::<f64>() * w)
            .collect()
    }

    /// Samples `f(x, ξ)` on the symbol grid of `grid`.
    pub fn from_fn(grid: &Grid, mut f: impl FnMut(&[f64], &[f64]) -> C64) -> Self {
        let dim = grid.dim();
        let n = grid.n_grid();
        let nd = n.pow(dim as u32);
        let rows = Self::kept_rows(grid);
        let xi = grid.xi_axis();
        let ifft = NdFft::new(n, dim, false);
        let dx = grid.dx();
        let mut values = Vec::with_capacity(rows.len().pow(dim as u32) * nd);
        let mut coeffs = Vec::with_capacity(values.capacity());
        for row in multi_indices(rows.len(), dim) {
            let s: Vec<usize> = row.iter().map(|&r| rows[r]).collect();
            let x: Vec<f64> = s.iter().map(|&sa| grid.half_node(sa)).collect();
            let mut buf = vec![C64::default(); nd];
            for q in multi_indices(n, dim) {
                let k: Vec<f64> = q.iter().map(|&qa| xi[qa]).collect();
                let v = f(&x, &k);
                values.push(v);
                let fidx = q.iter().fold(0, |acc, &qa| acc * n + grid.fft_index(qa));
                let phase: f64 = k.iter().zip(&s).map(|(&ka, &sa)| (sa % 2) as f64 * dx * ka).sum();
                buf[fidx] = v * C64::from_polar(1.0 / nd as f64, phase);
            }
            ifft.process(&mut buf);
            coeffs.extend(buf);
        }
        Self { grid: grid.clone(), rows, values, coeffs }
    }

    /// Largest `|u|` on the outermost frequencies relative to the table maximum.
    pub fn frequency_edge_ratio(&self) -> f64 {
        let n = self.grid.n_grid();
        let n_xi = self.n_xi();
        let mut edge = 0f64;
        for r in 0..self.n_rows() {
            for (qi, q) in multi_indices(n, self.grid.dim()).enumerate() {
                if q.iter().any(|&qa| qa == 0 || qa == n - 1) {
                    edge = edge.max(self.values[r * n_xi + qi].norm());
                }
            }
        }
        edge / self.max_abs().max(f64::MIN_POSITIVE)
    }

    /// Weyl quantization on the grid: the matrix whose symbol table is `self`
    /// (pairs with midpoints outside the region of interest are zero).
    pub fn quantize(&self) -> DMatrix<C64> {
        let grid = &self.grid;
        let dim = grid.dim();
        let nd = self.n_xi();
        let size = grid.size();
        let scale = 0.5f64.powi(dim as i32);
        let mut m = DMatrix::zeros(size, size);
        for (row_flat, row) in multi_indices(self.rows.len(), dim).enumerate() {
            let per_axis: Vec<Vec<AxisPair>> = row.iter().map(|&r| axis_pairs(grid, self.rows[r])).collect();
            let c = &self.coeffs[row_flat * nd..(row_flat + 1) * nd];
            for (k, y, z, _) in product_pairs(grid, &per_axis) {
                m[(y, z)] = c[k] * scale;
            }
        }
        m
    }

    /// `∫ |u(x, ξ)| dx` over the kept rows at an arbitrary frequency.
    pub fn x_integral_abs_at(&self, xi: &[f64]) -> Result<f64> {
        let dim = self.grid.dim();
        if xi.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: xi.len() });
        }
        let w = (self.grid.dx() / 2.0).powi(dim as i32);
        Ok(multi_indices(self.rows.len(), dim).map(|row| self.trig_value(&row, xi).norm()).sum::<f64>() * w)
    }

    /// Largest `|u|` on the outermost kept rows relative to the table maximum.
    pub fn edge_ratio(&self) -> f64 {
        let last = self.rows.len() - 1;
        let n_xi = self.n_xi();
        let edge = multi_indices(self.rows.len(), self.grid.dim())
            .enumerate()
            .filter(|(_, row)| row.iter().any(|&r| r == 0 || r == last))
            .flat_map(|(ri, _)| self.values[ri * n_xi..(ri + 1) * n_xi].iter().map(|v| v.norm()))
            .fold(0.0, f64::max);
        edge / self.max_abs().max(f64::MIN_POSITIVE)
    }

    /// `∬ u·other dx dξ` (no `2π` factors).
    pub fn pair_with(&self, other: &SymbolTable) -> Result<C64> {
        if self.grid != other.grid || self.rows != other.rows {
            return Err(Error::InvalidArgument("tables live on different grids".into()));
        }
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<C64>() * self.cell())
    }

    /// Symbol at an arbitrary frequency (exact trigonometric interpolation) and
    /// a position that is a half-step node or lies between kept nodes
    /// (multilinear interpolation).
    pub fn value_at(&self, x: &[f64], xi: &[f64]) -> Result<C64> {
        let dim = self.grid.dim();
        if x.len() != dim || xi.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: x.len().min(xi.len()) });
        }
        let h = self.grid.dx() / 2.0;
        let first = self.grid.half_node(self.rows[0]);
        let mut corners: Vec<(Vec<usize>, f64)> = vec![(Vec::new(), 1.0)];
        for &xa in x {
            let pos = (xa - first) / h;
            let base = pos.floor();
            let frac = pos - base;
            if base < 0.0 || pos > (self.rows.len() - 1) as f64 + 1e-9 {
                return Err(Error::InvalidArgument(format!("x = {xa} outside the symbol table")));
            }
            let base = base as usize;
            let taps: Vec<(usize, f64)> = if frac < 1e-9 || base + 1 >= self.rows.len() {
                vec![(base.min(self.rows.len() - 1), 1.0)]
            } else if frac > 1.0 - 1e-9 {
                vec![(base + 1, 1.0)]
            } else {
                vec![(base, 1.0 - frac), (base + 1, frac)]
            };
            corners = corners
                .into_iter()
                .flat_map(|(idx, w)| {
                    taps.iter().map(move |&(r, tw)| {
                        let mut i = idx.clone();
                        i.push(r);
                        (i, w * tw)
                    })
                })
                .collect();
        }
        Ok(corners.iter().map(|(row, w)| self.trig_value(row, xi) * *w).sum())
    }

    fn trig_value(&self, row: &[usize], xi: &[f64]) -> C64 {
        let n = self.grid.n_grid();
        let nd = self.n_xi();
        let dx = self.grid.dx();
        let r = row.iter().fold(0, |acc, &i| acc * self.rows.len() + i);
        let coeffs = &self.coeffs[r * nd..(r + 1) * nd];
        let parity: Vec<i64> = row.iter().map(|&i| (self.rows[i] % 2) as i64).collect();
        let mut total = C64::default();
        for (kf, k) in multi_indices(n, self.grid.dim()).enumerate() {
            let c = coeffs[kf];
            if c == C64::default() {
                continue;
            }
            let arg: f64 = k
                .iter()
                .zip(&parity)
                .zip(xi)
                .map(|((&ka, &p), &xa)| {
                    let signed = if ka < n / 2 { ka as i64 } else { ka as i64 - n as i64 };
                    (2 * signed + p) as f64 * dx * xa
                })
                .sum();
            total += c * C64::from_polar(1.0, -arg);
        }
        total
    }
}

/// Weyl symbol of the semigroup kernel, with the boundary-decay check.
pub fn weyl_symbol_from_kernel(s: &GridSemigroup) -> Result<SymbolTable> {
    SymbolTable::of_matrix(&s.matrix, &s.grid)
}

fn check_support(f: &[C64], grid: &Grid, name: &str) -> Result<()> {
    let max = f.iter().map(|v| v.norm()).fold(0.0, f64::max);
    for (idx, v) in f.iter().enumerate() {
        let outside = grid.point(idx).iter().any(|x| x.abs() > grid.roi() + 1e-12);
        if outside && v.norm() > 1e-12 * max.max(1e-300) {
            return Err(Error::SupportViolation(format!(
                "{name} is not supported inside the region of interest |x| ≤ {}",
                grid.roi()
            )));
        }
    }
    Ok(())
}

/// Wigner function `(2π)^{-dim} ∫ e^{iv·ξ} f(x - v/2) conj(g(x + v/2)) dv` on the symbol grid.
pub fn wigner(f: &[C64], g: &[C64], grid: &Grid) -> Result<SymbolTable> {
    for h in [f, g] {
        if h.len() != grid.size() {
            return Err(Error::DimensionMismatch { expected: grid.size(), got: h.len() });
        }
    }
    check_support(f, grid, "f")?;
    check_support(g, grid, "g")?;
    let dim = grid.dim();
    let n = grid.n_grid();
    let nd = n.pow(dim as u32);
    let rows = SymbolTable::kept_rows(grid);
    let n_rows = rows.len().pow(dim as u32);
    let ifft = NdFft::new(n, dim, false);
    let scale = (2.0 * grid.dx() / (2.0 * std::f64::consts::PI)).powi(dim as i32);
    let xi = grid.xi_axis();
    let dx = grid.dx();
    let mut values = vec![C64::default(); n_rows * nd];
    let mut coeffs = vec![C64::default(); n_rows * nd];
    for (row_flat, row) in multi_indices(rows.len(), dim).enumerate() {
        let s: Vec<usize> = row.iter().map(|&r| rows[r]).collect();
        let per_axis: Vec<Vec<AxisPair>> = s.iter().map(|&sa| axis_pairs(grid, sa)).collect();
        let mut buf = vec![C64::default(); nd];
        for (k, y, z, _) in product_pairs(grid, &per_axis) {
            buf[k] = f[z] * g[y].conj() * scale;
        }
        coeffs[row_flat * nd..(row_flat + 1) * nd].copy_from_slice(&buf);
        ifft.process(&mut buf);
        let out = &mut values[row_flat * nd..(row_flat + 1) * nd];
        for (j, q) in multi_indices(n, dim).enumerate() {
            let fidx = q.iter().fold(0, |acc, &qa| acc * n + grid.fft_index(qa));
            let phase: f64 = q.iter().zip(&s).map(|(&qa, &sa)| (sa % 2) as f64 * dx * xi[qa]).sum();
            out[j] = buf[fidx] * C64::from_polar(1.0, phase);
        }
    }
    Ok(SymbolTable { grid: grid.clone(), rows, values, coeffs })
}

/// Discrete `⟨f, g⟩ = Δx^dim Σ f conj(g)`.
pub fn inner(f: &[C64], g: &[C64], grid: &Grid) -> C64 {
    f.iter().zip(g).map(|(a, b)| a * b.conj()).sum::<C64>() * grid.dx().powi(grid.dim() as i32)
}

/// `|⟨e^{-tH} f, g⟩ - ∬ u·H(f, g)|`.
pub fn pairing_check(s: &GridSemigroup, f: &[C64], g: &[C64]) -> Result<f64> {
    let grid = &s.grid;
    let h = wigner(f, g, grid)?;
    let u = weyl_symbol_from_kernel(s)?;
    let sf: Vec<C64> = (0..grid.size())
        .map(|i| (0..grid.size()).map(|j| f[j] * s.matrix[(i, j)]).sum())
        .collect();
    let lhs = inner(&sf, g, grid);
    Ok((lhs - u.pair_with(&h)?).norm())
}

/// Normalized Gaussian `Π_a (πw²)^{-1/4} exp(-(x_a - c_a)²/(2w²) + i p_a x_a)` on the grid.
pub fn gaussian_state(grid: &Grid, center: &[f64], momentum: &[f64], width: f64) -> Vec<C64> {
    (0..grid.size())
        .map(|idx| {
            grid.point(idx)
                .iter()
                .enumerate()
                .map(|(a, &x)| {
                    let c = center.get(a).copied().unwrap_or(0.0);
                    let p = momentum.get(a).copied().unwrap_or(0.0);
                    let amp = (std::f64::consts::PI * width * width).powf(-0.25)
                        * (-(x - c).powi(2) / (2.0 * width * width)).exp();
                    C64::from_polar(amp, p * x)
                })
                .product()
        })
        .collect()
}

/// `e^{-σ² t |ξ|²/2}`, the symbol of the free semigroup.
pub fn free_symbol<F: Real>(xi: &[F], t: F, variance_scale: F) -> F {
    let norm2: F = xi.iter().map(|&k| k * k).sum();
    (-variance_scale * t * norm2 / F::lit(2.0)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::ScalarFunction;

    fn harmonic() -> PotentialSpec<f64> {
        PotentialSpec::on_site(ScalarFunction::Quadratic { coef: 1.0 })
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(8.0, 12, 1).is_err());
        assert!(Grid::new(8.0, 64, 3).is_err());
        assert!(Grid::new(-1.0, 64, 1).is_err());
        let g = Grid::new(8.0, 64, 1).unwrap();
        assert_eq!(g.size(), 63);
        assert_eq!(g.node(31), 0.0);
        assert!((g.dx() - 0.25).abs() < 1e-15);
        assert_eq!(g.half_node(62), 0.0);
        assert!(g.clone().with_roi(9.0).is_err());
    }

    #[test]
    fn hamiltonian_is_symmetric_with_dirichlet_spectrum() {
        let g = Grid::new(8.0, 256, 1).unwrap();
        let h = build_hamiltonian(&PotentialSpec::zero(1), &g).unwrap();
        assert_eq!(asymmetry(&h), 0.0);
        let spec = SpectralFactors::new(&h, &g).unwrap().spectrum();
        for k in 1..=5 {
            let exact = (std::f64::consts::PI * k as f64 / 16.0).powi(2);
            assert!((spec[k - 1] - exact).abs() < 0.01 * exact, "k={k}");
        }
    }

    #[test]
    fn harmonic_ground_state_energy() {
        let g = Grid::new(8.0, 512, 1).unwrap();
        let h = build_hamiltonian(&harmonic(), &g).unwrap();
        let e0 = SpectralFactors::new(&h, &g).unwrap().spectrum()[0];
        assert!((e0 - 1.0).abs() < 1e-3, "{e0}");
    }

    #[test]
    fn semigroup_laws() {
        let g = Grid::new(4.0, 32, 1).unwrap();
        let h = build_hamiltonian(&harmonic(), &g).unwrap();
        let f = SpectralFactors::new(&h, &g).unwrap();
        let tiny = f.semigroup(1e-6).unwrap();
        let id = DMatrix::<f64>::identity(g.size(), g.size());
        assert!((&tiny.matrix - &id).amax() <= 1e-3);
        let (a, b, ab) = (f.semigroup(0.3).unwrap(), f.semigroup(0.45).unwrap(), f.semigroup(0.75).unwrap());
        assert!((&a.matrix * &b.matrix - &ab.matrix).amax() < 1e-10);
        assert!(a.eigenvalues.iter().all(|&l| l > 0.0 && l <= 1.0 + 1e-8));
        let free = semigroup(&build_hamiltonian(&PotentialSpec::zero(1), &g).unwrap(), &g, 0.5).unwrap();
        assert!(free.eigenvalues.iter().all(|&l| l <= 1.0));
        let mut bad = h.clone();
        bad[(0, 1)] += 1.0;
        assert!(matches!(semigroup(&bad, &g, 1.0), Err(Error::NotSymmetric(_))));
        assert!(f.semigroup(0.0).is_err());
    }

    #[test]
    fn free_symbol_from_kernel_is_heat_multiplier() {
        let g = Grid::new(16.0, 1024, 1).unwrap();
        let h = build_hamiltonian(&PotentialSpec::zero(1), &g).unwrap();
        let f = SpectralFactors::new(&h, &g).unwrap();
        for t in [0.1, 0.5, 1.0] {
            let table = weyl_symbol_from_kernel(&f.semigroup(t).unwrap()).unwrap();
            assert!(table.max_abs_im() < 1e-10);
            for (x, xi, u) in table.entries() {
                if xi[0].abs() <= 2.0 && x[0].abs() <= 4.0 {
                    assert!((u.re - (-t * xi[0] * xi[0]).exp()).abs() < 1e-4, "t={t} x={x:?} ξ={xi:?}");
                }
            }
            // off-grid frequency via trigonometric interpolation
            let u = table.value_at(&[0.3], &[1.234]).unwrap();
            assert!((u.re - (-t * 1.234f64 * 1.234).exp()).abs() < 1e-4);
        }
    }

    #[test]
    fn insufficient_decay_is_an_error() {
        let g = Grid::new(4.0, 64, 1).unwrap();
        let s = semigroup(&build_hamiltonian(&PotentialSpec::zero(1), &g).unwrap(), &g, 1.0).unwrap();
        assert!(matches!(weyl_symbol_from_kernel(&s), Err(Error::InsufficientDecay { .. })));
    }

    #[test]
    fn harmonic_symbol_matches_mehler_and_trace() {
        // u = exp(-tanh(t)(x² + ξ²)) / cosh(t) for -d²/dx² + x²
        let g = Grid::new(12.0, 1024, 1).unwrap().with_roi(8.0).unwrap();
        let h = build_hamiltonian(&harmonic(), &g).unwrap();
        let s = semigroup(&h, &g, 0.5).unwrap();
        let table = weyl_symbol_from_kernel(&s).unwrap();
        let th = 0.5f64.tanh();
        for &(x, xi) in &[(0.0, 0.0), (0.5, 1.0), (-1.0, 0.5)] {
            let exact = (-th * (x * x + xi * xi)).exp() / 0.5f64.cosh();
            let u = table.value_at(&[x], &[xi]).unwrap();
            assert!((u.re - exact).abs() < 1e-4, "({x},{xi}): {} vs {exact}", u.re);
        }
        let trace: f64 = s.matrix.diagonal().sum();
        let integral = table.phase_space_integral();
        assert!((integral.re - trace).abs() < 1e-6, "{integral} vs {trace}");
        assert!(table.max_abs() <= 1.0 + 1e-8);
    }

    #[test]
    fn wigner_of_gaussian() {
        let g = Grid::new(16.0, 512, 1).unwrap();
        let f = gaussian_state(&g, &[0.5], &[1.0], 0.8);
        assert!((inner(&f, &f, &g).re - 1.0).abs() < 1e-10);
        let w = wigner(&f, &f, &g).unwrap();
        assert!(w.values().iter().all(|v| v.re >= -1e-12 && v.im.abs() < 1e-12));
        let total = w.values().iter().sum::<C64>() * w.cell();
        assert!((total.re - 1.0).abs() < 1e-6, "{total}");
        let zero = vec![C64::default(); g.size()];
        assert!(wigner(&f, &zero, &g).unwrap().values().iter().all(|v| *v == C64::default()));
        // conjugate symmetry under swapping the arguments
        let h = gaussian_state(&g, &[-0.3], &[0.0], 0.6);
        let (fh, hf) = (wigner(&f, &h, &g).unwrap(), wigner(&h, &f, &g).unwrap());
        for (a, b) in fh.values().iter().zip(hf.values()) {
            assert!((a - b.conj()).norm() < 1e-12);
        }
        let wide = gaussian_state(&g, &[7.0], &[0.0], 0.5);
        assert!(matches!(wigner(&wide, &wide, &g), Err(Error::SupportViolation(_))));
    }

    #[test]
    fn pairing_identity() {
        let g = Grid::new(16.0, 512, 1).unwrap();
        let f = gaussian_state(&g, &[0.5], &[1.0], 0.9);
        let k = gaussian_state(&g, &[-0.4], &[-0.5], 0.7);
        for (v, t) in [(PotentialSpec::zero(1), 0.5), (harmonic(), 0.5)] {
            let s = semigroup(&build_hamiltonian(&v, &g).unwrap(), &g, t).unwrap();
            let r = pairing_check(&s, &f, &k).unwrap();
            assert!(r <= 1e-6, "residual {r}");
        }
        // near t = 0 both sides approach ‖f‖²
        let s = semigroup(&build_hamiltonian(&harmonic(), &g).unwrap(), &g, 1e-3).unwrap();
        let u = weyl_symbol_from_kernel(&s).unwrap();
        let pair = u.pair_with(&wigner(&f, &f, &g).unwrap()).unwrap();
        assert!((pair.re - 1.0).abs() < 5e-3);
    }

    #[test]
    fn two_dimensional_free_symbol_is_exact_lattice_symbol() {
        // On the half-step grid the even (odd) antidiagonal sum of the lattice
        // heat kernel is e^{-tλ(ξ)} + (-)e^{-tλ(ξ + π/Δx)} per axis, with
        // λ(k) = (2 - 2cos(kΔx))/Δx².
        let g = Grid::new(8.0, 32, 2).unwrap().with_roi(2.0).unwrap().with_decay_limit(1e-6);
        let h = build_hamiltonian(&PotentialSpec::zero(2), &g).unwrap();
        let t = 0.2;
        let s = semigroup(&h, &g, t).unwrap();
        let table = weyl_symbol_from_kernel(&s).unwrap();
        let dx = g.dx();
        let lam = |k: f64| (2.0 - 2.0 * (k * dx).cos()) / (dx * dx);
        let axis = |xi: f64, odd: bool| {
            let alias = (-t * lam(xi + std::f64::consts::PI / dx)).exp();
            (-t * lam(xi)).exp() + if odd { -alias } else { alias }
        };
        for &(x1, odd) in &[(0.5, false), (0.25, true)] {
            for &(xi0, xi1) in &[(0.0, 0.0), (0.5, -1.0), (1.5, 0.7)] {
                let u = table.value_at(&[0.0, x1], &[xi0, xi1]).unwrap();
                let exact = axis(xi0, false) * axis(xi1, odd);
                assert!((u - C64::new(exact, 0.0)).norm() < 1e-6, "{u} vs {exact}");
            }
        }
        let f = gaussian_state(&g, &[0.0, 0.2], &[0.5, 0.0], 0.25);
        let pairing = pairing_check(&s, &f, &f).unwrap();
        assert!(pairing < 1e-10, "{pairing}");
    }

    #[test]
    fn quantize_inverts_symbol_extraction() {
        let g = Grid::new(6.0, 128, 1).unwrap().with_roi(6.0).unwrap().with_decay_limit(f64::INFINITY);
        let h = build_hamiltonian(&harmonic(), &g).unwrap();
        let s = semigroup(&h, &g, 0.3).unwrap();
        let table = weyl_symbol_from_kernel(&s).unwrap();
        let back = table.quantize();
        assert!((back.map(|v| v.re) - &s.matrix).amax() < 1e-13);
        assert!(back.iter().all(|v| v.im.abs() < 1e-13));
        // sampling a function reproduces it on the grid and off-grid in ξ
        let f = |x: &[f64], k: &[f64]| C64::new((-(x[0] - 0.3).powi(2) - k[0] * k[0] / 4.0).exp(), 0.0);
        let t = SymbolTable::from_fn(&g, f);
        let again = SymbolTable::of_complex_matrix(&t.quantize(), &g).unwrap();
        // exact wherever the kernel fits inside the grid
        for ((x, _, a), (_, _, b)) in t.entries().zip(again.entries()) {
            if x[0].abs() <= 3.0 {
                assert!((a - b).norm() < 1e-13, "{a} {b}");
            }
        }
        let v = t.value_at(&[0.28125], &[0.77]).unwrap();
        let exact = (-(0.28125f64 - 0.3).powi(2) - 0.77 * 0.77 / 4.0).exp();
        assert!((v.re - exact).abs() < 1e-10, "{v} vs {exact}");
        assert!(t.frequency_edge_ratio() < 1e-12);
    }

    #[test]
    fn free_symbol_examples() {
        assert_eq!(free_symbol(&[0.0], 1.0, 2.0), 1.0);
        assert!((free_symbol(&[1.0], 0.5, 2.0) - (-0.5f64).exp()).abs() < 1e-15);
        assert!((free_symbol(&[1.0], 1.0, 1.0) - (-0.5f64).exp()).abs() < 1e-15);
    }
}
