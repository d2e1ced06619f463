//! Nonnegative potential families `V_Λ` with exact partial derivatives.
//!
//! Sites of `Λ` are identified with their position `0..|Λ|` in the point
//! vector, so a [`MultiIndex`] over `Λ` uses positions as site ids.
//!
//! * nearest neighbour: `Σ_j F(x_j) + Σ_{(j,k) ∈ Λ², |j-k|_∞ = 1} G(x_j - x_k)`,
//!   both orientations of each adjacent pair counted;
//! * mean field: `|Λ|⁻¹ Σ_{(j,k) ∈ Λ²} G(x_j - x_k)`, diagonal included unless
//!   disabled.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multiindex::{factorial, MultiIndex};
use crate::scalar::Real;

/// Cramér's constant: `|He_n(y)| e^{-y²/4} ≤ K √(n!)`.
const CRAMER_K: f64 = 1.086_435;

/// Built-in one-dimensional functions used as the `F` and `G` of the examples,
/// each with closed-form derivatives and sup-norm bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
#[serde(bound(deserialize = "F: Deserialize<'de> + num_traits::One"))]
pub enum ScalarFunction<F> {
    Zero,
    Constant {
        value: F,
    },
    /// `c·y²`; unbounded, so it has no sup bounds below order 2.
    Quadratic {
        #[serde(default = "one")]
        coef: F,
    },
    /// `a·exp(-(y/w)²/2)`.
    GaussianBump {
        #[serde(default = "one")]
        amplitude: F,
        #[serde(default = "one")]
        width: F,
    },
    /// `a / (1 + (y/w)²)`.
    Lorentzian {
        #[serde(default = "one")]
        amplitude: F,
        #[serde(default = "one")]
        width: F,
    },
    /// `a·(1 + cos(k·y))`.
    Cosine {
        #[serde(default = "one")]
        amplitude: F,
        #[serde(default = "one")]
        frequency: F,
    },
    Sum {
        terms: Vec<ScalarFunction<F>>,
    },
}

fn one<F: num_traits::One>() -> F {
    F::one()
}

impl<F: Real> ScalarFunction<F> {
    /// k-th derivative at `y`.
    pub fn derivative(&self, k: u32, y: F) -> F {
        match self {
            ScalarFunction::Zero => F::zero(),
            ScalarFunction::Constant { value } => {
                if k == 0 {
                    *value
                } else {
                    F::zero()
                }
            }
            ScalarFunction::Quadratic { coef } => match k {
                0 => *coef * y * y,
                1 => F::lit(2.0) * *coef * y,
                2 => F::lit(2.0) * *coef,
                _ => F::zero(),
            },
            ScalarFunction::GaussianBump { amplitude, width } => {
                let u = y / *width;
                let he = hermite_he(k, u);
                let sign = if k.is_multiple_of(2) { F::one() } else { -F::one() };
                *amplitude * width.powi(-(k as i32)) * sign * he * (-u * u / F::lit(2.0)).exp()
            }
            ScalarFunction::Lorentzian { amplitude, width } => {
                let u = y / *width;
                let z = Complex::new(u, -F::one()).powi(-(k as i32 + 1));
                let sign = if k.is_multiple_of(2) { F::one() } else { -F::one() };
                *amplitude * width.powi(-(k as i32)) * sign * F::lit(factorial(k) as f64) * z.im
            }
            ScalarFunction::Cosine { amplitude, frequency } => {
                let phase = *frequency * y + F::from_u32(k).unwrap() * F::FRAC_PI_2();
                let base = if k == 0 { *amplitude } else { F::zero() };
                base + *amplitude * frequency.powi(k as i32) * phase.cos()
            }
            ScalarFunction::Sum { terms } => terms.iter().map(|f| f.derivative(k, y)).sum(),
        }
    }

    pub fn value(&self, y: F) -> F {
        self.derivative(0, y)
    }

    /// Certified `sup_y |f^{(k)}(y)|`, or `None` when unbounded.
    pub fn sup_bound(&self, k: u32) -> Option<F> {
        match self {
            ScalarFunction::Zero => Some(F::zero()),
            ScalarFunction::Constant { value } => Some(if k == 0 { value.abs() } else { F::zero() }),
            ScalarFunction::Quadratic { coef } => match k {
                0 | 1 if *coef != F::zero() => None,
                0 | 1 => Some(F::zero()),
                2 => Some(F::lit(2.0) * coef.abs()),
                _ => Some(F::zero()),
            },
            ScalarFunction::GaussianBump { amplitude, width } => Some(
                amplitude.abs()
                    * width.powi(-(k as i32))
                    * F::lit(CRAMER_K * (factorial(k) as f64).sqrt()),
            ),
            ScalarFunction::Lorentzian { amplitude, width } => {
                Some(amplitude.abs() * width.powi(-(k as i32)) * F::lit(factorial(k) as f64))
            }
            ScalarFunction::Cosine { amplitude, frequency } => Some(if k == 0 {
                F::lit(2.0) * amplitude.abs()
            } else {
                amplitude.abs() * frequency.abs().powi(k as i32)
            }),
            ScalarFunction::Sum { terms } => terms.iter().map(|f| f.sup_bound(k)).sum(),
        }
    }

    /// `max_{lo ≤ k ≤ hi} sup|f^{(k)}|`.
    pub fn max_sup_bound(&self, lo: u32, hi: u32) -> Result<F> {
        (lo..=hi).try_fold(F::zero(), |acc, k| {
            self.sup_bound(k).map(|b| acc.max(b)).ok_or(Error::MissingSupBound(k))
        })
    }
}

/// Probabilists' Hermite polynomial `He_k(u)`.
fn hermite_he<F: Real>(k: u32, u: F) -> F {
    let (mut prev, mut cur) = (F::one(), u);
    if k == 0 {
        return prev;
    }
    for n in 1..k {
        let next = u * cur - F::from_u32(n).unwrap() * prev;
        prev = cur;
        cur = next;
    }
    cur
}

type PartialFn<F> = Arc<dyn Fn(&MultiIndex, &[F]) -> F + Send + Sync>;

/// User-supplied potential: `(α, x) ↦ ∂^α V(x)`, valid up to `max_order`.
#[derive(Clone)]
pub struct CustomPotential<F> {
    pub name: String,
    pub max_order: u32,
    func: PartialFn<F>,
}

impl<F> fmt::Debug for CustomPotential<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomPotential")
            .field("name", &self.name)
            .field("max_order", &self.max_order)
            .finish()
    }
}

#[derive(Clone, Debug)]
pub struct NearestNeighbor<F> {
    pub dim: usize,
    pub coords: Vec<Vec<i64>>,
    pub f: ScalarFunction<F>,
    pub g: ScalarFunction<F>,
    neighbors: Vec<Vec<usize>>,
}

#[derive(Clone, Debug)]
pub struct MeanField<F> {
    pub g: ScalarFunction<F>,
    pub include_diagonal: bool,
}

#[derive(Clone, Debug)]
pub enum PotentialKind<F> {
    Zero,
    Custom(CustomPotential<F>),
    NearestNeighbor(NearestNeighbor<F>),
    MeanField(MeanField<F>),
}

/// A potential `V_Λ` on a fixed finite site set.
#[derive(Clone, Debug)]
pub struct PotentialSpec<F> {
    n_sites: usize,
    kind: PotentialKind<F>,
}

impl<F: Real> PotentialSpec<F> {
    pub fn zero(n_sites: usize) -> Self {
        Self { n_sites, kind: PotentialKind::Zero }
    }

    /// Custom potential given by its derivatives up to `max_order`.
    pub fn custom<Fun>(n_sites: usize, name: &str, max_order: u32, func: Fun) -> Self
    where
        Fun: Fn(&MultiIndex, &[F]) -> F + Send + Sync + 'static,
    {
        Self {
            n_sites,
            kind: PotentialKind::Custom(CustomPotential {
                name: name.to_string(),
                max_order,
                func: Arc::new(func),
            }),
        }
    }

    /// Nearest-neighbour potential on lattice points of `ℤ^dim`.
    pub fn nearest_neighbor(
        dim: usize,
        coords: Vec<Vec<i64>>,
        f: ScalarFunction<F>,
        g: ScalarFunction<F>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("lattice dimension must be ≥ 1".into()));
        }
        if let Some(c) = coords.iter().find(|c| c.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: c.len() });
        }
        for (i, a) in coords.iter().enumerate() {
            if coords[..i].contains(a) {
                return Err(Error::InvalidArgument(format!("duplicate lattice site {a:?}")));
            }
        }
        let neighbors = coords
            .iter()
            .map(|a| {
                coords
                    .iter()
                    .enumerate()
                    .filter(|(_, b)| linf_distance(a, b) == 1)
                    .map(|(k, _)| k)
                    .collect()
            })
            .collect();
        Ok(Self {
            n_sites: coords.len(),
            kind: PotentialKind::NearestNeighbor(NearestNeighbor { dim, coords, f, g, neighbors }),
        })
    }

    /// Nearest-neighbour potential on the chain `{0, …, n-1} ⊂ ℤ`.
    pub fn chain(n_sites: usize, f: ScalarFunction<F>, g: ScalarFunction<F>) -> Self {
        let coords = (0..n_sites as i64).map(|i| vec![i]).collect();
        Self::nearest_neighbor(1, coords, f, g).expect("chain coordinates are valid")
    }

    /// One-site potential `V(x) = F(x)`.
    pub fn on_site(f: ScalarFunction<F>) -> Self {
        Self::chain(1, f, ScalarFunction::Zero)
    }

    pub fn mean_field(n_sites: usize, g: ScalarFunction<F>, include_diagonal: bool) -> Self {
        Self { n_sites, kind: PotentialKind::MeanField(MeanField { g, include_diagonal }) }
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn kind(&self) -> &PotentialKind<F> {
        &self.kind
    }

    fn check_point(&self, x: &[F]) -> Result<()> {
        if x.len() != self.n_sites {
            return Err(Error::DimensionMismatch { expected: self.n_sites, got: x.len() });
        }
        Ok(())
    }

    fn check_index(&self, alpha: &MultiIndex) -> Result<()> {
        if let Some(s) = alpha.support().find(|&s| s as usize >= self.n_sites) {
            return Err(Error::InvalidArgument(format!(
                "multi-index site {s} outside Λ of size {}",
                self.n_sites
            )));
        }
        Ok(())
    }

    /// `V_Λ(x)`.
    pub fn eval(&self, x: &[F]) -> Result<F> {
        self.check_point(x)?;
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[F]) -> F {
        match &self.kind {
            PotentialKind::Zero => F::zero(),
            PotentialKind::Custom(c) => (c.func)(&MultiIndex::zero(), x),
            PotentialKind::NearestNeighbor(nn) => {
                let mut v = F::zero();
                for (j, nbrs) in nn.neighbors.iter().enumerate() {
                    v += nn.f.value(x[j]);
                    for &k in nbrs {
                        v += nn.g.value(x[j] - x[k]);
                    }
                }
                v
            }
            PotentialKind::MeanField(mf) => {
                let n = x.len();
                let mut v = F::zero();
                for j in 0..n {
                    for k in 0..n {
                        if j != k || mf.include_diagonal {
                            v += mf.g.value(x[j] - x[k]);
                        }
                    }
                }
                v / F::from_usize_lossy(n.max(1))
            }
        }
    }

    /// `∂^α V_Λ(x)` from the chain rule on the defining sums.
    pub fn partial(&self, alpha: &MultiIndex, x: &[F]) -> Result<F> {
        self.check_point(x)?;
        self.check_index(alpha)?;
        if alpha.is_zero() {
            return Ok(self.eval_unchecked(x));
        }
        let total = alpha.total_order();
        let support: Vec<(usize, u32)> = alpha.iter().map(|(s, o)| (s as usize, o)).collect();
        let parity = |k: u32| if k.is_multiple_of(2) { F::one() } else { -F::one() };
        Ok(match &self.kind {
            PotentialKind::Zero => F::zero(),
            PotentialKind::Custom(c) => {
                if total > c.max_order {
                    return Err(Error::UnsupportedOrder { requested: total, available: c.max_order });
                }
                (c.func)(alpha, x)
            }
            PotentialKind::NearestNeighbor(nn) => match *support.as_slice() {
                [(s, a)] => {
                    let mut v = nn.f.derivative(a, x[s]);
                    for &k in &nn.neighbors[s] {
                        // G(x_s - x_k) and G(x_k - x_s)
                        v += nn.g.derivative(a, x[s] - x[k]);
                        v += parity(a) * nn.g.derivative(a, x[k] - x[s]);
                    }
                    v
                }
                [(s, a), (r, b)] => {
                    if nn.neighbors[s].contains(&r) {
                        parity(b) * nn.g.derivative(total, x[s] - x[r])
                            + parity(a) * nn.g.derivative(total, x[r] - x[s])
                    } else {
                        F::zero()
                    }
                }
                _ => F::zero(),
            },
            PotentialKind::MeanField(mf) => {
                let n = F::from_usize_lossy(x.len());
                match *support.as_slice() {
                    [(s, a)] => {
                        let mut v = F::zero();
                        for k in (0..x.len()).filter(|&k| k != s) {
                            v += mf.g.derivative(a, x[s] - x[k]);
                            v += parity(a) * mf.g.derivative(a, x[k] - x[s]);
                        }
                        v / n
                    }
                    [(s, a), (r, b)] => {
                        (parity(b) * mf.g.derivative(total, x[s] - x[r])
                            + parity(a) * mf.g.derivative(total, x[r] - x[s]))
                            / n
                    }
                    _ => F::zero(),
                }
            }
        })
    }

    /// `Σ_{0 ≠ β ≤ α} |∂^β V_Λ(x)|`.
    pub fn derivative_sum(&self, alpha: &MultiIndex, x: &[F]) -> Result<F> {
        if alpha.is_zero() {
            self.check_point(x)?;
            return Ok(F::zero());
        }
        alpha
            .sub_multiindices()?
            .iter()
            .try_fold(F::zero(), |acc, b| Ok(acc + self.partial(b, x)?.abs()))
    }

    /// A constant `C_m`, independent of `|Λ|`, with
    /// `Σ_{0≠β≤α} |∂^β V_Λ| ≤ C_m |S(α)|` for every `α ∈ 𝓜_m(Λ)`.
    ///
    /// * nearest neighbour: `2^m max_{1≤k≤m} ‖F^{(k)}‖ + 2·3^d·4^m max_{1≤k≤2m} ‖G^{(k)}‖`
    /// * mean field: `2·4^m max_{1≤k≤2m} ‖G^{(k)}‖`
    ///
    /// The constant is valid, not optimal.
    pub fn certified_cm(&self, m: u32) -> Result<F> {
        if m == 0 {
            return Err(Error::InvalidArgument("C_m needs m ≥ 1".into()));
        }
        let two = F::lit(2.0);
        let four_m = F::lit(4f64.powi(m as i32));
        match &self.kind {
            PotentialKind::Zero => Ok(F::zero()),
            PotentialKind::Custom(c) => Err(Error::InvalidArgument(format!(
                "no certified C_m for custom potential '{}'",
                c.name
            ))),
            PotentialKind::NearestNeighbor(nn) => {
                let f_part = two.powi(m as i32) * nn.f.max_sup_bound(1, m)?;
                let g_part = two * F::lit(3f64.powi(nn.dim as i32)) * four_m * nn.g.max_sup_bound(1, 2 * m)?;
                Ok(f_part + g_part)
            }
            PotentialKind::MeanField(mf) => Ok(two * four_m * mf.g.max_sup_bound(1, 2 * m)?),
        }
    }
}

fn linf_distance(a: &[i64], b: &[i64]) -> i64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).max().unwrap_or(0)
}

/// JSON description of a potential family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialConfig {
    Zero {
        n_sites: usize,
    },
    NearestNeighbor {
        #[serde(default = "default_dim")]
        dim: usize,
        sites: Vec<Vec<i64>>,
        #[serde(default = "zero_fn")]
        f: ScalarFunction<f64>,
        #[serde(default = "zero_fn")]
        g: ScalarFunction<f64>,
    },
    MeanField {
        n_sites: usize,
        g: ScalarFunction<f64>,
        #[serde(default = "default_true")]
        include_diagonal: bool,
    },
}

fn default_dim() -> usize {
    1
}

fn zero_fn() -> ScalarFunction<f64> {
    ScalarFunction::Zero
}

fn default_true() -> bool {
    true
}

impl ScalarFunction<f64> {
    /// Converts the parameters to another scalar type.
    pub fn cast<F: Real>(&self) -> ScalarFunction<F> {
        let c = F::lit;
        match self {
            ScalarFunction::Zero => ScalarFunction::Zero,
            ScalarFunction::Constant { value } => ScalarFunction::Constant { value: c(*value) },
            ScalarFunction::Quadratic { coef } => ScalarFunction::Quadratic { coef: c(*coef) },
            ScalarFunction::GaussianBump { amplitude, width } => {
                ScalarFunction::GaussianBump { amplitude: c(*amplitude), width: c(*width) }
            }
            ScalarFunction::Lorentzian { amplitude, width } => {
                ScalarFunction::Lorentzian { amplitude: c(*amplitude), width: c(*width) }
            }
            ScalarFunction::Cosine { amplitude, frequency } => {
                ScalarFunction::Cosine { amplitude: c(*amplitude), frequency: c(*frequency) }
            }
            ScalarFunction::Sum { terms } => ScalarFunction::Sum { terms: terms.iter().map(Self::cast).collect() },
        }
    }

    /// Rejects parameters that make the function negative or degenerate.
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("scalar function: {what}")));
        match self {
            ScalarFunction::Constant { value } if *value < 0.0 => bad("constant must be ≥ 0"),
            ScalarFunction::Quadratic { coef } if *coef < 0.0 => bad("quadratic coefficient must be ≥ 0"),
            ScalarFunction::GaussianBump { amplitude, width }
            | ScalarFunction::Lorentzian { amplitude, width }
                if *amplitude < 0.0 || !(*width > 0.0) =>
            {
                bad("amplitude must be ≥ 0 and width > 0")
            }
            ScalarFunction::Cosine { amplitude, .. } if *amplitude < 0.0 => bad("amplitude must be ≥ 0"),
            ScalarFunction::Sum { terms } => terms.iter().try_for_each(Self::validate),
            _ => Ok(()),
        }
    }
}

impl PotentialConfig {
    pub fn n_sites(&self) -> usize {
        match self {
            PotentialConfig::Zero { n_sites } | PotentialConfig::MeanField { n_sites, .. } => *n_sites,
            PotentialConfig::NearestNeighbor { sites, .. } => sites.len(),
        }
    }

    pub fn build<F: Real>(&self) -> Result<PotentialSpec<F>> {
        match self {
            PotentialConfig::Zero { n_sites } => Ok(PotentialSpec::zero(*n_sites)),
            PotentialConfig::NearestNeighbor { dim, sites, f, g } => {
                f.validate()?;
                g.validate()?;
                PotentialSpec::nearest_neighbor(*dim, sites.clone(), f.cast(), g.cast())
            }
            PotentialConfig::MeanField { n_sites, g, include_diagonal } => {
                g.validate()?;
                if *n_sites == 0 {
                    return Err(Error::InvalidArgument("mean field needs at least one site".into()));
                }
                Ok(PotentialSpec::mean_field(*n_sites, g.cast(), *include_diagonal))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mi(s: &str) -> MultiIndex {
        s.parse().unwrap()
    }

    fn square() -> ScalarFunction<f64> {
        ScalarFunction::Quadratic { coef: 1.0 }
    }

    fn lorentzian() -> ScalarFunction<f64> {
        ScalarFunction::Lorentzian { amplitude: 1.0, width: 1.0 }
    }

    fn builtins() -> Vec<ScalarFunction<f64>> {
        vec![
            ScalarFunction::GaussianBump { amplitude: 1.3, width: 0.7 },
            ScalarFunction::Lorentzian { amplitude: 0.8, width: 1.4 },
            ScalarFunction::Cosine { amplitude: 0.5, frequency: 1.7 },
            ScalarFunction::Constant { value: 2.0 },
            ScalarFunction::Sum { terms: vec![square(), lorentzian()] },
        ]
    }

    #[test]
    fn eval_examples() {
        let x = [0.3, -1.2, 2.0];
        assert_eq!(PotentialSpec::<f64>::zero(3).eval(&x).unwrap(), 0.0);
        let mf = PotentialSpec::mean_field(3, ScalarFunction::Constant { value: 1.5 }, true);
        assert!((mf.eval(&x).unwrap() - 1.5 * 3.0).abs() < 1e-14);
        let nn = PotentialSpec::chain(2, ScalarFunction::Zero, square());
        assert_eq!(nn.eval(&[0.0, 1.0]).unwrap(), 2.0);
        assert!(matches!(nn.eval(&[0.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn partial_examples() {
        let nn = PotentialSpec::chain(2, ScalarFunction::Zero, square());
        let x = [0.0, 1.0];
        assert_eq!(nn.partial(&MultiIndex::zero(), &x).unwrap(), nn.eval(&x).unwrap());
        assert_eq!(nn.partial(&mi("0:1"), &x).unwrap(), -4.0);
        assert_eq!(PotentialSpec::<f64>::zero(2).partial(&mi("0:2,1:1"), &x).unwrap(), 0.0);
        assert!(nn.partial(&mi("5:1"), &x).is_err());
    }

    #[test]
    fn custom_potential_fails_fast_beyond_declared_order() {
        let v = PotentialSpec::<f64>::custom(1, "x^2", 2, |a, x| match a.total_order() {
            0 => x[0] * x[0],
            1 => 2.0 * x[0],
            2 => 2.0,
            _ => 0.0,
        });
        assert_eq!(v.partial(&mi("0:2"), &[3.0]).unwrap(), 2.0);
        assert_eq!(
            v.partial(&mi("0:3"), &[3.0]),
            Err(Error::UnsupportedOrder { requested: 3, available: 2 })
        );
        assert!(v.certified_cm(1).is_err());
    }

    #[test]
    fn derivative_sum_examples() {
        let x = [0.4, -0.3];
        assert_eq!(PotentialSpec::<f64>::zero(2).derivative_sum(&mi("0:2"), &x).unwrap(), 0.0);
        let nn = PotentialSpec::chain(2, lorentzian(), lorentzian());
        let single = nn.derivative_sum(&mi("1:1"), &x).unwrap();
        assert_eq!(single, nn.partial(&mi("1:1"), &x).unwrap().abs());
    }

    #[test]
    fn certified_cm_examples() {
        let nn = PotentialSpec::<f64>::chain(3, ScalarFunction::Zero, ScalarFunction::Zero);
        assert_eq!(nn.certified_cm(2).unwrap(), 0.0);
        let unbounded = PotentialSpec::<f64>::chain(3, square(), ScalarFunction::Zero);
        assert_eq!(unbounded.certified_cm(1), Err(Error::MissingSupBound(1)));
        // constant G: derivatives vanish
        let mf = PotentialSpec::mean_field(4, ScalarFunction::Constant { value: 3.0 }, true);
        assert_eq!(mf.certified_cm(2).unwrap(), 0.0);
        assert_eq!(mf.derivative_sum(&mi("0:2,1:1"), &[0.1, 0.2, 0.3, 0.4]).unwrap(), 0.0);
        // d = 1, G lorentzian, m = 1: 2·3·4·max(1!) = 24
        let nn = PotentialSpec::<f64>::chain(3, ScalarFunction::Zero, lorentzian());
        assert!((nn.certified_cm(1).unwrap() - 24.0 * 2.0).abs() < 1e-12);
    }

    #[test]
    fn sup_bounds_hold_at_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for f in builtins() {
            for k in 0..=8 {
                let Some(bound) = f.sup_bound(k) else { continue };
                for _ in 0..2000 {
                    let y = rng.random_range(-6.0..6.0);
                    assert!(f.derivative(k, y).abs() <= bound * (1.0 + 1e-12), "{f:?} k={k} y={y}");
                }
            }
        }
    }

    #[test]
    fn builtin_derivatives_match_finite_differences() {
        let h = 1e-5;
        for f in builtins() {
            for k in 0..6 {
                for &y in &[-1.3, -0.2, 0.0, 0.7, 2.1] {
                    let fd = (f.derivative(k, y + h) - f.derivative(k, y - h)) / (2.0 * h);
                    let exact = f.derivative(k + 1, y);
                    assert!((fd - exact).abs() <= 1e-6 * (1.0 + exact.abs()), "{f:?} k={k} y={y}");
                }
            }
        }
    }

    #[test]
    fn builtins_are_nonnegative() {
        for f in builtins() {
            for i in -200..200 {
                assert!(f.value(i as f64 * 0.05) >= 0.0);
            }
        }
    }

    fn random_point(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
    }

    fn fd_partial(v: &PotentialSpec<f64>, alpha: &MultiIndex, x: &[f64], h: f64) -> f64 {
        // tensor-product central differences, order ≤ 2 per site
        let mut stencil = vec![(x.to_vec(), 1.0)];
        for (s, o) in alpha.iter() {
            let s = s as usize;
            let taps: &[(f64, f64)] = match o {
                1 => &[(1.0, 0.5), (-1.0, -0.5)],
                2 => &[(1.0, 1.0), (0.0, -2.0), (-1.0, 1.0)],
                _ => unreachable!(),
            };
            stencil = stencil
                .into_iter()
                .flat_map(|(p, w)| {
                    taps.iter().map(move |&(off, tw)| {
                        let mut q = p.clone();
                        q[s] += off * h;
                        (q, w * tw / h.powi(o as i32))
                    })
                })
                .collect();
        }
        stencil.iter().map(|(p, w)| w * v.eval(p).unwrap()).sum()
    }

    #[test]
    fn partial_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = 1e-4;
        let families = vec![
            PotentialSpec::chain(4, ScalarFunction::GaussianBump { amplitude: 1.0, width: 1.0 }, lorentzian()),
            PotentialSpec::nearest_neighbor(
                2,
                vec![vec![0, 0], vec![1, 1], vec![0, 1], vec![2, 0]],
                ScalarFunction::Cosine { amplitude: 1.0, frequency: 1.0 },
                ScalarFunction::GaussianBump { amplitude: 1.0, width: 0.8 },
            )
            .unwrap(),
            PotentialSpec::mean_field(4, lorentzian(), true),
            PotentialSpec::mean_field(3, ScalarFunction::Cosine { amplitude: 1.0, frequency: 0.6 }, false),
        ];
        let alphas = ["0:1", "2:1", "1:2", "0:1,1:1", "1:1,2:1", "0:1,3:1", "2:2"];
        for v in &families {
            for _ in 0..10 {
                let x = random_point(&mut rng, v.n_sites());
                for a in alphas {
                    let a = mi(a);
                    if a.support().any(|s| s as usize >= v.n_sites()) {
                        continue;
                    }
                    let exact = v.partial(&a, &x).unwrap();
                    let fd = fd_partial(v, &a, &x, h);
                    let tol = if a.total_order() == 1 { 1e-6 } else { 1e-4 };
                    assert!(
                        (exact - fd).abs() <= tol * (1.0 + exact.abs()),
                        "{v:?} α={a} x={x:?}: {exact} vs {fd}"
                    );
                }
            }
        }
    }

    #[test]
    fn mean_field_is_permutation_invariant() {
        let v = PotentialSpec::mean_field(5, ScalarFunction::GaussianBump { amplitude: 1.0, width: 0.5 }, true);
        let x: [f64; 5] = [0.1, -0.4, 1.3, 0.9, -2.0];
        let perm = [x[3], x[0], x[4], x[2], x[1]];
        assert!((v.eval(&x).unwrap() - v.eval(&perm).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn diagonal_only_shifts_mean_field_by_g0() {
        let g = lorentzian();
        let with = PotentialSpec::mean_field(4, g.clone(), true);
        let without = PotentialSpec::mean_field(4, g.clone(), false);
        let x = [0.2, 0.5, -1.0, 3.0];
        let shift = with.eval(&x).unwrap() - without.eval(&x).unwrap();
        assert!((shift - g.value(0.0)).abs() < 1e-14);
    }

    #[test]
    fn hypothesis_holds_with_certified_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let families: Vec<(PotentialSpec<f64>, u32)> = vec![
            (PotentialSpec::chain(6, ScalarFunction::Zero, lorentzian()), 1),
            (PotentialSpec::chain(8, ScalarFunction::GaussianBump { amplitude: 1.0, width: 1.0 }, lorentzian()), 2),
            (PotentialSpec::mean_field(5, lorentzian(), true), 1),
            (PotentialSpec::mean_field(7, ScalarFunction::GaussianBump { amplitude: 2.0, width: 0.5 }, true), 2),
        ];
        for (v, m) in &families {
            let cm = v.certified_cm(*m).unwrap();
            for _ in 0..1000 {
                let n = v.n_sites() as u32;
                let support = rng.random_range(1..=3u32);
                let alpha = MultiIndex::from_pairs(
                    (0..support).map(|_| (rng.random_range(0..n), rng.random_range(1..=*m))),
                );
                if !alpha.in_class_m(*m) {
                    continue;
                }
                let x = random_point(&mut rng, v.n_sites());
                let lhs = v.derivative_sum(&alpha, &x).unwrap();
                assert!(lhs <= cm * alpha.support_size() as f64, "α={alpha} lhs={lhs} C={cm}");
            }
        }
    }

    #[test]
    fn derivative_sum_does_not_grow_with_lambda() {
        // same relevant coordinates, larger Λ
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let alpha = mi("1:1,2:1");
        let g = ScalarFunction::GaussianBump { amplitude: 1.0, width: 0.7 };
        for family in ["nn", "mf"] {
            let build = |n: usize| match family {
                "nn" => PotentialSpec::chain(n, lorentzian(), g.clone()),
                _ => PotentialSpec::mean_field(n, g.clone(), true),
            };
            let (small, large) = (build(4), build(16));
            let (mut sup_small, mut sup_large) = (0f64, 0f64);
            for _ in 0..1000 {
                let x = random_point(&mut rng, 16);
                sup_small = sup_small.max(small.derivative_sum(&alpha, &x[..4]).unwrap());
                sup_large = sup_large.max(large.derivative_sum(&alpha, &x).unwrap());
            }
            assert!(sup_large <= sup_small * 1.01, "{family}: {sup_small} → {sup_large}");
        }
    }

    #[test]
    fn config_json_round_trip() {
        let json = r#"{"variant":"nearest_neighbor","dim":1,"sites":[[0],[1]],
                       "g":{"name":"lorentzian","width":2.0}}"#;
        let cfg: PotentialConfig = serde_json::from_str(json).unwrap();
        let v = cfg.build::<f64>().unwrap();
        assert_eq!(v.n_sites(), 2);
        let back: PotentialConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        let bad = r#"{"variant":"mean_field","n_sites":2,"g":{"name":"lorentzian"},"bogus":1}"#;
        assert!(serde_json::from_str::<PotentialConfig>(bad).is_err());
        let neg = r#"{"variant":"mean_field","n_sites":2,"g":{"name":"constant","value":-1}}"#;
        assert!(serde_json::from_str::<PotentialConfig>(neg).unwrap().build::<f64>().is_err());
    }
}
