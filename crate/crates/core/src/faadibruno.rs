//! Multivariate Faà di Bruno formula for `∂^α e^W` and the closed-form
//! derivative bound on the semigroup symbol.
//!
//! `F(α)` is the set of maps `φ: {0 ≠ β ≤ α} → ℕ` with `Σ φ(β) β = α`, and
//!
//! ```text
//! ∂^α e^W = α! e^W Σ_{φ ∈ F(α)} Π_β (1/φ(β)!) (∂^β W / β!)^{φ(β)}.
//! ```
//!
//! The combinatorial coefficient `α! / Π_β φ(β)! (β!)^{φ(β)}` of each term is an
//! integer and is computed exactly before it meets any scalar.

use std::collections::{BTreeMap, HashMap};

use num_traits::{FromPrimitive, Num};

use crate::brownian::b_constant;
use crate::error::{Error, Result};
use crate::multiindex::{factorial, MultiIndex};
use crate::scalar::Real;

/// One element `φ` of `F(α)`: `(β, φ(β))` pairs with `φ(β) ≥ 1`, in the
/// canonical order of [`MultiIndex::sub_multiindices`].
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FaaDiBrunoTerm {
    pub phi: Vec<(MultiIndex, u32)>,
}

impl FaaDiBrunoTerm {
    /// `Σ φ(β) β`.
    pub fn weighted_sum(&self) -> MultiIndex {
        self.phi
            .iter()
            .fold(MultiIndex::zero(), |acc, (b, k)| acc.add_scaled(b, *k))
    }

    /// `α! / Π_β φ(β)! (β!)^{φ(β)}` for the `α` this term belongs to.
    pub fn coefficient(&self, alpha: &MultiIndex) -> u128 {
        let denom = self.phi.iter().fold(1u128, |acc, (b, k)| {
            let pow = b.factorial().checked_pow(*k).expect("(β!)^φ overflows u128");
            acc.checked_mul(factorial(*k))
                .and_then(|a| a.checked_mul(pow))
                .expect("Faà di Bruno denominator overflows u128")
        });
        let num = alpha.factorial();
        debug_assert_eq!(num % denom, 0, "non-integral coefficient for {alpha}");
        num / denom
    }
}

/// All `φ ∈ F(α)`, each once.
pub fn enumerate_f(alpha: &MultiIndex) -> Result<Vec<FaaDiBrunoTerm>> {
    let parts = alpha.sub_multiindices()?;
    let mut memo = HashMap::new();
    let raw = descend(alpha, 0, &parts, &mut memo);
    Ok(raw
        .iter()
        .map(|choice| FaaDiBrunoTerm {
            phi: choice.iter().map(|&(i, k)| (parts[i].clone(), k)).collect(),
        })
        .collect())
}

type Choices = Vec<Vec<(usize, u32)>>;

/// Choices of multiplicities for `parts[start..]` summing to `residual`.
fn descend(
    residual: &MultiIndex,
    start: usize,
    parts: &[MultiIndex],
    memo: &mut HashMap<(MultiIndex, usize), Choices>,
) -> Choices {
    if residual.is_zero() {
        return vec![Vec::new()];
    }
    let key = (residual.clone(), start);
    if let Some(hit) = memo.get(&key) {
        return hit.clone();
    }
    let mut out = Vec::new();
    for i in start..parts.len() {
        let mut rest = residual.clone();
        let mut k = 0;
        while let Some(next) = rest.checked_sub(&parts[i]) {
            k += 1;
            rest = next;
            for tail in descend(&rest, i + 1, parts, memo) {
                let mut choice = Vec::with_capacity(tail.len() + 1);
                choice.push((i, k));
                choice.extend(tail);
                out.push(choice);
            }
        }
    }
    memo.insert(key, out.clone());
    out
}

/// `∂^α e^W / e^W` as a polynomial in the supplied derivatives `∂^β W`.
///
/// Generic over any numeric field, so exact rational arithmetic works as well as floats.
pub fn derivative_of_exponential<T>(w_derivs: &BTreeMap<MultiIndex, T>, alpha: &MultiIndex) -> Result<T>
where
    T: Num + Clone + FromPrimitive,
{
    if alpha.is_zero() {
        return Ok(T::one());
    }
    for b in alpha.sub_multiindices()? {
        if !w_derivs.contains_key(&b) {
            return Err(Error::MissingDerivative(b.to_string()));
        }
    }
    let mut total = T::zero();
    for term in enumerate_f(alpha)? {
        let coef = T::from_u128(term.coefficient(alpha)).expect("coefficient representable");
        let value = term.phi.iter().fold(coef, |acc, (b, k)| {
            let w = &w_derivs[b];
            (0..*k).fold(acc, |a, _| a * w.clone())
        });
        total = total + value;
    }
    Ok(total)
}

/// `m^{|S(α)|} e^{t C_m |S(α)|} B_m^{|S(β)|} (σ² t)^{|β|/2}`.
///
/// With `σ² = 1` this is the stated bound on `‖∂_x^α ∂_ξ^β u‖_∞`; other
/// variance presets rescale the time in the `ξ` factor.
pub fn theorem31_bound<F: Real>(
    alpha: &MultiIndex,
    beta: &MultiIndex,
    m: u32,
    t: F,
    c_m: F,
    variance_scale: F,
) -> Result<F> {
    for idx in [alpha, beta] {
        if !idx.in_class_m(m) {
            return Err(Error::OutsideClass { index: idx.to_string(), m });
        }
    }
    if !(t > F::zero()) {
        return Err(Error::InvalidArgument("t must be positive".into()));
    }
    let sa = alpha.support_size() as i32;
    let sb = beta.support_size() as i32;
    let half_beta = F::from_u32(beta.total_order()).unwrap() / F::lit(2.0);
    Ok(F::from_u32(m).unwrap().powi(sa)
        * (t * c_m * F::from_i32(sa).unwrap()).exp()
        * b_constant::<F>(m).powi(sb)
        * (variance_scale * t).powf(half_beta))
}
