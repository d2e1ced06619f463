//! Sparse multi-indices over a finite set of sites.
//!
//! A [`MultiIndex`] stores only the nonzero orders, so the support `S(α)` is
//! the key set, `|α|` is the sum of the stored orders and `α!` is the product
//! of their factorials. The textual form is `site:order,site:order` with sites
//! in increasing order; the zero index prints as the empty string.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Opaque site identifier.
pub type Site = u32;

/// Multi-index α: site → order, zero orders never stored.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex {
    entries: BTreeMap<Site, u32>,
}

impl MultiIndex {
    /// The zero multi-index.
    pub fn zero() -> Self {
        Self::default()
    }

    /// Builds from `(site, order)` pairs. Zero orders are dropped and repeated
    /// sites accumulate.
    pub fn from_pairs<I: IntoIterator<Item = (Site, u32)>>(pairs: I) -> Self {
        let mut entries = BTreeMap::new();
        for (site, order) in pairs {
            if order > 0 {
                *entries.entry(site).or_insert(0) += order;
            }
        }
        Self { entries }
    }

    /// Single-site index `{site: order}`.
    pub fn single(site: Site, order: u32) -> Self {
        Self::from_pairs([(site, order)])
    }

    pub fn order(&self, site: Site) -> u32 {
        self.entries.get(&site).copied().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    /// The support `S(α)`, in increasing site order.
    pub fn support(&self) -> impl Iterator<Item = Site> + '_ {
        self.entries.keys().copied()
    }

    /// `|S(α)|`.
    pub fn support_size(&self) -> usize {
        self.entries.len()
    }

    /// `(site, order)` pairs in increasing site order.
    pub fn iter(&self) -> impl Iterator<Item = (Site, u32)> + '_ {
        self.entries.iter().map(|(&s, &o)| (s, o))
    }

    /// `|α|`.
    pub fn total_order(&self) -> u32 {
        self.entries.values().sum()
    }

    pub fn max_order(&self) -> u32 {
        self.entries.values().copied().max().unwrap_or(0)
    }

    /// `α!` in exact integer arithmetic.
    ///
    /// Panics if the result overflows `u128` (per-site orders beyond 34).
    pub fn factorial(&self) -> u128 {
        self.entries
            .values()
            .map(|&k| factorial(k))
            .fold(1u128, |acc, f| acc.checked_mul(f).expect("α! overflows u128"))
    }

    /// Componentwise order: `self_j ≤ other_j` for every site.
    pub fn leq(&self, other: &MultiIndex) -> bool {
        self.entries.iter().all(|(s, &o)| o <= other.order(*s))
    }

    /// Membership in `𝓜_m`: every order is at most `m`.
    pub fn in_class_m(&self, m: u32) -> bool {
        self.entries.values().all(|&o| o <= m)
    }

    /// `self − other`, or `None` when `other ≰ self`.
    pub fn checked_sub(&self, other: &MultiIndex) -> Option<MultiIndex> {
        if !other.leq(self) {
            return None;
        }
        Some(Self::from_pairs(
            self.iter().map(|(s, o)| (s, o - other.order(s))),
        ))
    }

    /// `self + k·other`.
    pub fn add_scaled(&self, other: &MultiIndex, k: u32) -> MultiIndex {
        Self::from_pairs(self.iter().chain(other.iter().map(|(s, o)| (s, o * k))))
    }

    /// All `β` with `0 ≠ β ≤ self`.
    ///
    /// The order is a mixed-radix count over the sorted support with the
    /// smallest site varying fastest, so `{1:1,2:1}` yields
    /// `[{1:1}, {2:1}, {1:1,2:1}]`.
    pub fn sub_multiindices(&self) -> Result<Vec<MultiIndex>> {
        if self.is_zero() {
            return Err(Error::ZeroMultiIndex);
        }
        let sites: Vec<(Site, u32)> = self.iter().collect();
        let count: usize = sites.iter().map(|&(_, o)| o as usize + 1).product::<usize>() - 1;
        let mut out = Vec::with_capacity(count);
        let mut digits = vec![0u32; sites.len()];
        loop {
            // increment the counter, first digit fastest
            let mut pos = 0;
            loop {
                if pos == sites.len() {
                    return Ok(out);
                }
                if digits[pos] < sites[pos].1 {
                    digits[pos] += 1;
                    break;
                }
                digits[pos] = 0;
                pos += 1;
            }
            out.push(Self::from_pairs(
                sites.iter().zip(&digits).map(|(&(s, _), &d)| (s, d)),
            ));
        }
    }
}

/// `k!` as `u128`.
pub fn factorial(k: u32) -> u128 {
    (1..=k as u128).fold(1u128, |acc, i| acc.checked_mul(i).expect("k! overflows u128"))
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (s, o) in self.iter() {
            if !first {
                f.write_str(",")?;
            }
            first = false;
            write!(f, "{s}:{o}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{self}}}")
    }
}

impl FromStr for MultiIndex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(Self::zero());
        }
        let mut pairs = Vec::new();
        let mut last: Option<Site> = None;
        for item in s.split(',') {
            let (site, order) = item
                .split_once(':')
                .ok_or_else(|| Error::InvalidArgument(format!("bad multi-index entry '{item}'")))?;
            let site: Site = site
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad site in '{item}'")))?;
            let order: u32 = order
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad order in '{item}'")))?;
            if last.is_some_and(|l| l >= site) {
                return Err(Error::InvalidArgument(format!(
                    "sites must be strictly increasing in '{s}'"
                )));
            }
            last = Some(site);
            pairs.push((site, order));
        }
        Ok(Self::from_pairs(pairs))
    }
}

impl Serialize for MultiIndex {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MultiIndex {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
