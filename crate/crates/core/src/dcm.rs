//! Dirichlet compound multinomial marginals in the log domain.
//!
//! `Δ(α) = Π_j Γ(α_j) / Γ(Σ_j α_j)`, so a document set `D` with summed counts
//! `c` has `log f(D) = Σ_i coef(z_i) + log Δ(α + c) − log Δ(α)` where
//! `coef(z) = lnΓ(1 + Σ_j z_j) − Σ_j lnΓ(1 + z_j)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TermCounts;

pub const DEFAULT_ALPHA: f64 = 0.01;

/// Counts up to this value hit the precomputed tables.
const TABLE_LEN: usize = 4096;

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// `log Δ(α) = Σ_j lnΓ(α_j) − lnΓ(Σ_j α_j)`.
pub fn log_delta(alpha: &[f64]) -> Result<f64> {
    if let Some(a) = alpha.iter().find(|a| !(**a > 0.0) || !a.is_finite()) {
        return Err(Error::Domain(format!("alpha component {a} is not positive")));
    }
    Ok(alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>() - ln_gamma(alpha.iter().sum()))
}

/// Dirichlet parameters plus read-only log-gamma tables. Construction fixes
/// the tables, so shared references are safe across threads.
#[derive(Clone, Debug)]
pub struct DcmParams {
    alpha: Vec<f64>,
    alpha_sum: f64,
    symmetric: Option<f64>,
    ln_fact: Vec<f64>,
    ln_gamma_alpha: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DcmParamsRepr {
    alpha: Vec<f64>,
}

impl Serialize for DcmParams {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DcmParamsRepr { alpha: self.alpha.clone() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for DcmParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = DcmParamsRepr::deserialize(d)?;
        DcmParams::new(repr.alpha).map_err(serde::de::Error::custom)
    }
}

impl DcmParams {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::Domain("alpha must have at least one component".into()));
        }
        if let Some(a) = alpha.iter().find(|a| !(**a > 0.0) || !a.is_finite()) {
            return Err(Error::Domain(format!("alpha component {a} is not positive")));
        }
        let symmetric = alpha.iter().all(|&a| a == alpha[0]).then_some(alpha[0]);
        let ln_fact = (0..TABLE_LEN).map(|n| ln_gamma(1.0 + n as f64)).collect();
        let ln_gamma_alpha = match symmetric {
            Some(a) => (0..TABLE_LEN).map(|n| ln_gamma(a + n as f64)).collect(),
            None => Vec::new(),
        };
        let alpha_sum = alpha.iter().sum();
        Ok(Self { alpha, alpha_sum, symmetric, ln_fact, ln_gamma_alpha })
    }

    pub fn symmetric(dim: usize, a: f64) -> Result<Self> {
        Self::new(vec![a; dim])
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha_sum(&self) -> f64 {
        self.alpha_sum
    }

    #[inline]
    pub fn ln_fact(&self, n: u64) -> f64 {
        match self.ln_fact.get(n as usize) {
            Some(&v) => v,
            None => ln_gamma(1.0 + n as f64),
        }
    }

    /// `lnΓ(α_j + n)`.
    #[inline]
    pub fn ln_gamma_alpha(&self, j: u32, n: u64) -> f64 {
        if self.symmetric.is_some() {
            if let Some(&v) = self.ln_gamma_alpha.get(n as usize) {
                return v;
            }
        }
        ln_gamma(self.alpha[j as usize] + n as f64)
    }

    fn check(&self, z: &TermCounts) -> Result<()> {
        match z.max_index() {
            Some(j) if j as usize >= self.dim() => Err(Error::Domain(format!(
                "term index {j} outside vocabulary of size {}",
                self.dim()
            ))),
            _ => Ok(()),
        }
    }

    /// Multinomial coefficient `lnΓ(1 + Σz) − Σ lnΓ(1 + z_j)` of one document.
    pub fn doc_coef(&self, z: &TermCounts) -> f64 {
        self.ln_fact(z.total()) - z.iter().map(|(_, c)| self.ln_fact(c as u64)).sum::<f64>()
    }

    pub fn log_marginal(&self, docs: &[&TermCounts]) -> Result<f64> {
        Ok(Suff::from_docs(docs.iter().copied(), self)?.log_marginal(self))
    }

    /// `log f(D_f ∪ D_s) − log f(D_s)`; both lists are taken as given, so the
    /// caller removes documents of `d_f` already present in `d_s`.
    pub fn log_predictive(&self, d_f: &[&TermCounts], d_s: &[&TermCounts]) -> Result<f64> {
        let f = Suff::from_docs(d_f.iter().copied(), self)?;
        let s = Suff::from_docs(d_s.iter().copied(), self)?;
        Ok(s.log_predictive(&f, self))
    }
}

/// Sufficient statistics of a document multiset: summed sparse counts, their
/// total and the summed multinomial coefficients.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Suff {
    counts: Vec<(u32, u64)>,
    total: u64,
    coef: f64,
}

impl Suff {
    pub fn from_docs<'a, I>(docs: I, params: &DcmParams) -> Result<Self>
    where
        I: IntoIterator<Item = &'a TermCounts>,
    {
        let mut acc = std::collections::BTreeMap::<u32, u64>::new();
        let mut coef = 0.0;
        let mut total = 0;
        for z in docs {
            params.check(z)?;
            coef += params.doc_coef(z);
            total += z.total();
            for (j, c) in z.iter() {
                *acc.entry(j).or_insert(0) += c as u64;
            }
        }
        Ok(Self { counts: acc.into_iter().collect(), total, coef })
    }

    pub fn counts(&self) -> &[(u32, u64)] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn coef(&self) -> f64 {
        self.coef
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty() && self.coef == 0.0
    }

    pub fn add(&mut self, other: &Suff) {
        self.counts = merge_counts(&self.counts, &other.counts, |a, b| a + b);
        self.total += other.total;
        self.coef += other.coef;
    }

    /// Removes `other`, which must be a sub-multiset of `self`.
    pub fn sub(&mut self, other: &Suff) {
        self.counts = merge_counts(&self.counts, &other.counts, |a, b| a - b);
        self.counts.retain(|&(_, c)| c > 0);
        self.total -= other.total;
        self.coef -= other.coef;
    }

    pub fn count(&self, j: u32) -> u64 {
        self.counts
            .binary_search_by_key(&j, |&(t, _)| t)
            .map(|p| self.counts[p].1)
            .unwrap_or(0)
    }

    /// `log Δ(α + c) − log Δ(α)` restricted to nonzero counts.
    pub fn log_delta_ratio(&self, params: &DcmParams) -> f64 {
        let a = params.alpha_sum();
        let num: f64 = self
            .counts
            .iter()
            .map(|&(j, c)| params.ln_gamma_alpha(j, c) - params.ln_gamma_alpha(j, 0))
            .sum();
        num - (ln_gamma(a + self.total as f64) - ln_gamma(a))
    }

    pub fn log_marginal(&self, params: &DcmParams) -> f64 {
        self.coef + self.log_delta_ratio(params)
    }

    /// `log f(self ∪ f) − log f(self)`, treating the union as a disjoint sum.
    pub fn log_predictive(&self, f: &Suff, params: &DcmParams) -> f64 {
        let a = params.alpha_sum();
        let mut acc = f.coef;
        let s = &self.counts;
        let mut p = 0;
        for &(j, cf) in &f.counts {
            while p < s.len() && s[p].0 < j {
                p += 1;
            }
            let cs = if p < s.len() && s[p].0 == j { s[p].1 } else { 0 };
            acc += params.ln_gamma_alpha(j, cs + cf) - params.ln_gamma_alpha(j, cs);
        }
        let ts = self.total as f64;
        acc - (ln_gamma(a + ts + f.total as f64) - ln_gamma(a + ts))
    }
}

fn merge_counts(a: &[(u32, u64)], b: &[(u32, u64)], op: impl Fn(u64, u64) -> u64) -> Vec<(u32, u64)> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut k) = (0, 0);
    while i < a.len() || k < b.len() {
        if k == b.len() || (i < a.len() && a[i].0 < b[k].0) {
            out.push(a[i]);
            i += 1;
        } else if i == a.len() || b[k].0 < a[i].0 {
            out.push((b[k].0, op(0, b[k].1)));
            k += 1;
        } else {
            out.push((a[i].0, op(a[i].1, b[k].1)));
            i += 1;
            k += 1;
        }
    }
    out
}

/// Log-sum-exp of an iterator, `-inf` when empty.
pub fn log_sum_exp<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
