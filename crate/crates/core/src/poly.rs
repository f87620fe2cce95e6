//! Sparse multi-variate polynomials: representation, evaluation,
//! monomial enumeration and random generation.

use std::collections::HashSet;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Rows per rayon task when evaluating over a matrix.
const PAR_CHUNK: usize = 2048;

/// A product of feature powers, one exponent per feature.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Monomial {
    exponents: Vec<u32>,
}

impl Monomial {
    pub fn new(exponents: Vec<u32>) -> Self {
        Self { exponents }
    }

    pub fn constant(n_features: usize) -> Self {
        Self {
            exponents: vec![0; n_features],
        }
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exponents
    }

    pub fn n_features(&self) -> usize {
        self.exponents.len()
    }

    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }

    pub fn is_constant(&self) -> bool {
        self.exponents.iter().all(|&p| p == 0)
    }

    /// Evaluates the product with powers formed by repeated multiplication.
    /// The caller guarantees `x.len() == self.n_features()`.
    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut v = 1.0;
        for (&xi, &p) in x.iter().zip(&self.exponents) {
            for _ in 0..p {
                v *= xi;
            }
        }
        v
    }
}

/// One coefficient-weighted monomial.
#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub coefficient: f64,
    pub monomial: Monomial,
}

/// A finite sum of coefficient-weighted monomials over `n_features` inputs.
///
/// Zero coefficients are pruned on construction, so the term count is the
/// number of active coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct SparsePolynomial {
    n_features: usize,
    terms: Vec<Term>,
}

impl SparsePolynomial {
    pub fn new(n_features: usize, terms: Vec<Term>) -> Result<Self> {
        if n_features == 0 {
            return Err(Error::InvalidInput(
                "polynomial needs at least one feature".into(),
            ));
        }
        let mut seen = HashSet::with_capacity(terms.len());
        let mut kept = Vec::with_capacity(terms.len());
        for term in terms {
            if term.monomial.n_features() != n_features {
                return Err(Error::DimensionMismatch {
                    expected: n_features,
                    actual: term.monomial.n_features(),
                });
            }
            if !term.coefficient.is_finite() {
                return Err(Error::InvalidInput(
                    "non-finite polynomial coefficient".into(),
                ));
            }
            if !seen.insert(term.monomial.exponents.clone()) {
                return Err(Error::InvalidInput(format!(
                    "duplicate monomial {:?}",
                    term.monomial.exponents
                )));
            }
            if term.coefficient != 0.0 {
                kept.push(term);
            }
        }
        Ok(Self {
            n_features,
            terms: kept,
        })
    }

    /// Builds from `(coefficient, exponents)` pairs.
    pub fn from_pairs(n_features: usize, pairs: &[(f64, &[u32])]) -> Result<Self> {
        let terms = pairs
            .iter()
            .map(|&(c, e)| Term {
                coefficient: c,
                monomial: Monomial::new(e.to_vec()),
            })
            .collect();
        Self::new(n_features, terms)
    }

    pub fn constant(n_features: usize, value: f64) -> Result<Self> {
        Self::new(
            n_features,
            vec![Term {
                coefficient: value,
                monomial: Monomial::constant(n_features),
            }],
        )
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn max_degree(&self) -> u32 {
        self.terms
            .iter()
            .map(|t| t.monomial.degree())
            .max()
            .unwrap_or(0)
    }

    /// Evaluates at `x`, summing in term-list order.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                actual: x.len(),
            });
        }
        Ok(self.eval_unchecked(x))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for t in &self.terms {
            acc += t.coefficient * t.monomial.eval(x);
        }
        acc
    }

    /// Evaluates every row of a row-major matrix with `n_features` columns.
    pub fn eval_batch(&self, rows: &[f64]) -> Result<Vec<f64>> {
        let n = self.n_features;
        if !rows.len().is_multiple_of(n) {
            return Err(Error::InvalidInput(format!(
                "matrix buffer of length {} is not a whole number of {n}-wide rows",
                rows.len()
            )));
        }
        let mut out = vec![0.0; rows.len() / n];
        out.par_chunks_mut(PAR_CHUNK)
            .zip(rows.par_chunks(PAR_CHUNK * n))
            .for_each(|(o, r)| {
                for (dst, x) in o.iter_mut().zip(r.chunks_exact(n)) {
                    *dst = self.eval_unchecked(x);
                }
            });
        Ok(out)
    }
}

/// The implicit model: a non-empty family of polynomials sharing one
/// feature dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct PolynomialSet {
    n_features: usize,
    polys: Vec<SparsePolynomial>,
}

impl PolynomialSet {
    pub fn new(polys: Vec<SparsePolynomial>) -> Result<Self> {
        let first = polys
            .first()
            .ok_or_else(|| Error::InvalidInput("polynomial set must not be empty".into()))?;
        let n_features = first.n_features();
        if let Some(p) = polys.iter().find(|p| p.n_features() != n_features) {
            return Err(Error::DimensionMismatch {
                expected: n_features,
                actual: p.n_features(),
            });
        }
        Ok(Self { n_features, polys })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn polys(&self) -> &[SparsePolynomial] {
        &self.polys
    }

    pub fn len(&self) -> usize {
        self.polys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polys.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&SparsePolynomial> {
        self.polys.get(index)
    }

    /// Total number of active coefficients across the family.
    pub fn count_active_coefficients(&self) -> usize {
        self.polys.iter().map(SparsePolynomial::n_terms).sum()
    }

    /// Row-major `len() × n_rows` table of every polynomial evaluated on
    /// every row.
    pub(crate) fn eval_table(&self, rows: &[f64]) -> Vec<Vec<f64>> {
        self.polys
            .iter()
            .map(|p| p.eval_batch(rows).expect("row width checked by caller"))
            .collect()
    }
}

/// Binomial coefficient `C(n, k)`; saturates on overflow.
pub fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n.saturating_sub(k));
    let mut acc: usize = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// All monomials over `n_features` inputs with total degree at most
/// `max_degree`, in graded lexicographic order: by total degree, then by
/// exponent vector in decreasing lexicographic order (`x1` before `x2`).
pub fn monomial_dictionary(n_features: usize, max_degree: u32) -> Vec<Monomial> {
    let mut out = Vec::with_capacity(binomial(
        n_features + max_degree as usize,
        max_degree as usize,
    ));
    let mut buf = vec![0u32; n_features];
    for degree in 0..=max_degree {
        push_exact_degree(&mut buf, 0, degree, &mut out);
    }
    out
}

fn push_exact_degree(buf: &mut [u32], pos: usize, remaining: u32, out: &mut Vec<Monomial>) {
    if pos + 1 == buf.len() {
        buf[pos] = remaining;
        out.push(Monomial::new(buf.to_vec()));
        buf[pos] = 0;
        return;
    }
    if buf.is_empty() {
        return;
    }
    for p in (0..=remaining).rev() {
        buf[pos] = p;
        push_exact_degree(buf, pos + 1, remaining - p, out);
    }
    buf[pos] = 0;
}

/// Samples `n_modes` distinct monomials uniformly without replacement from
/// the degree-`max_degree` dictionary, each with a coefficient drawn from
/// `U[-1, 1]`. Terms come out in dictionary order.
pub fn random_polynomial<R: Rng + ?Sized>(
    n_features: usize,
    max_degree: u32,
    n_modes: usize,
    rng: &mut R,
) -> Result<SparsePolynomial> {
    let dict = monomial_dictionary(n_features, max_degree);
    sample_from(n_features, &dict, n_modes, rng)
}

/// Like [`random_polynomial`] but never selects the constant monomial,
/// which shifts every projected value equally and cannot split the data.
pub fn random_partition_polynomial<R: Rng + ?Sized>(
    n_features: usize,
    max_degree: u32,
    n_modes: usize,
    rng: &mut R,
) -> Result<SparsePolynomial> {
    let dict: Vec<Monomial> = monomial_dictionary(n_features, max_degree)
        .into_iter()
        .filter(|m| !m.is_constant())
        .collect();
    sample_from(n_features, &dict, n_modes, rng)
}

fn sample_from<R: Rng + ?Sized>(
    n_features: usize,
    dict: &[Monomial],
    n_modes: usize,
    rng: &mut R,
) -> Result<SparsePolynomial> {
    if n_modes == 0 || n_modes > dict.len() {
        return Err(Error::InvalidInput(format!(
            "n_modes = {n_modes} outside 1..={} for this dictionary",
            dict.len()
        )));
    }
    let mut picked = index::sample(rng, dict.len(), n_modes).into_vec();
    picked.sort_unstable();
    let terms = picked
        .into_iter()
        .map(|i| {
            let mut c = 0.0;
            while c == 0.0 {
                c = rng.random_range(-1.0..=1.0);
            }
            Term {
                coefficient: c,
                monomial: dict[i].clone(),
            }
        })
        .collect();
    SparsePolynomial::new(n_features, terms)
}
