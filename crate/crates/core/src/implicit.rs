//! Implicit piece-wise model: a family of sparse polynomials such that every
//! training label lies close to at least one of them.
//!
//! The fit is a greedy coverage loop. Each round proposes one polynomial,
//! keeps it if it covers enough of the still-uncovered samples within the
//! current threshold, and otherwise escalates the threshold.

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::mean_abs;
use crate::poly::{monomial_dictionary, Monomial, PolynomialSet, SparsePolynomial, Term};

/// Minimum relative drop in squared residual norm for a new term to be kept.
const OMP_REL_TOL: f64 = 1e-6;
/// A candidate column whose component orthogonal to the support is below
/// this fraction of its norm is treated as rank deficient.
const RANK_TOL: f64 = 1e-9;
/// Thresholds beyond this multiple of `MAE(y)` count as divergence.
const DIVERGENCE_FACTOR: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImplicitFitConfig {
    pub max_degree: u32,
    /// Starting threshold as a fraction of `MAE(y)`.
    #[serde(with = "crate::real")]
    pub initial_threshold: f64,
    #[serde(with = "crate::real")]
    pub threshold_growth: f64,
    pub max_terms_per_poly: usize,
    /// Fraction of the uncovered samples a proposal must cover to be kept.
    #[serde(with = "crate::real")]
    pub min_new_coverage: f64,
    pub max_polys: usize,
    /// Local proposals per round, each seeded at a random uncovered sample.
    pub local_attempts: usize,
    /// Samples in each local proposal's neighbourhood, as a multiple of
    /// `max_terms_per_poly`.
    pub neighbourhood_factor: usize,
    /// Trimmed refits per local proposal: each refits on the best-fitting
    /// half of the neighbourhood.
    pub trim_rounds: usize,
    /// Region-growing refits per proposal.
    pub refine_rounds: usize,
    pub seed: u64,
}

impl Default for ImplicitFitConfig {
    fn default() -> Self {
        Self {
            max_degree: 3,
            initial_threshold: 0.05,
            threshold_growth: 1.5,
            max_terms_per_poly: 50,
            min_new_coverage: 0.01,
            max_polys: 30,
            local_attempts: 16,
            neighbourhood_factor: 40,
            trim_rounds: 60,
            refine_rounds: 8,
            seed: 0,
        }
    }
}

impl ImplicitFitConfig {
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.to_owned()));
        if !(self.initial_threshold > 0.0) {
            return bad("initial threshold must be positive");
        }
        if !(self.threshold_growth > 1.0) {
            return bad("threshold growth must exceed 1");
        }
        if self.max_terms_per_poly == 0 {
            return bad("max_terms_per_poly must be at least 1");
        }
        if !(self.min_new_coverage > 0.0 && self.min_new_coverage < 1.0) {
            return bad("min_new_coverage must lie in (0, 1)");
        }
        if self.max_polys == 0 {
            return bad("max_polys must be at least 1");
        }
        if self.neighbourhood_factor == 0 {
            return bad("neighbourhood_factor must be at least 1");
        }
        Ok(())
    }
}

/// Result of [`fit_implicit`].
#[derive(Clone, Debug, PartialEq)]
pub struct ImplicitFit {
    pub set: PolynomialSet,
    /// Absolute threshold the loop started from.
    pub initial_threshold: f64,
    /// Absolute threshold under which every training sample is covered.
    pub final_threshold: f64,
    pub escalations: usize,
}

/// `min_κ |y − P_κ(x)|` and the smallest index achieving it.
pub fn implicit_residual(set: &PolynomialSet, x: &[f64], y: f64) -> Result<(f64, usize)> {
    if x.len() != set.n_features() {
        return Err(Error::DimensionMismatch {
            expected: set.n_features(),
            actual: x.len(),
        });
    }
    let mut best = (f64::INFINITY, 0);
    for (k, p) in set.polys().iter().enumerate() {
        let e = (y - p.eval_unchecked(x)).abs();
        if e < best.0 {
            best = (e, k);
        }
    }
    Ok(best)
}

/// Column-major table of dictionary monomials evaluated on a set of rows.
struct Design {
    n_rows: usize,
    cols: Vec<f64>,
}

impl Design {
    fn build(rows: &[f64], n_features: usize, dict: &[Monomial]) -> Self {
        let n_rows = rows.len() / n_features;
        let mut cols = vec![0.0; n_rows * dict.len()];
        if n_rows > 0 {
            cols.par_chunks_mut(n_rows)
                .zip(dict.par_iter())
                .for_each(|(col, m)| {
                    for (dst, x) in col.iter_mut().zip(rows.chunks_exact(n_features)) {
                        *dst = m.eval(x);
                    }
                });
        }
        Self { n_rows, cols }
    }

    fn n_cols(&self) -> usize {
        self.cols.len().checked_div(self.n_rows).unwrap_or(0)
    }

    fn col(&self, j: usize) -> &[f64] {
        &self.cols[j * self.n_rows..(j + 1) * self.n_rows]
    }

    fn gather(&self, rows: &[usize]) -> Design {
        let m = rows.len();
        let mut cols = vec![0.0; m * self.n_cols()];
        if m > 0 {
            cols.par_chunks_mut(m).enumerate().for_each(|(j, dst)| {
                let src = self.col(j);
                for (d, &r) in dst.iter_mut().zip(rows) {
                    *d = src[r];
                }
            });
        }
        Design { n_rows: m, cols }
    }
}

/// Four-lane dot product; the summation order is fixed, so results are
/// reproducible across runs.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a4, a_tail) = a[..n].split_at(n - n % 4);
    let (b4, b_tail) = b[..n].split_at(n - n % 4);
    let mut acc = [0.0; 4];
    for (x, y) in a4.chunks_exact(4).zip(b4.chunks_exact(4)) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    let tail: f64 = a_tail.iter().zip(b_tail).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Greedy forward selection on the columns of `design`, returning
/// `(column, coefficient)` pairs in selection order.
fn omp_select(design: &Design, y: &[f64], max_terms: usize) -> Result<Vec<(usize, f64)>> {
    let m = design.n_rows;
    let n_cols = design.n_cols();
    let y_energy = dot(y, y);
    if y_energy == 0.0 {
        return Ok(Vec::new());
    }
    let norms: Vec<f64> = (0..n_cols)
        .into_par_iter()
        .map(|j| dot(design.col(j), design.col(j)).sqrt())
        .collect();
    let mut usable: Vec<bool> = norms.iter().map(|&n| n > 0.0).collect();
    let mut support: Vec<usize> = Vec::new();
    let mut q: Vec<Vec<f64>> = Vec::new();
    // Upper-triangular factor, stored by column.
    let mut r_cols: Vec<Vec<f64>> = Vec::new();
    let mut qty: Vec<f64> = Vec::new();
    let mut resid = y.to_vec();
    let limit = max_terms.min(m).min(n_cols);

    while support.len() < limit {
        let resid_energy = dot(&resid, &resid);
        if resid_energy <= f64::EPSILON * f64::EPSILON * y_energy {
            break;
        }
        let mut scores: Vec<(usize, f64)> = (0..n_cols)
            .into_par_iter()
            .filter(|&j| usable[j])
            .map(|j| (j, dot(design.col(j), &resid).abs() / norms[j]))
            .collect();
        scores.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

        let mut added = false;
        for &(j, score) in &scores {
            if score == 0.0 {
                break;
            }
            let col = design.col(j);
            let mut w = col.to_vec();
            let mut coeffs = vec![0.0; q.len()];
            // Two Gram-Schmidt passes.
            for _ in 0..2 {
                for (c, qi) in coeffs.iter_mut().zip(&q) {
                    let h = dot(qi, &w);
                    *c += h;
                    w.iter_mut().zip(qi).for_each(|(wv, qv)| *wv -= h * qv);
                }
            }
            let w_norm = dot(&w, &w).sqrt();
            if w_norm <= RANK_TOL * norms[j] {
                usable[j] = false;
                continue;
            }
            w.iter_mut().for_each(|v| *v /= w_norm);
            let proj = dot(&w, &resid);
            if proj * proj < OMP_REL_TOL * y_energy {
                // Improvement per term below tolerance: stop selecting.
                added = false;
                break;
            }
            resid.iter_mut().zip(&w).for_each(|(r, wv)| *r -= proj * wv);
            coeffs.push(w_norm);
            r_cols.push(coeffs);
            qty.push(dot(&w, y));
            q.push(w);
            support.push(j);
            usable[j] = false;
            added = true;
            break;
        }
        if !added {
            break;
        }
    }

    if support.is_empty() {
        return Err(Error::FittingStalled);
    }
    // Back substitution on R c = Qᵀ y.
    let k = support.len();
    let mut c = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = qty[i];
        for (jj, cj) in c.iter().enumerate().skip(i + 1) {
            s -= r_cols[jj][i] * cj;
        }
        c[i] = s / r_cols[i][i];
    }
    Ok(support.into_iter().zip(c).collect())
}

fn to_polynomial(
    n_features: usize,
    dict: &[Monomial],
    mut picked: Vec<(usize, f64)>,
) -> Result<SparsePolynomial> {
    picked.sort_by_key(|p| p.0);
    let terms = picked
        .into_iter()
        .map(|(j, c)| Term {
            coefficient: c,
            monomial: dict[j].clone(),
        })
        .collect();
    SparsePolynomial::new(n_features, terms)
}

/// Greedy sparse least-squares fit over `dictionary`: repeatedly adds the
/// monomial whose normalized correlation with the residual is largest and
/// refits all coefficients on the support. Stops at `max_terms` or when a
/// term would reduce the squared residual by less than `1e-6 · ‖y‖²`.
///
/// `x` is row-major with `n_features` columns.
pub fn omp_sparse_fit(
    x: &[f64],
    n_features: usize,
    y: &[f64],
    dictionary: &[Monomial],
    max_terms: usize,
) -> Result<SparsePolynomial> {
    if y.is_empty() || x.len() != y.len() * n_features {
        return Err(Error::InvalidInput(
            "sparse fit needs at least one sample and matching row widths".into(),
        ));
    }
    if max_terms == 0 {
        return Err(Error::InvalidInput("max_terms must be at least 1".into()));
    }
    if let Some(m) = dictionary.iter().find(|m| m.n_features() != n_features) {
        return Err(Error::DimensionMismatch {
            expected: n_features,
            actual: m.n_features(),
        });
    }
    let design = Design::build(x, n_features, dictionary);
    let picked = omp_select(&design, y, max_terms)?;
    to_polynomial(n_features, dictionary, picked)
}

struct Proposal {
    poly: SparsePolynomial,
    covered: Vec<usize>,
}

struct Fitter<'a> {
    data: &'a Dataset,
    cfg: &'a ImplicitFitConfig,
    dict: Vec<Monomial>,
    design: Design,
    inv_scale: Vec<f64>,
}

impl Fitter<'_> {
    fn fit_on(&self, rows: &[usize]) -> Result<SparsePolynomial> {
        let sub = self.design.gather(rows);
        let y: Vec<f64> = rows.iter().map(|&r| self.data.labels()[r]).collect();
        let picked = omp_select(&sub, &y, self.cfg.max_terms_per_poly)?;
        to_polynomial(self.data.n_features(), &self.dict, picked)
    }

    fn covered_by(&self, p: &SparsePolynomial, pool: &[usize], th: f64) -> Vec<usize> {
        pool.par_iter()
            .copied()
            .filter(|&r| (self.data.labels()[r] - p.eval_unchecked(self.data.row(r))).abs() <= th)
            .collect()
    }

    /// The `k` samples of `pool` with the smallest residual under `p`.
    fn best_fitting(&self, p: &SparsePolynomial, pool: &[usize], k: usize) -> Vec<usize> {
        let mut r: Vec<(f64, usize)> = pool
            .par_iter()
            .map(|&i| {
                (
                    (self.data.labels()[i] - p.eval_unchecked(self.data.row(i))).abs(),
                    i,
                )
            })
            .collect();
        r.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        r.truncate(k);
        let mut out: Vec<usize> = r.into_iter().map(|p| p.1).collect();
        out.sort_unstable();
        out
    }

    /// Fits on `start`, then repeatedly refits on whatever the current
    /// polynomial covers among `pool` until the covered set stops changing.
    fn grow(&self, start: &[usize], pool: &[usize], th: f64) -> Option<Proposal> {
        let mut poly = self.fit_on(start).ok()?;
        let keep = start.len().div_ceil(2);
        if start.len() < pool.len() {
            let mut kept: Vec<usize> = Vec::new();
            for _ in 0..self.cfg.trim_rounds {
                let next = self.best_fitting(&poly, start, keep);
                if next == kept {
                    break;
                }
                kept = next;
                poly = self.fit_on(&kept).ok()?;
            }
        }
        let covered = self.covered_by(&poly, pool, th);
        let mut best = Proposal { poly, covered };
        for _ in 0..self.cfg.refine_rounds {
            if best.covered.len() == pool.len() || best.covered.is_empty() {
                break;
            }
            let Ok(poly) = self.fit_on(&best.covered) else {
                break;
            };
            let covered = self.covered_by(&poly, pool, th);
            let grew = covered.len() > best.covered.len();
            let same = covered == best.covered;
            if covered.len() >= best.covered.len() {
                best = Proposal { poly, covered };
            }
            if !grew || same {
                break;
            }
        }
        Some(best)
    }

    /// The `k` samples of `pool` nearest to `seed` in standardized units.
    fn neighbourhood(&self, seed: usize, pool: &[usize], k: usize) -> Vec<usize> {
        let s = self.data.row(seed);
        let mut d: Vec<(f64, usize)> = pool
            .par_iter()
            .map(|&r| {
                let dist = self
                    .data
                    .row(r)
                    .iter()
                    .zip(s)
                    .zip(&self.inv_scale)
                    .map(|((a, b), w)| ((a - b) * w).powi(2))
                    .sum::<f64>();
                (dist, r)
            })
            .collect();
        if k < d.len() {
            d.select_nth_unstable_by(k, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            d.truncate(k);
        }
        let mut out: Vec<usize> = d.into_iter().map(|p| p.1).collect();
        out.sort_unstable();
        out
    }

    /// Best of a global proposal and `local_attempts` local ones.
    fn propose(&self, pool: &[usize], th: f64, rng: &mut ChaCha8Rng) -> Option<Proposal> {
        let mut best: Option<Proposal> = self.grow(pool, pool, th);
        let k = self.cfg.neighbourhood_factor * self.cfg.max_terms_per_poly;
        if k >= pool.len() {
            return best;
        }
        for _ in 0..self.cfg.local_attempts {
            if best.as_ref().is_some_and(|b| b.covered.len() == pool.len()) {
                break;
            }
            let &seed = pool.choose(rng)?;
            let local = self.neighbourhood(seed, pool, k);
            if let Some(p) = self.grow(&local, pool, th) {
                if best
                    .as_ref()
                    .is_none_or(|b| p.covered.len() > b.covered.len())
                {
                    best = Some(p);
                }
            }
        }
        best
    }
}

fn set_residuals(polys: &[SparsePolynomial], data: &Dataset, rows: &[usize]) -> Vec<f64> {
    rows.par_iter()
        .map(|&r| {
            let x = data.row(r);
            let y = data.labels()[r];
            polys
                .iter()
                .map(|p| (y - p.eval_unchecked(x)).abs())
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Builds the implicit polynomial family on `train`.
///
/// Every returned polynomial covered at least one previously uncovered
/// sample when it was accepted, and every training sample ends with
/// implicit residual at most [`ImplicitFit::final_threshold`].
pub fn fit_implicit(train: &Dataset, cfg: &ImplicitFitConfig) -> Result<ImplicitFit> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    let n = train.n_features();
    let mae_y = mean_abs(train.labels());
    if mae_y == 0.0 {
        let zero = SparsePolynomial::new(n, Vec::new())?;
        return Ok(ImplicitFit {
            set: PolynomialSet::new(vec![zero])?,
            initial_threshold: 0.0,
            final_threshold: 0.0,
            escalations: 0,
        });
    }
    let dict = monomial_dictionary(n, cfg.max_degree);
    let design = Design::build(train.features(), n, &dict);
    let inv_scale = feature_inverse_scales(train);
    let fitter = Fitter {
        data: train,
        cfg,
        dict,
        design,
        inv_scale,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let initial = cfg.initial_threshold * mae_y;
    let ceiling = DIVERGENCE_FACTOR * mae_y;
    let mut th = initial;
    let mut escalations = 0;
    let mut polys: Vec<SparsePolynomial> = Vec::new();
    let mut uncovered: Vec<usize> = (0..train.n_rows()).collect();

    let escalate = |th: &mut f64, esc: &mut usize, uncovered: &[usize]| -> Result<()> {
        *th *= cfg.threshold_growth;
        *esc += 1;
        log::debug!("threshold escalated to {th}");
        if *th > ceiling {
            return Err(Error::CoverageFailure {
                uncovered: uncovered.len(),
                total: train.n_rows(),
                threshold: *th,
            });
        }
        Ok(())
    };

    while !uncovered.is_empty() {
        if polys.len() == cfg.max_polys {
            escalate(&mut th, &mut escalations, &uncovered)?;
        } else {
            let need = ((cfg.min_new_coverage * uncovered.len() as f64).ceil() as usize).max(1);
            match fitter.propose(&uncovered, th, &mut rng) {
                Some(p) if p.covered.len() >= need => {
                    log::debug!(
                        "accepted polynomial {} with {} terms covering {} of {}",
                        polys.len() + 1,
                        p.poly.n_terms(),
                        p.covered.len(),
                        uncovered.len()
                    );
                    polys.push(p.poly);
                }
                _ => escalate(&mut th, &mut escalations, &uncovered)?,
            }
        }
        if !polys.is_empty() {
            let res = set_residuals(&polys, train, &uncovered);
            uncovered = uncovered
                .into_iter()
                .zip(res)
                .filter(|&(_, e)| e > th)
                .map(|(r, _)| r)
                .collect();
        }
    }

    Ok(ImplicitFit {
        set: PolynomialSet::new(polys)?,
        initial_threshold: initial,
        final_threshold: th,
        escalations,
    })
}

fn feature_inverse_scales(d: &Dataset) -> Vec<f64> {
    let n = d.n_features();
    let c = d.n_rows() as f64;
    let mut mean = vec![0.0; n];
    for row in d.rows() {
        mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= c);
    let mut var = vec![0.0; n];
    for row in d.rows() {
        var.iter_mut()
            .zip(row)
            .zip(&mean)
            .for_each(|((s, v), m)| *s += (v - m) * (v - m));
    }
    var.into_iter()
        .map(|s| {
            let sd = (s / c).sqrt();
            if sd > 0.0 {
                1.0 / sd
            } else {
                0.0
            }
        })
        .collect()
}
