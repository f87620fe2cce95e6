//! Explicit piece-wise model: an ensemble of voters, each pairing a
//! partitioning triplet with a region-to-polynomial map over a shared
//! implicit polynomial family. Predictions average the voters.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{mae, mse};
use crate::partition::PartitioningTriplet;
use crate::poly::{binomial, random_partition_polynomial, PolynomialSet};

/// Resampling budget for partition polynomials that turn out constant on
/// the training rows.
const DEGENERATE_RETRIES: usize = 100;

/// Error measure used for the ensemble precision.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecisionMeasure {
    #[default]
    Mae,
    Mse,
}

impl PrecisionMeasure {
    pub fn eval(self, pred: &[f64], truth: &[f64]) -> f64 {
        match self {
            PrecisionMeasure::Mae => mae(pred, truth),
            PrecisionMeasure::Mse => mse(pred, truth),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplicitFitConfig {
    /// Candidate trials after the initial voter.
    pub n_v_max: usize,
    /// Contraction factor a candidate must achieve on the precision.
    #[serde(with = "crate::real")]
    pub gamma_c: f64,
    pub deg_part: u32,
    /// Fraction of highest-error rows eligible as new centres.
    #[serde(with = "crate::real")]
    pub eta_top: f64,
    pub n_d: usize,
    pub n_modes_part: usize,
    pub measure: PrecisionMeasure,
    pub seed: u64,
}

impl Default for ExplicitFitConfig {
    fn default() -> Self {
        Self {
            n_v_max: 20,
            gamma_c: 0.999,
            deg_part: 3,
            eta_top: 0.05,
            n_d: 50,
            n_modes_part: 20,
            measure: PrecisionMeasure::Mae,
            seed: 0,
        }
    }
}

impl ExplicitFitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.to_owned()));
        if !(self.gamma_c > 0.0 && self.gamma_c < 1.0) {
            return bad("gamma_c must lie in (0, 1)");
        }
        if !(self.eta_top > 0.0 && self.eta_top < 1.0) {
            return bad("eta_top must lie in (0, 1)");
        }
        if self.n_d < 2 {
            return bad("n_d must be at least 2");
        }
        if self.n_modes_part == 0 {
            return bad("n_modes_part must be at least 1");
        }
        if self.deg_part == 0 {
            return bad("deg_part must be at least 1");
        }
        Ok(())
    }
}

/// A partition and the polynomial index chosen for each of its regions.
#[derive(Clone, Debug, PartialEq)]
pub struct Voter {
    pub triplet: PartitioningTriplet,
    /// Zero-based polynomial index per zero-based region.
    pub kappa_map: Vec<usize>,
}

impl Voter {
    pub fn new(triplet: PartitioningTriplet, kappa_map: Vec<usize>) -> Result<Self> {
        if kappa_map.len() != triplet.n_d() {
            return Err(Error::InvalidInput(format!(
                "kappa map has {} entries for {} regions",
                kappa_map.len(),
                triplet.n_d()
            )));
        }
        Ok(Self { triplet, kappa_map })
    }

    fn check_indices(&self, n_m: usize) -> Result<()> {
        if let Some(k) = self.kappa_map.iter().find(|&&k| k >= n_m) {
            return Err(Error::InvalidInput(format!(
                "kappa map references polynomial {k} of {n_m}"
            )));
        }
        Ok(())
    }
}

/// What the fit recorded about its trial loop.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Precision after each accepted voter, starting with the initial one.
    #[serde(with = "crate::real::vec")]
    pub epsilons: Vec<f64>,
    /// Candidate evaluations performed.
    pub trials: usize,
    /// One-based trial numbers whose candidate was accepted.
    pub accepted_trials: Vec<usize>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExplicitModel {
    poly_set: PolynomialSet,
    voters: Vec<Voter>,
    report: FitReport,
}

impl ExplicitModel {
    pub fn new(poly_set: PolynomialSet, voters: Vec<Voter>, report: FitReport) -> Result<Self> {
        if voters.is_empty() {
            return Err(Error::InvalidInput(
                "explicit model needs at least one voter".into(),
            ));
        }
        for v in &voters {
            v.check_indices(poly_set.len())?;
            if v.triplet.n_features() != poly_set.n_features() {
                return Err(Error::DimensionMismatch {
                    expected: poly_set.n_features(),
                    actual: v.triplet.n_features(),
                });
            }
        }
        Ok(Self {
            poly_set,
            voters,
            report,
        })
    }

    pub fn poly_set(&self) -> &PolynomialSet {
        &self.poly_set
    }

    pub fn voters(&self) -> &[Voter] {
        &self.voters
    }

    pub fn report(&self) -> &FitReport {
        &self.report
    }

    pub fn n_features(&self) -> usize {
        self.poly_set.n_features()
    }

    /// Active coefficients of the shared polynomial family.
    pub fn count_active_coefficients(&self) -> usize {
        self.poly_set.count_active_coefficients()
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        ensemble_predict(self, x)
    }

    /// Predictions for every row of a row-major matrix.
    pub fn predict_rows(&self, rows: &[f64]) -> Result<Vec<f64>> {
        let n = self.n_features();
        if !rows.len().is_multiple_of(n) {
            return Err(Error::InvalidInput(format!(
                "matrix buffer of length {} is not a whole number of {n}-wide rows",
                rows.len()
            )));
        }
        Ok(rows
            .par_chunks(n)
            .map(|x| ensemble_unchecked(&self.poly_set, &self.voters, x))
            .collect())
    }
}

/// `P_{κ(σ(x))}(x)` for one voter.
pub fn voter_predict(v: &Voter, set: &PolynomialSet, x: &[f64]) -> Result<f64> {
    let region = v.triplet.sigma(x)?;
    let k = v.kappa_map[region];
    set.get(k)
        .ok_or_else(|| Error::InvalidInput(format!("kappa map references polynomial {k}")))?
        .eval(x)
}

fn ensemble_unchecked(set: &PolynomialSet, voters: &[Voter], x: &[f64]) -> f64 {
    let mut buf = vec![0.0; x.len()];
    let mut sum = 0.0;
    for v in voters {
        let t = &v.triplet;
        for ((b, xv), c) in buf.iter_mut().zip(x).zip(t.center()) {
            *b = xv - c;
        }
        let region = t.region_of_value(t.pi().eval_unchecked(&buf));
        sum += set.polys()[v.kappa_map[region]].eval_unchecked(x);
    }
    sum / voters.len() as f64
}

/// Mean of the voters' predictions, summed in voter order.
pub fn ensemble_predict(m: &ExplicitModel, x: &[f64]) -> Result<f64> {
    if x.len() != m.n_features() {
        return Err(Error::DimensionMismatch {
            expected: m.n_features(),
            actual: x.len(),
        });
    }
    Ok(ensemble_unchecked(&m.poly_set, &m.voters, x))
}

/// Precision of a voter set on a dataset.
pub fn precision(
    voters: &[Voter],
    set: &PolynomialSet,
    d: &Dataset,
    measure: PrecisionMeasure,
) -> Result<f64> {
    if d.is_empty() {
        return Err(Error::InvalidInput(
            "precision needs a non-empty dataset".into(),
        ));
    }
    if voters.is_empty() {
        return Err(Error::InvalidInput(
            "precision needs at least one voter".into(),
        ));
    }
    if d.n_features() != set.n_features() {
        return Err(Error::DimensionMismatch {
            expected: set.n_features(),
            actual: d.n_features(),
        });
    }
    for v in voters {
        v.check_indices(set.len())?;
    }
    let pred: Vec<f64> = d
        .features()
        .par_chunks(d.n_features())
        .map(|x| ensemble_unchecked(set, voters, x))
        .collect();
    Ok(measure.eval(&pred, d.labels()))
}

/// Per-region argmin of summed absolute errors. `abs_err[k][t]` is
/// `|P_k(x_t) − y_t|`; regions without samples take the global argmin.
fn kappa_map_from(regions: &[usize], abs_err: &[Vec<f64>], n_d: usize) -> Vec<usize> {
    let n_m = abs_err.len();
    let mut sums = vec![0.0; n_d * n_m];
    let mut counts = vec![0usize; n_d];
    let mut global = vec![0.0; n_m];
    for (k, errs) in abs_err.iter().enumerate() {
        for (&r, &e) in regions.iter().zip(errs) {
            sums[r * n_m + k] += e;
            global[k] += e;
        }
    }
    for &r in regions {
        counts[r] += 1;
    }
    let argmin = |v: &[f64]| {
        let mut best = 0;
        for (k, &s) in v.iter().enumerate() {
            if s < v[best] {
                best = k;
            }
        }
        best
    };
    let fallback = argmin(&global);
    (0..n_d)
        .map(|r| {
            if counts[r] == 0 {
                fallback
            } else {
                argmin(&sums[r * n_m..(r + 1) * n_m])
            }
        })
        .collect()
}

/// For each region of `t`, the polynomial with the smallest summed absolute
/// error over the training rows in that region (smallest index on ties).
/// Regions holding no training row take the best polynomial overall.
pub fn best_poly_per_region(
    t: &PartitioningTriplet,
    set: &PolynomialSet,
    train: &Dataset,
) -> Result<Vec<usize>> {
    if train.n_features() != set.n_features() || t.n_features() != set.n_features() {
        return Err(Error::DimensionMismatch {
            expected: set.n_features(),
            actual: train.n_features(),
        });
    }
    let regions = t.assign(train.features())?;
    let abs_err = abs_error_table(set, train);
    Ok(kappa_map_from(&regions, &abs_err, t.n_d()))
}

fn abs_error_table(set: &PolynomialSet, d: &Dataset) -> Vec<Vec<f64>> {
    set.eval_table(d.features())
        .into_iter()
        .map(|pred| {
            pred.iter()
                .zip(d.labels())
                .map(|(p, y)| (p - y).abs())
                .collect()
        })
        .collect()
}

/// Row index of a uniformly drawn sample among the
/// `max(1, floor(eta_top · c))` largest errors (ties by row order).
pub fn select_center_index<R: Rng + ?Sized>(
    errors: &[f64],
    eta_top: f64,
    rng: &mut R,
) -> Result<usize> {
    if errors.is_empty() {
        return Err(Error::InvalidInput("no errors to select from".into()));
    }
    let pool = top_error_rows(errors, eta_top);
    Ok(*pool.choose(rng).expect("pool is non-empty"))
}

/// The candidate pool for [`select_center_index`], highest error first.
pub fn top_error_rows(errors: &[f64], eta_top: f64) -> Vec<usize> {
    let n_top = ((eta_top * errors.len() as f64).floor() as usize).clamp(1, errors.len());
    let mut order: Vec<usize> = (0..errors.len()).collect();
    let cmp = |a: &usize, b: &usize| errors[*b].total_cmp(&errors[*a]).then(a.cmp(b));
    if n_top < order.len() {
        order.select_nth_unstable_by(n_top - 1, cmp);
        order.truncate(n_top);
    }
    order.sort_unstable_by(cmp);
    order
}

/// Feature row of a centre drawn by [`select_center_index`].
pub fn select_center<R: Rng + ?Sized>(
    train: &Dataset,
    errors: &[f64],
    eta_top: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if errors.len() != train.n_rows() {
        return Err(Error::InvalidInput(format!(
            "{} errors for {} training rows",
            errors.len(),
            train.n_rows()
        )));
    }
    let i = select_center_index(errors, eta_top, rng)?;
    Ok(train.row(i).to_vec())
}

struct Candidate {
    voter: Voter,
    /// The voter's prediction on each training row.
    train_pred: Vec<f64>,
}

fn build_candidate<R: Rng + ?Sized>(
    train: &Dataset,
    pred: &[Vec<f64>],
    abs_err: &[Vec<f64>],
    cfg: &ExplicitFitConfig,
    center: Vec<f64>,
    rng: &mut R,
) -> Result<Candidate> {
    let n = train.n_features();
    for _ in 0..DEGENERATE_RETRIES {
        let pi = random_partition_polynomial(n, cfg.deg_part, cfg.n_modes_part, rng)?;
        let triplet = match PartitioningTriplet::fit(pi, cfg.n_d, center.clone(), train.features())
        {
            Ok(t) => t,
            Err(Error::DegeneratePartition) => continue,
            Err(e) => return Err(e),
        };
        let regions = triplet.assign(train.features())?;
        let kappa_map = kappa_map_from(&regions, abs_err, cfg.n_d);
        let train_pred = regions
            .iter()
            .enumerate()
            .map(|(t, &r)| pred[kappa_map[r]][t])
            .collect();
        return Ok(Candidate {
            voter: Voter::new(triplet, kappa_map)?,
            train_pred,
        });
    }
    Err(Error::DegeneratePartition)
}

/// Grows the voter ensemble.
///
/// The first voter is centred at the origin and always kept. Each of the
/// `n_v_max` trials then centres a fresh random partition at one of the
/// highest-error training rows and keeps it only if the enlarged ensemble's
/// precision is at most `gamma_c` times the last accepted precision.
///
/// `n_modes_part` is capped at the number of non-constant monomials of
/// degree at most `deg_part`.
pub fn fit_explicit(
    set: &PolynomialSet,
    train: &Dataset,
    cfg: &ExplicitFitConfig,
) -> Result<ExplicitModel> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    if train.n_features() != set.n_features() {
        return Err(Error::DimensionMismatch {
            expected: set.n_features(),
            actual: train.n_features(),
        });
    }
    let available = binomial(
        set.n_features() + cfg.deg_part as usize,
        cfg.deg_part as usize,
    ) - 1;
    if available == 0 {
        return Err(Error::InvalidInput("deg_part must be at least 1".into()));
    }
    let clamped;
    let cfg = if cfg.n_modes_part > available {
        log::warn!(
            "n_modes_part {} exceeds the {available} non-constant monomials; using {available}",
            cfg.n_modes_part
        );
        clamped = ExplicitFitConfig {
            n_modes_part: available,
            ..cfg.clone()
        };
        &clamped
    } else {
        cfg
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let y = train.labels();
    let c = train.n_rows();
    let pred = set.eval_table(train.features());
    let abs_err: Vec<Vec<f64>> = pred
        .iter()
        .map(|p| p.iter().zip(y).map(|(a, b)| (a - b).abs()).collect())
        .collect();

    let first = build_candidate(
        train,
        &pred,
        &abs_err,
        cfg,
        vec![0.0; set.n_features()],
        &mut rng,
    )?;
    let mut sum = first.train_pred;
    let mut voters = vec![first.voter];
    let mut eps = cfg.measure.eval(&sum, y);
    let mut report = FitReport {
        epsilons: vec![eps],
        trials: 0,
        accepted_trials: Vec::new(),
        seed: cfg.seed,
    };

    let mut ens = vec![0.0; c];
    for trial in 1..=cfg.n_v_max {
        if eps == 0.0 {
            break;
        }
        let n_v = voters.len() as f64;
        let errors: Vec<f64> = sum
            .iter()
            .zip(y)
            .map(|(s, t)| (s / n_v - t).abs())
            .collect();
        let center_row = select_center_index(&errors, cfg.eta_top, &mut rng)?;
        report.trials += 1;
        let cand = match build_candidate(
            train,
            &pred,
            &abs_err,
            cfg,
            train.row(center_row).to_vec(),
            &mut rng,
        ) {
            Ok(cand) => cand,
            Err(Error::DegeneratePartition) => continue,
            Err(e) => return Err(e),
        };
        let n_cand = n_v + 1.0;
        for ((e, s), p) in ens.iter_mut().zip(&sum).zip(&cand.train_pred) {
            *e = (s + p) / n_cand;
        }
        let eps_cand = cfg.measure.eval(&ens, y);
        log::debug!(
            "trial {trial}: candidate precision {eps_cand}, bar {}",
            cfg.gamma_c * eps
        );
        if eps_cand <= cfg.gamma_c * eps {
            sum.iter_mut()
                .zip(&cand.train_pred)
                .for_each(|(s, p)| *s += p);
            voters.push(cand.voter);
            eps = eps_cand;
            report.epsilons.push(eps);
            report.accepted_trials.push(trial);
        }
    }

    ExplicitModel::new(set.clone(), voters, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::SparsePolynomial;

    fn lin(c: f64) -> SparsePolynomial {
        SparsePolynomial::from_pairs(1, &[(c, &[1])]).unwrap()
    }

    fn identity_triplet(boundaries: Vec<f64>) -> PartitioningTriplet {
        let n_d = boundaries.len() + 1;
        PartitioningTriplet::from_parts(lin(1.0), n_d, vec![0.0], boundaries).unwrap()
    }

    #[test]
    fn one_region_exact_fit() {
        let set = PolynomialSet::new(vec![lin(1.0), lin(2.0)]).unwrap();
        let d = Dataset::from_rows(&[vec![1.0], vec![2.0]], vec![1.0, 2.0]).unwrap();
        // Boundary above every sample: everything lands in region 0.
        let t = identity_triplet(vec![10.0]);
        let k = best_poly_per_region(&t, &set, &d).unwrap();
        assert_eq!(k[0], 0);
    }

    #[test]
    fn empty_region_uses_global_best() {
        let set = PolynomialSet::new(vec![lin(1.0), lin(2.0)]).unwrap();
        let d =
            Dataset::from_rows(&[vec![1.0], vec![2.0], vec![3.0]], vec![2.0, 4.0, 6.0]).unwrap();
        let t = identity_triplet(vec![100.0]);
        assert_eq!(best_poly_per_region(&t, &set, &d).unwrap(), vec![1, 1]);
    }

    #[test]
    fn voter_dispatch_and_boundary() {
        let set = PolynomialSet::new(vec![lin(1.0), lin(2.0)]).unwrap();
        let v = Voter::new(identity_triplet(vec![0.0]), vec![0, 1]).unwrap();
        assert_eq!(voter_predict(&v, &set, &[-1.0]).unwrap(), -1.0);
        assert_eq!(voter_predict(&v, &set, &[0.0]).unwrap(), 0.0);
        assert_eq!(voter_predict(&v, &set, &[3.0]).unwrap(), 6.0);
    }

    #[test]
    fn ensemble_averages() {
        let zero = SparsePolynomial::constant(1, 0.0).unwrap();
        let two = SparsePolynomial::constant(1, 2.0).unwrap();
        let set = PolynomialSet::new(vec![zero, two]).unwrap();
        let v0 = Voter::new(identity_triplet(vec![0.0]), vec![0, 0]).unwrap();
        let v1 = Voter::new(identity_triplet(vec![0.0]), vec![1, 1]).unwrap();
        let single =
            ExplicitModel::new(set.clone(), vec![v1.clone()], FitReport::default()).unwrap();
        assert_eq!(single.predict(&[0.3]).unwrap(), 2.0);
        let m = ExplicitModel::new(set, vec![v0, v1], FitReport::default()).unwrap();
        assert_eq!(m.predict(&[0.3]).unwrap(), 1.0);
        assert!(m.predict(&[0.3, 1.0]).is_err());
    }

    #[test]
    fn model_rejects_bad_indices() {
        let set = PolynomialSet::new(vec![lin(1.0)]).unwrap();
        let v = Voter::new(identity_triplet(vec![0.0]), vec![0, 1]).unwrap();
        assert!(ExplicitModel::new(set.clone(), vec![v], FitReport::default()).is_err());
        assert!(ExplicitModel::new(set, vec![], FitReport::default()).is_err());
        assert!(Voter::new(identity_triplet(vec![0.0]), vec![0]).is_err());
    }

    #[test]
    fn precision_of_zero_model_is_label_mae() {
        let zero = SparsePolynomial::constant(1, 0.0).unwrap();
        let set = PolynomialSet::new(vec![zero]).unwrap();
        let v = Voter::new(identity_triplet(vec![0.0]), vec![0, 0]).unwrap();
        let d = Dataset::from_rows(&[vec![1.0], vec![2.0]], vec![1.0, -3.0]).unwrap();
        assert_eq!(
            precision(&[v], &set, &d, PrecisionMeasure::Mae).unwrap(),
            2.0
        );
    }

    #[test]
    fn center_pool() {
        let errors: Vec<f64> = (0..100).map(f64::from).collect();
        assert_eq!(top_error_rows(&errors, 0.05), vec![99, 98, 97, 96, 95]);
        assert_eq!(top_error_rows(&errors, 0.001), vec![99]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            assert_eq!(select_center_index(&errors, 0.001, &mut rng).unwrap(), 99);
        }
        let flat = vec![1.0; 100];
        assert_eq!(top_error_rows(&flat, 0.05), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn center_equal_errors_is_uniform_over_pool() {
        let flat = vec![1.0; 100];
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut hits = [0usize; 5];
        let draws = 10_000;
        for _ in 0..draws {
            let i = select_center_index(&flat, 0.05, &mut rng).unwrap();
            assert!(i < 5);
            hits[i] += 1;
        }
        // Each bin expects 2000 with std ≈ 40.
        for h in hits {
            assert!((h as f64 - 2000.0).abs() < 200.0, "{hits:?}");
        }
    }

    #[test]
    fn perfect_polynomial_keeps_one_voter() {
        let p = SparsePolynomial::from_pairs(2, &[(1.5, &[1, 1]), (-0.5, &[0, 2])]).unwrap();
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()])
            .collect();
        let y = rows.iter().map(|r| p.eval(r).unwrap()).collect();
        let d = Dataset::from_rows(&rows, y).unwrap();
        let set = PolynomialSet::new(vec![p]).unwrap();
        let cfg = ExplicitFitConfig {
            n_modes_part: 5,
            ..Default::default()
        };
        let m = fit_explicit(&set, &d, &cfg).unwrap();
        assert_eq!(m.voters().len(), 1);
        assert_eq!(m.report().epsilons, vec![0.0]);
        assert_eq!(
            precision(m.voters(), m.poly_set(), &d, PrecisionMeasure::Mae).unwrap(),
            0.0
        );
    }

    #[test]
    fn config_validation() {
        let bad = ExplicitFitConfig {
            gamma_c: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ExplicitFitConfig {
            n_d: 1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
