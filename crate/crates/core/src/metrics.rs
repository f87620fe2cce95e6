//! Normalized error metrics and the centred generalization gap.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean of `|v|`, summed in order.
pub fn mean_abs(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64
}

pub fn mean_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64
}

/// Mean absolute difference, summed in order.
pub fn mae(pred: &[f64], truth: &[f64]) -> f64 {
    pred.iter()
        .zip(truth)
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / truth.len() as f64
}

pub fn mse(pred: &[f64], truth: &[f64]) -> f64 {
    pred.iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / truth.len() as f64
}

fn check(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() || truth.is_empty() {
        return Err(Error::InvalidInput(format!(
            "metric needs equal non-empty lengths, got {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    Ok(())
}

/// `MAE(pred − truth) / MAE(truth)`.
pub fn nmae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check(pred, truth)?;
    let denom = mean_abs(truth);
    if denom == 0.0 {
        return Err(Error::UndefinedNormalization);
    }
    Ok(mae(pred, truth) / denom)
}

/// `MSE(pred − truth) / MSE(truth)`.
pub fn nmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check(pred, truth)?;
    let denom = mean_sq(truth);
    if denom == 0.0 {
        return Err(Error::UndefinedNormalization);
    }
    Ok(mse(pred, truth) / denom)
}

/// `|nmae_test / nmae_train − 1|`. A zero training residual yields
/// `+∞` rather than an error, since exact training fits are legitimate.
pub fn generalization_gap(nmae_train: f64, nmae_test: f64) -> f64 {
    if nmae_train == 0.0 {
        log::warn!("training nMAE is exactly zero; generalization gap reported as +inf");
        return f64::INFINITY;
    }
    (nmae_test / nmae_train - 1.0).abs()
}

/// Normalized residual pair on one split.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitScores {
    pub nmae: f64,
    pub nmse: f64,
    pub samples: usize,
}

impl SplitScores {
    pub fn compute(pred: &[f64], truth: &[f64]) -> Result<Self> {
        Ok(Self {
            nmae: nmae(pred, truth)?,
            nmse: nmse(pred, truth)?,
            samples: truth.len(),
        })
    }
}

/// Train/test scores, gap and model size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub train: SplitScores,
    pub test: Option<SplitScores>,
    /// `None` when no test split was given; `+∞` is serialized as `null`.
    pub alpha_c: Option<f64>,
    pub n_coefficients: usize,
    pub n_polynomials: usize,
    pub n_voters: usize,
    pub fit_seconds: Option<f64>,
}

impl EvalReport {
    pub fn new(
        train: SplitScores,
        test: Option<SplitScores>,
        n_coefficients: usize,
        n_polynomials: usize,
        n_voters: usize,
    ) -> Self {
        let alpha_c = test.map(|t| generalization_gap(train.nmae, t.nmae));
        Self {
            train,
            test,
            alpha_c,
            n_coefficients,
            n_polynomials,
            n_voters,
            fit_seconds: None,
        }
    }

    /// Plain-text table with one `(nMAE, nMSE)` pair per split.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        s.push_str("split    samples     (nMAE, nMSE)\n");
        let row = |name: &str, sc: &SplitScores| {
            format!(
                "{name:<8} {:>9}   ({:.4}, {:.4})\n",
                sc.samples, sc.nmae, sc.nmse
            )
        };
        s.push_str(&row("train", &self.train));
        if let Some(t) = &self.test {
            s.push_str(&row("test", t));
        }
        if let Some(a) = self.alpha_c {
            s.push_str(&format!("alpha_c  {a:.4}\n"));
        }
        s.push_str(&format!(
            "model    n_m={} n_V={} coefficients={}\n",
            self.n_polynomials, self.n_voters, self.n_coefficients
        ));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_prediction_is_zero() {
        let t = [1.0, -2.0, 3.5];
        assert_eq!(nmae(&t, &t).unwrap(), 0.0);
        assert_eq!(nmse(&t, &t).unwrap(), 0.0);
    }

    #[test]
    fn zero_prediction_is_one() {
        let t = [1.0, -2.0, 3.5];
        let z = [0.0; 3];
        assert_eq!(nmae(&z, &t).unwrap(), 1.0);
        assert_eq!(nmse(&z, &t).unwrap(), 1.0);
    }

    #[test]
    fn small_arithmetic_case() {
        let t = [1.0, -1.0];
        let p = [2.0, 0.0];
        assert_eq!(nmae(&p, &t).unwrap(), 1.0);
        assert_eq!(nmse(&p, &t).unwrap(), 1.0);
    }

    #[test]
    fn zero_reference_is_an_error() {
        assert!(matches!(
            nmae(&[1.0], &[0.0]),
            Err(Error::UndefinedNormalization)
        ));
        assert!(matches!(
            nmse(&[1.0], &[0.0]),
            Err(Error::UndefinedNormalization)
        ));
        assert!(nmae(&[1.0, 2.0], &[1.0]).is_err());
        assert!(nmae(&[], &[]).is_err());
    }

    #[test]
    fn gap_cases() {
        assert_eq!(generalization_gap(0.3, 0.3), 0.0);
        assert!((generalization_gap(0.1, 0.331) - 2.31).abs() < 1e-12);
        assert!((generalization_gap(0.4, 0.2) - 0.5).abs() < 1e-12);
        assert_eq!(generalization_gap(0.0, 0.1), f64::INFINITY);
    }

    #[test]
    fn report_from_equal_splits_has_zero_gap() {
        let s = SplitScores {
            nmae: 0.2,
            nmse: 0.05,
            samples: 10,
        };
        let r = EvalReport::new(s, Some(s), 5, 1, 1);
        assert_eq!(r.alpha_c, Some(0.0));
    }

    proptest! {
        #[test]
        fn scale_invariance(
            pairs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 1..50),
            k in prop_oneof![-1e3f64..-1e-3, 1e-3f64..1e3],
        ) {
            let truth: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let pred: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            prop_assume!(mean_abs(&truth) > 1e-6);
            let ts: Vec<f64> = truth.iter().map(|v| v * k).collect();
            let ps: Vec<f64> = pred.iter().map(|v| v * k).collect();
            let a = nmae(&pred, &truth).unwrap();
            let b = nmae(&ps, &ts).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
            let a = nmse(&pred, &truth).unwrap();
            let b = nmse(&ps, &ts).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        }
    }
}
