//! Partitioning triplets: a polynomial `π`, a region count `n_d` and a
//! centre `x_c`. Quantiles of `π(x − x_c)` over the fitting rows cut the
//! feature space into `n_d` right-closed intervals of projected value.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::poly::SparsePolynomial;

const PAR_CHUNK: usize = 2048;

#[derive(Clone, Debug, PartialEq)]
pub struct PartitioningTriplet {
    pi: SparsePolynomial,
    n_d: usize,
    x_c: Vec<f64>,
    boundaries: Vec<f64>,
}

/// Nearest-rank (lower) boundary `k` of `n_d` over `c` sorted values:
/// the value at 1-based rank `ceil((k + 1) · c / n_d)`.
pub fn quantile_rank(k: usize, n_d: usize, c: usize) -> usize {
    ((k + 1) * c).div_ceil(n_d).max(1)
}

impl PartitioningTriplet {
    /// Fits the `n_d − 1` boundaries on the rows of `train_x` (row-major).
    pub fn fit(pi: SparsePolynomial, n_d: usize, x_c: Vec<f64>, train_x: &[f64]) -> Result<Self> {
        if n_d < 2 {
            return Err(Error::InvalidInput(format!("n_d = {n_d}, need at least 2")));
        }
        let n = pi.n_features();
        if x_c.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: x_c.len(),
            });
        }
        if train_x.is_empty() || !train_x.len().is_multiple_of(n) {
            return Err(Error::InvalidInput(
                "partition needs a non-empty matrix with one column per feature".into(),
            ));
        }
        let mut t = Self {
            pi,
            n_d,
            x_c,
            boundaries: Vec::new(),
        };
        let mut values = t.project_rows(train_x);
        values.sort_unstable_by(f64::total_cmp);
        if values.first() == values.last() {
            return Err(Error::DegeneratePartition);
        }
        let c = values.len();
        t.boundaries = (0..n_d - 1)
            .map(|k| values[quantile_rank(k, n_d, c) - 1])
            .collect();
        Ok(t)
    }

    /// Reassembles a triplet whose boundaries were computed elsewhere.
    pub fn from_parts(
        pi: SparsePolynomial,
        n_d: usize,
        x_c: Vec<f64>,
        boundaries: Vec<f64>,
    ) -> Result<Self> {
        if n_d < 2 || boundaries.len() + 1 != n_d {
            return Err(Error::InvalidInput(format!(
                "{} boundaries do not describe {n_d} regions",
                boundaries.len()
            )));
        }
        if x_c.len() != pi.n_features() {
            return Err(Error::DimensionMismatch {
                expected: pi.n_features(),
                actual: x_c.len(),
            });
        }
        if boundaries.windows(2).any(|w| w[0] > w[1]) || boundaries.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidInput(
                "boundaries must be finite and sorted".into(),
            ));
        }
        Ok(Self {
            pi,
            n_d,
            x_c,
            boundaries,
        })
    }

    pub fn pi(&self) -> &SparsePolynomial {
        &self.pi
    }

    pub fn n_d(&self) -> usize {
        self.n_d
    }

    pub fn center(&self) -> &[f64] {
        &self.x_c
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn n_features(&self) -> usize {
        self.x_c.len()
    }

    #[inline]
    fn project_unchecked(&self, x: &[f64], buf: &mut [f64]) -> f64 {
        for ((b, v), c) in buf.iter_mut().zip(x).zip(&self.x_c) {
            *b = v - c;
        }
        self.pi.eval_unchecked(buf)
    }

    /// `π(x − x_c)`.
    pub fn project(&self, x: &[f64]) -> Result<f64> {
        self.check(x.len())?;
        let mut buf = vec![0.0; x.len()];
        Ok(self.project_unchecked(x, &mut buf))
    }

    pub fn project_rows(&self, rows: &[f64]) -> Vec<f64> {
        let n = self.n_features();
        let mut out = vec![0.0; rows.len() / n];
        out.par_chunks_mut(PAR_CHUNK)
            .zip(rows.par_chunks(PAR_CHUNK * n))
            .for_each(|(o, r)| {
                let mut buf = vec![0.0; n];
                for (dst, x) in o.iter_mut().zip(r.chunks_exact(n)) {
                    *dst = self.project_unchecked(x, &mut buf);
                }
            });
        out
    }

    /// Region of a projected value: the number of boundaries strictly below
    /// it, so a value equal to a boundary falls in the lower region.
    #[inline]
    pub fn region_of_value(&self, v: f64) -> usize {
        self.boundaries.partition_point(|&b| b < v)
    }

    /// Zero-based region index in `0..n_d`.
    pub fn sigma(&self, x: &[f64]) -> Result<usize> {
        Ok(self.region_of_value(self.project(x)?))
    }

    /// Region index of every row of a row-major matrix.
    pub fn assign(&self, rows: &[f64]) -> Result<Vec<usize>> {
        let n = self.n_features();
        if !rows.len().is_multiple_of(n) {
            return Err(Error::InvalidInput(format!(
                "matrix buffer of length {} is not a whole number of {n}-wide rows",
                rows.len()
            )));
        }
        Ok(self
            .project_rows(rows)
            .into_iter()
            .map(|v| self.region_of_value(v))
            .collect())
    }

    fn check(&self, len: usize) -> Result<()> {
        if len == self.n_features() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.n_features(),
                actual: len,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_pi() -> SparsePolynomial {
        SparsePolynomial::from_pairs(1, &[(1.0, &[1])]).unwrap()
    }

    #[test]
    fn median_boundary_of_four_values() {
        let t =
            PartitioningTriplet::fit(identity_pi(), 2, vec![0.0], &[3.0, 1.0, 4.0, 2.0]).unwrap();
        assert_eq!(t.boundaries(), &[2.0]);
    }

    #[test]
    fn three_regions_on_hundred_values() {
        let xs: Vec<f64> = (1..=99).map(f64::from).collect();
        let t = PartitioningTriplet::fit(identity_pi(), 3, vec![0.0], &xs).unwrap();
        assert_eq!(t.boundaries(), &[33.0, 66.0]);
        let regions = t.assign(&xs).unwrap();
        let counts: Vec<usize> = (0..3)
            .map(|r| regions.iter().filter(|&&g| g == r).count())
            .collect();
        assert_eq!(counts, vec![33, 33, 33]);
    }

    #[test]
    fn constant_projection_is_degenerate() {
        let pi = SparsePolynomial::from_pairs(1, &[(1.0, &[2])]).unwrap();
        let r = PartitioningTriplet::fit(pi, 2, vec![0.0], &[1.0, -1.0, 1.0]);
        assert!(matches!(r, Err(Error::DegeneratePartition)));
    }

    #[test]
    fn boundary_value_goes_to_lower_region() {
        let t = PartitioningTriplet::from_parts(identity_pi(), 2, vec![0.0], vec![2.0]).unwrap();
        assert_eq!(t.sigma(&[2.0]).unwrap(), 0);
        assert_eq!(t.sigma(&[2.0 + 1e-12]).unwrap(), 1);
        assert_eq!(t.sigma(&[1e9]).unwrap(), 1);
        assert_eq!(t.sigma(&[-1e9]).unwrap(), 0);
    }

    #[test]
    fn centre_shifts_projection() {
        let t = PartitioningTriplet::from_parts(identity_pi(), 2, vec![5.0], vec![0.0]).unwrap();
        assert_eq!(t.sigma(&[4.0]).unwrap(), 0);
        assert_eq!(t.sigma(&[6.0]).unwrap(), 1);
    }

    #[test]
    fn assign_edge_cases() {
        let t =
            PartitioningTriplet::from_parts(identity_pi(), 3, vec![0.0], vec![0.0, 1.0]).unwrap();
        assert!(t.assign(&[]).unwrap().is_empty());
        assert_eq!(t.assign(&[0.5, 0.5, 3.0]).unwrap(), vec![1, 1, 2]);
    }

    #[test]
    fn ties_allow_empty_regions() {
        let xs = [0.0, 0.0, 0.0, 0.0, 1.0];
        let t = PartitioningTriplet::fit(identity_pi(), 4, vec![0.0], &xs).unwrap();
        assert_eq!(t.boundaries(), &[0.0, 0.0, 0.0]);
        let r = t.assign(&xs).unwrap();
        assert_eq!(r, vec![0, 0, 0, 0, 3]);
    }

    #[test]
    fn from_parts_validates() {
        assert!(PartitioningTriplet::from_parts(identity_pi(), 3, vec![0.0], vec![1.0]).is_err());
        assert!(
            PartitioningTriplet::from_parts(identity_pi(), 3, vec![0.0], vec![2.0, 1.0]).is_err()
        );
        assert!(PartitioningTriplet::from_parts(identity_pi(), 1, vec![0.0], vec![]).is_err());
        assert!(
            PartitioningTriplet::from_parts(identity_pi(), 2, vec![0.0, 1.0], vec![0.0]).is_err()
        );
    }
}
