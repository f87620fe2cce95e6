//! Versioned JSON model files.
//!
//! Every real number is stored as its shortest round-trip decimal string,
//! so a saved model reloads to bit-identical coefficients, centres and
//! boundaries.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{AffineScaling, SynthSpec};
use crate::error::{Error, Result};
use crate::explicit::{ExplicitFitConfig, ExplicitModel, FitReport, Voter};
use crate::implicit::{ImplicitFit, ImplicitFitConfig};
use crate::partition::PartitioningTriplet;
use crate::poly::{Monomial, PolynomialSet, SparsePolynomial, Term};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Implicit,
    Explicit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermRecord {
    #[serde(with = "crate::real")]
    pub coefficient: f64,
    pub exponents: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolySetRecord {
    pub n_features: usize,
    pub polys: Vec<Vec<TermRecord>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripletRecord {
    pub pi: Vec<TermRecord>,
    pub n_d: usize,
    #[serde(with = "crate::real::vec")]
    pub x_c: Vec<f64>,
    #[serde(with = "crate::real::vec")]
    pub boundaries: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoterRecord {
    pub triplet: TripletRecord,
    pub kappa_map: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImplicitReport {
    #[serde(with = "crate::real")]
    pub initial_threshold: f64,
    #[serde(with = "crate::real")]
    pub final_threshold: f64,
    pub escalations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub generator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for Metadata {
    fn default() -> Self {
        Self {
            generator: concat!("pwpoly ", env!("CARGO_PKG_VERSION")).to_owned(),
            seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub kind: ModelKind,
    pub feature_names: Vec<String>,
    pub label_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling: Option<AffineScaling>,
    pub poly_set: PolySetRecord,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub voters: Vec<VoterRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub implicit_config: Option<ImplicitFitConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub implicit_report: Option<ImplicitReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explicit_config: Option<ExplicitFitConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_report: Option<FitReport>,
    /// Present on ground-truth files written by the synthetic generator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthSpec>,
    pub metadata: Metadata,
}

fn term_records(p: &SparsePolynomial) -> Vec<TermRecord> {
    p.terms()
        .iter()
        .map(|t| TermRecord {
            coefficient: t.coefficient,
            exponents: t.monomial.exponents().to_vec(),
        })
        .collect()
}

fn poly_from_records(n_features: usize, recs: &[TermRecord]) -> Result<SparsePolynomial> {
    let terms = recs
        .iter()
        .map(|r| Term {
            coefficient: r.coefficient,
            monomial: Monomial::new(r.exponents.clone()),
        })
        .collect();
    SparsePolynomial::new(n_features, terms).map_err(|e| Error::ModelFormat(e.to_string()))
}

impl PolySetRecord {
    pub fn from_set(s: &PolynomialSet) -> Self {
        Self {
            n_features: s.n_features(),
            polys: s.polys().iter().map(term_records).collect(),
        }
    }

    pub fn to_set(&self) -> Result<PolynomialSet> {
        let polys = self
            .polys
            .iter()
            .map(|p| poly_from_records(self.n_features, p))
            .collect::<Result<Vec<_>>>()?;
        PolynomialSet::new(polys).map_err(|e| Error::ModelFormat(e.to_string()))
    }
}

impl VoterRecord {
    pub fn from_voter(v: &Voter) -> Self {
        let t = &v.triplet;
        Self {
            triplet: TripletRecord {
                pi: term_records(t.pi()),
                n_d: t.n_d(),
                x_c: t.center().to_vec(),
                boundaries: t.boundaries().to_vec(),
            },
            kappa_map: v.kappa_map.clone(),
        }
    }

    pub fn to_voter(&self, n_features: usize) -> Result<Voter> {
        let t = &self.triplet;
        let pi = poly_from_records(n_features, &t.pi)?;
        let triplet =
            PartitioningTriplet::from_parts(pi, t.n_d, t.x_c.clone(), t.boundaries.clone())
                .map_err(|e| Error::ModelFormat(e.to_string()))?;
        Voter::new(triplet, self.kappa_map.clone()).map_err(|e| Error::ModelFormat(e.to_string()))
    }
}

impl ModelFile {
    fn base(
        kind: ModelKind,
        set: &PolynomialSet,
        feature_names: &[String],
        label_name: &str,
    ) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            kind,
            feature_names: feature_names.to_vec(),
            label_name: label_name.to_owned(),
            scaling: None,
            poly_set: PolySetRecord::from_set(set),
            voters: Vec::new(),
            implicit_config: None,
            implicit_report: None,
            explicit_config: None,
            fit_report: None,
            synth: None,
            metadata: Metadata::default(),
        }
    }

    /// A bare implicit model holding only a polynomial family.
    pub fn from_set(set: &PolynomialSet, feature_names: &[String], label_name: &str) -> Self {
        Self::base(ModelKind::Implicit, set, feature_names, label_name)
    }

    pub fn implicit(
        fit: &ImplicitFit,
        cfg: &ImplicitFitConfig,
        feature_names: &[String],
        label_name: &str,
    ) -> Self {
        let mut f = Self::base(ModelKind::Implicit, &fit.set, feature_names, label_name);
        f.implicit_config = Some(cfg.clone());
        f.implicit_report = Some(ImplicitReport {
            initial_threshold: fit.initial_threshold,
            final_threshold: fit.final_threshold,
            escalations: fit.escalations,
        });
        f.metadata.seed = Some(cfg.seed);
        f
    }

    pub fn explicit(
        model: &ExplicitModel,
        cfg: &ExplicitFitConfig,
        feature_names: &[String],
        label_name: &str,
    ) -> Self {
        let mut f = Self::base(
            ModelKind::Explicit,
            model.poly_set(),
            feature_names,
            label_name,
        );
        f.voters = model.voters().iter().map(VoterRecord::from_voter).collect();
        f.explicit_config = Some(cfg.clone());
        f.fit_report = Some(model.report().clone());
        f.metadata.seed = Some(cfg.seed);
        f
    }

    pub fn poly_set(&self) -> Result<PolynomialSet> {
        let set = self.poly_set.to_set()?;
        if set.n_features() != self.feature_names.len() {
            return Err(Error::ModelFormat(format!(
                "{} feature names for {}-feature polynomials",
                self.feature_names.len(),
                set.n_features()
            )));
        }
        Ok(set)
    }

    pub fn explicit_model(&self) -> Result<ExplicitModel> {
        if self.kind != ModelKind::Explicit {
            return Err(Error::ModelFormat("not an explicit model".into()));
        }
        let set = self.poly_set()?;
        let voters = self
            .voters
            .iter()
            .map(|v| v.to_voter(set.n_features()))
            .collect::<Result<Vec<_>>>()?;
        ExplicitModel::new(set, voters, self.fit_report.clone().unwrap_or_default())
            .map_err(|e| Error::ModelFormat(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: ModelFile = serde_json::from_str(s)?;
        if f.format_version != FORMAT_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported format version {}",
                f.format_version
            )));
        }
        if f.kind == ModelKind::Explicit && f.voters.is_empty() {
            return Err(Error::ModelFormat("explicit model without voters".into()));
        }
        f.poly_set()?;
        Ok(f)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        crate::data::default_feature_names(n)
    }

    #[test]
    fn polynomial_records_are_exact() {
        let p = SparsePolynomial::from_pairs(2, &[(0.1, &[1, 0]), (-1.0 / 3.0, &[1, 2])]).unwrap();
        let set = PolynomialSet::new(vec![p]).unwrap();
        let f = ModelFile::from_set(&set, &names(2), "y");
        let back = ModelFile::from_json(&f.to_json().unwrap()).unwrap();
        assert_eq!(back.poly_set().unwrap(), set);
        assert!(f.to_json().unwrap().contains("\"coefficient\": \"0.1\""));
    }

    #[test]
    fn rejects_unknown_version() {
        let set = PolynomialSet::new(vec![SparsePolynomial::constant(1, 1.0).unwrap()]).unwrap();
        let mut f = ModelFile::from_set(&set, &names(1), "y");
        f.format_version = 99;
        let s = serde_json::to_string(&f).unwrap();
        assert!(matches!(
            ModelFile::from_json(&s),
            Err(Error::ModelFormat(_))
        ));
    }

    #[test]
    fn rejects_bad_kappa_index() {
        let set = PolynomialSet::new(vec![SparsePolynomial::constant(1, 1.0).unwrap()]).unwrap();
        let mut f = ModelFile::from_set(&set, &names(1), "y");
        f.kind = ModelKind::Explicit;
        f.voters.push(VoterRecord {
            triplet: TripletRecord {
                pi: vec![TermRecord {
                    coefficient: 1.0,
                    exponents: vec![1],
                }],
                n_d: 2,
                x_c: vec![0.0],
                boundaries: vec![0.0],
            },
            kappa_map: vec![0, 3],
        });
        let f = ModelFile::from_json(&f.to_json().unwrap()).unwrap();
        assert!(f.explicit_model().is_err());
    }

    #[test]
    fn rejects_non_decimal_coefficient() {
        let s = r#"{"format_version":1,"kind":"implicit","feature_names":["x1"],"label_name":"y",
            "poly_set":{"n_features":1,"polys":[[{"coefficient":"inf","exponents":[1]}]]},
            "metadata":{"generator":"t"}}"#;
        assert!(ModelFile::from_json(s).is_err());
    }
}
