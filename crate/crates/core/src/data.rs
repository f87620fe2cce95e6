//! Tabular datasets: CSV ingestion, head/stride splitting, optional affine
//! feature scaling and synthetic piece-wise polynomial data.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::{random_polynomial, PolynomialSet};
use crate::real::fmt_real;

/// Features (row-major) and labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    x: Vec<f64>,
    y: Vec<f64>,
    feature_names: Vec<String>,
    label_name: String,
}

impl Dataset {
    /// `x` is row-major with `feature_names.len()` columns. Zero rows are
    /// allowed here; fitting entry points reject empty datasets.
    pub fn new(
        x: Vec<f64>,
        y: Vec<f64>,
        feature_names: Vec<String>,
        label_name: impl Into<String>,
    ) -> Result<Self> {
        let n = feature_names.len();
        if n == 0 {
            return Err(Error::InvalidInput(
                "dataset needs at least one feature".into(),
            ));
        }
        if x.len() != y.len() * n {
            return Err(Error::InvalidInput(format!(
                "{} feature values do not form {} rows of width {n}",
                x.len(),
                y.len()
            )));
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / n,
                column: feature_names[pos % n].clone(),
            });
        }
        let label_name = label_name.into();
        if let Some(row) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row,
                column: label_name,
            });
        }
        Ok(Self {
            x,
            y,
            feature_names,
            label_name,
        })
    }

    /// Convenience constructor with features named `x1..xn` and label `y`.
    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        let n = rows.first().map_or(1, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidInput("ragged feature rows".into()));
        }
        let x = rows.iter().flatten().copied().collect();
        Self::new(x, y, default_feature_names(n), "y")
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.n_features();
        &self.x[i * n..(i + 1) * n]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.x.chunks_exact(self.n_features())
    }

    /// Row-major feature buffer.
    pub fn features(&self) -> &[f64] {
        &self.x
    }

    pub fn labels(&self) -> &[f64] {
        &self.y
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn label_name(&self) -> &str {
        &self.label_name
    }

    /// Rows at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let n = self.n_features();
        let mut x = Vec::with_capacity(indices.len() * n);
        let mut y = Vec::with_capacity(indices.len());
        for &i in indices {
            x.extend_from_slice(self.row(i));
            y.push(self.y[i]);
        }
        Dataset {
            x,
            y,
            feature_names: self.feature_names.clone(),
            label_name: self.label_name.clone(),
        }
    }

    /// Writes a header row and one line per sample, features then label.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push(&self.label_name);
        w.write_record(&header)?;
        for (row, y) in self.rows().zip(&self.y) {
            let rec: Vec<String> = row
                .iter()
                .chain(std::iter::once(y))
                .map(|&v| fmt_real(v))
                .collect();
            w.write_record(&rec)?;
        }
        w.flush().map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(())
    }
}

pub fn default_feature_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("x{i}")).collect()
}

/// Column names from the header of a CSV file.
pub fn csv_header(path: &Path) -> Result<Vec<String>> {
    let mut r = reader(path)?;
    Ok(r.headers()?.iter().map(str::to_owned).collect())
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file))
}

/// Reads the named columns as numbers, returning one vector per requested
/// column. Blank lines are skipped.
fn read_columns(path: &Path, names: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut r = reader(path)?;
    let header = r.headers()?.clone();
    let idx: Vec<usize> = names
        .iter()
        .map(|name| {
            header
                .iter()
                .position(|h| h == *name)
                .ok_or_else(|| Error::MissingColumn((*name).to_owned()))
        })
        .collect::<Result<_>>()?;
    let mut cols = vec![Vec::new(); names.len()];
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        for ((col, &i), name) in cols.iter_mut().zip(&idx).zip(names) {
            let cell = rec.get(i).unwrap_or("");
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: (*name).to_owned(),
                value: cell.to_owned(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row,
                    column: (*name).to_owned(),
                });
            }
            col.push(v);
        }
    }
    Ok(cols)
}

fn interleave(cols: &[Vec<f64>]) -> Vec<f64> {
    let n_rows = cols.first().map_or(0, Vec::len);
    let mut x = Vec::with_capacity(n_rows * cols.len());
    for i in 0..n_rows {
        x.extend(cols.iter().map(|c| c[i]));
    }
    x
}

/// Loads a labelled dataset; rows keep file order.
pub fn load_csv(path: &Path, feature_columns: &[String], label_column: &str) -> Result<Dataset> {
    let mut names: Vec<&str> = feature_columns.iter().map(String::as_str).collect();
    names.push(label_column);
    let mut cols = read_columns(path, &names)?;
    let y = cols.pop().unwrap_or_default();
    Dataset::new(interleave(&cols), y, feature_columns.to_vec(), label_column)
}

/// Loads only feature columns as a row-major matrix.
pub fn load_features(path: &Path, feature_columns: &[String]) -> Result<Vec<f64>> {
    let names: Vec<&str> = feature_columns.iter().map(String::as_str).collect();
    Ok(interleave(&read_columns(path, &names)?))
}

/// What happens to head rows that the stride does not pick for training.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SkippedHead {
    /// Excluded from both parts.
    #[default]
    Drop,
    /// Appended to the test part, keeping file order.
    Test,
}

/// Row indices of the train and test parts: train takes rows
/// `0, stride, 2·stride, …` below `floor(head_fraction · n_rows)`, test
/// takes every row from the head's end onward (plus skipped head rows in
/// [`SkippedHead::Test`] mode).
pub fn split_indices(
    n_rows: usize,
    head_fraction: f64,
    stride: usize,
    skipped: SkippedHead,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(head_fraction > 0.0 && head_fraction <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "head fraction {head_fraction} outside (0, 1]"
        )));
    }
    if stride == 0 {
        return Err(Error::InvalidInput("stride must be at least 1".into()));
    }
    let head = ((head_fraction * n_rows as f64).floor() as usize).min(n_rows);
    let train: Vec<usize> = (0..head).step_by(stride).collect();
    if train.is_empty() {
        return Err(Error::DegenerateSplit);
    }
    let test = match skipped {
        SkippedHead::Drop => (head..n_rows).collect(),
        SkippedHead::Test => (0..n_rows)
            .filter(|i| *i >= head || i % stride != 0)
            .collect(),
    };
    Ok((train, test))
}

pub fn split_train_test(
    d: &Dataset,
    head_fraction: f64,
    stride: usize,
    skipped: SkippedHead,
) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(d.n_rows(), head_fraction, stride, skipped)?;
    Ok((d.select(&train), d.select(&test)))
}

/// Per-feature affine map `x ↦ (x − offset) / scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineScaling {
    #[serde(with = "crate::real::vec")]
    pub offset: Vec<f64>,
    #[serde(with = "crate::real::vec")]
    pub scale: Vec<f64>,
}

impl AffineScaling {
    /// Mean / standard-deviation scaling; constant columns get scale 1.
    pub fn standardize(d: &Dataset) -> Self {
        let n = d.n_features();
        let c = d.n_rows().max(1) as f64;
        let mut offset = vec![0.0; n];
        for row in d.rows() {
            for (o, v) in offset.iter_mut().zip(row) {
                *o += v;
            }
        }
        offset.iter_mut().for_each(|o| *o /= c);
        let mut scale = vec![0.0; n];
        for row in d.rows() {
            for ((s, v), o) in scale.iter_mut().zip(row).zip(&offset) {
                *s += (v - o) * (v - o);
            }
        }
        for s in &mut scale {
            *s = (*s / c).sqrt();
            if *s == 0.0 {
                *s = 1.0;
            }
        }
        Self { offset, scale }
    }

    pub fn apply_rows(&self, x: &[f64]) -> Vec<f64> {
        let n = self.offset.len();
        x.chunks_exact(n)
            .flat_map(|row| {
                row.iter()
                    .zip(&self.offset)
                    .zip(&self.scale)
                    .map(|((v, o), s)| (v - o) / s)
            })
            .collect()
    }

    pub fn apply(&self, d: &Dataset) -> Result<Dataset> {
        Dataset::new(
            self.apply_rows(d.features()),
            d.labels().to_vec(),
            d.feature_names().to_vec(),
            d.label_name(),
        )
    }
}

/// Ground-truth region membership: the region of `x` is the number of cut
/// points `c` with `c ≤ w·x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionRule {
    #[serde(with = "crate::real::vec")]
    pub weights: Vec<f64>,
    #[serde(with = "crate::real::vec")]
    pub cuts: Vec<f64>,
}

impl RegionRule {
    /// Splits on `x1` at evenly spaced interior points of `[-1, 1]`.
    pub fn along_first_feature(n_features: usize, n_regions: usize) -> Self {
        let mut weights = vec![0.0; n_features];
        weights[0] = 1.0;
        let cuts = (1..n_regions)
            .map(|j| -1.0 + 2.0 * j as f64 / n_regions as f64)
            .collect();
        Self { weights, cuts }
    }

    pub fn region(&self, x: &[f64]) -> usize {
        let s: f64 = self.weights.iter().zip(x).map(|(w, v)| w * v).sum();
        self.cuts.iter().filter(|&&c| c <= s).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_features: usize,
    pub n_true_polys: usize,
    pub degree: u32,
    pub terms_per_poly: usize,
    pub region_rule: RegionRule,
    #[serde(with = "crate::real")]
    pub noise_std: f64,
    pub n_samples: usize,
    #[serde(with = "crate::real")]
    pub excursion_scale: f64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.to_owned()));
        if self.n_features == 0 {
            return bad("n_features must be at least 1");
        }
        if self.n_true_polys == 0 {
            return bad("n_true_polys must be at least 1");
        }
        if self.n_samples == 0 {
            return bad("n_samples must be at least 1");
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad("noise_std must be finite and non-negative");
        }
        if !(self.excursion_scale > 0.0 && self.excursion_scale.is_finite()) {
            return bad("excursion_scale must be positive");
        }
        if self.region_rule.weights.len() != self.n_features {
            return bad("region rule weights must have one entry per feature");
        }
        if self.region_rule.cuts.len() + 1 != self.n_true_polys {
            return bad("region rule needs n_true_polys - 1 cut points");
        }
        if self.region_rule.cuts.windows(2).any(|w| w[0] > w[1]) {
            return bad("region rule cut points must be sorted");
        }
        Ok(())
    }
}

/// Output of [`synth_generate`].
#[derive(Clone, Debug)]
pub struct SynthData {
    pub data: Dataset,
    pub truth: PolynomialSet,
    pub region_labels: Vec<usize>,
}

/// Draws the generating polynomials.
pub fn synth_truth<R: Rng + ?Sized>(spec: &SynthSpec, rng: &mut R) -> Result<PolynomialSet> {
    spec.validate()?;
    let polys = (0..spec.n_true_polys)
        .map(|_| random_polynomial(spec.n_features, spec.degree, spec.terms_per_poly, rng))
        .collect::<Result<Vec<_>>>()?;
    PolynomialSet::new(polys)
}

/// Samples features uniformly on `[-s, s]^n`, assigns the rule's region and
/// labels each row with its region's polynomial plus Gaussian noise.
pub fn synth_sample<R: Rng + ?Sized>(
    spec: &SynthSpec,
    truth: &PolynomialSet,
    rng: &mut R,
) -> Result<(Dataset, Vec<usize>)> {
    spec.validate()?;
    if truth.n_features() != spec.n_features || truth.len() != spec.n_true_polys {
        return Err(Error::InvalidInput(
            "truth set does not match the synth spec".into(),
        ));
    }
    let n = spec.n_features;
    let s = spec.excursion_scale;
    let noise = Normal::new(0.0, spec.noise_std)
        .map_err(|e| Error::InvalidInput(format!("noise distribution: {e}")))?;
    let mut x = Vec::with_capacity(spec.n_samples * n);
    let mut y = Vec::with_capacity(spec.n_samples);
    let mut labels = Vec::with_capacity(spec.n_samples);
    for _ in 0..spec.n_samples {
        let start = x.len();
        for _ in 0..n {
            x.push(rng.random_range(-s..=s));
        }
        let row = &x[start..];
        let region = spec.region_rule.region(row);
        let mut v = truth.polys()[region].eval_unchecked(row);
        if spec.noise_std > 0.0 {
            v += noise.sample(rng);
        }
        labels.push(region);
        y.push(v);
    }
    let data = Dataset::new(x, y, default_feature_names(n), "y")?;
    Ok((data, labels))
}

pub fn synth_generate<R: Rng + ?Sized>(spec: &SynthSpec, rng: &mut R) -> Result<SynthData> {
    let truth = synth_truth(spec, rng)?;
    let (data, region_labels) = synth_sample(spec, &truth, rng)?;
    Ok(SynthData {
        data,
        truth,
        region_labels,
    })
}

/// One region index per line under a `region` header.
pub fn write_region_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = std::io::BufWriter::new(File::create(path).map_err(io)?);
    writeln!(f, "region").map_err(io)?;
    for l in labels {
        writeln!(f, "{l}").map_err(io)?;
    }
    f.flush().map_err(io)
}
