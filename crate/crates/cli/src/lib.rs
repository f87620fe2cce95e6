//! Command-line front end for `pwpoly`.
//!
//! Exit codes: `0` success, `2` input, schema or file error, `3` fitting
//! failure.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pwpoly::data::{self, AffineScaling, RegionRule};
use pwpoly::metrics::{EvalReport, SplitScores};
use pwpoly::real::fmt_real;
use pwpoly::{
    Dataset, ExplicitFitConfig, ExplicitModel, ImplicitFitConfig, ModelFile, ModelKind,
    PrecisionMeasure, SkippedHead, SynthSpec,
};

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_FIT: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "pwpoly",
    version,
    about = "Piece-wise sparse polynomial regression"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit an implicit polynomial family.
    FitImplicit(FitImplicitArgs),
    /// Fit an explicit voter ensemble on top of an implicit family.
    FitExplicit(FitExplicitArgs),
    /// Predict labels for every row of a CSV file.
    Predict(PredictArgs),
    /// Report (nMAE, nMSE) on train and test files and the generalization gap.
    Eval(EvalArgs),
    /// Generate synthetic piece-wise polynomial data.
    Synth(SynthArgs),
    /// Summarize a model file.
    Inspect(InspectArgs),
    /// Split a CSV file into strided-head training rows and tail test rows.
    Split(SplitArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Label column.
    #[arg(long, default_value = "y")]
    pub label: String,
    /// Comma-separated feature columns [default: every other column].
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<String>>,
    /// Train on rows `0, stride, …` of the first `head-fraction` of the file.
    #[arg(long, default_value_t = 1.0)]
    pub head_fraction: f64,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ImplicitArgs {
    #[arg(long, default_value_t = 3)]
    pub max_degree: u32,
    /// Starting threshold as a fraction of MAE(y).
    #[arg(long, default_value_t = 0.05)]
    pub initial_threshold: f64,
    #[arg(long, default_value_t = 1.5)]
    pub threshold_growth: f64,
    #[arg(long, default_value_t = 50)]
    pub max_terms: usize,
    #[arg(long, default_value_t = 0.01)]
    pub min_new_coverage: f64,
    #[arg(long, default_value_t = 30)]
    pub max_polys: usize,
    #[arg(long, default_value_t = ImplicitFitConfig::default().local_attempts)]
    pub local_attempts: usize,
    #[arg(long, default_value_t = ImplicitFitConfig::default().neighbourhood_factor)]
    pub neighbourhood_factor: usize,
    #[arg(long, default_value_t = ImplicitFitConfig::default().trim_rounds)]
    pub trim_rounds: usize,
    #[arg(long, default_value_t = ImplicitFitConfig::default().refine_rounds)]
    pub refine_rounds: usize,
    /// Standardize features before fitting; the scaling is stored in the model.
    #[arg(long)]
    pub standardize: bool,
}

impl ImplicitArgs {
    fn config(&self, seed: u64) -> ImplicitFitConfig {
        ImplicitFitConfig {
            max_degree: self.max_degree,
            initial_threshold: self.initial_threshold,
            threshold_growth: self.threshold_growth,
            max_terms_per_poly: self.max_terms,
            min_new_coverage: self.min_new_coverage,
            max_polys: self.max_polys,
            local_attempts: self.local_attempts,
            neighbourhood_factor: self.neighbourhood_factor,
            trim_rounds: self.trim_rounds,
            refine_rounds: self.refine_rounds,
            seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct FitImplicitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub implicit: ImplicitArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MeasureArg {
    Mae,
    Mse,
}

#[derive(Debug, Args)]
pub struct FitExplicitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Implicit model file, or `auto` to fit one inline.
    #[arg(long, default_value = "auto")]
    pub implicit: String,
    #[command(flatten)]
    pub implicit_args: ImplicitArgs,
    #[arg(long, default_value_t = 20)]
    pub n_v_max: usize,
    /// Contraction rate a candidate voter must achieve.
    #[arg(long, default_value_t = 0.999)]
    pub gamma_c: f64,
    #[arg(long, default_value_t = 3)]
    pub deg_part: u32,
    /// Fraction of highest-error rows to draw new centres from.
    #[arg(long, default_value_t = 0.05)]
    pub eta_top: f64,
    /// Regions per partition.
    #[arg(long, default_value_t = 50)]
    pub n_d: usize,
    #[arg(long, default_value_t = 20)]
    pub n_modes_part: usize,
    #[arg(long, value_enum, default_value_t = MeasureArg::Mae)]
    pub measure: MeasureArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

impl FitExplicitArgs {
    fn config(&self) -> ExplicitFitConfig {
        ExplicitFitConfig {
            n_v_max: self.n_v_max,
            gamma_c: self.gamma_c,
            deg_part: self.deg_part,
            eta_top: self.eta_top,
            n_d: self.n_d,
            n_modes_part: self.n_modes_part,
            measure: match self.measure {
                MeasureArg::Mae => PrecisionMeasure::Mae,
                MeasureArg::Mse => PrecisionMeasure::Mse,
            },
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Output CSV [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Write the report as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 12)]
    pub n_features: usize,
    /// Ground-truth polynomials; regions are consecutive slabs along x1.
    #[arg(long, default_value_t = 3)]
    pub n_polys: usize,
    #[arg(long, default_value_t = 3)]
    pub degree: u32,
    #[arg(long, default_value_t = 15)]
    pub terms: usize,
    #[arg(long, default_value_t = 25_000)]
    pub samples: usize,
    /// Extra samples per context written to a separate test file.
    #[arg(long, default_value_t = 0)]
    pub test_samples: usize,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Context names; each gets its own files.
    #[arg(long, value_delimiter = ',')]
    pub contexts: Option<Vec<String>>,
    /// Excursion scale per context (or a single one without contexts).
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub scales: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_prefix: String,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SkippedArg {
    Drop,
    Test,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub head_fraction: f64,
    #[arg(long)]
    pub stride: usize,
    /// Where head rows not picked by the stride go.
    #[arg(long, value_enum, default_value_t = SkippedArg::Drop)]
    pub skipped: SkippedArg,
    #[arg(long)]
    pub train_out: PathBuf,
    #[arg(long)]
    pub test_out: PathBuf,
}

/// Exit code for an error returned by [`run`].
pub fn exit_code(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<pwpoly::Error>() {
        Some(e) if !e.is_input_error() => EXIT_FIT,
        _ => EXIT_INPUT,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::FitImplicit(a) => fit_implicit(&a),
        Command::FitExplicit(a) => fit_explicit(&a),
        Command::Predict(a) => predict(&a),
        Command::Eval(a) => eval(&a),
        Command::Synth(a) => synth(&a),
        Command::Inspect(a) => inspect(&a),
        Command::Split(a) => split(&a),
    }
}

fn feature_columns(a: &DataArgs) -> Result<Vec<String>> {
    if let Some(f) = &a.features {
        return Ok(f.clone());
    }
    let header = data::csv_header(&a.data)?;
    if !header.contains(&a.label) {
        return Err(pwpoly::Error::MissingColumn(a.label.clone()).into());
    }
    Ok(header.into_iter().filter(|h| *h != a.label).collect())
}

fn load_training(a: &DataArgs) -> Result<Dataset> {
    let features = feature_columns(a)?;
    let d = data::load_csv(&a.data, &features, &a.label)?;
    if a.head_fraction == 1.0 && a.stride == 1 {
        return Ok(d);
    }
    let (train, _) = data::split_train_test(&d, a.head_fraction, a.stride, SkippedHead::Drop)?;
    Ok(train)
}

fn scaled(d: &Dataset, scaling: Option<&AffineScaling>) -> Result<Dataset> {
    match scaling {
        Some(s) => Ok(s.apply(d)?),
        None => Ok(d.clone()),
    }
}

/// Fits the implicit stage and returns its model file.
fn implicit_file(train: &Dataset, args: &ImplicitArgs, seed: u64) -> Result<ModelFile> {
    let scaling = args.standardize.then(|| AffineScaling::standardize(train));
    let fit_data = scaled(train, scaling.as_ref())?;
    let cfg = args.config(seed);
    let fit = pwpoly::fit_implicit(&fit_data, &cfg)?;
    let mut f = ModelFile::implicit(&fit, &cfg, train.feature_names(), train.label_name());
    f.scaling = scaling;
    Ok(f)
}

fn fit_implicit(a: &FitImplicitArgs) -> Result<()> {
    let train = load_training(&a.data)?;
    let t0 = Instant::now();
    let f = implicit_file(&train, &a.implicit, a.seed)?;
    let secs = t0.elapsed().as_secs_f64();
    let set = f.poly_set()?;
    f.save(&a.out)?;
    println!("n_m            {}", set.len());
    println!("coefficients   {}", set.count_active_coefficients());
    println!("fit_seconds    {secs:.3}");
    Ok(())
}

fn fit_explicit(a: &FitExplicitArgs) -> Result<()> {
    let train = load_training(&a.data)?;
    let t0 = Instant::now();
    let implicit = if a.implicit == "auto" {
        implicit_file(&train, &a.implicit_args, a.seed)?
    } else {
        let f = ModelFile::load(Path::new(&a.implicit))?;
        if f.feature_names != train.feature_names() {
            bail!(pwpoly::Error::InvalidInput(format!(
                "implicit model expects features {:?}, data provides {:?}",
                f.feature_names,
                train.feature_names()
            )));
        }
        f
    };
    let set = implicit.poly_set()?;
    let fit_data = scaled(&train, implicit.scaling.as_ref())?;
    let cfg = a.config();
    let model = pwpoly::fit_explicit(&set, &fit_data, &cfg)?;
    let secs = t0.elapsed().as_secs_f64();

    let mut f = ModelFile::explicit(&model, &cfg, train.feature_names(), train.label_name());
    f.scaling = implicit.scaling.clone();
    f.implicit_config = implicit.implicit_config.clone();
    f.implicit_report = implicit.implicit_report.clone();
    f.save(&a.out)?;

    let eps: Vec<String> = model
        .report()
        .epsilons
        .iter()
        .map(|e| format!("{e:.6}"))
        .collect();
    let pred = model.predict_rows(fit_data.features())?;
    println!("n_V            {}", model.voters().len());
    println!("epsilon        [{}]", eps.join(", "));
    match pwpoly::metrics::nmae(&pred, fit_data.labels()) {
        Ok(v) => println!("train_nmae     {v:.6}"),
        Err(e) => log::warn!("train nMAE unavailable: {e}"),
    }
    println!("coefficients   {}", model.count_active_coefficients());
    println!("fit_seconds    {secs:.3}");
    Ok(())
}

/// Loads an explicit model with its feature scaling.
fn load_explicit(path: &Path) -> Result<(ModelFile, ExplicitModel)> {
    let f = ModelFile::load(path)?;
    if f.kind != ModelKind::Explicit {
        bail!(pwpoly::Error::InvalidInput(format!(
            "{} holds an implicit model, which yields residuals rather than predictions; \
             fit an explicit model first",
            path.display()
        )));
    }
    let m = f.explicit_model()?;
    Ok((f, m))
}

fn predict_features(f: &ModelFile, m: &ExplicitModel, x: &[f64]) -> Result<Vec<f64>> {
    let x = match &f.scaling {
        Some(s) => s.apply_rows(x),
        None => x.to_vec(),
    };
    Ok(m.predict_rows(&x)?)
}

fn predict(a: &PredictArgs) -> Result<()> {
    let (f, m) = load_explicit(&a.model)?;
    let x = data::load_features(&a.data, &f.feature_names)?;
    let pred = predict_features(&f, &m, &x)?;
    let mut out: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(std::io::BufWriter::new(
            std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    };
    writeln!(out, "prediction")?;
    for v in pred {
        writeln!(out, "{}", fmt_real(v))?;
    }
    out.flush()?;
    Ok(())
}

fn scores(f: &ModelFile, m: &ExplicitModel, path: &Path) -> Result<SplitScores> {
    let d = data::load_csv(path, &f.feature_names, &f.label_name)?;
    let pred = predict_features(f, m, d.features())?;
    SplitScores::compute(&pred, d.labels()).with_context(|| format!("scoring {}", path.display()))
}

fn eval(a: &EvalArgs) -> Result<()> {
    let (f, m) = load_explicit(&a.model)?;
    let train = scores(&f, &m, &a.train)?;
    let test = a.test.as_deref().map(|p| scores(&f, &m, p)).transpose()?;
    let report = EvalReport::new(
        train,
        test,
        m.count_active_coefficients(),
        m.poly_set().len(),
        m.voters().len(),
    );
    print!("{}", report.to_table());
    if let Some(p) = &a.report {
        let mut s = serde_json::to_string_pretty(&report)?;
        s.push('\n');
        std::fs::write(p, s).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn synth(a: &SynthArgs) -> Result<()> {
    let contexts: Vec<String> = a.contexts.clone().unwrap_or_default();
    let n_ctx = contexts.len().max(1);
    if a.scales.len() != n_ctx {
        bail!(pwpoly::Error::InvalidInput(format!(
            "{} scales given for {n_ctx} context(s)",
            a.scales.len()
        )));
    }
    if a.n_features == 0 {
        bail!(pwpoly::Error::InvalidInput(
            "n_features must be at least 1".into()
        ));
    }
    let spec = |scale: f64, samples: usize| SynthSpec {
        n_features: a.n_features,
        n_true_polys: a.n_polys,
        degree: a.degree,
        terms_per_poly: a.terms,
        region_rule: RegionRule::along_first_feature(a.n_features, a.n_polys),
        noise_std: a.noise,
        n_samples: samples,
        excursion_scale: scale,
    };
    let base = spec(a.scales[0], a.samples);
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let truth = data::synth_truth(&base, &mut rng)?;

    let mut truth_file =
        ModelFile::from_set(&truth, &data::default_feature_names(a.n_features), "y");
    truth_file.synth = Some(base);
    truth_file.metadata.seed = Some(a.seed);
    let truth_path = format!("{}.truth.json", a.out_prefix);
    truth_file.save(Path::new(&truth_path))?;
    println!("wrote {truth_path}");

    for i in 0..n_ctx {
        let stem = match contexts.get(i) {
            Some(c) => format!("{}_{c}", a.out_prefix),
            None => a.out_prefix.clone(),
        };
        let parts = [("", a.samples), ("_test", a.test_samples)];
        for (suffix, samples) in parts {
            if samples == 0 {
                continue;
            }
            let (d, labels) = data::synth_sample(&spec(a.scales[i], samples), &truth, &mut rng)?;
            let csv = format!("{stem}{suffix}.csv");
            let regions = format!("{stem}{suffix}.regions.csv");
            d.write_csv(Path::new(&csv))?;
            data::write_region_labels(Path::new(&regions), &labels)?;
            println!("wrote {csv} ({samples} rows), {regions}");
        }
    }
    Ok(())
}

fn inspect(a: &InspectArgs) -> Result<()> {
    let f = ModelFile::load(&a.model)?;
    let set = f.poly_set()?;
    let kind = match f.kind {
        ModelKind::Implicit => "implicit",
        ModelKind::Explicit => "explicit",
    };
    println!("kind           {kind}");
    println!("features       {}", f.feature_names.join(","));
    println!("label          {}", f.label_name);
    println!("n_m            {}", set.len());
    for (k, p) in set.polys().iter().enumerate() {
        println!("  P{k:<3} terms={} degree={}", p.n_terms(), p.max_degree());
    }
    println!("coefficients   {}", set.count_active_coefficients());
    if let Some(r) = &f.implicit_report {
        println!(
            "threshold      {} -> {}",
            fmt_real(r.initial_threshold),
            fmt_real(r.final_threshold)
        );
    }
    if f.kind == ModelKind::Explicit {
        let m = f.explicit_model()?;
        println!("n_V            {}", m.voters().len());
        let eps: Vec<String> = m
            .report()
            .epsilons
            .iter()
            .map(|e| format!("{e:.6}"))
            .collect();
        println!("epsilon        [{}]", eps.join(", "));
        for (j, v) in m.voters().iter().enumerate() {
            let map: Vec<String> = v.kappa_map.iter().map(usize::to_string).collect();
            println!(
                "  voter {j:<3} n_d={} pi_terms={} kappa=[{}]",
                v.triplet.n_d(),
                v.triplet.pi().n_terms(),
                map.join(" ")
            );
        }
    }
    Ok(())
}

fn split(a: &SplitArgs) -> Result<()> {
    let header = data::csv_header(&a.data)?;
    let Some((label, features)) = header.split_last() else {
        bail!(pwpoly::Error::InvalidInput("empty CSV header".into()));
    };
    let d = data::load_csv(&a.data, features, label)?;
    let skipped = match a.skipped {
        SkippedArg::Drop => SkippedHead::Drop,
        SkippedArg::Test => SkippedHead::Test,
    };
    let (train, test) = data::split_train_test(&d, a.head_fraction, a.stride, skipped)?;
    train.write_csv(&a.train_out)?;
    test.write_csv(&a.test_out)?;
    println!("train {} rows, test {} rows", train.n_rows(), test.n_rows());
    Ok(())
}
