//! The `gods` command-line interface.
//!
//! Exit codes: 0 on success, 1 for bad input (arguments, files, schemas),
//! 2 for numerical failures and failed gradient checks.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;
use serde::Serialize;

use crate::bench::{format_table, run_bench, BenchOutcome};
use crate::data::{load_csv, synth, write_csv, CsvOptions, Dataset, LabelColumn, SynthKind};
use crate::error::{Error, Result};
use crate::gradcheck::run_gradient_checks;
use crate::inference::{anomaly_score, calibrate, classify, compute_metrics, roc_curve, Label};
use crate::kernels::KernelSpec;
use crate::kods::{kods_train, KodsHyper};
use crate::linalg::Mat;
use crate::persist::{data_hash, Fingerprint, Model, ModelFile};
use crate::primal::{train_primal, GodsHyper, Variant};
use crate::solver::{SolveReport, SolverConfig};

#[derive(Parser, Debug)]
#[command(name = "gods", version, about = "One-class learning with complementary discriminative subspaces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a model on the rows of a CSV file.
    Train(TrainArgs),
    /// Score and classify every row of a CSV file.
    Predict(PredictArgs),
    /// Evaluate a model on labelled data.
    Eval(EvalArgs),
    /// Adapt the margin of a model from labelled validation data.
    Calibrate(CalibrateArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Run the UCI one-class benchmark.
    BenchUci(BenchArgs),
}

#[derive(Args, Debug, Clone)]
pub struct CsvArgs {
    /// Input CSV file.
    #[arg(long)]
    pub data: PathBuf,
    /// Label column, by header name or zero-based index.
    #[arg(long)]
    pub label_col: Option<String>,
    /// The first line is a header (implied when --label-col is a name).
    #[arg(long)]
    pub header: bool,
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
}

impl CsvArgs {
    fn label_column(&self) -> Option<LabelColumn> {
        self.label_col.as_ref().map(|s| match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.clone()),
        })
    }

    fn load(&self, target: Option<&str>) -> Result<Dataset> {
        let lc = self.label_column();
        let opts = CsvOptions {
            delimiter: ascii(self.delimiter)?,
            has_header: self.header || matches!(lc, Some(LabelColumn::Name(_))),
            target: target.map(str::to_string),
        };
        load_csv(&self.data, lc.as_ref(), &opts)
    }
}

fn ascii(c: char) -> Result<u8> {
    u8::try_from(c).map_err(|_| Error::InvalidParameter(format!("delimiter {c:?} is not a single byte")))
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum VariantArg {
    Bods,
    Gods,
    #[value(name = "gods_n")]
    GodsN,
    #[value(name = "gods_o")]
    GodsO,
    #[value(name = "gods_e")]
    GodsE,
    Kods,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelArg {
    Linear,
    Rbf,
    Poly,
    Chi2,
    Hik,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub csv: CsvArgs,
    /// Train only on rows with this label.
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long, value_enum, default_value = "gods")]
    pub variant: VariantArg,
    /// Kernel for KODS.
    #[arg(long, value_enum, default_value = "rbf")]
    pub kernel: KernelArg,
    #[arg(long, default_value_t = 0.1)]
    pub sigma: f64,
    #[arg(long, default_value_t = 3)]
    pub degree: u32,
    #[arg(long, default_value_t = 1.0)]
    pub offset: f64,
    /// Hyperplanes per frame (default 3, or 1 for BODS).
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 0.3)]
    pub eta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub nu: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Norm index of the scale penalty for gods_n.
    #[arg(long, default_value_t = 1.0)]
    pub p_norm: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub no_normalize: bool,
    #[arg(long, default_value_t = 500)]
    pub max_iters: usize,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Where to write the solver report (JSON); printed to stdout when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub csv: CsvArgs,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub csv: CsvArgs,
    /// Label of the in-class rows.
    #[arg(long)]
    pub target: String,
    /// Also write ROC points (false positive rate, true positive rate) as CSV.
    #[arg(long)]
    pub roc: Option<PathBuf>,
    /// Report file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub csv: CsvArgs,
    #[arg(long)]
    pub target: String,
    /// Calibrated model file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthArg {
    Gaussian,
    Arbitrary,
    Ring,
    Ring3d,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub kind: SynthArg,
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    /// Dimension of the gaussian kind.
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    /// Mean of every coordinate (gaussian).
    #[arg(long, default_value_t = 0.0)]
    pub mean: f64,
    /// Standard deviation of every coordinate (gaussian).
    #[arg(long, default_value_t = 1.0)]
    pub std: f64,
    #[arg(long, default_value_t = crate::data::RING_R_IN)]
    pub r_in: f64,
    #[arg(long, default_value_t = crate::data::RING_R_OUT)]
    pub r_out: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Feasible points per objective.
    #[arg(long, default_value_t = 20)]
    pub points: usize,
    #[arg(long, hide = true)]
    pub corrupt: bool,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long, default_value = "data/uci/uci.toml")]
    pub config: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub seeds: usize,
    #[arg(long, default_value_t = 500)]
    pub max_iters: usize,
    /// Markdown table destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write per-split results as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numeric() {
                2
            } else {
                1
            }
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::BenchUci(a) => cmd_bench(a),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

#[derive(Serialize)]
struct TrainReport<'a> {
    variant: &'a str,
    n_train: usize,
    jitter: Option<f64>,
    solver: &'a SolveReport,
}

fn kernel_from(a: &TrainArgs) -> KernelSpec {
    match a.kernel {
        KernelArg::Linear => KernelSpec::Linear,
        KernelArg::Rbf => KernelSpec::Rbf { sigma: a.sigma },
        KernelArg::Poly => KernelSpec::Polynomial { degree: a.degree, offset: a.offset },
        KernelArg::Chi2 => KernelSpec::ChiSquare,
        KernelArg::Hik => KernelSpec::HistogramIntersection,
    }
}

fn training_rows(ds: &Dataset, target: Option<&str>) -> Result<Mat> {
    let Some(t) = target else { return Ok(ds.features.clone()) };
    let labels = ds.labels.as_ref().ok_or_else(|| Error::Schema("--target needs --label-col".into()))?;
    let idx: Vec<usize> = (0..ds.n()).filter(|&i| labels[i] == t).collect();
    if idx.is_empty() {
        return Err(Error::EmptyData);
    }
    Ok(Mat::from_fn(idx.len(), ds.dim(), |i, j| ds.features[(idx[i], j)]))
}

fn cmd_train(a: TrainArgs) -> Result<i32> {
    let ds = a.csv.load(a.target.as_deref())?;
    let x = training_rows(&ds, a.target.as_deref())?;
    let cfg = SolverConfig { max_iters: a.max_iters, ..Default::default() };
    let normalize = !a.no_normalize;
    let (model, report, jitter) = if a.variant == VariantArg::Kods {
        let hyper = KodsHyper { k: a.k.unwrap_or(3), eta: a.eta, lambda: a.lambda, jitter: None, normalize };
        let (m, r) = kods_train(&x, &kernel_from(&a), &hyper, &cfg, a.seed)?;
        let j = m.jitter;
        (Model::Kods(m), r, Some(j))
    } else {
        let variant = match a.variant {
            VariantArg::Bods => Variant::Bods,
            VariantArg::Gods => Variant::Gods,
            VariantArg::GodsN => Variant::GodsN,
            VariantArg::GodsO => Variant::GodsO,
            VariantArg::GodsE => Variant::GodsE,
            VariantArg::Kods => unreachable!(),
        };
        let k = a.k.unwrap_or(if variant == Variant::Bods { 1 } else { 3 });
        let hyper = GodsHyper { variant, k, eta: a.eta, nu: a.nu, lambda: a.lambda, p_norm: a.p_norm, normalize };
        let (m, r) = train_primal(&x, &hyper, &cfg, a.seed)?;
        (Model::Primal(m), r, None)
    };
    if !report.converged {
        warn!("solver stopped without converging ({:?})", report.termination);
    }
    let fp = Fingerprint { seed: a.seed, data_sha256: data_hash(&x), n_train: x.nrows() };
    ModelFile::from_model(&model, fp, None).save(&a.out)?;
    let rep = TrainReport { variant: model.variant_tag(), n_train: x.nrows(), jitter, solver: &report };
    emit(a.report.as_deref(), &to_json(&rep)?)?;
    Ok(0)
}

fn load_model(path: &Path) -> Result<(ModelFile, Model)> {
    let file = ModelFile::load(path)?;
    let model = file.to_model()?;
    Ok((file, model))
}

fn check_dim(model: &Model, ds: &Dataset) -> Result<()> {
    if model.feature_dim() != ds.dim() {
        return Err(Error::Schema(format!(
            "data has {} features, model expects {}",
            ds.dim(),
            model.feature_dim()
        )));
    }
    Ok(())
}

fn label_name(l: Label) -> &'static str {
    match l {
        Label::InClass => "in_class",
        Label::Anomaly => "anomaly",
    }
}

fn cmd_predict(a: PredictArgs) -> Result<i32> {
    let (_, model) = load_model(&a.model)?;
    let ds = a.csv.load(None)?;
    check_dim(&model, &ds)?;
    let eta = model.eta_effective();
    let mut out = String::from("s1,s2,anomaly_score,label\n");
    for (s1, s2) in model.scores(&ds.features)? {
        out += &format!("{s1},{s2},{},{}\n", anomaly_score(s1, s2, eta), label_name(classify(s1, s2, eta)));
    }
    emit(a.out.as_deref(), &out)?;
    Ok(0)
}

fn truth_labels(ds: &Dataset, target: &str) -> Result<Vec<Label>> {
    let labels = ds.labels.as_ref().ok_or_else(|| Error::Schema("data has no label column".into()))?;
    Ok(labels.iter().map(|l| if l == target { Label::InClass } else { Label::Anomaly }).collect())
}

fn cmd_eval(a: EvalArgs) -> Result<i32> {
    let (_, model) = load_model(&a.model)?;
    let ds = a.csv.load(None)?;
    check_dim(&model, &ds)?;
    let truth = truth_labels(&ds, &a.target)?;
    let eta = model.eta_effective();
    let scores = model.scores(&ds.features)?;
    let pred: Vec<Label> = scores.iter().map(|&(s1, s2)| classify(s1, s2, eta)).collect();
    let an: Vec<f64> = scores.iter().map(|&(s1, s2)| anomaly_score(s1, s2, eta)).collect();
    let report = compute_metrics(&pred, &truth, &an, eta)?;
    if let Some(p) = &a.roc {
        let mut s = String::from("fpr,tpr\n");
        for (x, y) in roc_curve(&truth, &an).unwrap_or_default() {
            s += &format!("{x},{y}\n");
        }
        std::fs::write(p, s)?;
    }
    emit(a.out.as_deref(), &to_json(&report)?)?;
    Ok(0)
}

fn cmd_calibrate(a: CalibrateArgs) -> Result<i32> {
    let (file, mut model) = load_model(&a.model)?;
    let ds = a.csv.load(None)?;
    check_dim(&model, &ds)?;
    let truth = truth_labels(&ds, &a.target)?;
    if !truth.contains(&Label::InClass) || !truth.contains(&Label::Anomaly) {
        return Err(Error::Schema("validation data needs both in-class and anomalous rows".into()));
    }
    let scores = model.scores(&ds.features)?;
    let v_l: Vec<f64> = scores.iter().map(|s| s.0).collect();
    let v_u: Vec<f64> = scores.iter().map(|s| s.1).collect();
    let eta = model.eta_effective();
    let calibration = match calibrate(&v_l, &v_u, eta) {
        Ok(c) => {
            model.set_eta_effective(c.eta_prime);
            Some(c)
        }
        Err(e @ Error::DegenerateClustering(_)) => {
            warn!("{e}; margin left at {eta}");
            file.calibration.clone()
        }
        Err(e) => return Err(e),
    };
    ModelFile::from_model(&model, file.fingerprint.clone(), calibration).save(&a.out)?;
    Ok(0)
}

fn cmd_synth(a: SynthArgs) -> Result<i32> {
    let kind = match a.kind {
        SynthArg::Gaussian => SynthKind::Gaussian {
            n: a.n,
            mean: vec![a.mean; a.dim],
            cov: Mat::identity(a.dim, a.dim) * (a.std * a.std),
        },
        SynthArg::Arbitrary => SynthKind::Arbitrary { n: a.n },
        SynthArg::Ring => SynthKind::Ring { n: a.n, r_in: a.r_in, r_out: a.r_out },
        SynthArg::Ring3d => SynthKind::Ring3d { n: a.n },
    };
    write_csv(&a.out, &synth(&kind, a.seed)?)?;
    Ok(0)
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<i32> {
    let entries = run_gradient_checks(a.seed, a.points.max(1), a.corrupt)?;
    let mut ok = true;
    for e in &entries {
        let verdict = if e.passed() { "ok" } else { "FAIL" };
        ok &= e.passed();
        println!("{:<8} max relative error {:.3e} over {} points  {verdict}", e.objective, e.max_rel_error, e.points);
    }
    Ok(if ok { 0 } else { 2 })
}

fn cmd_bench(a: BenchArgs) -> Result<i32> {
    let cfg = SolverConfig { max_iters: a.max_iters, ..Default::default() };
    let outcomes = run_bench(&a.config, a.seeds, &cfg)?;
    for o in &outcomes {
        if let BenchOutcome::Missing { name, path } = o {
            eprintln!("notice: skipping {name}, {} not found", path.display());
        }
    }
    if let Some(p) = &a.json {
        std::fs::write(p, to_json(&outcomes)?)?;
    }
    emit(a.out.as_deref(), &format_table(&outcomes))?;
    Ok(0)
}
