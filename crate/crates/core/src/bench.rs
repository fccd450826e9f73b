//! The UCI one-class benchmark: repeated 70/30 target-class splits, F1 of GODS
//! and KODS per dataset.

use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use crate::data::{load_csv, one_class_split, CsvOptions, Dataset, LabelColumn};
use crate::error::{Error, Result};
use crate::inference::{anomaly_score, classify, compute_metrics, Label};
use crate::kernels::KernelSpec;
use crate::kods::{feasibility, kods_train, KodsHyper};
use crate::persist::Model;
use crate::primal::{train_primal, GodsHyper};
use crate::solver::{trace_is_monotone, SolverConfig};

pub const SPLIT_RATIO: f64 = 0.7;

#[derive(Clone, Debug, Deserialize)]
pub struct BenchConfig {
    #[serde(rename = "dataset")]
    pub datasets: Vec<DatasetEntry>,
}

#[derive(Clone, Debug, Deserialize)]
pub struct DatasetEntry {
    pub name: String,
    /// Relative to the config file's directory.
    pub file: PathBuf,
    pub label_column: LabelColumn,
    pub target: String,
    #[serde(default = "yes")]
    pub header: bool,
    #[serde(default = "comma")]
    pub delimiter: char,
    #[serde(default = "yes")]
    pub normalize: bool,
}

fn yes() -> bool {
    true
}

fn comma() -> char {
    ','
}

impl BenchConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MethodResult {
    pub f1: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl MethodResult {
    fn new(f1: Vec<f64>) -> Self {
        let n = f1.len().max(1) as f64;
        let mean = f1.iter().sum::<f64>() / n;
        let std = (f1.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        Self { f1, mean, std }
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum BenchOutcome {
    Missing { name: String, path: PathBuf },
    Done {
        name: String,
        n: usize,
        d: usize,
        target: String,
        gods: MethodResult,
        kods: MethodResult,
        /// Largest `‖U𝕂Uᵀ − I‖_F` over all KODS runs.
        kods_max_feasibility: f64,
        /// Every solver trace was non-increasing.
        traces_monotone: bool,
    },
}

fn f1_for(model: &Model, test: &Dataset, target: &str) -> Result<f64> {
    let scores = model.scores(&test.features)?;
    let eta = model.eta_effective();
    let truth: Vec<Label> = test
        .labels
        .as_ref()
        .ok_or_else(|| Error::Schema("test split has no labels".into()))?
        .iter()
        .map(|l| if l == target { Label::InClass } else { Label::Anomaly })
        .collect();
    let pred: Vec<Label> = scores.iter().map(|&(a, b)| classify(a, b, eta)).collect();
    let an: Vec<f64> = scores.iter().map(|&(a, b)| anomaly_score(a, b, eta)).collect();
    // no true positives and no predicted positives leaves F1 undefined; count it as 0
    Ok(compute_metrics(&pred, &truth, &an, eta)?.f1.unwrap_or(0.0))
}

pub fn run_dataset(entry: &DatasetEntry, base: &Path, seeds: usize, cfg: &SolverConfig) -> Result<BenchOutcome> {
    let path = base.join(&entry.file);
    if !path.exists() {
        return Ok(BenchOutcome::Missing { name: entry.name.clone(), path });
    }
    let opts = CsvOptions {
        delimiter: entry.delimiter as u8,
        has_header: entry.header,
        target: Some(entry.target.clone()),
    };
    let ds = load_csv(&path, Some(&entry.label_column), &opts)?;
    let gods_hyper = GodsHyper { normalize: entry.normalize, ..Default::default() };
    let kods_hyper = KodsHyper { normalize: entry.normalize, ..Default::default() };
    let kernel = KernelSpec::Polynomial { degree: 3, offset: 1.0 };
    let (mut gods, mut kods, mut feas, mut mono) = (Vec::new(), Vec::new(), 0.0f64, true);
    for s in 0..seeds as u64 {
        let (train, test) = one_class_split(&ds, &entry.target, SPLIT_RATIO, s)?;
        let (gm, gr) = train_primal(&train.features, &gods_hyper, cfg, s)?;
        gods.push(f1_for(&Model::Primal(gm), &test, &entry.target)?);
        let (km, kr) = kods_train(&train.features, &kernel, &kods_hyper, cfg, s)?;
        mono &= trace_is_monotone(&gr) && trace_is_monotone(&kr);
        feas = feas.max(feasibility(&km)?);
        kods.push(f1_for(&Model::Kods(km), &test, &entry.target)?);
        info!("{} split {s}: GODS {:.3} KODS {:.3}", entry.name, gods[gods.len() - 1], kods[kods.len() - 1]);
    }
    Ok(BenchOutcome::Done {
        name: entry.name.clone(),
        n: ds.n(),
        d: ds.dim(),
        target: entry.target.clone(),
        gods: MethodResult::new(gods),
        kods: MethodResult::new(kods),
        kods_max_feasibility: feas,
        traces_monotone: mono,
    })
}

pub fn run_bench(config: &Path, seeds: usize, cfg: &SolverConfig) -> Result<Vec<BenchOutcome>> {
    let conf = BenchConfig::load(config)?;
    let base = config.parent().unwrap_or(Path::new("."));
    conf.datasets.iter().map(|e| run_dataset(e, base, seeds, cfg)).collect()
}

/// Markdown table of mean ± std F1 (in percent).
pub fn format_table(outcomes: &[BenchOutcome]) -> String {
    let mut s = String::from("| Dataset | N | D | T | GODS | KODS |\n|---|---|---|---|---|---|\n");
    for o in outcomes {
        match o {
            BenchOutcome::Missing { name, path } => {
                s += &format!("| {name} | - | - | - | skipped: {} not found | |\n", path.display())
            }
            BenchOutcome::Done { name, n, d, target, gods, kods, .. } => {
                s += &format!(
                    "| {name} | {n} | {d} | {target} | {:.1}% ± {:.1} | {:.1}% ± {:.1} |\n",
                    100.0 * gods.mean,
                    100.0 * gods.std,
                    100.0 * kods.mean,
                    100.0 * kods.std
                )
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parses_with_defaults() {
        let c: BenchConfig = toml::from_str(
            "[[dataset]]\nname = \"a\"\nfile = \"a.csv\"\nlabel_column = \"class\"\ntarget = \"x\"\n\
             [[dataset]]\nname = \"b\"\nfile = \"b.csv\"\nlabel_column = 4\ntarget = \"1\"\nheader = false\n",
        )
        .unwrap();
        assert_eq!(c.datasets.len(), 2);
        assert!(c.datasets[0].header && c.datasets[0].normalize);
        assert_eq!(c.datasets[1].label_column, LabelColumn::Index(4));
    }

    #[test]
    fn missing_file_is_skipped() {
        let e = DatasetEntry {
            name: "nope".into(),
            file: "does-not-exist.csv".into(),
            label_column: LabelColumn::Index(0),
            target: "x".into(),
            header: false,
            delimiter: ',',
            normalize: true,
        };
        let o = run_dataset(&e, Path::new("/nonexistent"), 1, &SolverConfig::default()).unwrap();
        assert!(matches!(o, BenchOutcome::Missing { .. }));
        assert!(format_table(&[o]).contains("skipped"));
    }
}
