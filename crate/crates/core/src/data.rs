//! Datasets: CSV ingestion, normalization, one-class splits and toy generators.

use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// One sample per row.
    pub features: Mat,
    pub labels: Option<Vec<String>>,
    pub source: String,
    pub normalized: bool,
}

impl Dataset {
    pub fn new(features: Mat, labels: Option<Vec<String>>, source: impl Into<String>) -> Result<Self> {
        if features.nrows() == 0 || features.ncols() == 0 {
            return Err(Error::EmptyData);
        }
        if let Some(l) = &labels {
            if l.len() != features.nrows() {
                return Err(Error::Schema(format!(
                    "{} labels for {} rows",
                    l.len(),
                    features.nrows()
                )));
            }
        }
        Ok(Self { features, labels, source: source.into(), normalized: false })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    fn subset(&self, idx: &[usize]) -> Dataset {
        let features = Mat::from_fn(idx.len(), self.dim(), |i, j| self.features[(idx[i], j)]);
        let labels = self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i].clone()).collect());
        Dataset { features, labels, source: self.source.clone(), normalized: self.normalized }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

#[derive(Clone, Debug)]
pub struct CsvOptions {
    pub delimiter: u8,
    pub has_header: bool,
    /// When set, loading fails unless this label occurs in the label column.
    pub target: Option<String>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self { delimiter: b',', has_header: false, target: None }
    }
}

pub fn load_csv(path: &Path, label_column: Option<&LabelColumn>, opts: &CsvOptions) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(opts.has_header)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;

    let label_idx = match label_column {
        None => None,
        Some(LabelColumn::Index(i)) => Some(*i),
        Some(LabelColumn::Name(name)) => {
            if !opts.has_header {
                return Err(Error::Schema("a label column name needs a header row".into()));
            }
            let headers = reader.headers().map_err(csv_err)?;
            Some(
                headers
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| Error::Schema(format!("no column named {name:?}")))?,
            )
        }
    };

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for rec in reader.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if let Some(li) = label_idx {
            if li >= rec.len() {
                return Err(Error::Schema(format!("label column {li} missing on line {line}")));
            }
        }
        let mut row = Vec::with_capacity(rec.len());
        for (j, field) in rec.iter().enumerate() {
            if Some(j) == label_idx {
                labels.push(field.to_string());
                continue;
            }
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                message: format!("column {j}: {field:?} is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse { line, message: format!("column {j}: non-finite value") });
            }
            row.push(v);
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Parse { line, message: format!("expected {w} features, found {}", row.len()) })
            }
            _ => {}
        }
        values.push(row);
    }
    let d = width.unwrap_or(0);
    if values.is_empty() || d == 0 {
        return Err(Error::EmptyData);
    }
    let features = Mat::from_fn(values.len(), d, |i, j| values[i][j]);
    let labels = label_idx.map(|_| labels);
    if let (Some(t), Some(l)) = (&opts.target, &labels) {
        if !l.iter().any(|x| x == t) {
            return Err(Error::Schema(format!("target label {t:?} not present")));
        }
    }
    let source = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Dataset::new(features, labels, source)
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse { line, message: format!("{other:?}") },
    }
}

/// Writes features (and labels as a trailing `label` column) with a header row.
/// Floats use the shortest representation that parses back to the same bits.
pub fn write_csv(path: &Path, ds: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header: Vec<String> = (0..ds.dim()).map(|j| format!("x{j}")).collect();
    if ds.labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..ds.n() {
        let mut rec: Vec<String> = ds.features.row(i).iter().map(|v| v.to_string()).collect();
        if let Some(l) = &ds.labels {
            rec.push(l[i].clone());
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Scales every nonzero row to unit ℓ2 norm. Zero rows stay zero.
pub fn l2_normalize(x: &Mat) -> Mat {
    let mut out = x.clone();
    let mut zeros = 0;
    for mut row in out.row_iter_mut() {
        let n = row.norm();
        if n > 0.0 {
            row /= n;
        } else {
            zeros += 1;
        }
    }
    if zeros > 0 {
        warn!("{zeros} zero rows left unnormalized");
    }
    out
}

/// One-class protocol: a random `ratio` share of the target rows for training,
/// the remaining target rows plus every other row for testing.
pub fn one_class_split(ds: &Dataset, target: &str, ratio: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidParameter(format!("split ratio must be in (0, 1), got {ratio}")));
    }
    let labels = ds.labels.as_ref().ok_or_else(|| Error::Schema("dataset has no labels".into()))?;
    let mut pos: Vec<usize> = (0..ds.n()).filter(|&i| labels[i] == target).collect();
    if pos.is_empty() {
        return Err(Error::Schema(format!("target class {target:?} absent")));
    }
    let n_train = (ratio * pos.len() as f64).floor() as usize;
    if n_train == 0 {
        return Err(Error::EmptyData);
    }
    pos.shuffle(&mut rng::seeded(seed));
    let mut train = pos[..n_train].to_vec();
    train.sort_unstable();
    let mut in_train = vec![false; ds.n()];
    train.iter().for_each(|&i| in_train[i] = true);
    let test: Vec<usize> = (0..ds.n()).filter(|&i| !in_train[i]).collect();
    Ok((ds.subset(&train), ds.subset(&test)))
}

#[derive(Clone, Debug)]
pub enum SynthKind {
    Gaussian { n: usize, mean: Vec<f64>, cov: Mat },
    /// `x ~ U(0, 2]`, `y = √x · (x + sign(z)·u)` with `z ~ N(0,1)`, `u ~ U[0,1)`.
    Arbitrary { n: usize },
    Ring { n: usize, r_in: f64, r_out: f64 },
    /// The planar ring lifted to 3-D with `N(0, 0.05²)` height.
    Ring3d { n: usize },
}

pub const RING_R_IN: f64 = 0.7;
pub const RING_R_OUT: f64 = 1.0;

pub fn synth(kind: &SynthKind, seed: u64) -> Result<Dataset> {
    let mut r = rng::seeded(seed);
    let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
    let (features, name) = match kind {
        SynthKind::Gaussian { n, mean, cov } => {
            let d = mean.len();
            if *n == 0 || d == 0 {
                return bad("gaussian needs n >= 1 and a non-empty mean");
            }
            if cov.shape() != (d, d) {
                return bad("covariance shape does not match mean");
            }
            let l = cov.clone().cholesky().ok_or(Error::NotPositiveDefinite)?.l();
            let z = rng::gaussian_matrix(&mut r, *n, d);
            let mut x = z * l.transpose();
            for mut row in x.row_iter_mut() {
                for (j, m) in mean.iter().enumerate() {
                    row[j] += m;
                }
            }
            (x, "gaussian")
        }
        SynthKind::Arbitrary { n } => {
            if *n == 0 {
                return bad("arbitrary needs n >= 1");
            }
            let mut x = Mat::zeros(*n, 2);
            for i in 0..*n {
                let t = 2.0 * (1.0 - r.random::<f64>());
                let s = rng::normal(&mut r).signum();
                let u: f64 = r.random();
                x[(i, 0)] = t;
                x[(i, 1)] = t.sqrt() * (t + s * u);
            }
            (x, "arbitrary")
        }
        SynthKind::Ring { n, r_in, r_out } => {
            if *n == 0 || !(*r_in > 0.0 && r_in < r_out) {
                return bad("ring needs n >= 1 and 0 < r_in < r_out");
            }
            let mut x = Mat::zeros(*n, 2);
            for i in 0..*n {
                let (th, rad) = ring_draw(&mut r, *r_in, *r_out);
                x[(i, 0)] = rad * th.cos();
                x[(i, 1)] = rad * th.sin();
            }
            (x, "ring")
        }
        SynthKind::Ring3d { n } => {
            if *n == 0 {
                return bad("ring3d needs n >= 1");
            }
            let mut x = Mat::zeros(*n, 3);
            for i in 0..*n {
                let (th, rad) = ring_draw(&mut r, RING_R_IN, RING_R_OUT);
                x[(i, 0)] = rad * th.cos();
                x[(i, 1)] = rad * th.sin();
                x[(i, 2)] = 0.05 * rng::normal(&mut r);
            }
            (x, "ring3d")
        }
    };
    Dataset::new(features, None, name)
}

fn ring_draw(r: &mut rng::SeededRng, r_in: f64, r_out: f64) -> (f64, f64) {
    let th = std::f64::consts::TAU * r.random::<f64>();
    let rad = r_in + (r_out - r_in) * r.random::<f64>();
    (th, rad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn tmp_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_headerless_with_label() {
        let f = tmp_csv("1,2,pos\n3,4,neg\n");
        let ds = load_csv(f.path(), Some(&LabelColumn::Index(2)), &CsvOptions::default()).unwrap();
        assert_eq!(ds.features, Mat::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        assert_eq!(ds.labels.unwrap(), vec!["pos", "neg"]);
    }

    #[test]
    fn empty_file_is_empty_data() {
        let f = tmp_csv("");
        assert!(matches!(load_csv(f.path(), None, &CsvOptions::default()), Err(Error::EmptyData)));
    }

    #[test]
    fn bad_cells_report_line() {
        let f = tmp_csv("1,2\n3,abc\n");
        match load_csv(f.path(), None, &CsvOptions::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let f = tmp_csv("1,2\n3,inf\n");
        assert!(matches!(load_csv(f.path(), None, &CsvOptions::default()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn named_label_column() {
        let f = tmp_csv("a;class;b\n1;x;2\n3;y;4\n");
        let opts = CsvOptions { delimiter: b';', has_header: true, target: Some("y".into()) };
        let ds = load_csv(f.path(), Some(&LabelColumn::Name("class".into())), &opts).unwrap();
        assert_eq!(ds.features[(1, 1)], 4.0);
        let missing = load_csv(f.path(), Some(&LabelColumn::Name("nope".into())), &opts);
        assert!(matches!(missing, Err(Error::Schema(_))));
        let opts = CsvOptions { target: Some("z".into()), ..opts };
        assert!(load_csv(f.path(), Some(&LabelColumn::Name("class".into())), &opts).is_err());
    }

    #[test]
    fn normalization() {
        let x = Mat::from_row_slice(3, 2, &[3.0, 4.0, 0.0, 0.0, 0.6, 0.8]);
        let y = l2_normalize(&x);
        assert_eq!(y.row(0), Mat::from_row_slice(1, 2, &[0.6, 0.8]).row(0));
        assert_eq!(y.row(1).norm(), 0.0);
        assert!((y.row(2) - x.row(2)).amax() <= 1e-15);
        let mut r = rng::seeded(1);
        let z = l2_normalize(&rng::gaussian_matrix(&mut r, 20, 7));
        for row in z.row_iter() {
            assert!((row.norm() - 1.0).abs() <= 1e-12);
        }
        assert!((l2_normalize(&z) - &z).amax() <= 1e-15);
    }

    #[test]
    fn split_counts() {
        let labels: Vec<String> =
            (0..14).map(|i| if i < 10 { "p".to_string() } else { "n".to_string() }).collect();
        let ds = Dataset::new(Mat::from_fn(14, 1, |i, _| i as f64), Some(labels), "t").unwrap();
        let (tr, te) = one_class_split(&ds, "p", 0.7, 3).unwrap();
        assert_eq!(tr.n(), 7);
        assert_eq!(te.n(), 7);
        assert!(tr.labels.as_ref().unwrap().iter().all(|l| l == "p"));
        assert_eq!(te.labels.as_ref().unwrap().iter().filter(|l| *l == "n").count(), 4);
        let (tr2, _) = one_class_split(&ds, "p", 0.7, 3).unwrap();
        assert_eq!(tr, tr2);
        let mut all: Vec<f64> = tr.features.iter().copied().collect();
        all.extend(te.features.iter().copied().filter(|v| *v < 10.0));
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..10).map(|i| i as f64).collect::<Vec<_>>());
        assert!(one_class_split(&ds, "q", 0.7, 3).is_err());
    }

    #[test]
    fn ring_radii_in_band() {
        let ds = synth(&SynthKind::Ring { n: 300, r_in: 0.7, r_out: 1.0 }, 5).unwrap();
        assert_eq!(ds.n(), 300);
        for row in ds.features.row_iter() {
            let r = row.norm();
            assert!((0.7..=1.0).contains(&r));
        }
    }

    #[test]
    fn gaussian_mean_within_three_sigma() {
        let kind = SynthKind::Gaussian { n: 100, mean: vec![0.0, 0.0], cov: Mat::identity(2, 2) };
        let ds = synth(&kind, 17).unwrap();
        for j in 0..2 {
            assert!(ds.features.column(j).mean().abs() <= 0.3);
        }
    }

    #[test]
    fn arbitrary_single_draw_traced() {
        let ds = synth(&SynthKind::Arbitrary { n: 1 }, 42).unwrap();
        let mut r = rng::seeded(42);
        let t = 2.0 * (1.0 - r.random::<f64>());
        let z: f64 = rng::normal(&mut r);
        let u: f64 = r.random();
        let sign = if z > 0.0 { 1.0 } else { -1.0 };
        assert_eq!(ds.features[(0, 0)], t);
        assert_eq!(ds.features[(0, 1)], t.sqrt() * (t + sign * u));
        assert!(t > 0.0 && t <= 2.0);
    }

    #[test]
    fn invalid_synth_parameters() {
        assert!(synth(&SynthKind::Ring { n: 5, r_in: 1.0, r_out: 0.5 }, 0).is_err());
        assert!(synth(&SynthKind::Arbitrary { n: 0 }, 0).is_err());
    }
}
