//! Trained models and their versioned JSON file format.
//!
//! Matrices are stored row-major; floats are written with enough digits to
//! parse back to the identical bits, so a reloaded model scores exactly like
//! the one that was saved.

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::inference::Calibration;
use crate::kernels::KernelSpec;
use crate::kods::{kods_scores_batch, DualVars, KodsHyper, KodsModel};
use crate::linalg::Mat;
use crate::primal::{primal_scores_batch, FramePair, GodsHyper, TrainedPrimalModel, Variant};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Primal(TrainedPrimalModel),
    Kods(KodsModel),
}

impl Model {
    pub fn feature_dim(&self) -> usize {
        match self {
            Model::Primal(m) => m.feature_dim,
            Model::Kods(m) => m.support.ncols(),
        }
    }

    pub fn eta_effective(&self) -> f64 {
        match self {
            Model::Primal(m) => m.eta_effective,
            Model::Kods(m) => m.eta_effective,
        }
    }

    pub fn set_eta_effective(&mut self, eta: f64) {
        match self {
            Model::Primal(m) => m.eta_effective = eta,
            Model::Kods(m) => m.eta_effective = eta,
        }
    }

    pub fn variant_tag(&self) -> &'static str {
        match self {
            Model::Primal(m) => m.hyper.variant.name(),
            Model::Kods(_) => "kods",
        }
    }

    /// `(s1, s2)` for every row of `x`.
    pub fn scores(&self, x: &Mat) -> Result<Vec<(f64, f64)>> {
        match self {
            Model::Primal(m) => primal_scores_batch(m, x),
            Model::Kods(m) => kods_scores_batch(m, x),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub rows: usize,
    pub cols: usize,
    /// Row-major entries.
    pub data: Vec<f64>,
}

impl MatrixRecord {
    pub fn from_mat(m: &Mat) -> Self {
        let data = m.row_iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>()).collect();
        Self { rows: m.nrows(), cols: m.ncols(), data }
    }

    pub fn from_vector(v: &DVector<f64>) -> Self {
        Self { rows: v.len(), cols: 1, data: v.as_slice().to_vec() }
    }

    pub fn to_mat(&self) -> Result<Mat> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::Schema(format!(
                "matrix record claims {}x{} but holds {} values",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(Mat::from_row_slice(self.rows, self.cols, &self.data))
    }

    pub fn to_vector(&self) -> Result<DVector<f64>> {
        if self.cols != 1 || self.data.len() != self.rows {
            return Err(Error::Schema("expected a column vector".into()));
        }
        Ok(DVector::from_column_slice(&self.data))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub seed: u64,
    pub data_sha256: String,
    pub n_train: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelBody {
    Primal {
        hyper: GodsHyper,
        w1: MatrixRecord,
        w2: MatrixRecord,
        b1: MatrixRecord,
        b2: MatrixRecord,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        r1: Option<MatrixRecord>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        r2: Option<MatrixRecord>,
    },
    Kods {
        hyper: KodsHyper,
        kernel: KernelSpec,
        y: MatrixRecord,
        z: MatrixRecord,
        b1: MatrixRecord,
        b2: MatrixRecord,
        support: MatrixRecord,
        jitter: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub variant: String,
    pub feature_dim: usize,
    pub normalization: bool,
    pub eta_effective: f64,
    pub body: ModelBody,
    pub fingerprint: Fingerprint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<Calibration>,
}

/// SHA-256 over the shape and the row-major little-endian bytes of `x`.
pub fn data_hash(x: &Mat) -> String {
    let mut h = Sha256::new();
    h.update((x.nrows() as u64).to_le_bytes());
    h.update((x.ncols() as u64).to_le_bytes());
    for row in x.row_iter() {
        for v in row.iter() {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

impl ModelFile {
    pub fn from_model(model: &Model, fingerprint: Fingerprint, calibration: Option<Calibration>) -> Self {
        let (normalization, body) = match model {
            Model::Primal(m) => (
                m.normalization,
                ModelBody::Primal {
                    hyper: m.hyper.clone(),
                    w1: MatrixRecord::from_mat(&m.frames.w1),
                    w2: MatrixRecord::from_mat(&m.frames.w2),
                    b1: MatrixRecord::from_vector(&m.frames.b1),
                    b2: MatrixRecord::from_vector(&m.frames.b2),
                    r1: m.frames.r1.as_ref().map(MatrixRecord::from_vector),
                    r2: m.frames.r2.as_ref().map(MatrixRecord::from_vector),
                },
            ),
            Model::Kods(m) => (
                m.normalization,
                ModelBody::Kods {
                    hyper: m.hyper.clone(),
                    kernel: m.kernel.clone(),
                    y: MatrixRecord::from_mat(&m.duals.y),
                    z: MatrixRecord::from_mat(&m.duals.z),
                    b1: MatrixRecord::from_vector(&m.b1),
                    b2: MatrixRecord::from_vector(&m.b2),
                    support: MatrixRecord::from_mat(&m.support),
                    jitter: m.jitter,
                },
            ),
        };
        Self {
            schema_version: SCHEMA_VERSION,
            variant: model.variant_tag().to_string(),
            feature_dim: model.feature_dim(),
            normalization,
            eta_effective: model.eta_effective(),
            body,
            fingerprint,
            calibration,
        }
    }

    pub fn to_model(&self) -> Result<Model> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "unsupported schema version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let model = match &self.body {
            ModelBody::Primal { hyper, w1, w2, b1, b2, r1, r2 } => {
                let frames = FramePair {
                    w1: w1.to_mat()?,
                    w2: w2.to_mat()?,
                    b1: b1.to_vector()?,
                    b2: b2.to_vector()?,
                    r1: r1.as_ref().map(|r| r.to_vector()).transpose()?,
                    r2: r2.as_ref().map(|r| r.to_vector()).transpose()?,
                };
                let (d, k) = frames.w1.shape();
                if d != self.feature_dim
                    || frames.w2.shape() != (d, k)
                    || frames.b1.len() != k
                    || frames.b2.len() != k
                    || (hyper.variant == Variant::GodsN) != frames.r1.is_some()
                {
                    return Err(Error::Schema("primal model matrices are inconsistent".into()));
                }
                Model::Primal(TrainedPrimalModel {
                    frames,
                    hyper: hyper.clone(),
                    eta_effective: self.eta_effective,
                    feature_dim: self.feature_dim,
                    normalization: self.normalization,
                })
            }
            ModelBody::Kods { hyper, kernel, y, z, b1, b2, support, jitter } => {
                let m = KodsModel {
                    duals: DualVars { y: y.to_mat()?, z: z.to_mat()? },
                    kernel: kernel.clone(),
                    support: support.to_mat()?,
                    b1: b1.to_vector()?,
                    b2: b2.to_vector()?,
                    eta_effective: self.eta_effective,
                    jitter: *jitter,
                    hyper: hyper.clone(),
                    normalization: self.normalization,
                };
                let (k, n) = m.duals.y.shape();
                if m.support.nrows() != n
                    || m.support.ncols() != self.feature_dim
                    || m.duals.z.shape() != (k, n)
                    || m.b1.len() != k
                    || m.b2.len() != k
                {
                    return Err(Error::Schema("KODS model matrices are inconsistent".into()));
                }
                Model::Kods(m)
            }
        };
        if model.variant_tag() != self.variant {
            return Err(Error::Schema(format!(
                "variant tag {:?} does not match the stored model",
                self.variant
            )));
        }
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Schema(format!("model file: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
