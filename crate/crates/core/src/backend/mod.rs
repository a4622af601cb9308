//! Embedding preprocessing, PLDA and cosine scoring.

mod center;
mod lda;
mod plda;

pub use center::{apply_center, estimate_center, CenterStats};
pub use lda::{scatter_matrices, train_lda, LdaTransform};
pub use plda::{plda_llr, train_plda, train_plda_traced, PldaConfig, PldaFit, PldaModel, PldaScorer};

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::io::{read_tensors, write_tensors, Tensor, TensorFile};
use crate::trials::{ScoreSet, TrialList};

/// Indices of each class, in ascending label order.
pub(crate) fn group_by_label(labels: &[usize]) -> Vec<Vec<usize>> {
    let mut m: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        m.entry(l).or_default().push(i);
    }
    m.into_values().collect()
}

pub(crate) fn to_vectors(embeddings: &[Vec<f64>]) -> Result<Vec<DVector<f64>>> {
    let first = embeddings.first().ok_or(Error::EmptyInput("no embeddings"))?;
    let d = first.len();
    embeddings
        .iter()
        .map(|e| {
            if e.len() != d {
                return Err(Error::DimMismatch {
                    expected: d,
                    got: e.len(),
                });
            }
            Ok(DVector::from_column_slice(e))
        })
        .collect()
}

pub fn length_normalize(emb: &DVector<f64>) -> Result<DVector<f64>> {
    let n = emb.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::DegenerateNorm);
    }
    Ok(emb / n)
}

pub fn cosine_score(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateNorm);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Plda,
    Cosine,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Plda => "plda",
            BackendKind::Cosine => "cosine",
        })
    }
}

impl FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plda" => Ok(BackendKind::Plda),
            "cosine" => Ok(BackendKind::Cosine),
            _ => Err(Error::InvalidConfig(format!(
                "unknown backend {s:?} (expected plda or cosine)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub plda: PldaConfig,
    /// Relative ridge added to the within-class scatter before LDA.
    pub lda_eps: f64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Plda,
            plda: PldaConfig::default(),
            lda_eps: 1e-6,
        }
    }
}

/// A trained scoring backend.
#[derive(Debug, Clone)]
pub enum Backend {
    Plda {
        center: CenterStats,
        lda: LdaTransform,
        plda: PldaModel,
        scorer: PldaScorer,
    },
    Cosine {
        center: CenterStats,
    },
}

const CENTER: &str = "center.mean";
const LDA: &str = "lda.mat";
const PLDA_MU: &str = "plda.mu";
const PLDA_V: &str = "plda.V";
const PLDA_U: &str = "plda.U";
const PLDA_PSI: &str = "plda.psi";

fn mat_tensor(m: &DMatrix<f64>) -> Tensor {
    Tensor::from_f64(vec![m.nrows(), m.ncols()], m.transpose().as_slice())
}

fn vec_tensor(v: &DVector<f64>) -> Tensor {
    Tensor::from_f64(vec![v.len()], v.as_slice())
}

fn get<'a>(f: &'a TensorFile, name: &str) -> Result<&'a Tensor> {
    f.get(name)
        .ok_or_else(|| Error::WeightsMismatch(format!("missing tensor {name}")))
}

fn tensor_mat(f: &TensorFile, name: &str) -> Result<DMatrix<f64>> {
    let t = get(f, name)?;
    let [r, c] = t.shape[..] else {
        return Err(Error::WeightsMismatch(format!("{name} must be rank 2")));
    };
    Ok(DMatrix::from_row_slice(r, c, &t.to_f64()))
}

fn tensor_vec(f: &TensorFile, name: &str) -> Result<DVector<f64>> {
    let t = get(f, name)?;
    if t.shape.len() != 1 {
        return Err(Error::WeightsMismatch(format!("{name} must be rank 1")));
    }
    Ok(DVector::from_vec(t.to_f64()))
}

impl Backend {
    /// Fit centering, and for PLDA also LDA and the PLDA model on the
    /// preprocessed training embeddings.
    pub fn train(embeddings: &[Vec<f64>], labels: &[usize], cfg: &BackendConfig) -> Result<Self> {
        let center = estimate_center(embeddings)?;
        match cfg.kind {
            BackendKind::Cosine => Ok(Backend::Cosine { center }),
            BackendKind::Plda => {
                let centered = embeddings
                    .iter()
                    .map(|e| apply_center(e, &center))
                    .collect::<Result<Vec<_>>>()?;
                let lda = train_lda(&centered, labels, cfg.lda_eps)?;
                let projected = centered
                    .iter()
                    .map(|e| {
                        let p = lda.apply(&DVector::from_column_slice(e))?;
                        Ok(length_normalize(&p)?.as_slice().to_vec())
                    })
                    .collect::<Result<Vec<_>>>()?;
                let plda = train_plda(&projected, labels, &cfg.plda)?;
                Self::from_parts(center, lda, plda)
            }
        }
    }

    pub fn from_parts(center: CenterStats, lda: LdaTransform, plda: PldaModel) -> Result<Self> {
        let scorer = PldaScorer::new(&plda)?;
        Ok(Backend::Plda {
            center,
            lda,
            plda,
            scorer,
        })
    }

    pub fn kind(&self) -> BackendKind {
        match self {
            Backend::Plda { .. } => BackendKind::Plda,
            Backend::Cosine { .. } => BackendKind::Cosine,
        }
    }

    pub fn center(&self) -> &CenterStats {
        match self {
            Backend::Plda { center, .. } | Backend::Cosine { center } => center,
        }
    }

    /// Center, then for PLDA project with LDA and length-normalize.
    pub fn preprocess(&self, emb: &[f64]) -> Result<DVector<f64>> {
        let c = self.center().apply(&DVector::from_column_slice(emb))?;
        match self {
            Backend::Cosine { .. } => Ok(c),
            Backend::Plda { lda, .. } => length_normalize(&lda.apply(&c)?),
        }
    }

    /// Score two already preprocessed embeddings.
    pub fn score_preprocessed(&self, enroll: &DVector<f64>, test: &DVector<f64>) -> Result<f64> {
        match self {
            Backend::Cosine { .. } => cosine_score(enroll.as_slice(), test.as_slice()),
            Backend::Plda { scorer, .. } => scorer.llr(enroll, test),
        }
    }

    pub fn score_pair(&self, enroll: &[f64], test: &[f64]) -> Result<f64> {
        self.score_preprocessed(&self.preprocess(enroll)?, &self.preprocess(test)?)
    }

    /// Score every trial in order. Each utterance is preprocessed once.
    pub fn score_trials(&self, embeddings: &HashMap<String, Vec<f64>>, trials: &TrialList) -> Result<ScoreSet> {
        let mut cache: HashMap<&str, DVector<f64>> = HashMap::new();
        let mut values = Vec::with_capacity(trials.len());
        for t in &trials.trials {
            for id in [&t.enroll, &t.test] {
                if !cache.contains_key(id.as_str()) {
                    let e = embeddings.get(id).ok_or_else(|| Error::MissingUtterance(id.clone()))?;
                    cache.insert(id.as_str(), self.preprocess(e)?);
                }
            }
            values.push(self.score_preprocessed(&cache[t.enroll.as_str()], &cache[t.test.as_str()])?);
        }
        Ok(ScoreSet::from_values(trials, values))
    }

    /// Like [`Backend::score_trials`], but an enrollment id may name several
    /// utterances whose raw embeddings are averaged into one model.
    pub fn score_trials_multi_enroll(
        &self,
        embeddings: &HashMap<String, Vec<f64>>,
        enrollments: &HashMap<String, Vec<String>>,
        trials: &TrialList,
    ) -> Result<ScoreSet> {
        let mut merged = embeddings.clone();
        for (model, utts) in enrollments {
            let parts = utts
                .iter()
                .map(|u| {
                    embeddings
                        .get(u)
                        .cloned()
                        .ok_or_else(|| Error::MissingUtterance(u.clone()))
                })
                .collect::<Result<Vec<_>>>()?;
            merged.insert(model.clone(), average_embeddings(&parts)?);
        }
        self.score_trials(&merged, trials)
    }

    pub fn to_tensors(&self) -> TensorFile {
        let mut f = TensorFile::new();
        f.insert(CENTER, vec_tensor(&self.center().mean));
        if let Backend::Plda { lda, plda, .. } = self {
            f.insert(LDA, mat_tensor(&lda.matrix));
            f.insert(PLDA_MU, vec_tensor(&plda.mu));
            f.insert(PLDA_V, mat_tensor(&plda.v));
            f.insert(PLDA_U, mat_tensor(&plda.u));
            f.insert(PLDA_PSI, vec_tensor(&plda.psi));
        }
        f
    }

    /// A file without PLDA tensors loads as a cosine backend.
    pub fn from_tensors(f: &TensorFile) -> Result<Self> {
        let center = CenterStats {
            mean: tensor_vec(f, CENTER)?,
        };
        if f.get(PLDA_MU).is_none() {
            return Ok(Backend::Cosine { center });
        }
        let matrix = tensor_mat(f, LDA)?;
        let d = center.dim();
        if matrix.shape() != (d, d) {
            return Err(Error::WeightsMismatch(format!("{LDA} must be {d}x{d}")));
        }
        let lda = LdaTransform {
            eigenvalues: vec![f64::NAN; d],
            matrix,
        };
        let plda = PldaModel {
            mu: tensor_vec(f, PLDA_MU)?,
            v: tensor_mat(f, PLDA_V)?,
            u: tensor_mat(f, PLDA_U)?,
            psi: tensor_vec(f, PLDA_PSI)?,
        };
        Self::from_parts(center, lda, plda)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_tensors(path, &self.to_tensors())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_tensors(&read_tensors(path)?)
    }
}

pub fn average_embeddings(embs: &[Vec<f64>]) -> Result<Vec<f64>> {
    Ok(estimate_center(embs)?.mean.as_slice().to_vec())
}
