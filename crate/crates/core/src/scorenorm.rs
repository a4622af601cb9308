//! Adaptive symmetric score normalization (S-norm) against a cohort of
//! speaker-averaged embeddings.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::DVector;
use ndarray::Array2;

use crate::backend::{group_by_label, length_normalize, Backend, BackendKind};
use crate::error::{Error, Result};
use crate::frontend::FeatureMatrix;
use crate::io::{read_tensors, write_tensors, Tensor, TensorFile};
use crate::trials::{ScoreSet, TrialList};

pub const COHORT_TENSOR: &str = "cohort.means";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnormConfig {
    pub top_x: usize,
    pub sigma_floor: f64,
}

impl Default for SnormConfig {
    fn default() -> Self {
        Self {
            top_x: 300,
            sigma_floor: 1e-12,
        }
    }
}

impl SnormConfig {
    pub fn validate(&self) -> Result<()> {
        if self.top_x < 2 {
            return Err(Error::InvalidConfig(format!(
                "snorm top_x must be >= 2, got {}",
                self.top_x
            )));
        }
        Ok(())
    }
}

/// One preprocessed model per cohort speaker.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub means: Vec<DVector<f64>>,
}

impl Cohort {
    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn to_tensors(&self) -> TensorFile {
        let d = self.means.first().map_or(0, |m| m.len());
        let flat: Vec<f64> = self.means.iter().flat_map(|m| m.iter().copied()).collect();
        let mut f = TensorFile::new();
        f.insert(COHORT_TENSOR, Tensor::from_f64(vec![self.means.len(), d], &flat));
        f
    }

    pub fn from_tensors(f: &TensorFile) -> Result<Self> {
        let t = f
            .get(COHORT_TENSOR)
            .ok_or_else(|| Error::WeightsMismatch(format!("missing tensor {COHORT_TENSOR}")))?;
        let [c, d] = t.shape[..] else {
            return Err(Error::WeightsMismatch(format!("{COHORT_TENSOR} must be rank 2")));
        };
        let data = t.to_f64();
        Ok(Self {
            means: (0..c)
                .map(|i| DVector::from_column_slice(&data[i * d..(i + 1) * d]))
                .collect(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_tensors(path, &self.to_tensors())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_tensors(&read_tensors(path)?)
    }
}

/// Average the backend-preprocessed embeddings of each speaker. Cosine
/// cohort means are length-normalized again after averaging.
pub fn build_cohort(embeddings: &[Vec<f64>], labels: &[usize], backend: &Backend) -> Result<Cohort> {
    if embeddings.is_empty() {
        return Err(Error::EmptyInput("no cohort embeddings"));
    }
    if embeddings.len() != labels.len() {
        return Err(Error::DimMismatch {
            expected: embeddings.len(),
            got: labels.len(),
        });
    }
    let pre = embeddings
        .iter()
        .map(|e| backend.preprocess(e))
        .collect::<Result<Vec<_>>>()?;
    let mut means = Vec::new();
    for idx in group_by_label(labels) {
        let mut m = DVector::zeros(pre[idx[0]].len());
        for &i in &idx {
            m += &pre[i];
        }
        m /= idx.len() as f64;
        if backend.kind() == BackendKind::Cosine {
            m = length_normalize(&m)?;
        }
        means.push(m);
    }
    Ok(Cohort { means })
}

/// Mean and population standard deviation of the `top_x` highest scores.
pub fn top_stats(scores: &[f64], top_x: usize, sigma_floor: f64) -> (f64, f64) {
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted.truncate(top_x.min(scores.len()));
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let var = sorted.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    (mean, var.sqrt().max(sigma_floor))
}

/// `½ [(raw − μ_e)/σ_e + (raw − μ_t)/σ_t]` over the top-scoring cohort
/// selections of each side.
pub fn adapt_snorm(raw: f64, enroll_cohort: &[f64], test_cohort: &[f64], cfg: &SnormConfig) -> Result<f64> {
    cfg.validate()?;
    for side in [enroll_cohort, test_cohort] {
        if side.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "S-norm needs at least 2 cohort scores, got {}",
                side.len()
            )));
        }
    }
    let (me, se) = top_stats(enroll_cohort, cfg.top_x, cfg.sigma_floor);
    let (mt, st) = top_stats(test_cohort, cfg.top_x, cfg.sigma_floor);
    Ok(0.5 * ((raw - me) / se + (raw - mt) / st))
}

/// Raw backend scores of every listed utterance against every cohort model,
/// one row per utterance.
pub fn cohort_scores(
    backend: &Backend,
    cohort: &Cohort,
    ids: &[&str],
    embeddings: &HashMap<String, Vec<f64>>,
) -> Result<FeatureMatrix> {
    let mut m = Array2::zeros((ids.len(), cohort.len()));
    for (r, id) in ids.iter().enumerate() {
        let e = embeddings
            .get(*id)
            .ok_or_else(|| Error::MissingUtterance(id.to_string()))?;
        let p = backend.preprocess(e)?;
        for (c, model) in cohort.means.iter().enumerate() {
            m[(r, c)] = backend.score_preprocessed(&p, model)?;
        }
    }
    Ok(FeatureMatrix::new(m, 0.0))
}

/// S-normalize a score set whose entries follow `trials`.
pub fn snorm_trials(
    backend: &Backend,
    cohort: &Cohort,
    embeddings: &HashMap<String, Vec<f64>>,
    trials: &TrialList,
    raw: &ScoreSet,
    cfg: &SnormConfig,
) -> Result<ScoreSet> {
    cfg.validate()?;
    let raw_values = raw.aligned_values(trials)?;
    let mut ids: Vec<&str> = Vec::new();
    let mut row: HashMap<&str, usize> = HashMap::new();
    for t in &trials.trials {
        for id in [t.enroll.as_str(), t.test.as_str()] {
            if !row.contains_key(id) {
                row.insert(id, ids.len());
                ids.push(id);
            }
        }
    }
    let cs = cohort_scores(backend, cohort, &ids, embeddings)?;
    let values = trials
        .trials
        .iter()
        .zip(raw_values)
        .map(|(t, s)| {
            let e = cs.row(row[t.enroll.as_str()]);
            let v = cs.row(row[t.test.as_str()]);
            adapt_snorm(s, e.as_slice().expect("row"), v.as_slice().expect("row"), cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreSet::from_values(trials, values))
}
