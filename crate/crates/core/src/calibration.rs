//! Score calibration and fusion: weighted averaging and prior-weighted
//! logistic regression.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::trials::{ScoreSet, TrialList};

/// Affine combination `Σ w_i s_i + b` of per-system scores.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    pub weights: Vec<f64>,
    pub offset: f64,
}

impl FusionModel {
    pub fn identity(systems: usize) -> Self {
        Self {
            weights: vec![1.0; systems],
            offset: 0.0,
        }
    }

    pub fn apply_row(&self, row: &[f64]) -> f64 {
        self.weights.iter().zip(row).map(|(w, s)| w * s).sum::<f64>() + self.offset
    }

    /// `weight_i=…` lines followed by `offset=…`, values round-trip exact.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, w) in self.weights.iter().enumerate() {
            writeln!(out, "weight_{i}={w:?}").unwrap();
        }
        writeln!(out, "offset={:?}", self.offset).unwrap();
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut weights: Vec<Option<f64>> = Vec::new();
        let mut offset = None;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| Error::Parse {
                line: n + 1,
                msg: msg.to_string(),
            };
            let (k, v) = line.split_once('=').ok_or_else(|| err("expected key=value"))?;
            let v: f64 = v.trim().parse().map_err(|_| err("bad number"))?;
            let k = k.trim();
            if k == "offset" {
                offset = Some(v);
            } else if let Some(i) = k.strip_prefix("weight_") {
                let i: usize = i.parse().map_err(|_| err("bad weight index"))?;
                if weights.len() <= i {
                    weights.resize(i + 1, None);
                }
                if weights[i].replace(v).is_some() {
                    return Err(err("duplicate weight"));
                }
            } else {
                return Err(err(&format!("unknown key {k}")));
            }
        }
        let weights = weights
            .into_iter()
            .enumerate()
            .map(|(i, w)| w.ok_or_else(|| Error::InvalidConfig(format!("missing weight_{i}"))))
            .collect::<Result<Vec<_>>>()?;
        if weights.is_empty() {
            return Err(Error::InvalidConfig("model has no weights".into()));
        }
        Ok(Self {
            weights,
            offset: offset.ok_or_else(|| Error::InvalidConfig("missing offset".into()))?,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(std::fs::write(path, self.to_text())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionConfig {
    pub weights: Vec<f64>,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            weights: vec![0.4, 0.4, 0.1, 0.1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogregConfig {
    pub prior: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for LogregConfig {
    fn default() -> Self {
        Self {
            prior: 0.5,
            max_iters: 1000,
            tol: 1e-10,
        }
    }
}

/// Per-trial rows of system scores; every set must follow the first one's
/// trial order.
fn stack(sets: &[ScoreSet]) -> Result<Vec<Vec<f64>>> {
    let first = sets.first().ok_or(Error::EmptyInput("no score sets"))?;
    for s in &sets[1..] {
        first.check_aligned(s)?;
    }
    Ok((0..first.len())
        .map(|i| sets.iter().map(|s| s.scores[i].score).collect())
        .collect())
}

fn with_values(template: &ScoreSet, values: Vec<f64>) -> ScoreSet {
    let mut out = template.clone();
    for (s, v) in out.scores.iter_mut().zip(values) {
        s.score = v;
    }
    out
}

pub fn fuse_weighted(sets: &[ScoreSet], weights: &[f64]) -> Result<ScoreSet> {
    if weights.len() != sets.len() {
        return Err(Error::InvalidConfig(format!(
            "{} fusion weights for {} systems",
            weights.len(),
            sets.len()
        )));
    }
    let total: f64 = weights.iter().sum();
    if weights.iter().any(|w| !w.is_finite()) || total == 0.0 {
        return Err(Error::InvalidConfig(
            "fusion weights must be finite with nonzero sum".into(),
        ));
    }
    let rows = stack(sets)?;
    // written as an offset from the first system so that agreeing systems
    // reproduce their common score bit-exactly
    let values = rows
        .iter()
        .map(|r| r[0] + r.iter().zip(weights).map(|(s, w)| w * (s - r[0])).sum::<f64>() / total)
        .collect();
    Ok(with_values(&sets[0], values))
}

pub fn apply_fusion(sets: &[ScoreSet], model: &FusionModel) -> Result<ScoreSet> {
    if model.weights.len() != sets.len() {
        return Err(Error::InvalidConfig(format!(
            "model has {} weights for {} systems",
            model.weights.len(),
            sets.len()
        )));
    }
    let rows = stack(sets)?;
    Ok(with_values(&sets[0], rows.iter().map(|r| model.apply_row(r)).collect()))
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn check_key(labels: &[bool], prior: f64) -> Result<(f64, f64)> {
    if !(prior > 0.0 && prior < 1.0) {
        return Err(Error::InvalidConfig(format!("prior must be in (0, 1), got {prior}")));
    }
    let nt = labels.iter().filter(|&&l| l).count();
    if nt == 0 || nt == labels.len() {
        return Err(Error::SingleClassKey);
    }
    Ok((nt as f64, (labels.len() - nt) as f64))
}

/// Prior-weighted cross-entropy (nats) of scores read as log-likelihood ratios.
pub fn cross_entropy(llrs: &[f64], labels: &[bool], prior: f64) -> Result<f64> {
    let (nt, nn) = check_key(labels, prior)?;
    let off = logit(prior);
    let mut ce = 0.0;
    for (&s, &l) in llrs.iter().zip(labels) {
        ce += if l {
            prior / nt * softplus(-(s + off))
        } else {
            (1.0 - prior) / nn * softplus(s + off)
        };
    }
    Ok(ce)
}

/// Objective and gradient for standardized columns.
fn objective(x: &[Vec<f64>], labels: &[bool], theta: &[f64], prior: f64, nt: f64, nn: f64) -> (f64, Vec<f64>) {
    let k = theta.len() - 1;
    let off = logit(prior);
    let mut ce = 0.0;
    let mut grad = vec![0.0; k + 1];
    for (row, &l) in x.iter().zip(labels) {
        let a = row.iter().zip(theta).map(|(s, w)| s * w).sum::<f64>() + theta[k] + off;
        let g = if l {
            ce += prior / nt * softplus(-a);
            -prior / nt * sigmoid(-a)
        } else {
            ce += (1.0 - prior) / nn * softplus(a);
            (1.0 - prior) / nn * sigmoid(a)
        };
        for (gi, s) in grad.iter_mut().zip(row) {
            *gi += g * s;
        }
        grad[k] += g;
    }
    (ce, grad)
}

/// Fit `σ(Σ w_i s_i + b + logit(prior))` to the key by gradient descent with
/// backtracking, starting from `w = 0, b = 0`. Columns are standardized
/// internally and the solution is mapped back to raw score units.
pub fn train_logreg(rows: &[Vec<f64>], labels: &[bool], cfg: &LogregConfig) -> Result<FusionModel> {
    if rows.len() != labels.len() {
        return Err(Error::DimMismatch {
            expected: labels.len(),
            got: rows.len(),
        });
    }
    let (nt, nn) = check_key(labels, cfg.prior)?;
    let k = rows[0].len();
    if k == 0 || rows.iter().any(|r| r.len() != k) {
        return Err(Error::InvalidConfig("score rows must have one entry per system".into()));
    }
    let n = rows.len() as f64;
    let mut center = vec![0.0; k];
    let mut scale = vec![1.0; k];
    for j in 0..k {
        let m = rows.iter().map(|r| r[j]).sum::<f64>() / n;
        let sd = (rows.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n).sqrt();
        center[j] = m;
        if sd > 0.0 {
            scale[j] = sd;
        }
    }
    let x: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| (0..k).map(|j| (r[j] - center[j]) / scale[j]).collect())
        .collect();

    let mut theta = vec![0.0; k + 1];
    let (mut ce, mut grad) = objective(&x, labels, &theta, cfg.prior, nt, nn);
    let mut step = 1.0;
    for _ in 0..cfg.max_iters {
        let gg: f64 = grad.iter().map(|g| g * g).sum();
        if gg == 0.0 {
            break;
        }
        // Armijo backtracking
        let mut accepted = None;
        let mut t = step;
        for _ in 0..60 {
            let cand: Vec<f64> = theta.iter().zip(&grad).map(|(p, g)| p - t * g).collect();
            let (c, g) = objective(&x, labels, &cand, cfg.prior, nt, nn);
            if c <= ce - 1e-4 * t * gg {
                accepted = Some((cand, c, g));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, c, g)) = accepted else { break };
        let improvement = ce - c;
        theta = cand;
        ce = c;
        grad = g;
        step = (t * 2.0).min(1e3);
        if improvement < cfg.tol {
            break;
        }
    }
    let weights: Vec<f64> = (0..k).map(|j| theta[j] / scale[j]).collect();
    let offset = theta[k] - (0..k).map(|j| weights[j] * center[j]).sum::<f64>();
    Ok(FusionModel { weights, offset })
}

/// Models trained by [`calibrate_pipeline`].
#[derive(Debug, Clone)]
pub struct CalibrationResult {
    pub scores: ScoreSet,
    pub per_system: Vec<FusionModel>,
    pub fusion: FusionModel,
    pub recalibration: FusionModel,
}

impl CalibrationResult {
    /// The three stages folded into a single affine map over the raw systems.
    pub fn composed(&self) -> FusionModel {
        let g = self.recalibration.weights[0];
        let weights = self
            .per_system
            .iter()
            .zip(&self.fusion.weights)
            .map(|(c, w)| g * w * c.weights[0])
            .collect();
        let inner: f64 = self
            .per_system
            .iter()
            .zip(&self.fusion.weights)
            .map(|(c, w)| w * c.offset)
            .sum();
        FusionModel {
            weights,
            offset: g * (inner + self.fusion.offset) + self.recalibration.offset,
        }
    }
}

/// Calibrate each system, fuse the calibrated scores with logistic
/// regression and re-calibrate the fused output.
pub fn calibrate_pipeline(sets: &[ScoreSet], key: &TrialList, cfg: &LogregConfig) -> Result<CalibrationResult> {
    let first = sets.first().ok_or(Error::EmptyInput("no score sets"))?;
    for s in &sets[1..] {
        first.check_aligned(s)?;
    }
    let labels = key.labels()?;
    // score sets may list the key's trials in a different order
    let keyed: Vec<ScoreSet> = sets
        .iter()
        .map(|s| Ok(ScoreSet::from_values(key, s.aligned_values(key)?)))
        .collect::<Result<_>>()?;
    let mut per_system = Vec::new();
    let mut calibrated = Vec::new();
    for s in &keyed {
        let rows: Vec<Vec<f64>> = s.values().into_iter().map(|v| vec![v]).collect();
        let m = train_logreg(&rows, &labels, cfg)?;
        calibrated.push(apply_fusion(std::slice::from_ref(s), &m)?);
        per_system.push(m);
    }
    let rows = stack(&calibrated)?;
    let fusion = train_logreg(&rows, &labels, cfg)?;
    let fused = apply_fusion(&calibrated, &fusion)?;
    let rows: Vec<Vec<f64>> = fused.values().into_iter().map(|v| vec![v]).collect();
    let recalibration = train_logreg(&rows, &labels, cfg)?;
    let out = apply_fusion(std::slice::from_ref(&fused), &recalibration)?;
    // report in the caller's trial order
    let lookup: std::collections::HashMap<(&str, &str), f64> = out
        .scores
        .iter()
        .map(|s| ((s.enroll.as_str(), s.test.as_str()), s.score))
        .collect();
    let values = first
        .scores
        .iter()
        .map(|s| lookup[&(s.enroll.as_str(), s.test.as_str())])
        .collect();
    Ok(CalibrationResult {
        scores: with_values(first, values),
        per_system,
        fusion,
        recalibration,
    })
}
