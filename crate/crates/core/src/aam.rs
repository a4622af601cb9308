//! Additive angular margin (AAM) softmax head.
//!
//! Logits are scaled cosines between the length-normalized embedding and the
//! length-normalized class weights; the true-class angle gets the margin `m`
//! added before the cosine is taken. Past `θ = π - m` the margin would wrap
//! around, so the true-class cosine falls back to `cos θ - m sin m` there.
//!
//! Only the head is trained here: embeddings stay frozen.

use std::path::Path;

use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::io::{read_tensors, write_tensors, Tensor, TensorFile};
use crate::rng::{stream_rng, Stream};

pub const HEAD_TENSOR: &str = "aam.weight";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AamConfig {
    pub scale: f64,
    /// Radians.
    pub margin: f64,
}

impl Default for AamConfig {
    fn default() -> Self {
        Self {
            scale: 30.0,
            margin: 0.2,
        }
    }
}

impl AamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0) || !(0.0..std::f64::consts::FRAC_PI_2).contains(&self.margin) {
            return Err(Error::InvalidConfig(format!(
                "AAM needs s > 0 and 0 <= m < pi/2, got s={} m={}",
                self.scale, self.margin
            )));
        }
        Ok(())
    }

    /// Margin-modified true-class cosine and its derivative.
    fn target_cosine(&self, c: f64) -> (f64, f64) {
        let (sm, cm) = self.margin.sin_cos();
        if c > -cm {
            let c = c.clamp(-1.0, 1.0);
            let sin = (1.0 - c * c).max(0.0).sqrt();
            let d = if sin > 0.0 { cm + c * sm / sin } else { cm };
            (c * cm - sin * sm, d)
        } else {
            (c - self.margin * sm, 1.0)
        }
    }
}

/// Class-weight matrix, one row per class.
#[derive(Debug, Clone, PartialEq)]
pub struct AamHead {
    pub weight: Array2<f64>,
}

impl AamHead {
    pub fn new(weight: Array2<f64>) -> Self {
        Self { weight }
    }

    /// Rows drawn i.i.d. standard normal from `seed`.
    pub fn random(num_classes: usize, dim: usize, seed: u64) -> Self {
        let mut rng = stream_rng(seed, Stream::Head, 0);
        Self {
            weight: Array2::from_shape_simple_fn((num_classes, dim), || StandardNormal.sample(&mut rng)),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.weight.nrows()
    }

    pub fn dim(&self) -> usize {
        self.weight.ncols()
    }

    /// Plain cosine scores against every class (no margin, no scale).
    pub fn cosines(&self, emb: &[f64]) -> Result<Vec<f64>> {
        Ok(Normalized::new(emb, self)?.cos)
    }

    /// Class with the highest cosine.
    pub fn predict(&self, emb: &[f64]) -> Result<usize> {
        let c = self.cosines(emb)?;
        Ok((0..c.len()).max_by(|&a, &b| c[a].total_cmp(&c[b])).unwrap_or(0))
    }

    pub fn to_tensors(&self) -> TensorFile {
        let mut f = TensorFile::new();
        f.insert(
            HEAD_TENSOR,
            Tensor::from_f64(
                vec![self.num_classes(), self.dim()],
                self.weight.as_slice().expect("standard layout"),
            ),
        );
        f
    }

    pub fn from_tensors(f: &TensorFile) -> Result<Self> {
        let t = f
            .get(HEAD_TENSOR)
            .ok_or_else(|| Error::WeightsMismatch(format!("missing tensor {HEAD_TENSOR}")))?;
        let [n, d] = t.shape[..] else {
            return Err(Error::WeightsMismatch(format!("{HEAD_TENSOR} must be rank 2")));
        };
        Ok(Self::new(
            Array2::from_shape_vec((n, d), t.to_f64()).expect("shape from file"),
        ))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_tensors(path, &self.to_tensors())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_tensors(&read_tensors(path)?)
    }
}

/// Unit embedding, unit class rows and their cosines.
struct Normalized {
    e_hat: Vec<f64>,
    e_norm: f64,
    w_hat: Array2<f64>,
    w_norm: Vec<f64>,
    cos: Vec<f64>,
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

impl Normalized {
    fn new(emb: &[f64], head: &AamHead) -> Result<Self> {
        if emb.len() != head.dim() {
            return Err(Error::DimMismatch {
                expected: head.dim(),
                got: emb.len(),
            });
        }
        let e_norm = norm(emb.iter().copied());
        if !(e_norm > 0.0) || !e_norm.is_finite() {
            return Err(Error::DegenerateNorm);
        }
        let e_hat: Vec<f64> = emb.iter().map(|v| v / e_norm).collect();
        let mut w_hat = head.weight.clone();
        let mut w_norm = Vec::with_capacity(head.num_classes());
        let mut cos = Vec::with_capacity(head.num_classes());
        for mut row in w_hat.rows_mut() {
            let n = norm(row.iter().copied());
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::DegenerateNorm);
            }
            row.mapv_inplace(|v| v / n);
            w_norm.push(n);
            cos.push(row.iter().zip(&e_hat).map(|(a, b)| a * b).sum());
        }
        Ok(Self {
            e_hat,
            e_norm,
            w_hat,
            w_norm,
            cos,
        })
    }
}

/// Scaled cosine logits with the angular margin applied to `label`.
pub fn aam_logits(emb: &[f64], head: &AamHead, label: usize, cfg: &AamConfig) -> Result<Vec<f64>> {
    check_label(label, head)?;
    let n = Normalized::new(emb, head)?;
    let mut z: Vec<f64> = n.cos.iter().map(|c| cfg.scale * c).collect();
    z[label] = cfg.scale * cfg.target_cosine(n.cos[label]).0;
    Ok(z)
}

fn check_label(label: usize, head: &AamHead) -> Result<()> {
    if label >= head.num_classes() {
        return Err(Error::InvalidConfig(format!(
            "label {label} out of range for {} classes",
            head.num_classes()
        )));
    }
    Ok(())
}

fn check_batch(embeddings: &[Vec<f64>], labels: &[usize]) -> Result<()> {
    if embeddings.is_empty() {
        return Err(Error::EmptyInput("AAM batch"));
    }
    if embeddings.len() != labels.len() {
        return Err(Error::DimMismatch {
            expected: embeddings.len(),
            got: labels.len(),
        });
    }
    Ok(())
}

/// `(log-sum-exp(z) - z[label], softmax(z))`.
fn cross_entropy(z: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let loss = max + total.ln() - z[label];
    (loss, exps.into_iter().map(|e| e / total).collect())
}

/// Mean softmax cross-entropy over the AAM logits of a batch.
pub fn aam_loss(embeddings: &[Vec<f64>], labels: &[usize], head: &AamHead, cfg: &AamConfig) -> Result<f64> {
    check_batch(embeddings, labels)?;
    let mut total = 0.0;
    for (e, &y) in embeddings.iter().zip(labels) {
        total += cross_entropy(&aam_logits(e, head, y, cfg)?, y).0;
    }
    Ok(total / embeddings.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AamGradient {
    pub loss: f64,
    pub head: Array2<f64>,
    pub embeddings: Vec<Vec<f64>>,
}

/// Loss with exact gradients for the head weights and the embeddings.
pub fn aam_grad(embeddings: &[Vec<f64>], labels: &[usize], head: &AamHead, cfg: &AamConfig) -> Result<AamGradient> {
    check_batch(embeddings, labels)?;
    let inv_b = 1.0 / embeddings.len() as f64;
    let mut loss = 0.0;
    let mut g_head = Array2::zeros(head.weight.raw_dim());
    let mut g_emb = Vec::with_capacity(embeddings.len());
    for (e, &y) in embeddings.iter().zip(labels) {
        check_label(y, head)?;
        let n = Normalized::new(e, head)?;
        let (phi, dphi) = cfg.target_cosine(n.cos[y]);
        let mut z: Vec<f64> = n.cos.iter().map(|c| cfg.scale * c).collect();
        z[y] = cfg.scale * phi;
        let (l, p) = cross_entropy(&z, y);
        loss += l;
        let mut ge = vec![0.0; e.len()];
        for j in 0..head.num_classes() {
            let dz = (p[j] - if j == y { 1.0 } else { 0.0 }) * inv_b;
            let dc = dz * cfg.scale * if j == y { dphi } else { 1.0 };
            if dc == 0.0 {
                continue;
            }
            let c = n.cos[j];
            let w_hat = n.w_hat.row(j);
            for k in 0..e.len() {
                ge[k] += dc * (w_hat[k] - c * n.e_hat[k]) / n.e_norm;
                g_head[[j, k]] += dc * (n.e_hat[k] - c * w_hat[k]) / n.w_norm[j];
            }
        }
        g_emb.push(ge);
    }
    Ok(AamGradient {
        loss: loss * inv_b,
        head: g_head,
        embeddings: g_emb,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinetuneOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// `None` trains full-batch; otherwise consecutive mini-batches in
    /// input order.
    pub batch_size: Option<usize>,
}

impl Default for FinetuneOptions {
    fn default() -> Self {
        Self {
            epochs: 50,
            learning_rate: 0.5,
            seed: 0,
            batch_size: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FinetuneResult {
    pub head: AamHead,
    /// Loss before training followed by the loss after each epoch.
    pub loss_trace: Vec<f64>,
}

fn normalize_rows(head: &mut AamHead) {
    for mut row in head.weight.rows_mut() {
        let n = norm(row.iter().copied());
        if n > 0.0 && n.is_finite() {
            row.mapv_inplace(|v| v / n);
        }
    }
}

/// Step halvings tried per full-batch epoch before the head is left as is.
const MAX_HALVINGS: usize = 40;

/// Train a freshly initialized AAM head on frozen embeddings by gradient
/// descent. Full-batch epochs start from `learning_rate` and halve the step
/// until the loss does not increase, so the loss trace never rises;
/// mini-batch epochs take fixed steps.
pub fn finetune_head(
    embeddings: &[Vec<f64>],
    labels: &[usize],
    cfg: &AamConfig,
    opts: &FinetuneOptions,
) -> Result<FinetuneResult> {
    cfg.validate()?;
    check_batch(embeddings, labels)?;
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    if num_classes < 2 {
        return Err(Error::TooFewClasses(num_classes));
    }
    let mut seen = vec![false; num_classes];
    labels.iter().for_each(|&l| seen[l] = true);
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::InvalidConfig(format!("class {missing} has no examples")));
    }
    let dim = embeddings[0].len();
    let mut head = AamHead::random(num_classes, dim, opts.seed);
    let mut trace = vec![aam_loss(embeddings, labels, &head, cfg)?];
    match opts.batch_size {
        None => {
            for _ in 0..opts.epochs {
                let current = *trace.last().expect("trace starts with the initial loss");
                let g = aam_grad(embeddings, labels, &head, cfg)?;
                let mut step = opts.learning_rate;
                let mut accepted = current;
                for _ in 0..MAX_HALVINGS {
                    let mut trial = head.clone();
                    trial.weight.scaled_add(-step, &g.head);
                    let loss = aam_loss(embeddings, labels, &trial, cfg)?;
                    if loss <= current {
                        // the loss only sees unit rows; keeping them unit keeps
                        // the angular step from shrinking as the norms grow
                        normalize_rows(&mut trial);
                        head = trial;
                        accepted = loss;
                        break;
                    }
                    step *= 0.5;
                }
                trace.push(accepted);
            }
        }
        Some(batch) => {
            let batch = batch.max(1);
            for _ in 0..opts.epochs {
                for start in (0..embeddings.len()).step_by(batch) {
                    let end = (start + batch).min(embeddings.len());
                    let g = aam_grad(&embeddings[start..end], &labels[start..end], &head, cfg)?;
                    head.weight.scaled_add(-opts.learning_rate, &g.head);
                }
                trace.push(aam_loss(embeddings, labels, &head, cfg)?);
            }
        }
    }
    Ok(FinetuneResult {
        head,
        loss_trace: trace,
    })
}
