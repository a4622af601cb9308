use ndarray::Array2;

use super::{frames, FeatureConfig, FeatureMatrix, VadMask, Waveform};
use crate::error::{Error, Result};

/// Log energy of each raw frame, floored before the log.
pub fn frame_log_energies(wave: &Waveform, cfg: &FeatureConfig) -> Result<Vec<f64>> {
    Ok(frames(wave, cfg)?
        .iter()
        .map(|f| f.iter().map(|x| x * x).sum::<f64>().max(cfg.energy_floor).ln())
        .collect())
}

/// Threshold at `mean + k * std` followed by a majority vote over
/// `2 * context + 1` frames (truncated at the edges). Ties go to speech.
pub fn vad_decisions(log_energy: &[f64], k: f64, context: usize) -> Vec<bool> {
    let n = log_energy.len();
    if n == 0 {
        return Vec::new();
    }
    let (lo, hi) = log_energy
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let threshold = if lo == hi {
        lo
    } else {
        let mean = log_energy.iter().sum::<f64>() / n as f64;
        let var = log_energy.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        mean + k * var.sqrt()
    };
    let raw: Vec<bool> = log_energy.iter().map(|&e| e >= threshold).collect();
    (0..n)
        .map(|t| {
            let s = t.saturating_sub(context);
            let e = (t + context + 1).min(n);
            let speech = raw[s..e].iter().filter(|&&b| b).count();
            2 * speech >= e - s
        })
        .collect()
}

pub fn energy_vad(wave: &Waveform, cfg: &FeatureConfig) -> Result<VadMask> {
    let e = frame_log_energies(wave, cfg)?;
    Ok(VadMask(vad_decisions(&e, cfg.vad_k, cfg.vad_context)))
}

/// Keep the rows whose mask entry is true.
pub fn apply_vad(feats: &FeatureMatrix, mask: &VadMask) -> Result<FeatureMatrix> {
    if mask.len() != feats.rows() {
        return Err(Error::MaskMismatch {
            mask: mask.len(),
            frames: feats.rows(),
        });
    }
    let keep: Vec<usize> = (0..mask.len()).filter(|&t| mask.0[t]).collect();
    if keep.is_empty() {
        return Err(Error::NoSpeech);
    }
    let mut out = Array2::zeros((keep.len(), feats.cols()));
    for (i, &t) in keep.iter().enumerate() {
        out.row_mut(i).assign(&feats.row(t));
    }
    Ok(FeatureMatrix::new(out, feats.frame_shift()))
}
