use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{frames, FeatureConfig, FeatureMatrix, Waveform};
use crate::error::Result;

pub fn hz_to_mel(hz: f64) -> f64 {
    1127.0 * (1.0 + hz / 700.0).ln()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * ((mel / 1127.0).exp() - 1.0)
}

/// Center frequencies (Hz) of the triangular filters: equally spaced on the
/// mel scale strictly inside `[low, high]`.
pub fn mel_filter_centers(cfg: &FeatureConfig) -> Vec<f64> {
    let (lo, hi) = (hz_to_mel(cfg.low_freq), hz_to_mel(cfg.high_freq));
    let delta = (hi - lo) / (cfg.num_filters + 1) as f64;
    (1..=cfg.num_filters)
        .map(|i| mel_to_hz(lo + i as f64 * delta))
        .collect()
}

/// Triangular mel filters over the one-sided power spectrum.
#[derive(Debug, Clone)]
pub struct MelBanks {
    /// Per filter: first FFT bin and the weights starting there.
    filters: Vec<(usize, Vec<f64>)>,
    centers_hz: Vec<f64>,
}

impl MelBanks {
    pub fn new(cfg: &FeatureConfig) -> Self {
        let n_fft = cfg.fft_size();
        let bin_hz = cfg.sample_rate as f64 / n_fft as f64;
        let (lo, hi) = (hz_to_mel(cfg.low_freq), hz_to_mel(cfg.high_freq));
        let delta = (hi - lo) / (cfg.num_filters + 1) as f64;
        let mut filters = Vec::with_capacity(cfg.num_filters);
        for i in 0..cfg.num_filters {
            let left = lo + i as f64 * delta;
            let center = left + delta;
            let right = center + delta;
            let mut first = None;
            let mut weights = Vec::new();
            for bin in 0..=n_fft / 2 {
                let mel = hz_to_mel(bin as f64 * bin_hz);
                let w = if mel > left && mel <= center {
                    (mel - left) / (center - left)
                } else if mel > center && mel < right {
                    (right - mel) / (right - center)
                } else {
                    0.0
                };
                if w > 0.0 {
                    first.get_or_insert(bin);
                    weights.push(w);
                } else if first.is_some() {
                    break;
                }
            }
            filters.push((first.unwrap_or(0), weights));
        }
        Self {
            filters,
            centers_hz: mel_filter_centers(cfg),
        }
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        self.filters
            .iter()
            .map(|(start, w)| w.iter().zip(&power[*start..]).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Shared per-frame processing: DC removal, pre-emphasis, window, power
/// spectrum, mel integration.
pub(crate) struct Analyzer {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    pub(crate) banks: MelBanks,
    preemph: f64,
    n_fft: usize,
}

impl Analyzer {
    pub(crate) fn new(cfg: &FeatureConfig) -> Self {
        let n = cfg.frame_samples();
        let window = (0..n)
            .map(|i| {
                let hann = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos();
                hann.powf(cfg.window_power)
            })
            .collect();
        let n_fft = cfg.fft_size();
        Self {
            fft: FftPlanner::new().plan_fft_forward(n_fft),
            window,
            banks: MelBanks::new(cfg),
            preemph: cfg.preemph,
            n_fft,
        }
    }

    pub(crate) fn power_spectrum(&self, frame: &[f64]) -> Vec<f64> {
        let mean = frame.iter().sum::<f64>() / frame.len() as f64;
        let x: Vec<f64> = frame.iter().map(|v| v - mean).collect();
        let mut buf = vec![Complex::new(0.0, 0.0); self.n_fft];
        for i in (0..x.len()).rev() {
            let prev = if i == 0 { x[0] } else { x[i - 1] };
            buf[i].re = (x[i] - self.preemph * prev) * self.window[i];
        }
        self.fft.process(&mut buf);
        buf[..=self.n_fft / 2].iter().map(|c| c.norm_sqr()).collect()
    }

    pub(crate) fn mel_energies(&self, frame: &[f64]) -> Vec<f64> {
        self.banks.apply(&self.power_spectrum(frame))
    }
}

/// Log mel filterbank energies, one row per 25 ms frame.
pub fn fbank(wave: &Waveform, cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    let frames = frames(wave, cfg)?;
    let analyzer = Analyzer::new(cfg);
    let mut out = Array2::zeros((frames.len(), cfg.num_filters));
    for (t, f) in frames.iter().enumerate() {
        for (j, e) in analyzer.mel_energies(f).into_iter().enumerate() {
            out[[t, j]] = e.max(cfg.energy_floor).ln();
        }
    }
    Ok(FeatureMatrix::new(out, cfg.frame_shift))
}
