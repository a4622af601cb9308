//! Acoustic front end: framing, log mel filterbanks, PLP cepstra, sliding
//! mean normalization, energy VAD and toy augmentation.

mod augment;
mod fbank;
mod plp;
mod stmn;
mod vad;

pub use augment::{mix_noise, noise_gain, reverberate};
pub use fbank::{fbank, hz_to_mel, mel_filter_centers, mel_to_hz, MelBanks};
pub use plp::plp;
pub use stmn::stmn;
pub use vad::{apply_vad, energy_vad, frame_log_energies, vad_decisions};

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self { samples, sample_rate }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean power over the whole segment.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|x| x * x).sum::<f64>() / self.samples.len() as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub(crate) fn check_finite(&self) -> Result<()> {
        if let Some(i) = self.samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidAudio(format!("non-finite sample at index {i}")));
        }
        Ok(())
    }
}

/// Front-end parameters. Times are in seconds, frequencies in Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    pub frame_length: f64,
    pub frame_shift: f64,
    pub low_freq: f64,
    pub high_freq: f64,
    pub num_filters: usize,
    pub num_plp_coeffs: usize,
    /// Linear-prediction order for PLP.
    pub lpc_order: usize,
    pub stmn_window: f64,
    pub preemph: f64,
    pub energy_floor: f64,
    /// Exponent of the raised-Hann analysis window.
    pub window_power: f64,
    /// Uniform dither amplitude; zero disables it.
    pub dither: f64,
    pub dither_seed: u64,
    pub vad_k: f64,
    pub vad_context: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            sample_rate: SAMPLE_RATE,
            frame_length: 0.025,
            frame_shift: 0.010,
            low_freq: 20.0,
            high_freq: 7600.0,
            num_filters: 40,
            num_plp_coeffs: 30,
            lpc_order: 30,
            stmn_window: 3.0,
            preemph: 0.97,
            energy_floor: 1e-10,
            window_power: 0.85,
            dither: 0.0,
            dither_seed: 0,
            vad_k: -0.5,
            vad_context: 2,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate as f64 / 2.0;
        if !(self.low_freq > 0.0 && self.low_freq < self.high_freq && self.high_freq <= nyquist) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < low_freq ({}) < high_freq ({}) <= {nyquist}",
                self.low_freq, self.high_freq
            )));
        }
        if self.num_filters < self.num_plp_coeffs {
            return Err(Error::InvalidConfig(format!(
                "num_filters ({}) < num_plp_coeffs ({})",
                self.num_filters, self.num_plp_coeffs
            )));
        }
        if !(self.frame_shift > 0.0 && self.frame_shift <= self.frame_length) {
            return Err(Error::InvalidConfig("need 0 < frame_shift <= frame_length".into()));
        }
        if self.lpc_order == 0 || self.num_plp_coeffs == 0 {
            return Err(Error::InvalidConfig("lpc_order and num_plp_coeffs must be >= 1".into()));
        }
        Ok(())
    }

    pub fn frame_samples(&self) -> usize {
        (self.frame_length * self.sample_rate as f64).round() as usize
    }

    pub fn shift_samples(&self) -> usize {
        (self.frame_shift * self.sample_rate as f64).round() as usize
    }

    /// FFT size: smallest power of two holding one frame.
    pub fn fft_size(&self) -> usize {
        self.frame_samples().next_power_of_two()
    }
}

/// `1 + floor((n - frame) / shift)` frames, or zero when `n < frame`.
pub fn num_frames(num_samples: usize, frame: usize, shift: usize) -> usize {
    if num_samples < frame || shift == 0 {
        0
    } else {
        1 + (num_samples - frame) / shift
    }
}

/// Frames x dims matrix of features with its frame shift in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Array2<f64>,
    frame_shift: f64,
}

impl FeatureMatrix {
    pub fn new(data: Array2<f64>, frame_shift: f64) -> Self {
        Self { data, frame_shift }
    }

    pub fn from_rows(rows: &[Vec<f64>], frame_shift: f64) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimMismatch {
                    expected: cols,
                    got: r.len(),
                });
            }
            flat.extend_from_slice(r);
        }
        let data = Array2::from_shape_vec((rows.len(), cols), flat).expect("row lengths checked above");
        Ok(Self { data, frame_shift })
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn frame_shift(&self) -> f64 {
        self.frame_shift
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.row(i)
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    /// Contiguous `len`-frame slice starting at `start`.
    pub fn crop(&self, start: usize, len: usize) -> Result<FeatureMatrix> {
        if start + len > self.rows() {
            return Err(Error::InvalidConfig(format!(
                "crop [{start}, {}) exceeds {} frames",
                start + len,
                self.rows()
            )));
        }
        Ok(Self {
            data: self.data.slice(ndarray::s![start..start + len, ..]).to_owned(),
            frame_shift: self.frame_shift,
        })
    }
}

/// Per-frame speech decisions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VadMask(pub Vec<bool>);

impl VadMask {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn speech_frames(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }
}

/// Cut `wave` into overlapping frames (no edge padding). Checks the input
/// preconditions shared by every frame-based operation.
pub(crate) fn frames(wave: &Waveform, cfg: &FeatureConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    if wave.sample_rate != cfg.sample_rate {
        return Err(Error::InvalidAudio(format!(
            "sample rate {} does not match config {}",
            wave.sample_rate, cfg.sample_rate
        )));
    }
    wave.check_finite()?;
    let frame = cfg.frame_samples();
    let shift = cfg.shift_samples();
    if wave.len() < frame {
        return Err(Error::InputTooShort {
            samples: wave.len(),
            needed: frame,
        });
    }
    let n = num_frames(wave.len(), frame, shift);
    let mut out = Vec::with_capacity(n);
    let mut dither_rng =
        (cfg.dither > 0.0).then(|| crate::rng::stream_rng(cfg.dither_seed, crate::rng::Stream::Noise, 0));
    for t in 0..n {
        let mut f = wave.samples[t * shift..t * shift + frame].to_vec();
        if let Some(rng) = dither_rng.as_mut() {
            use rand::RngExt;
            for x in f.iter_mut() {
                *x += cfg.dither * (rng.random::<f64>() * 2.0 - 1.0);
            }
        }
        out.push(f);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn paper_config_is_valid() {
        let cfg = FeatureConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.frame_samples(), 400);
        assert_eq!(cfg.shift_samples(), 160);
        assert_eq!(cfg.fft_size(), 512);
    }

    #[test]
    fn rejects_bad_band() {
        let cfg = FeatureConfig {
            high_freq: 9000.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = FeatureConfig {
            num_filters: 20,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn frame_errors() {
        let cfg = FeatureConfig::default();
        let short = Waveform::new(vec![0.0; 399], 16000);
        assert!(matches!(frames(&short, &cfg), Err(Error::InputTooShort { .. })));
        let mut bad = Waveform::new(vec![0.0; 1000], 16000);
        bad.samples[10] = f64::NAN;
        assert!(matches!(frames(&bad, &cfg), Err(Error::InvalidAudio(_))));
        let wrong_rate = Waveform::new(vec![0.0; 1000], 8000);
        assert!(matches!(frames(&wrong_rate, &cfg), Err(Error::InvalidAudio(_))));
    }

    proptest! {
        #[test]
        fn frame_count_formula(frame in 1usize..500, shift_frac in 0.01f64..1.0, extra in 0usize..5000) {
            let shift = ((frame as f64 * shift_frac).ceil() as usize).max(1);
            let len = frame + extra;
            // count by explicit enumeration of frame starts
            let mut count = 0;
            let mut start = 0;
            while start + frame <= len {
                count += 1;
                start += shift;
            }
            prop_assert_eq!(num_frames(len, frame, shift), count);
        }
    }
}
