use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::Waveform;
use crate::error::{Error, Result};

fn fit_length(noise: &[f64], len: usize) -> Vec<f64> {
    noise.iter().copied().cycle().take(len).collect()
}

/// Gain applied to `noise` (looped or truncated to the signal length) so
/// that the mix has the requested SNR.
pub fn noise_gain(wave: &Waveform, noise: &Waveform, snr_db: f64) -> Result<f64> {
    if wave.sample_rate != noise.sample_rate {
        return Err(Error::InvalidAudio("sample rates differ".into()));
    }
    if noise.is_empty() || wave.is_empty() {
        return Err(Error::DegenerateSnr("empty signal or noise"));
    }
    let looped = Waveform::new(fit_length(&noise.samples, wave.len()), noise.sample_rate);
    let (pw, pn) = (wave.power(), looped.power());
    if pw <= 0.0 {
        return Err(Error::DegenerateSnr("signal has zero power"));
    }
    if pn <= 0.0 {
        return Err(Error::DegenerateSnr("noise has zero power"));
    }
    Ok((pw / pn).sqrt() * 10f64.powf(-snr_db / 20.0))
}

pub fn mix_noise(wave: &Waveform, noise: &Waveform, snr_db: f64) -> Result<Waveform> {
    let g = noise_gain(wave, noise, snr_db)?;
    let samples = wave
        .samples
        .iter()
        .zip(noise.samples.iter().cycle())
        .map(|(w, n)| w + g * n)
        .collect();
    Ok(Waveform::new(samples, wave.sample_rate))
}

fn convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    let n = x.len() + h.len() - 1;
    let size = n.next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let pad = |v: &[f64]| {
        let mut b = vec![Complex::new(0.0, 0.0); size];
        for (d, s) in b.iter_mut().zip(v) {
            d.re = *s;
        }
        b
    };
    let (mut a, mut b) = (pad(x), pad(h));
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q;
    }
    inv.process(&mut a);
    a[..n].iter().map(|c| c.re / size as f64).collect()
}

/// Convolve with a room impulse response, keep the first `len` samples and
/// rescale to the input's peak amplitude.
pub fn reverberate(wave: &Waveform, rir: &Waveform) -> Result<Waveform> {
    if rir.is_empty() {
        return Err(Error::EmptyImpulseResponse);
    }
    if wave.sample_rate != rir.sample_rate {
        return Err(Error::InvalidAudio("sample rates differ".into()));
    }
    if wave.is_empty() {
        return Ok(wave.clone());
    }
    let mut y = convolve(&wave.samples, &rir.samples);
    y.truncate(wave.len());
    let peak_out = y.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if peak_out > 0.0 {
        let scale = wave.peak() / peak_out;
        y.iter_mut().for_each(|v| *v *= scale);
    }
    Ok(Waveform::new(y, wave.sample_rate))
}
