use ndarray::Array2;

use super::fbank::Analyzer;
use super::{frames, FeatureConfig, FeatureMatrix, Waveform};
use crate::error::{Error, Result};

const COMPRESSION: f64 = 0.33;

/// Equal-loudness curve evaluated at a filter center frequency.
fn equal_loudness(hz: f64) -> f64 {
    let fsq = hz * hz;
    let fsub = fsq / (fsq + 1.6e5);
    fsub * fsub * ((fsq + 1.44e6) / (fsq + 9.61e6))
}

/// Cosine basis turning a compressed auditory spectrum into autocorrelation
/// lags `0..=order`. The spectrum is padded with its edge values so the
/// transform sees `num_filters + 2` points from DC to Nyquist.
fn idft_basis(order: usize, num_filters: usize) -> Vec<Vec<f64>> {
    let n = num_filters + 1;
    (0..=order)
        .map(|lag| {
            (0..=n)
                .map(|j| {
                    let w = if j == 0 || j == n { 0.5 } else { 1.0 };
                    w * (std::f64::consts::PI * (lag * j) as f64 / n as f64).cos() / n as f64
                })
                .collect()
        })
        .collect()
}

/// Levinson-Durbin. Returns predictor `a[1..=p]` for `A(z) = 1 + sum a_k z^-k`
/// and the final prediction-error energy, or `None` if the autocorrelation
/// is not positive definite.
pub(crate) fn levinson_durbin(r: &[f64]) -> Option<(Vec<f64>, f64)> {
    let p = r.len() - 1;
    if !(r[0] > 0.0) {
        return None;
    }
    let mut a = vec![0.0; p + 1];
    a[0] = 1.0;
    let mut err = r[0];
    let mut tmp = vec![0.0; p + 1];
    for i in 1..=p {
        let acc: f64 = (0..i).map(|j| a[j] * r[i - j]).sum();
        let k = -acc / err;
        if !(k.abs() < 1.0) {
            return None;
        }
        tmp[..=i].copy_from_slice(&a[..=i]);
        for j in 1..i {
            a[j] = tmp[j] + k * tmp[i - j];
        }
        a[i] = k;
        err *= 1.0 - k * k;
        if !(err > 0.0) {
            return None;
        }
    }
    Some((a[1..].to_vec(), err))
}

/// Cepstrum `c_1..c_n` of the all-pole model `1 / A(z)`.
pub(crate) fn lpc_to_cepstrum(a: &[f64], n: usize) -> Vec<f64> {
    let p = a.len();
    let mut c = vec![0.0; n + 1];
    for m in 1..=n {
        let mut acc = if m <= p { -a[m - 1] } else { 0.0 };
        for k in m.saturating_sub(p).max(1)..m {
            acc -= (k as f64 / m as f64) * c[k] * a[m - k - 1];
        }
        c[m] = acc;
    }
    c[1..].to_vec()
}

/// PLP cepstra. Column 0 carries the log prediction-error energy, columns
/// `1..` the cepstral coefficients of the all-pole fit.
pub fn plp(wave: &Waveform, cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    let frames = frames(wave, cfg)?;
    let analyzer = Analyzer::new(cfg);
    let loudness: Vec<f64> = analyzer.banks.centers_hz().iter().map(|&f| equal_loudness(f)).collect();
    let basis = idft_basis(cfg.lpc_order, cfg.num_filters);
    let ncep = cfg.num_plp_coeffs;
    let mut out = Array2::zeros((frames.len(), ncep));
    let mut spec = vec![0.0; cfg.num_filters + 2];
    for (t, f) in frames.iter().enumerate() {
        let mel = analyzer.mel_energies(f);
        for (j, (e, l)) in mel.iter().zip(&loudness).enumerate() {
            spec[j + 1] = (e.max(cfg.energy_floor) * l).powf(COMPRESSION);
        }
        spec[0] = spec[1];
        spec[cfg.num_filters + 1] = spec[cfg.num_filters];
        let autocorr: Vec<f64> = basis
            .iter()
            .map(|row| row.iter().zip(&spec).map(|(b, s)| b * s).sum())
            .collect();
        let (lpc, err) = levinson_durbin(&autocorr).ok_or(Error::LpcFailure { frame: t })?;
        out[[t, 0]] = err.max(cfg.energy_floor).ln();
        for (j, c) in lpc_to_cepstrum(&lpc, ncep - 1).into_iter().enumerate() {
            out[[t, j + 1]] = c;
        }
    }
    Ok(FeatureMatrix::new(out, cfg.frame_shift))
}
