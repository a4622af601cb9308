//! Seeded synthetic data: PLDA-distributed embeddings, keyed trial lists and
//! a toy waveform corpus of resonant-filtered noise.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::RngExt;
use rand_distr::{Distribution, StandardNormal};

use crate::backend::PldaModel;
use crate::error::{Error, Result};
use crate::frontend::{FeatureMatrix, Waveform, SAMPLE_RATE};
use crate::rng::{stream_rng, Stream};
use crate::trials::{Trial, TrialList};

fn gauss(rng: &mut impl rand::Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Name of the `i`-th generated utterance.
pub fn utt_id(i: usize) -> String {
    format!("utt{i:05}")
}

/// Random ground-truth model with `V`, `U` entries scaled by
/// `speaker_scale / sqrt(rank)` and `channel_scale / sqrt(rank)`.
pub fn random_plda_model(
    dim: usize,
    speaker_rank: usize,
    channel_rank: usize,
    speaker_scale: f64,
    channel_scale: f64,
    residual_var: f64,
    seed: u64,
) -> PldaModel {
    let mut rng = stream_rng(seed, Stream::Model, 1);
    let sv = speaker_scale / (speaker_rank.max(1) as f64).sqrt();
    let sc = channel_scale / (channel_rank.max(1) as f64).sqrt();
    PldaModel {
        mu: DVector::from_fn(dim, |_, _| gauss(&mut rng)),
        v: DMatrix::from_fn(dim, speaker_rank, |_, _| sv * gauss(&mut rng)),
        u: DMatrix::from_fn(dim, channel_rank, |_, _| sc * gauss(&mut rng)),
        psi: DVector::from_fn(dim, |_, _| residual_var * (0.5 + rng.random::<f64>())),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PldaSynthSpec {
    pub seed: u64,
    pub num_speakers: usize,
    pub utts_per_speaker: usize,
    pub model: PldaModel,
}

#[derive(Debug, Clone)]
pub struct PldaData {
    pub embeddings: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub model: PldaModel,
}

impl PldaData {
    pub fn ids(&self) -> Vec<String> {
        (0..self.embeddings.len()).map(utt_id).collect()
    }
}

/// Draw `x = mu + V h + U w + eps`. Speaker factors, channel factors and
/// residuals come from separate streams indexed by speaker and utterance.
pub fn gen_plda_data(spec: &PldaSynthSpec) -> PldaData {
    let m = &spec.model;
    let d = m.dim();
    let mut embeddings = Vec::with_capacity(spec.num_speakers * spec.utts_per_speaker);
    let mut labels = Vec::with_capacity(embeddings.capacity());
    for s in 0..spec.num_speakers {
        let mut srng = stream_rng(spec.seed, Stream::Speaker, s as u64);
        let h = DVector::from_fn(m.v.ncols(), |_, _| gauss(&mut srng));
        let base = &m.mu + &m.v * h;
        for u in 0..spec.utts_per_speaker {
            let idx = ((s as u64) << 24) | u as u64;
            let mut crng = stream_rng(spec.seed, Stream::Channel, idx);
            let mut rrng = stream_rng(spec.seed, Stream::Residual, idx);
            let w = DVector::from_fn(m.u.ncols(), |_, _| gauss(&mut crng));
            let eps = DVector::from_fn(d, |i, _| m.psi[i].sqrt() * gauss(&mut rrng));
            embeddings.push((&base + &m.u * w + eps).as_slice().to_vec());
            labels.push(s);
        }
    }
    PldaData {
        embeddings,
        labels,
        model: m.clone(),
    }
}

/// Sample distinct same-speaker and cross-speaker pairs uniformly without
/// replacement. Utterance `i` is named [`utt_id`]`(i)`.
pub fn gen_trials(labels: &[usize], n_target: usize, n_nontarget: usize, seed: u64) -> Result<TrialList> {
    let mut rng = stream_rng(seed, Stream::Trials, 0);
    let n = labels.len();
    let mut targets = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if labels[i] == labels[j] {
                targets.push((i, j));
            }
        }
    }
    let total_pairs = n * n.saturating_sub(1) / 2;
    let total_non = total_pairs - targets.len();
    if targets.len() < n_target {
        return Err(Error::InsufficientPairs {
            requested: n_target,
            available: targets.len(),
        });
    }
    if total_non < n_nontarget {
        return Err(Error::InsufficientPairs {
            requested: n_nontarget,
            available: total_non,
        });
    }
    let (chosen, _) = targets.partial_shuffle(&mut rng, n_target);
    let mut pairs: Vec<(usize, usize, bool)> = chosen.iter().map(|&(i, j)| (i, j, true)).collect();

    if n_nontarget * 4 <= total_non {
        let mut seen = HashSet::new();
        while seen.len() < n_nontarget {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            let (a, b) = (i.min(j), i.max(j));
            if a != b && labels[a] != labels[b] && seen.insert((a, b)) {
                pairs.push((a, b, false));
            }
        }
    } else {
        let mut non = Vec::with_capacity(total_non);
        for i in 0..n {
            for j in i + 1..n {
                if labels[i] != labels[j] {
                    non.push((i, j));
                }
            }
        }
        let (chosen, _) = non.partial_shuffle(&mut rng, n_nontarget);
        pairs.extend(chosen.iter().map(|&(i, j)| (i, j, false)));
    }
    pairs.shuffle(&mut rng);
    TrialList::new(
        pairs
            .into_iter()
            .map(|(i, j, t)| Trial {
                enroll: utt_id(i),
                test: utt_id(j),
                target: Some(t),
            })
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyCorpusSpec {
    pub seed: u64,
    pub num_speakers: usize,
    pub utts_per_speaker: usize,
    pub duration_s: f64,
    /// Resonance per speaker in Hz; drawn log-uniformly in 300–3500 Hz when absent.
    pub resonances: Option<Vec<f64>>,
    pub bandwidth_hz: f64,
    /// Peak-to-peak utterance gain variation in dB.
    pub gain_jitter_db: f64,
    /// Low-level lead-in and tail, in seconds.
    pub silence_s: f64,
}

impl Default for ToyCorpusSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            num_speakers: 4,
            utts_per_speaker: 5,
            duration_s: 2.0,
            resonances: None,
            bandwidth_hz: 150.0,
            gain_jitter_db: 6.0,
            silence_s: 0.2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ToyCorpus {
    pub waves: Vec<Waveform>,
    pub labels: Vec<usize>,
    pub resonances: Vec<f64>,
}

impl ToyCorpus {
    pub fn ids(&self) -> Vec<String> {
        (0..self.waves.len()).map(utt_id).collect()
    }
}

/// `y[n] = x[n] + 2 r cos(w) y[n-1] - r² y[n-2]`.
pub fn resonate(x: &[f64], freq_hz: f64, bandwidth_hz: f64, sample_rate: u32) -> Vec<f64> {
    let fs = sample_rate as f64;
    let r = (-std::f64::consts::PI * bandwidth_hz / fs).exp();
    let a1 = 2.0 * r * (2.0 * std::f64::consts::PI * freq_hz / fs).cos();
    let a2 = -r * r;
    let (mut y1, mut y2) = (0.0, 0.0);
    x.iter()
        .map(|&v| {
            let y = v + a1 * y1 + a2 * y2;
            y2 = y1;
            y1 = y;
            y
        })
        .collect()
}

pub fn gen_toy_corpus(spec: &ToyCorpusSpec) -> Result<ToyCorpus> {
    if spec.num_speakers < 2 {
        return Err(Error::TooFewClasses(spec.num_speakers));
    }
    let n = (spec.duration_s * SAMPLE_RATE as f64).round() as usize;
    let resonances = match &spec.resonances {
        Some(r) if r.len() == spec.num_speakers => r.clone(),
        Some(r) => {
            return Err(Error::InvalidConfig(format!(
                "{} resonances for {} speakers",
                r.len(),
                spec.num_speakers
            )))
        }
        None => (0..spec.num_speakers)
            .map(|s| {
                let u: f64 = stream_rng(spec.seed, Stream::Speaker, s as u64).random();
                300.0 * (3500.0f64 / 300.0).powf(u)
            })
            .collect(),
    };
    let quiet = ((spec.silence_s * SAMPLE_RATE as f64) as usize).min(n / 2);
    let mut waves = Vec::new();
    let mut labels = Vec::new();
    for (s, &f) in resonances.iter().enumerate() {
        for u in 0..spec.utts_per_speaker {
            let idx = ((s as u64) << 24) | u as u64;
            let mut nrng = stream_rng(spec.seed, Stream::Noise, idx);
            let noise: Vec<f64> = (0..n).map(|_| gauss(&mut nrng)).collect();
            let mut y = resonate(&noise, f, spec.bandwidth_hz, SAMPLE_RATE);
            let rms = (y.iter().map(|v| v * v).sum::<f64>() / n.max(1) as f64)
                .sqrt()
                .max(1e-12);
            let jitter: f64 = stream_rng(spec.seed, Stream::Gain, idx).random::<f64>() - 0.5;
            let gain = 0.1 / rms * 10f64.powf(spec.gain_jitter_db * jitter / 20.0);
            for (i, v) in y.iter_mut().enumerate() {
                let edge = i < quiet || i >= n - quiet;
                *v *= if edge { gain * 1e-2 } else { gain };
            }
            waves.push(Waveform::new(y, SAMPLE_RATE));
            labels.push(s);
        }
    }
    Ok(ToyCorpus {
        waves,
        labels,
        resonances,
    })
}

/// Two linearly separable 2-D classes: class 0 around angle 0, class 1
/// around angle π/2, each spread over ±π/8 with radius in [0.5, 1.5].
pub fn gen_separable_2d(per_class: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = stream_rng(seed, Stream::Speaker, 0);
    let mut embs = Vec::with_capacity(2 * per_class);
    let mut labels = Vec::with_capacity(2 * per_class);
    for i in 0..2 * per_class {
        let c = i % 2;
        let a = c as f64 * std::f64::consts::FRAC_PI_2 + (rng.random::<f64>() - 0.5) * std::f64::consts::FRAC_PI_4;
        let r = 0.5 + rng.random::<f64>();
        embs.push(vec![r * a.cos(), r * a.sin()]);
        labels.push(c);
    }
    (embs, labels)
}

/// Minimum utterance length kept for training.
pub const MIN_TRAIN_FRAMES: usize = 400;

/// Indices of the utterances with at least `min_frames` frames.
pub fn keep_long_utterances(feats: &[FeatureMatrix], min_frames: usize) -> Vec<usize> {
    feats
        .iter()
        .enumerate()
        .filter(|(_, f)| f.rows() >= min_frames)
        .map(|(i, _)| i)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::PldaScorer;
    use crate::frontend::{fbank, FeatureConfig};
    use crate::metrics::eer;

    fn spec(model: PldaModel) -> PldaSynthSpec {
        PldaSynthSpec {
            seed: 3,
            num_speakers: 20,
            utts_per_speaker: 6,
            model,
        }
    }

    fn oracle_eer(data: &PldaData, trials: &TrialList) -> f64 {
        let scorer = PldaScorer::new(&data.model).unwrap();
        let idx = |id: &str| id[3..].parse::<usize>().unwrap();
        let scores: Vec<f64> = trials
            .trials
            .iter()
            .map(|t| {
                let e = DVector::from_column_slice(&data.embeddings[idx(&t.enroll)]);
                let v = DVector::from_column_slice(&data.embeddings[idx(&t.test)]);
                scorer.llr(&e, &v).unwrap()
            })
            .collect();
        eer(&scores, &trials.labels().unwrap()).unwrap()
    }

    #[test]
    fn plda_data_is_reproducible() {
        let s = spec(random_plda_model(4, 2, 2, 1.0, 0.5, 0.1, 1));
        let a = gen_plda_data(&s);
        let b = gen_plda_data(&s);
        assert_eq!(a.embeddings, b.embeddings);
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn more_utterances_keep_existing_draws() {
        let s = spec(random_plda_model(4, 2, 2, 1.0, 0.5, 0.1, 1));
        let mut more = s.clone();
        more.utts_per_speaker = 8;
        let a = gen_plda_data(&s);
        let b = gen_plda_data(&more);
        assert_eq!(a.embeddings[0..6], b.embeddings[0..6]);
    }

    #[test]
    fn no_speaker_variability_is_chance() {
        let mut m = random_plda_model(6, 2, 2, 1.0, 1.0, 0.2, 2);
        m.v.fill(0.0);
        let mut s = spec(m);
        s.num_speakers = 60;
        s.utts_per_speaker = 10;
        let data = gen_plda_data(&s);
        let trials = gen_trials(&data.labels, 1000, 1000, 4).unwrap();
        let e = oracle_eer(&data, &trials);
        assert!((e - 50.0).abs() < 1e-9, "{e}");
    }

    #[test]
    fn noiseless_speakers_are_separable() {
        let mut m = random_plda_model(6, 2, 2, 1.0, 1.0, 1e-10, 2);
        m.u.fill(0.0);
        let data = gen_plda_data(&spec(m));
        let first = &data.embeddings[0];
        assert!(data.embeddings[1].iter().zip(first).all(|(a, b)| (a - b).abs() < 1e-3));
        let trials = gen_trials(&data.labels, 200, 200, 5).unwrap();
        assert_eq!(oracle_eer(&data, &trials), 0.0);
    }

    #[test]
    fn trials_have_exact_counts() {
        let labels: Vec<usize> = (0..40).map(|i| i / 4).collect();
        let t = gen_trials(&labels, 30, 200, 1).unwrap();
        assert_eq!(t.len(), 230);
        assert_eq!(t.num_targets(), 30);
        let none = gen_trials(&labels, 0, 50, 1).unwrap();
        assert!(none.trials.iter().all(|t| t.target == Some(false)));
        assert_eq!(gen_trials(&labels, 30, 200, 1).unwrap(), t);
        // every target pair requested exhausts the supply exactly
        assert_eq!(gen_trials(&labels, 60, 0, 2).unwrap().len(), 60);
        assert!(matches!(
            gen_trials(&labels, 61, 0, 2),
            Err(Error::InsufficientPairs {
                requested: 61,
                available: 60
            })
        ));
    }

    #[test]
    fn trial_labels_match_speakers() {
        let labels: Vec<usize> = (0..30).map(|i| i % 5).collect();
        let t = gen_trials(&labels, 20, 300, 9).unwrap();
        for tr in &t.trials {
            let a: usize = tr.enroll[3..].parse().unwrap();
            let b: usize = tr.test[3..].parse().unwrap();
            assert_eq!(tr.target, Some(labels[a] == labels[b]));
        }
    }

    #[test]
    fn toy_corpus_shape_and_determinism() {
        let s = ToyCorpusSpec {
            duration_s: 1.0,
            num_speakers: 2,
            utts_per_speaker: 2,
            ..Default::default()
        };
        let c = gen_toy_corpus(&s).unwrap();
        assert_eq!(c.waves.len(), 4);
        assert!(c.waves.iter().all(|w| w.len() == 16000));
        let d = gen_toy_corpus(&s).unwrap();
        assert_eq!(c.waves, d.waves);
    }

    #[test]
    fn resonances_shape_the_spectrum() {
        let s = ToyCorpusSpec {
            num_speakers: 2,
            utts_per_speaker: 1,
            duration_s: 1.0,
            resonances: Some(vec![500.0, 2000.0]),
            ..Default::default()
        };
        let c = gen_toy_corpus(&s).unwrap();
        let cfg = FeatureConfig::default();
        let argmax: Vec<usize> = c
            .waves
            .iter()
            .map(|w| {
                let f = fbank(w, &cfg).unwrap();
                let mean = f.data().mean_axis(ndarray::Axis(0)).unwrap();
                mean.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0
            })
            .collect();
        assert_ne!(argmax[0], argmax[1]);
        let centers = crate::frontend::mel_filter_centers(&cfg);
        assert!((centers[argmax[0]] - 500.0).abs() < (centers[argmax[1]] - 500.0).abs());
    }

    #[test]
    fn short_utterances_are_dropped() {
        let f = |rows| FeatureMatrix::new(ndarray::Array2::zeros((rows, 2)), 0.01);
        let feats = vec![f(399), f(400), f(1000)];
        assert_eq!(keep_long_utterances(&feats, MIN_TRAIN_FRAMES), vec![1, 2]);
    }
}
