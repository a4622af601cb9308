//! Speaker verification toolkit.
//!
//! The crate covers the whole verification chain: Kaldi-style acoustic
//! features with energy VAD, TDNN x-vector and ResNet34 r-vector embedding
//! extractors, an additive-angular-margin classification head, PLDA and
//! cosine backends, adaptive S-norm, logistic-regression calibration and
//! fusion, and EER/minDCF evaluation. Synthetic generators in [`synth`]
//! make every stage testable without external corpora.

pub mod aam;
pub mod backend;
pub mod calibration;
pub mod error;
pub mod frontend;
pub mod io;
pub mod metrics;
pub mod nnet;
pub mod rng;
pub mod scorenorm;
pub mod synth;
pub mod trials;

pub use error::{Error, Result};
pub use frontend::{FeatureConfig, FeatureMatrix, VadMask, Waveform};
pub use trials::{parse_trials, Score, ScoreSet, Trial, TrialList};
