use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input too short: {samples} samples, need at least {needed}")]
    InputTooShort { samples: usize, needed: usize },

    #[error("invalid audio: {0}")]
    InvalidAudio(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("LPC failure at frame {frame}")]
    LpcFailure { frame: usize },

    #[error("mask/feature mismatch: mask has {mask} frames, features have {frames}")]
    MaskMismatch { mask: usize, frames: usize },

    #[error("no speech: every frame was rejected by the VAD mask")]
    NoSpeech,

    #[error("degenerate SNR: {0}")]
    DegenerateSnr(&'static str),

    #[error("empty impulse response")]
    EmptyImpulseResponse,

    #[error("feature dim mismatch: expected {expected}, got {got}")]
    FeatureDimMismatch { expected: usize, got: usize },

    #[error("weights mismatch: {0}")]
    WeightsMismatch(String),

    #[error("bad weight file: {0}")]
    BadWeightFile(String),

    #[error("bad feature file: {0}")]
    BadFeatureFile(String),

    #[error("degenerate norm")]
    DegenerateNorm,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),

    #[error("singular matrix: {0}")]
    Singular(&'static str),

    #[error("not positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("unknown utterance id {0:?}")]
    MissingUtterance(String),

    #[error("trial mismatch at index {index}: ({enroll}, {test})")]
    TrialMismatch { index: usize, enroll: String, test: String },

    #[error("duplicate trial ({0}, {1})")]
    DuplicateTrial(String, String),

    #[error("key needs at least one target and one nontarget trial")]
    SingleClassKey,

    #[error("trial list has no key labels")]
    Unkeyed,

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("insufficient pairs: requested {requested}, only {available} available")]
    InsufficientPairs { requested: usize, available: usize },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
}
