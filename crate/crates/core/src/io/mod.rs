//! On-disk formats: PCM WAV, `SVF1` feature matrices, `SVW1` tensor
//! containers and text score files.

mod features;
mod scores;
mod tensors;
mod wav;

pub use features::{read_features, read_features_from, write_features, write_features_to};
pub use scores::{format_score, read_scores, write_scores, write_scores_to};
pub use tensors::{read_tensors, read_tensors_from, write_tensors, write_tensors_to, Tensor, TensorFile};
pub use wav::{read_wav, write_wav};
