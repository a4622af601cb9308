//! Embedding extractors: TDNN x-vectors and ResNet34 r-vectors.

mod layers;
mod resnet;
mod spec;
mod tdnn;
mod weights;

pub use layers::{splice, stats_pooling};
pub use resnet::{forward_resnet, Resnet};
pub use spec::{ArchKind, FrameLayer, NetworkSpec, ResStage, Topology};
pub use tdnn::{forward_tdnn, Tdnn};
pub use weights::{check_weights, init_weights, load_weights, save_weights, Weights};

use std::ops::Deref;

use crate::error::{Error, Result};
use crate::frontend::FeatureMatrix;

/// Number of frames in every training segment.
pub const TRAINING_CROP_FRAMES: usize = 200;

/// Fixed-length utterance vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub vector: Vec<f64>,
    pub source: Option<ArchKind>,
}

impl Embedding {
    pub fn new(vector: Vec<f64>, source: ArchKind) -> Self {
        Self {
            vector,
            source: Some(source),
        }
    }

    pub fn from_vec(vector: Vec<f64>) -> Self {
        Self { vector, source: None }
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

impl Deref for Embedding {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.vector
    }
}

/// Input and output shape of one layer of a forward pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerShape {
    pub name: String,
    pub input: Vec<usize>,
    pub output: Vec<usize>,
}

impl LayerShape {
    pub fn new(name: &str, input: Vec<usize>, output: Vec<usize>) -> Self {
        Self {
            name: name.to_string(),
            input,
            output,
        }
    }
}

/// Contiguous 200-frame training segment.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingCrop(FeatureMatrix);

impl TrainingCrop {
    pub fn new(feats: FeatureMatrix) -> Result<Self> {
        if feats.rows() != TRAINING_CROP_FRAMES {
            return Err(Error::InvalidConfig(format!(
                "training crop must have {TRAINING_CROP_FRAMES} frames, got {}",
                feats.rows()
            )));
        }
        Ok(Self(feats))
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.0
    }
}

/// Cut an utterance into consecutive non-overlapping 200-frame crops,
/// dropping the remainder.
pub fn training_crops(feats: &FeatureMatrix) -> Vec<TrainingCrop> {
    (0..feats.rows() / TRAINING_CROP_FRAMES)
        .map(|i| {
            TrainingCrop(
                feats
                    .crop(i * TRAINING_CROP_FRAMES, TRAINING_CROP_FRAMES)
                    .expect("crop within bounds"),
            )
        })
        .collect()
}

/// Either extractor behind one interface.
pub enum Extractor {
    Tdnn(Tdnn),
    Resnet(Resnet),
}

impl Extractor {
    pub fn new(spec: &NetworkSpec, w: &Weights) -> Result<Self> {
        Ok(match spec.kind {
            ArchKind::Resnet34 => Extractor::Resnet(Resnet::new(spec, w)?),
            _ => Extractor::Tdnn(Tdnn::new(spec, w)?),
        })
    }

    pub fn embed(&self, feats: &FeatureMatrix) -> Result<Embedding> {
        match self {
            Extractor::Tdnn(n) => n.forward(feats),
            Extractor::Resnet(n) => n.forward(feats),
        }
    }

    pub fn embed_traced(&self, feats: &FeatureMatrix) -> Result<(Embedding, Vec<LayerShape>)> {
        match self {
            Extractor::Tdnn(n) => n.forward_traced(feats),
            Extractor::Resnet(n) => n.forward_traced(feats),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn crops_are_exactly_200_frames() {
        let f = FeatureMatrix::new(Array2::zeros((650, 3)), 0.01);
        let crops = training_crops(&f);
        assert_eq!(crops.len(), 3);
        assert!(crops.iter().all(|c| c.features().rows() == 200));
        assert!(TrainingCrop::new(FeatureMatrix::new(Array2::zeros((199, 3)), 0.01)).is_err());
    }
}
