use std::path::Path;

use rand::RngExt;

use super::spec::{NetworkSpec, Topology};
use crate::error::{Error, Result};
use crate::io::{read_tensors, write_tensors, Tensor, TensorFile};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Init {
    /// Uniform in `±sqrt(6 / fan_in)`.
    Uniform {
        fan_in: usize,
    },
    Zeros,
    Ones,
}

/// Named parameter store for a network.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Weights {
    pub(crate) file: TensorFile,
}

impl Weights {
    pub fn new(file: TensorFile) -> Self {
        Self { file }
    }

    pub fn tensors(&self) -> &TensorFile {
        &self.file
    }

    pub fn tensors_mut(&mut self) -> &mut TensorFile {
        &mut self.file
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.file.get(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.file.insert(name, t);
    }

    pub fn num_params(&self) -> usize {
        self.file.tensors.values().map(Tensor::numel).sum()
    }

    /// Tensor `name` as f64, checked against `shape`.
    pub(crate) fn require(&self, name: &str, shape: &[usize]) -> Result<Vec<f64>> {
        let t = self
            .file
            .get(name)
            .ok_or_else(|| Error::WeightsMismatch(format!("missing tensor {name}")))?;
        if t.shape != shape {
            return Err(Error::WeightsMismatch(format!(
                "tensor {name} has shape {:?}, expected {shape:?}",
                t.shape
            )));
        }
        if t.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::WeightsMismatch(format!("tensor {name} has non-finite entries")));
        }
        Ok(t.to_f64())
    }
}

fn bn(out: &mut Vec<(String, Vec<usize>, Init)>, prefix: &str, dim: usize) {
    out.push((format!("{prefix}.scale"), vec![dim], Init::Ones));
    out.push((format!("{prefix}.shift"), vec![dim], Init::Zeros));
    out.push((format!("{prefix}.mean"), vec![dim], Init::Zeros));
    out.push((format!("{prefix}.var"), vec![dim], Init::Ones));
}

fn affine(out: &mut Vec<(String, Vec<usize>, Init)>, prefix: &str, input: usize, output: usize) {
    out.push((
        format!("{prefix}.weight"),
        vec![output, input],
        Init::Uniform { fan_in: input },
    ));
    out.push((format!("{prefix}.bias"), vec![output], Init::Zeros));
}

fn conv(out: &mut Vec<(String, Vec<usize>, Init)>, name: &str, cin: usize, cout: usize, k: usize) {
    out.push((
        name.to_string(),
        vec![cout, cin, k, k],
        Init::Uniform { fan_in: cin * k * k },
    ));
}

/// Every tensor a spec needs, in a fixed order.
pub(crate) fn tensor_layout(spec: &NetworkSpec) -> Vec<(String, Vec<usize>, Init)> {
    let mut out = Vec::new();
    match &spec.topology {
        Topology::Tdnn {
            frame_layers,
            segment2_dim,
        } => {
            let mut dim = spec.input_dim;
            for l in frame_layers {
                affine(
                    &mut out,
                    &format!("{}.affine", l.name),
                    dim * l.context.len(),
                    l.output_dim,
                );
                bn(&mut out, &format!("{}.bn", l.name), l.output_dim);
                dim = l.output_dim;
            }
            affine(&mut out, "segment1.affine", 2 * dim, spec.embedding_dim);
            bn(&mut out, "segment1.bn", spec.embedding_dim);
            affine(&mut out, "segment2.affine", spec.embedding_dim, *segment2_dim);
            bn(&mut out, "segment2.bn", *segment2_dim);
            affine(&mut out, "output.affine", *segment2_dim, spec.num_classes);
        }
        Topology::Resnet { stem_channels, stages } => {
            conv(&mut out, "conv1.weight", 1, *stem_channels, 3);
            bn(&mut out, "bn1", *stem_channels);
            let mut cin = *stem_channels;
            for (si, stage) in stages.iter().enumerate() {
                for b in 0..stage.blocks {
                    let p = format!("layer{}.{b}", si + 1);
                    let stride = if b == 0 { stage.stride } else { 1 };
                    conv(&mut out, &format!("{p}.conv1.weight"), cin, stage.channels, 3);
                    bn(&mut out, &format!("{p}.bn1"), stage.channels);
                    conv(
                        &mut out,
                        &format!("{p}.conv2.weight"),
                        stage.channels,
                        stage.channels,
                        3,
                    );
                    bn(&mut out, &format!("{p}.bn2"), stage.channels);
                    if stride != 1 || cin != stage.channels {
                        conv(&mut out, &format!("{p}.downsample.weight"), cin, stage.channels, 1);
                        bn(&mut out, &format!("{p}.downsample.bn"), stage.channels);
                    }
                    cin = stage.channels;
                }
            }
            let (freq, ch) = spec.resnet_pooled_cells().expect("resnet topology");
            affine(&mut out, "dense1", 2 * freq * ch, spec.embedding_dim);
            affine(&mut out, "dense2", spec.embedding_dim, spec.num_classes);
        }
    }
    out
}

/// Deterministic initialization: weight tensors uniform in
/// `±sqrt(6 / fan_in)`, biases zero, batch-norm at identity statistics.
pub fn init_weights(spec: &NetworkSpec, seed: u64) -> Result<Weights> {
    spec.validate()?;
    let mut file = TensorFile::new();
    for (idx, (name, shape, init)) in tensor_layout(spec).into_iter().enumerate() {
        let n: usize = shape.iter().product();
        let data = match init {
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::Uniform { fan_in } => {
                let bound = (6.0 / fan_in as f64).sqrt() as f32;
                let mut rng = stream_rng(seed, Stream::Weights, idx as u64);
                (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
            }
        };
        file.insert(name, Tensor::new(shape, data));
    }
    Ok(Weights { file })
}

/// Check that `w` holds every tensor of `spec` with the right shape.
pub fn check_weights(spec: &NetworkSpec, w: &Weights) -> Result<()> {
    for (name, shape, _) in tensor_layout(spec) {
        w.require(&name, &shape)?;
    }
    Ok(())
}

pub fn save_weights(w: &Weights, path: impl AsRef<Path>) -> Result<()> {
    write_tensors(path, &w.file)
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<Weights> {
    read_tensors(path).map(Weights::new)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::ArchKind;

    fn small() -> NetworkSpec {
        NetworkSpec::tdnn(ArchKind::TdnnStandard, 30, 7).unwrap()
    }

    #[test]
    fn deterministic_per_seed() {
        let a = init_weights(&small(), 3).unwrap();
        let b = init_weights(&small(), 3).unwrap();
        assert_eq!(a, b);
        let c = init_weights(&small(), 4).unwrap();
        assert!(a.file.tensors.iter().any(|(k, t)| c.get(k).unwrap() != t));
    }

    #[test]
    fn bounds_follow_fan_in() {
        let w = init_weights(&small(), 1).unwrap();
        let stem = w.get("frame1.affine.weight").unwrap();
        assert_eq!(stem.shape, vec![512, 150]);
        assert!(stem.data.iter().all(|v| v.abs() <= 0.2));
        assert!(stem.data.iter().any(|v| v.abs() > 0.19));
        assert!(w.get("frame1.bn.var").unwrap().data.iter().all(|&v| v == 1.0));
        assert!(w.get("frame1.affine.bias").unwrap().data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.svw");
        let w = init_weights(&small(), 9).unwrap();
        save_weights(&w, &path).unwrap();
        assert_eq!(load_weights(&path).unwrap(), w);
        check_weights(&small(), &w).unwrap();
    }

    #[test]
    fn truncated_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.svw");
        save_weights(&init_weights(&small(), 9).unwrap(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_weights(&path), Err(Error::BadWeightFile(_))));
    }

    #[test]
    fn empty_store_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.svw");
        save_weights(&Weights::default(), &path).unwrap();
        assert_eq!(load_weights(&path).unwrap().tensors().len(), 0);
    }

    #[test]
    fn mis_shaped_tensor_detected() {
        let mut w = init_weights(&small(), 1).unwrap();
        w.insert("frame3.affine.bias", Tensor::new(vec![3], vec![0.0; 3]));
        assert!(matches!(check_weights(&small(), &w), Err(Error::WeightsMismatch(_))));
    }
}
