use ndarray::{Array1, Array2, Axis};

use super::layers::{relu_inplace, splice_rows, stats_pooling, BatchNorm};
use super::spec::{NetworkSpec, Topology};
use super::weights::Weights;
use super::{Embedding, LayerShape};
use crate::error::{Error, Result};
use crate::frontend::FeatureMatrix;

struct Affine {
    /// `input x output`, so frames multiply from the left.
    weight_t: Array2<f64>,
    bias: Array1<f64>,
}

impl Affine {
    fn load(w: &Weights, prefix: &str, input: usize, output: usize) -> Result<Self> {
        let weight = w.require(&format!("{prefix}.weight"), &[output, input])?;
        let bias = w.require(&format!("{prefix}.bias"), &[output])?;
        let weight = Array2::from_shape_vec((output, input), weight).expect("shape checked");
        Ok(Self {
            weight_t: weight.reversed_axes().as_standard_layout().to_owned(),
            bias: Array1::from(bias),
        })
    }

    fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut y = x.dot(&self.weight_t);
        y += &self.bias;
        y
    }
}

fn load_bn(w: &Weights, prefix: &str, dim: usize) -> Result<BatchNorm> {
    let g = |s: &str| w.require(&format!("{prefix}.{s}"), &[dim]);
    Ok(BatchNorm::new(&g("scale")?, &g("shift")?, &g("mean")?, &g("var")?))
}

struct Frame {
    name: String,
    context: Vec<isize>,
    affine: Affine,
    bn: BatchNorm,
    residual: bool,
}

/// x-vector extractor with its parameters unpacked for inference.
pub struct Tdnn {
    input_dim: usize,
    frames: Vec<Frame>,
    segment1: Affine,
    spec: NetworkSpec,
}

impl Tdnn {
    pub fn new(spec: &NetworkSpec, w: &Weights) -> Result<Self> {
        spec.validate()?;
        let Topology::Tdnn { frame_layers, .. } = &spec.topology else {
            return Err(Error::InvalidConfig(format!("{} is not a TDNN", spec.kind)));
        };
        let mut dim = spec.input_dim;
        let mut frames = Vec::with_capacity(frame_layers.len());
        for l in frame_layers {
            let prefix = &l.name;
            frames.push(Frame {
                name: l.name.clone(),
                context: l.context.clone(),
                affine: Affine::load(w, &format!("{prefix}.affine"), dim * l.context.len(), l.output_dim)?,
                bn: load_bn(w, &format!("{prefix}.bn"), l.output_dim)?,
                residual: l.residual,
            });
            dim = l.output_dim;
        }
        let segment1 = Affine::load(w, "segment1.affine", 2 * dim, spec.embedding_dim)?;
        Ok(Self {
            input_dim: spec.input_dim,
            frames,
            segment1,
            spec: spec.clone(),
        })
    }

    /// Embedding plus the shape of every layer's input and output.
    pub fn forward_traced(&self, feats: &FeatureMatrix) -> Result<(Embedding, Vec<LayerShape>)> {
        if feats.cols() != self.input_dim {
            return Err(Error::FeatureDimMismatch {
                expected: self.input_dim,
                got: feats.cols(),
            });
        }
        if feats.is_empty() {
            return Err(Error::EmptyInput("no frames"));
        }
        let mut trace = Vec::new();
        let mut x = feats.data().clone();
        for f in &self.frames {
            let spliced = splice_rows(x.view(), &f.context);
            let mut y = f.affine.apply(&spliced);
            relu_inplace(&mut y);
            f.bn.apply_rows(&mut y);
            trace.push(LayerShape::new(&f.name, vec![spliced.ncols()], vec![y.ncols()]));
            if f.residual {
                y += &x;
            }
            x = y;
        }
        let pooled = stats_pooling(x.view());
        trace.push(LayerShape::new("stats_pooling", vec![x.ncols()], vec![pooled.len()]));
        let pooled = Array2::from_shape_vec((1, pooled.len()), pooled).expect("row vector");
        let emb = self.segment1.apply(&pooled);
        trace.push(LayerShape::new("segment1", vec![pooled.ncols()], vec![emb.ncols()]));
        let vector = emb.index_axis(Axis(0), 0).to_vec();
        Ok((Embedding::new(vector, self.spec.kind), trace))
    }

    pub fn forward(&self, feats: &FeatureMatrix) -> Result<Embedding> {
        self.forward_traced(feats).map(|(e, _)| e)
    }
}

/// One-shot TDNN forward pass; use [`Tdnn::new`] to amortize weight
/// unpacking over many utterances.
pub fn forward_tdnn(feats: &FeatureMatrix, spec: &NetworkSpec, w: &Weights) -> Result<Embedding> {
    Tdnn::new(spec, w)?.forward(feats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::Tensor;
    use crate::nnet::spec::FrameLayer;
    use crate::nnet::{init_weights, ArchKind};

    fn micro_spec() -> NetworkSpec {
        NetworkSpec {
            kind: ArchKind::TdnnStandard,
            input_dim: 2,
            embedding_dim: 2,
            num_classes: 2,
            topology: Topology::Tdnn {
                frame_layers: vec![
                    FrameLayer {
                        name: "frame1".into(),
                        context: vec![-1, 0, 1],
                        output_dim: 3,
                        residual: false,
                    },
                    FrameLayer {
                        name: "frame2".into(),
                        context: vec![0],
                        output_dim: 3,
                        residual: false,
                    },
                ],
                segment2_dim: 2,
            },
        }
    }

    fn set(w: &mut Weights, name: &str, shape: Vec<usize>, f: impl Fn(usize) -> f64) {
        let n = shape.iter().product();
        w.insert(name, Tensor::new(shape, (0..n).map(|i| f(i) as f32).collect()));
    }

    #[test]
    fn micro_network_matches_hand_forward() {
        let spec = micro_spec();
        let mut w = init_weights(&spec, 0).unwrap();
        // small dyadic values so every product is exact in f32
        set(&mut w, "frame1.affine.weight", vec![3, 6], |i| {
            ((i * 5) % 7) as f64 * 0.25 - 0.75
        });
        set(&mut w, "frame1.affine.bias", vec![3], |i| i as f64 * 0.5 - 0.5);
        set(&mut w, "frame1.bn.mean", vec![3], |i| i as f64 * 0.125);
        set(&mut w, "frame1.bn.var", vec![3], |i| 1.0 + i as f64);
        set(&mut w, "frame1.bn.scale", vec![3], |i| 2.0 - i as f64 * 0.5);
        set(&mut w, "frame1.bn.shift", vec![3], |i| i as f64 * 0.25);
        set(&mut w, "frame2.affine.weight", vec![3, 3], |i| {
            ((i * 3) % 5) as f64 * 0.5 - 1.0
        });
        set(&mut w, "frame2.affine.bias", vec![3], |_| 0.25);
        set(&mut w, "segment1.affine.weight", vec![2, 6], |i| {
            (i % 4) as f64 * 0.25 - 0.25
        });
        set(&mut w, "segment1.affine.bias", vec![2], |i| i as f64);

        let x = [[0.5, -1.0], [1.5, 0.25], [-0.5, 2.0]];
        let feats = FeatureMatrix::from_rows(&x.iter().map(|r| r.to_vec()).collect::<Vec<_>>(), 0.01).unwrap();
        let got = forward_tdnn(&feats, &spec, &w).unwrap();

        let get = |name: &str| w.get(name).unwrap().to_f64();
        let (w1, b1) = (get("frame1.affine.weight"), get("frame1.affine.bias"));
        let (m1, v1, g1, s1) = (
            get("frame1.bn.mean"),
            get("frame1.bn.var"),
            get("frame1.bn.scale"),
            get("frame1.bn.shift"),
        );
        let (w2, b2) = (get("frame2.affine.weight"), get("frame2.affine.bias"));
        let (ws, bs) = (get("segment1.affine.weight"), get("segment1.affine.bias"));

        let mut h1 = [[0.0; 3]; 3];
        for t in 0..3usize {
            let ctx: Vec<f64> = [t.saturating_sub(1), t, (t + 1).min(2)]
                .iter()
                .flat_map(|&s| x[s].to_vec())
                .collect();
            for o in 0..3 {
                let mut a = b1[o];
                for i in 0..6 {
                    a += w1[o * 6 + i] * ctx[i];
                }
                let r = a.max(0.0);
                h1[t][o] = (r - m1[o]) / (v1[o] + 1e-5).sqrt() * g1[o] + s1[o];
            }
        }
        let mut h2 = [[0.0; 3]; 3];
        for t in 0..3 {
            for o in 0..3 {
                let mut a = b2[o];
                for i in 0..3 {
                    a += w2[o * 3 + i] * h1[t][i];
                }
                // frame2 batch-norm is at identity statistics
                h2[t][o] = a.max(0.0) / (1.0f64 + 1e-5).sqrt();
            }
        }
        let mut stats = [0.0; 6];
        for o in 0..3 {
            let mean = (h2[0][o] + h2[1][o] + h2[2][o]) / 3.0;
            let var = (0..3).map(|t| (h2[t][o] - mean).powi(2)).sum::<f64>() / 3.0;
            stats[o] = mean;
            stats[3 + o] = (var + 1e-10).sqrt();
        }
        for o in 0..2 {
            let mut a = bs[o];
            for i in 0..6 {
                a += ws[o * 6 + i] * stats[i];
            }
            assert!((got.vector[o] - a).abs() < 1e-6, "{} vs {a}", got.vector[o]);
        }
    }

    #[test]
    fn zero_weights_give_zero_embedding() {
        let spec = NetworkSpec::tdnn(ArchKind::TdnnStandard, 30, 4).unwrap();
        let mut w = init_weights(&spec, 1).unwrap();
        for t in w.tensors_mut().tensors.values_mut() {
            if t.shape.len() == 2 {
                t.data.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let feats = FeatureMatrix::new(Array2::from_elem((20, 30), 0.7), 0.01);
        let e = forward_tdnn(&feats, &spec, &w).unwrap();
        assert_eq!(e.vector.len(), 512);
        assert!(e.vector.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wrong_feature_dim() {
        let spec = NetworkSpec::tdnn(ArchKind::TdnnStandard, 30, 4).unwrap();
        let w = init_weights(&spec, 1).unwrap();
        let feats = FeatureMatrix::new(Array2::zeros((5, 40)), 0.01);
        assert!(matches!(
            forward_tdnn(&feats, &spec, &w),
            Err(Error::FeatureDimMismatch { .. })
        ));
    }

    #[test]
    fn missing_tensor() {
        let spec = NetworkSpec::tdnn(ArchKind::TdnnStandard, 30, 4).unwrap();
        let mut w = init_weights(&spec, 1).unwrap();
        w.tensors_mut().tensors.remove("frame5.bn.var");
        assert!(matches!(Tdnn::new(&spec, &w), Err(Error::WeightsMismatch(_))));
    }

    #[test]
    fn single_frame_is_valid() {
        let spec = NetworkSpec::tdnn(ArchKind::TdnnStandard, 30, 4).unwrap();
        let w = init_weights(&spec, 1).unwrap();
        let feats = FeatureMatrix::new(Array2::from_elem((1, 30), 0.3), 0.01);
        assert!(forward_tdnn(&feats, &spec, &w)
            .unwrap()
            .vector
            .iter()
            .all(|v| v.is_finite()));
    }

    #[test]
    fn zeroed_residual_pairs_pass_input_through() {
        let spec = NetworkSpec::tdnn(ArchKind::TdnnBigResidual, 30, 4).unwrap();
        let mut w = init_weights(&spec, 2).unwrap();
        for l in ["frame2", "frame4", "frame6", "frame8"] {
            for t in ["weight", "bias"] {
                let name = format!("{l}.affine.{t}");
                w.get(&name).unwrap();
                let t = w.tensors_mut().tensors.get_mut(&name).unwrap();
                t.data.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let net = Tdnn::new(&spec, &w).unwrap();
        let feats = FeatureMatrix::new(
            Array2::from_shape_fn((12, 30), |(i, j)| ((i * j) % 7) as f64 * 0.1),
            0.01,
        );
        // run frame-by-frame and check each zeroed pair is the identity
        let mut x = feats.data().clone();
        for f in &net.frames {
            let spliced = splice_rows(x.view(), &f.context);
            let mut y = f.affine.apply(&spliced);
            relu_inplace(&mut y);
            f.bn.apply_rows(&mut y);
            if f.residual {
                y += &x;
                assert_eq!(y, x, "{}", f.name);
            }
            x = y;
        }
    }
}
