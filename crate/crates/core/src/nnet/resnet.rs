use ndarray::{Array1, Array2, Array3};

use super::layers::{relu_inplace, stats_pooling, BatchNorm};
use super::spec::{strided_len, NetworkSpec, Topology};
use super::weights::Weights;
use super::{Embedding, LayerShape};
use crate::error::{Error, Result};
use crate::frontend::FeatureMatrix;

/// Square convolution, padding `k / 2`, kernel flattened to
/// `cout x (cin * k * k)`.
struct Conv {
    kernel: Array2<f64>,
    cin: usize,
    k: usize,
    stride: usize,
}

impl Conv {
    fn load(w: &Weights, name: &str, cin: usize, cout: usize, k: usize, stride: usize) -> Result<Self> {
        let data = w.require(name, &[cout, cin, k, k])?;
        Ok(Self {
            kernel: Array2::from_shape_vec((cout, cin * k * k), data).expect("shape checked"),
            cin,
            k,
            stride,
        })
    }

    /// `x` is channels x freq x time.
    fn apply(&self, x: &Array3<f64>) -> Array3<f64> {
        let (c, h, w) = x.dim();
        debug_assert_eq!(c, self.cin);
        let pad = (self.k / 2) as isize;
        let (ho, wo) = (strided_len(h, self.stride), strided_len(w, self.stride));
        let mut cols = Array2::<f64>::zeros((c * self.k * self.k, ho * wo));
        for ci in 0..c {
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = (ci * self.k + ky) * self.k + kx;
                    let mut dst = cols.row_mut(row);
                    for oy in 0..ho {
                        let iy = (oy * self.stride) as isize + ky as isize - pad;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for ox in 0..wo {
                            let ix = (ox * self.stride) as isize + kx as isize - pad;
                            if ix >= 0 && ix < w as isize {
                                dst[oy * wo + ox] = x[[ci, iy as usize, ix as usize]];
                            }
                        }
                    }
                }
            }
        }
        let out = self.kernel.dot(&cols);
        let cout = self.kernel.nrows();
        out.into_shape_with_order((cout, ho, wo)).expect("conv output shape")
    }
}

fn load_bn(w: &Weights, prefix: &str, dim: usize) -> Result<BatchNorm> {
    let g = |s: &str| w.require(&format!("{prefix}.{s}"), &[dim]);
    Ok(BatchNorm::new(&g("scale")?, &g("shift")?, &g("mean")?, &g("var")?))
}

fn bn3(bn: &BatchNorm, x: &mut Array3<f64>) {
    debug_assert_eq!(bn.dim(), x.dim().0);
    for (c, mut plane) in x.outer_iter_mut().enumerate() {
        plane.mapv_inplace(|v| bn.apply_channel(c, v));
    }
}

struct Block {
    conv1: Conv,
    bn1: BatchNorm,
    conv2: Conv,
    bn2: BatchNorm,
    shortcut: Option<(Conv, BatchNorm)>,
}

impl Block {
    fn apply(&self, x: &Array3<f64>) -> Array3<f64> {
        let mut y = self.conv1.apply(x);
        bn3(&self.bn1, &mut y);
        relu_inplace(&mut y);
        let mut y = self.conv2.apply(&y);
        bn3(&self.bn2, &mut y);
        match &self.shortcut {
            Some((conv, bn)) => {
                let mut s = conv.apply(x);
                bn3(bn, &mut s);
                y += &s;
            }
            None => y += x,
        }
        relu_inplace(&mut y);
        y
    }
}

/// r-vector extractor with its parameters unpacked for inference.
pub struct Resnet {
    input_dim: usize,
    stem: Conv,
    stem_bn: BatchNorm,
    stages: Vec<Vec<Block>>,
    dense_t: Array2<f64>,
    dense_bias: Array1<f64>,
    spec: NetworkSpec,
}

impl Resnet {
    pub fn new(spec: &NetworkSpec, w: &Weights) -> Result<Self> {
        spec.validate()?;
        let Topology::Resnet { stem_channels, stages } = &spec.topology else {
            return Err(Error::InvalidConfig(format!("{} is not a ResNet", spec.kind)));
        };
        let stem = Conv::load(w, "conv1.weight", 1, *stem_channels, 3, 1)?;
        let stem_bn = load_bn(w, "bn1", *stem_channels)?;
        let mut cin = *stem_channels;
        let mut built = Vec::new();
        for (si, st) in stages.iter().enumerate() {
            let mut blocks = Vec::new();
            for b in 0..st.blocks {
                let p = format!("layer{}.{b}", si + 1);
                let stride = if b == 0 { st.stride } else { 1 };
                let shortcut = if stride != 1 || cin != st.channels {
                    Some((
                        Conv::load(w, &format!("{p}.downsample.weight"), cin, st.channels, 1, stride)?,
                        load_bn(w, &format!("{p}.downsample.bn"), st.channels)?,
                    ))
                } else {
                    None
                };
                blocks.push(Block {
                    conv1: Conv::load(w, &format!("{p}.conv1.weight"), cin, st.channels, 3, stride)?,
                    bn1: load_bn(w, &format!("{p}.bn1"), st.channels)?,
                    conv2: Conv::load(w, &format!("{p}.conv2.weight"), st.channels, st.channels, 3, 1)?,
                    bn2: load_bn(w, &format!("{p}.bn2"), st.channels)?,
                    shortcut,
                });
                cin = st.channels;
            }
            built.push(blocks);
        }
        let (freq, ch) = spec.resnet_pooled_cells().expect("resnet topology");
        let pooled = 2 * freq * ch;
        let dense = w.require("dense1.weight", &[spec.embedding_dim, pooled])?;
        let dense = Array2::from_shape_vec((spec.embedding_dim, pooled), dense).expect("shape checked");
        Ok(Self {
            input_dim: spec.input_dim,
            stem,
            stem_bn,
            stages: built,
            dense_t: dense.reversed_axes().as_standard_layout().to_owned(),
            dense_bias: Array1::from(w.require("dense1.bias", &[spec.embedding_dim])?),
            spec: spec.clone(),
        })
    }

    /// Embedding plus per-layer output shapes, reported as
    /// `freq x time x channels`.
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
        let shape_of = |x: &Array3<f64>| {
            let (c, h, w) = x.dim();
            vec![h, w, c]
        };
        let mut trace = Vec::new();
        let t = feats.rows();
        // frames x freq  ->  1 x freq x time
        let x = feats
            .data()
            .t()
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((1, self.input_dim, t))
            .expect("input reshape");
        trace.push(LayerShape::new("input", vec![], shape_of(&x)));
        let mut x = self.stem.apply(&x);
        bn3(&self.stem_bn, &mut x);
        relu_inplace(&mut x);
        trace.push(LayerShape::new("conv1", vec![], shape_of(&x)));
        for (si, blocks) in self.stages.iter().enumerate() {
            for b in blocks {
                x = b.apply(&x);
            }
            trace.push(LayerShape::new(&format!("layer{}", si + 1), vec![], shape_of(&x)));
        }
        // pool over time for every (channel, freq) cell
        let (c, h, w) = x.dim();
        let cells = x.into_shape_with_order((c * h, w)).expect("flatten cells");
        let pooled = stats_pooling(cells.t());
        trace.push(LayerShape::new("stats_pooling", vec![], vec![2 * h, c]));
        trace.push(LayerShape::new("flatten", vec![], vec![pooled.len()]));
        let pooled = Array1::from(pooled);
        let emb = pooled.dot(&self.dense_t) + &self.dense_bias;
        trace.push(LayerShape::new("dense1", vec![], vec![emb.len()]));
        Ok((Embedding::new(emb.to_vec(), self.spec.kind), trace))
    }

    pub fn forward(&self, feats: &FeatureMatrix) -> Result<Embedding> {
        self.forward_traced(feats).map(|(e, _)| e)
    }
}

/// One-shot ResNet forward pass; see [`Resnet::new`].
pub fn forward_resnet(feats: &FeatureMatrix, spec: &NetworkSpec, w: &Weights) -> Result<Embedding> {
    Resnet::new(spec, w)?.forward(feats)
}
