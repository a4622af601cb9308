use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArchKind {
    TdnnStandard,
    TdnnBig,
    TdnnBigResidual,
    Resnet34,
}

impl ArchKind {
    pub fn is_tdnn(self) -> bool {
        !matches!(self, ArchKind::Resnet34)
    }
}

impl fmt::Display for ArchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArchKind::TdnnStandard => "tdnn-standard",
            ArchKind::TdnnBig => "tdnn-big",
            ArchKind::TdnnBigResidual => "tdnn-big-residual",
            ArchKind::Resnet34 => "resnet34",
        })
    }
}

impl FromStr for ArchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "tdnn-standard" => ArchKind::TdnnStandard,
            "tdnn-big" => ArchKind::TdnnBig,
            "tdnn-big-residual" => ArchKind::TdnnBigResidual,
            "resnet34" => ArchKind::Resnet34,
            other => return Err(Error::InvalidConfig(format!("unknown architecture {other:?}"))),
        })
    }
}

/// One TDNN frame layer: splice → affine → ReLU → batch-norm.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameLayer {
    pub name: String,
    pub context: Vec<isize>,
    pub output_dim: usize,
    /// Add the layer input to its output (requires equal dims).
    pub residual: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResStage {
    pub blocks: usize,
    pub channels: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Topology {
    Tdnn {
        frame_layers: Vec<FrameLayer>,
        /// Width of segment2 (classifier side, after the embedding).
        segment2_dim: usize,
    },
    Resnet {
        stem_channels: usize,
        stages: Vec<ResStage>,
    },
}

/// Declarative network description.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub kind: ArchKind,
    pub input_dim: usize,
    pub embedding_dim: usize,
    pub num_classes: usize,
    pub topology: Topology,
}

fn frame(name: usize, context: &[isize], output_dim: usize, residual: bool) -> FrameLayer {
    FrameLayer {
        name: format!("frame{name}"),
        context: context.to_vec(),
        output_dim,
        residual,
    }
}

impl NetworkSpec {
    /// x-vector topology with the layer contexts and widths of the standard
    /// or BIG column.
    pub fn tdnn(kind: ArchKind, input_dim: usize, num_classes: usize) -> Result<Self> {
        let (width, pooled_in, ctx3): (usize, usize, &[isize]) = match kind {
            ArchKind::TdnnStandard => (512, 1500, &[-2, 0, 2]),
            ArchKind::TdnnBig | ArchKind::TdnnBigResidual => (1024, 2000, &[-4, -2, 0, 2, 4]),
            ArchKind::Resnet34 => return Err(Error::InvalidConfig("resnet34 is not a TDNN kind".into())),
        };
        let res = kind == ArchKind::TdnnBigResidual;
        let frame_layers = vec![
            frame(1, &[-2, -1, 0, 1, 2], width, false),
            frame(2, &[0], width, res),
            frame(3, ctx3, width, false),
            frame(4, &[0], width, res),
            frame(5, &[-3, 0, 3], width, false),
            frame(6, &[0], width, res),
            frame(7, &[-4, 0, 4], width, false),
            frame(8, &[0], width, res),
            frame(9, &[0], pooled_in, false),
        ];
        let spec = Self {
            kind,
            input_dim,
            embedding_dim: 512,
            num_classes,
            topology: Topology::Tdnn {
                frame_layers,
                segment2_dim: 512,
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    /// ResNet34 with `{3,4,6,3}` basic blocks over `{32,64,128,256}`
    /// channels; `embedding_dim` is 256 or 160 in the paper systems.
    pub fn resnet34(input_dim: usize, embedding_dim: usize, num_classes: usize) -> Result<Self> {
        let stages = [(3, 32, 1), (4, 64, 2), (6, 128, 2), (3, 256, 2)]
            .into_iter()
            .map(|(blocks, channels, stride)| ResStage {
                blocks,
                channels,
                stride,
            })
            .collect();
        let spec = Self {
            kind: ArchKind::Resnet34,
            input_dim,
            embedding_dim,
            num_classes,
            topology: Topology::Resnet {
                stem_channels: 32,
                stages,
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Paper preset for a kind: TDNN embeddings are 512-d, ResNet 256-d.
    pub fn preset(kind: ArchKind, input_dim: usize, num_classes: usize) -> Result<Self> {
        match kind {
            ArchKind::Resnet34 => Self::resnet34(input_dim, 256, num_classes),
            k => Self::tdnn(k, input_dim, num_classes),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.num_classes < 2 {
            return bad(format!("num_classes must be >= 2, got {}", self.num_classes));
        }
        if self.input_dim == 0 || self.embedding_dim == 0 {
            return bad("input and embedding dims must be positive".into());
        }
        match &self.topology {
            Topology::Tdnn { frame_layers, .. } => {
                if frame_layers.is_empty() {
                    return bad("TDNN needs at least one frame layer".into());
                }
                let mut dim = self.input_dim;
                for l in frame_layers {
                    if l.context.is_empty() || l.output_dim == 0 {
                        return bad(format!("{}: empty context or zero width", l.name));
                    }
                    if l.residual && (l.context.len() * dim != l.output_dim) {
                        return bad(format!("{}: residual layer must preserve its dimension", l.name));
                    }
                    dim = l.output_dim;
                }
            }
            Topology::Resnet { stem_channels, stages } => {
                if *stem_channels == 0 || stages.is_empty() {
                    return bad("ResNet needs a stem and at least one stage".into());
                }
                if stages.iter().any(|s| s.blocks == 0 || s.channels == 0 || s.stride == 0) {
                    return bad("ResNet stage with zero blocks, channels or stride".into());
                }
            }
        }
        Ok(())
    }

    /// Frequency and channel count entering the ResNet pooling layer.
    pub(crate) fn resnet_pooled_cells(&self) -> Option<(usize, usize)> {
        let Topology::Resnet { stem_channels, stages } = &self.topology else {
            return None;
        };
        let mut freq = self.input_dim;
        let mut ch = *stem_channels;
        for s in stages {
            freq = strided_len(freq, s.stride);
            ch = s.channels;
        }
        Some((freq, ch))
    }
}

/// Output length of a 3x3 (or 1x1) convolution with padding 1 (or 0).
pub(crate) fn strided_len(n: usize, stride: usize) -> usize {
    (n - 1) / stride + 1
}
