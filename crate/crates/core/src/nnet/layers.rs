use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::frontend::FeatureMatrix;

pub(crate) const BN_EPS: f64 = 1e-5;
const STD_FLOOR: f64 = 1e-10;

/// Row `t` of the output concatenates input rows `t + o` for each offset,
/// clamping indices to the first and last frame.
pub fn splice(feats: &FeatureMatrix, offsets: &[isize]) -> FeatureMatrix {
    FeatureMatrix::new(splice_rows(feats.view(), offsets), feats.frame_shift())
}

pub(crate) fn splice_rows(x: ArrayView2<'_, f64>, offsets: &[isize]) -> Array2<f64> {
    let (rows, dim) = x.dim();
    if offsets == [0] {
        return x.to_owned();
    }
    let last = rows as isize - 1;
    let mut out = Array2::zeros((rows, dim * offsets.len()));
    for t in 0..rows {
        for (k, &o) in offsets.iter().enumerate() {
            let src = (t as isize + o).clamp(0, last) as usize;
            out.row_mut(t)
                .slice_mut(ndarray::s![k * dim..(k + 1) * dim])
                .assign(&x.row(src));
        }
    }
    out
}

/// Per-dimension mean followed by per-dimension population standard
/// deviation `sqrt(max(var, 0) + 1e-10)` over the rows of `x`.
pub fn stats_pooling(x: ArrayView2<'_, f64>) -> Vec<f64> {
    let (rows, dim) = x.dim();
    assert!(rows > 0, "stats pooling needs at least one frame");
    let n = rows as f64;
    let mut out = vec![0.0; 2 * dim];
    let pivot = x.row(0);
    for j in 0..dim {
        // shifted sums keep constant columns exactly constant
        let (mut s, mut s2) = (0.0, 0.0);
        for t in 0..rows {
            let d = x[[t, j]] - pivot[j];
            s += d;
            s2 += d * d;
        }
        let m = s / n;
        out[j] = pivot[j] + m;
        out[dim + j] = ((s2 / n - m * m).max(0.0) + STD_FLOOR).sqrt();
    }
    out
}

/// Inference-mode batch normalization over the last axis.
#[derive(Debug, Clone)]
pub(crate) struct BatchNorm {
    scale: Array1<f64>,
    shift: Array1<f64>,
}

impl BatchNorm {
    pub(crate) fn new(scale: &[f64], shift: &[f64], mean: &[f64], var: &[f64]) -> Self {
        let mut a = Array1::zeros(scale.len());
        let mut b = Array1::zeros(scale.len());
        for i in 0..scale.len() {
            let inv = 1.0 / (var[i] + BN_EPS).sqrt();
            a[i] = scale[i] * inv;
            b[i] = shift[i] - mean[i] * scale[i] * inv;
        }
        Self { scale: a, shift: b }
    }

    pub(crate) fn dim(&self) -> usize {
        self.scale.len()
    }

    /// Rows are frames, columns are units.
    pub(crate) fn apply_rows(&self, x: &mut Array2<f64>) {
        for mut row in x.axis_iter_mut(Axis(0)) {
            row.zip_mut_with(&self.scale, |v, a| *v *= a);
            row += &self.shift;
        }
    }

    pub(crate) fn apply_channel(&self, c: usize, v: f64) -> f64 {
        v * self.scale[c] + self.shift[c]
    }
}

pub(crate) fn relu_inplace<D: ndarray::Dimension>(x: &mut ndarray::Array<f64, D>) {
    x.mapv_inplace(|v| v.max(0.0));
}
