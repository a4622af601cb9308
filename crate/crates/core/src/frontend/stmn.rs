use ndarray::Array2;

use super::FeatureMatrix;

/// Window `[start, end)` of frames averaged for frame `t`.
pub(crate) fn stmn_window(t: usize, window: usize, rows: usize) -> (usize, usize) {
    let start = t.saturating_sub(window / 2);
    let end = (t + window - window / 2).min(rows);
    (start, end)
}

/// Short-time mean normalization: subtract from each frame the mean over a
/// centered window of `round(window_s / shift)` frames, truncated at the
/// utterance edges.
pub fn stmn(feats: &FeatureMatrix, window_s: f64) -> FeatureMatrix {
    assert!(window_s > 0.0, "stmn window must be positive");
    let (rows, cols) = (feats.rows(), feats.cols());
    let window = ((window_s / feats.frame_shift()).round() as usize).max(1);
    // Offsets from the first frame keep the running sums small; a constant
    // track then cancels exactly.
    let mut data = feats.data().clone();
    if rows > 0 {
        let first = data.row(0).to_owned();
        for mut r in data.rows_mut() {
            r -= &first;
        }
    }
    // prefix[t] = sum of rows before t
    let mut prefix = Array2::<f64>::zeros((rows + 1, cols));
    for t in 0..rows {
        for j in 0..cols {
            prefix[[t + 1, j]] = prefix[[t, j]] + data[[t, j]];
        }
    }
    let mut out = Array2::zeros((rows, cols));
    for t in 0..rows {
        let (s, e) = stmn_window(t, window, rows);
        let n = (e - s) as f64;
        for j in 0..cols {
            out[[t, j]] = data[[t, j]] - (prefix[[e, j]] - prefix[[s, j]]) / n;
        }
    }
    FeatureMatrix::new(out, feats.frame_shift())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use rand::RngExt;

    fn random(rows: usize, cols: usize, seed: u64) -> FeatureMatrix {
        let mut rng = stream_rng(seed, Stream::Noise, 1);
        FeatureMatrix::new(
            Array2::from_shape_fn((rows, cols), |_| rng.random::<f64>() * 10.0 - 5.0),
            0.01,
        )
    }

    /// Mean over the explicit list of frames in each window.
    fn oracle(feats: &FeatureMatrix, window_frames: usize) -> Array2<f64> {
        let rows = feats.rows() as isize;
        let half = (window_frames / 2) as isize;
        let mut out = feats.data().clone();
        for t in 0..rows {
            let members: Vec<isize> = (t - half..t - half + window_frames as isize)
                .filter(|&s| s >= 0 && s < rows)
                .collect();
            for j in 0..feats.cols() {
                let mean = members.iter().map(|&s| feats.data()[[s as usize, j]]).sum::<f64>() / members.len() as f64;
                out[[t as usize, j]] -= mean;
            }
        }
        out
    }

    #[test]
    fn constant_becomes_zero() {
        for c in [3.25, 3.7, -1e3 / 7.0] {
            let f = FeatureMatrix::new(Array2::from_elem((500, 4), c), 0.01);
            assert!(stmn(&f, 3.0).data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn short_utterance_is_global_mean_subtraction() {
        let f = random(120, 5, 2);
        let out = stmn(&f, 3.0);
        let mean = f.data().mean_axis(ndarray::Axis(0)).unwrap();
        let expected = f.data() - &mean;
        for (a, b) in out.data().iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_sliding_window_oracle() {
        let f = random(400, 40, 3);
        let out = stmn(&f, 3.0);
        let want = oracle(&f, 300);
        for (a, b) in out.data().iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        // odd window too
        let out = stmn(&f, 0.51);
        let want = oracle(&f, 51);
        for (a, b) in out.data().iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn interior_window_mean_vanishes_for_periodic_input() {
        // period 30 divides the 300-frame window, so every interior window
        // mean is the same and the normalized output averages to zero
        let rows = 1200;
        let data = Array2::from_shape_fn((rows, 3), |(t, j)| ((t % 30) as f64 * 0.7 + j as f64).sin() + 2.0);
        let out = stmn(&FeatureMatrix::new(data, 0.01), 3.0);
        for t in 300..rows - 300 {
            let (s, e) = stmn_window(t, 300, rows);
            for j in 0..3 {
                let m: f64 = (s..e).map(|u| out.data()[[u, j]]).sum::<f64>() / (e - s) as f64;
                assert!(m.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn empty_in_empty_out() {
        let f = FeatureMatrix::new(Array2::zeros((0, 40)), 0.01);
        let out = stmn(&f, 3.0);
        assert_eq!(out.rows(), 0);
        assert_eq!(out.cols(), 40);
    }
}
