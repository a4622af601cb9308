use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{group_by_label, to_vectors};
use crate::error::{Error, Result};

/// Full-dimension LDA: rows are discriminant directions ordered by
/// decreasing between/within variance ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaTransform {
    pub matrix: DMatrix<f64>,
    /// Generalized eigenvalue of each row.
    pub eigenvalues: Vec<f64>,
}

impl LdaTransform {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, emb: &DVector<f64>) -> Result<DVector<f64>> {
        if emb.len() != self.matrix.ncols() {
            return Err(Error::DimMismatch {
                expected: self.matrix.ncols(),
                got: emb.len(),
            });
        }
        Ok(&self.matrix * emb)
    }
}

/// Within- and between-class scatter, each normalized by the sample count.
pub fn scatter_matrices(xs: &[DVector<f64>], labels: &[usize]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let groups = group_by_label(labels);
    if groups.len() < 2 {
        return Err(Error::TooFewClasses(groups.len()));
    }
    let d = xs[0].len();
    let n = xs.len() as f64;
    let global = xs.iter().fold(DVector::zeros(d), |a, x| a + x) / n;
    let mut sw = DMatrix::zeros(d, d);
    let mut sb = DMatrix::zeros(d, d);
    for idx in &groups {
        let m = idx.iter().fold(DVector::zeros(d), |a, &i| a + &xs[i]) / idx.len() as f64;
        for &i in idx {
            let r = &xs[i] - &m;
            sw.ger(1.0, &r, &r, 1.0);
        }
        let dm = &m - &global;
        sb.ger(idx.len() as f64, &dm, &dm, 1.0);
    }
    Ok((sw / n, sb / n))
}

/// Solve `S_b v = λ S_w v` keeping all `d` directions. `S_w` is regularized by
/// `eps * trace(S_w) / d * I`. Directions are scaled so `vᵀ S_w v = 1`, which
/// makes the null space of `S_b` an `S_w`-whitening basis.
pub fn train_lda(embeddings: &[Vec<f64>], labels: &[usize], eps: f64) -> Result<LdaTransform> {
    if embeddings.len() != labels.len() {
        return Err(Error::DimMismatch {
            expected: embeddings.len(),
            got: labels.len(),
        });
    }
    let xs = to_vectors(embeddings)?;
    let (mut sw, sb) = scatter_matrices(&xs, labels)?;
    let d = sw.nrows();
    let reg = eps * sw.trace() / d as f64;
    for i in 0..d {
        sw[(i, i)] += reg;
    }
    let chol = sw.cholesky().ok_or(Error::Singular("within-class scatter"))?;
    let l = chol.l();
    let l_inv = l.clone().try_inverse().ok_or(Error::Singular("within-class scatter"))?;
    let c = &l_inv * &sb * l_inv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let dirs = l_inv.transpose() * &eig.eigenvectors;
    let mut matrix = DMatrix::zeros(d, d);
    let mut eigenvalues = Vec::with_capacity(d);
    for (row, &k) in order.iter().enumerate() {
        matrix.set_row(row, &dirs.column(k).transpose());
        eigenvalues.push(eig.eigenvalues[k]);
    }
    Ok(LdaTransform { matrix, eigenvalues })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use rand_distr::{Distribution, StandardNormal};

    fn gauss(rng: &mut impl rand::Rng) -> f64 {
        StandardNormal.sample(rng)
    }

    fn separated_2d() -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = stream_rng(4, Stream::Speaker, 0);
        let mut xs = Vec::new();
        let mut ls = Vec::new();
        for i in 0..400 {
            let c = i % 2;
            xs.push(vec![if c == 0 { -3.0 } else { 3.0 } + gauss(&mut rng), gauss(&mut rng)]);
            ls.push(c);
        }
        (xs, ls)
    }

    #[test]
    fn fisher_direction_on_axis() {
        let (xs, ls) = separated_2d();
        let lda = train_lda(&xs, &ls, 1e-6).unwrap();
        assert_eq!(lda.matrix.shape(), (2, 2));
        let r = lda.matrix.row(0);
        let cos = r[0].abs() / r.norm();
        assert!(cos > 0.99, "{cos}");
        assert!(lda.eigenvalues[0] >= lda.eigenvalues[1]);
    }

    #[test]
    fn whitens_within_class() {
        let (xs, ls) = separated_2d();
        let lda = train_lda(&xs, &ls, 0.0).unwrap();
        let vs = to_vectors(&xs).unwrap();
        let (sw, _) = scatter_matrices(&vs, &ls).unwrap();
        let w = &lda.matrix * sw * lda.matrix.transpose();
        assert!((w - DMatrix::identity(2, 2)).abs().max() < 1e-9);
    }

    fn fisher_ratio(v: &DVector<f64>, sw: &DMatrix<f64>, sb: &DMatrix<f64>) -> f64 {
        v.dot(&(sb * v)) / v.dot(&(sw * v))
    }

    #[test]
    fn leading_direction_beats_random_sweep() {
        let mut rng = stream_rng(6, Stream::Speaker, 0);
        let d = 5;
        let means: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..d).map(|_| 2.0 * gauss(&mut rng)).collect())
            .collect();
        let mut xs = Vec::new();
        let mut ls = Vec::new();
        for i in 0..200 {
            let c = i % 4;
            // anisotropic within-class noise
            xs.push(
                (0..d)
                    .map(|j| means[c][j] + (1.0 + j as f64) * gauss(&mut rng))
                    .collect::<Vec<_>>(),
            );
            ls.push(c);
        }
        let lda = train_lda(&xs, &ls, 1e-6).unwrap();
        let vs = to_vectors(&xs).unwrap();
        let (sw, sb) = scatter_matrices(&vs, &ls).unwrap();
        let best = fisher_ratio(&lda.matrix.row(0).transpose(), &sw, &sb);
        for _ in 0..10_000 {
            let v = DVector::from_fn(d, |_, _| gauss(&mut rng));
            assert!(fisher_ratio(&v, &sw, &sb) <= best * (1.0 + 1e-9));
        }
        let axis_best = (0..d)
            .map(|j| fisher_ratio(&DVector::from_fn(d, |i, _| (i == j) as u8 as f64), &sw, &sb))
            .fold(0.0, f64::max);
        assert!(best > axis_best);
    }

    #[test]
    fn needs_two_classes() {
        assert!(matches!(
            train_lda(&[vec![1.0], vec![2.0]], &[0, 0], 1e-6),
            Err(Error::TooFewClasses(1))
        ));
    }

    #[test]
    fn square_for_degenerate_rank() {
        // 3 classes in 6-D: rank(S_b) = 2, remaining rows come from the whitening basis
        let mut rng = stream_rng(5, Stream::Speaker, 0);
        let xs: Vec<Vec<f64>> = (0..60).map(|_| (0..6).map(|_| gauss(&mut rng)).collect()).collect();
        let ls: Vec<usize> = (0..60).map(|i| i % 3).collect();
        let lda = train_lda(&xs, &ls, 1e-6).unwrap();
        assert_eq!(lda.matrix.shape(), (6, 6));
        assert!(lda.matrix.clone().try_inverse().is_some());
        assert!(lda.eigenvalues[2..].iter().all(|&e| e.abs() < 1e-9));
    }
}
