use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use super::{group_by_label, to_vectors};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Two-subspace factor-analysis PLDA: `x = mu + V h + U w + eps`, with
/// `h` shared by a speaker, `w` drawn per utterance and `eps ~ N(0, diag(psi))`.
#[derive(Debug, Clone, PartialEq)]
pub struct PldaModel {
    pub mu: DVector<f64>,
    pub v: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub psi: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PldaConfig {
    pub speaker_rank: usize,
    pub channel_rank: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for PldaConfig {
    fn default() -> Self {
        Self {
            speaker_rank: 312,
            channel_rank: 312,
            iterations: 10,
            seed: 0,
        }
    }
}

impl PldaModel {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Between-speaker covariance `V Vᵀ`.
    pub fn between(&self) -> DMatrix<f64> {
        &self.v * self.v.transpose()
    }

    /// Within-speaker covariance `U Uᵀ + diag(psi)`.
    pub fn within(&self) -> DMatrix<f64> {
        let mut w = &self.u * self.u.transpose();
        for i in 0..self.dim() {
            w[(i, i)] += self.psi[i];
        }
        w
    }

    fn check(&self) -> Result<()> {
        let d = self.mu.len();
        if self.v.nrows() != d || self.u.nrows() != d || self.psi.len() != d {
            return Err(Error::DimMismatch {
                expected: d,
                got: self.v.nrows().max(self.u.nrows()).max(self.psi.len()),
            });
        }
        if self.psi.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::NotPositiveDefinite("residual variance"));
        }
        Ok(())
    }

    /// Marginal log-likelihood of the data with speakers integrated out.
    pub fn log_likelihood(&self, embeddings: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
        let xs = to_vectors(embeddings)?;
        self.log_likelihood_of(&xs, &group_by_label(labels))
    }

    fn log_likelihood_of(&self, xs: &[DVector<f64>], groups: &[Vec<usize>]) -> Result<f64> {
        let d = self.dim() as f64;
        let w = self.within();
        let b = self.between();
        let w_chol = w
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite("within-speaker covariance"))?;
        let w_logdet = chol_logdet(&w_chol);
        // (W + nB) factorizations shared by speakers with equal counts
        let mut by_count: BTreeMap<usize, nalgebra::Cholesky<f64, nalgebra::Dyn>> = BTreeMap::new();
        let mut total = 0.0;
        for idx in groups {
            let n = idx.len();
            let c = match by_count.get(&n) {
                Some(c) => c,
                None => {
                    let m = &w + &b * n as f64;
                    let c = m
                        .cholesky()
                        .ok_or(Error::NotPositiveDefinite("speaker marginal covariance"))?;
                    by_count.entry(n).or_insert(c)
                }
            };
            let rs: Vec<DVector<f64>> = idx.iter().map(|&i| &xs[i] - &self.mu).collect();
            let mean = rs.iter().fold(DVector::zeros(self.dim()), |a, r| a + r) / n as f64;
            let mut quad = 0.0;
            for r in &rs {
                let dev = r - &mean;
                quad += dev.dot(&w_chol.solve(&dev));
            }
            quad += n as f64 * mean.dot(&c.solve(&mean));
            let nf = n as f64;
            total -= 0.5 * (nf * d * (2.0 * PI).ln() + (nf - 1.0) * w_logdet + chol_logdet(c) + quad);
        }
        Ok(total)
    }
}

fn chol_logdet(c: &nalgebra::Cholesky<f64, nalgebra::Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// Result of EM training.
#[derive(Debug, Clone)]
pub struct PldaFit {
    pub model: PldaModel,
    /// Training-set log-likelihood at initialization and after every iteration.
    pub log_likelihood: Vec<f64>,
}

const PSI_FLOOR: f64 = 1e-10;

pub fn train_plda(embeddings: &[Vec<f64>], labels: &[usize], cfg: &PldaConfig) -> Result<PldaModel> {
    Ok(train_plda_traced(embeddings, labels, cfg)?.model)
}

/// EM for [`PldaModel`]. The mean is the training mean and stays fixed;
/// `V`, `U` and `psi` are updated jointly from the exact posterior of
/// `[h; w]`, so the log-likelihood never decreases.
pub fn train_plda_traced(embeddings: &[Vec<f64>], labels: &[usize], cfg: &PldaConfig) -> Result<PldaFit> {
    if embeddings.len() != labels.len() {
        return Err(Error::DimMismatch {
            expected: embeddings.len(),
            got: labels.len(),
        });
    }
    let xs = to_vectors(embeddings)?;
    let d = xs[0].len();
    let (rs_rank, rc_rank) = (cfg.speaker_rank, cfg.channel_rank);
    if rs_rank == 0 || rc_rank == 0 || rs_rank > d || rc_rank > d {
        return Err(Error::InvalidConfig(format!(
            "PLDA ranks must be in 1..={d}, got speaker {rs_rank}, channel {rc_rank}"
        )));
    }
    if cfg.iterations == 0 {
        return Err(Error::InvalidConfig("PLDA needs at least one EM iteration".into()));
    }
    let groups = group_by_label(labels);
    if groups.len() < 2 {
        return Err(Error::TooFewClasses(groups.len()));
    }
    let n_total = xs.len() as f64;
    let mu = xs.iter().fold(DVector::zeros(d), |a, x| a + x) / n_total;
    let centered: Vec<DVector<f64>> = xs.iter().map(|x| x - &mu).collect();
    let mut second = DMatrix::zeros(d, d);
    for r in &centered {
        second.ger(1.0, r, r, 1.0);
    }
    let total_var = second.diagonal() / n_total;

    let mut rng = stream_rng(cfg.seed, Stream::Model, 0);
    let scale = (total_var.mean() / (rs_rank + rc_rank) as f64).sqrt().max(1e-6);
    let mut gauss = |r: usize, c: usize| {
        DMatrix::from_fn(r, c, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * z
        })
    };
    let mut model = PldaModel {
        v: gauss(d, rs_rank),
        u: gauss(d, rc_rank),
        psi: total_var.map(|v| v.max(PSI_FLOOR)),
        mu,
    };
    let mut trace = vec![model.log_likelihood_of(&xs, &groups)?];
    let k = rs_rank + rc_rank;
    for _ in 0..cfg.iterations {
        let (r_acc, c_acc) = e_step(&model, &centered, &groups)?;
        let c_chol = c_acc.cholesky().ok_or(Error::Singular("PLDA latent second moment"))?;
        // A = R C⁻¹, solved as C Aᵀ = Rᵀ
        let a = c_chol.solve(&r_acc.transpose()).transpose();
        let ar = &a * r_acc.transpose();
        let psi = DVector::from_fn(d, |i, _| ((second[(i, i)] - ar[(i, i)]) / n_total).max(PSI_FLOOR));
        model.v = a.columns(0, rs_rank).into_owned();
        model.u = a.columns(rs_rank, k - rs_rank).into_owned();
        model.psi = psi;
        trace.push(model.log_likelihood_of(&xs, &groups)?);
    }
    Ok(PldaFit {
        model,
        log_likelihood: trace,
    })
}

/// Accumulate `R = Σ r zᵀ` and `C = Σ E[z zᵀ]` with `z = [h; w]`.
fn e_step(model: &PldaModel, centered: &[DVector<f64>], groups: &[Vec<usize>]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let d = model.dim();
    let rs_rank = model.v.ncols();
    let rc_rank = model.u.ncols();
    let k = rs_rank + rc_rank;

    let w_chol = model
        .within()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("within-speaker covariance"))?;
    let winv_v = w_chol.solve(&model.v);
    let vt_winv_v = model.v.transpose() * &winv_v;

    let psi_inv_u = DMatrix::from_fn(d, rc_rank, |i, j| model.u[(i, j)] / model.psi[i]);
    let mut q = model.u.transpose() * &psi_inv_u;
    for i in 0..rc_rank {
        q[(i, i)] += 1.0;
    }
    let q_chol = q.cholesky().ok_or(Error::Singular("channel posterior precision"))?;
    let q_inv = q_chol.inverse();
    // G maps a residual to the posterior channel factor
    let g = &q_inv * psi_inv_u.transpose();
    let gv = &g * &model.v;

    let mut r_acc = DMatrix::zeros(d, k);
    let mut c_acc = DMatrix::zeros(k, k);
    for idx in groups {
        let n = idx.len();
        let mut prec = &vt_winv_v * n as f64;
        for i in 0..rs_rank {
            prec[(i, i)] += 1.0;
        }
        let sigma_h = prec
            .cholesky()
            .ok_or(Error::Singular("speaker posterior precision"))?
            .inverse();
        let sum_r = idx.iter().fold(DVector::zeros(d), |a, &i| a + &centered[i]);
        let h = &sigma_h * (winv_v.transpose() * sum_r);
        let vh = &model.v * &h;

        let cov_wh = -(&gv * &sigma_h);
        let cov_w = &q_inv + &gv * &sigma_h * gv.transpose();
        let nf = n as f64;
        {
            let mut blk = c_acc.view_mut((0, 0), (rs_rank, rs_rank));
            blk += &sigma_h * nf;
        }
        {
            let mut blk = c_acc.view_mut((rs_rank, 0), (rc_rank, rs_rank));
            blk += &cov_wh * nf;
        }
        {
            let mut blk = c_acc.view_mut((0, rs_rank), (rs_rank, rc_rank));
            blk += cov_wh.transpose() * nf;
        }
        {
            let mut blk = c_acc.view_mut((rs_rank, rs_rank), (rc_rank, rc_rank));
            blk += &cov_w * nf;
        }

        let mut z = DVector::zeros(k);
        z.rows_mut(0, rs_rank).copy_from(&h);
        for &i in idx {
            let w = &g * (&centered[i] - &vh);
            z.rows_mut(rs_rank, rc_rank).copy_from(&w);
            r_acc.ger(1.0, &centered[i], &z, 1.0);
            c_acc.ger(1.0, &z, &z, 1.0);
        }
    }
    Ok((r_acc, c_acc))
}

/// Precomputed two-covariance scoring terms for a [`PldaModel`].
#[derive(Debug, Clone)]
pub struct PldaScorer {
    mu: DVector<f64>,
    a: DMatrix<f64>,
    p: DMatrix<f64>,
    constant: f64,
}

impl PldaScorer {
    pub fn new(model: &PldaModel) -> Result<Self> {
        model.check()?;
        let b = model.between();
        let w = model.within();
        if w.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite("within-speaker covariance"));
        }
        let t = &b + &w;
        let t_chol = t
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite("total covariance"))?;
        let t_inv = t_chol.inverse();
        // T - B T⁻¹ B rewritten as W + B T⁻¹ W, which keeps its accuracy when W is tiny
        let s = &w + &b * t_chol.solve(&w);
        let s = (&s + s.transpose()) * 0.5;
        let s_chol = s
            .cholesky()
            .ok_or(Error::NotPositiveDefinite("same-speaker conditional covariance"))?;
        let s_inv = s_chol.inverse();
        let a = &s_inv - &t_inv;
        let p = &s_inv * &b * &t_inv;
        let p = (&p + p.transpose()) * 0.5;
        let constant = 0.5 * chol_logdet(&t_chol) - 0.5 * chol_logdet(&s_chol);
        Ok(Self {
            mu: model.mu.clone(),
            a: (&a + a.transpose()) * 0.5,
            p,
            constant,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// `log p(e, t | same) − log p(e, t | different)`.
    pub fn llr(&self, enroll: &DVector<f64>, test: &DVector<f64>) -> Result<f64> {
        for v in [enroll, test] {
            if v.len() != self.dim() {
                return Err(Error::DimMismatch {
                    expected: self.dim(),
                    got: v.len(),
                });
            }
        }
        let e = enroll - &self.mu;
        let t = test - &self.mu;
        Ok(-0.5 * e.dot(&(&self.a * &e)) - 0.5 * t.dot(&(&self.a * &t)) + e.dot(&(&self.p * &t)) + self.constant)
    }
}

pub fn plda_llr(model: &PldaModel, enroll: &[f64], test: &[f64]) -> Result<f64> {
    PldaScorer::new(model)?.llr(&DVector::from_column_slice(enroll), &DVector::from_column_slice(test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn gauss(rng: &mut impl Rng) -> f64 {
        StandardNormal.sample(rng)
    }

    fn random_model(d: usize, r: usize, seed: u64) -> PldaModel {
        let mut rng = stream_rng(seed, Stream::Model, 7);
        PldaModel {
            mu: DVector::from_fn(d, |_, _| gauss(&mut rng)),
            v: DMatrix::from_fn(d, r, |_, _| gauss(&mut rng)),
            u: DMatrix::from_fn(d, r, |_, _| 0.5 * gauss(&mut rng)),
            psi: DVector::from_fn(d, |_, _| 0.1 + 0.2 * gauss(&mut rng).abs()),
        }
    }

    fn sample(model: &PldaModel, speakers: usize, per: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = stream_rng(seed, Stream::Speaker, 0);
        let d = model.dim();
        let mut xs = Vec::new();
        let mut ls = Vec::new();
        for s in 0..speakers {
            let h = DVector::from_fn(model.v.ncols(), |_, _| gauss(&mut rng));
            let base = &model.mu + &model.v * h;
            for _ in 0..per {
                let w = DVector::from_fn(model.u.ncols(), |_, _| gauss(&mut rng));
                let eps = DVector::from_fn(d, |i, _| model.psi[i].sqrt() * gauss(&mut rng));
                xs.push((&base + &model.u * &w + eps).as_slice().to_vec());
                ls.push(s);
            }
        }
        (xs, ls)
    }

    /// Largest principal angle between column spans, in degrees.
    fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        let qa = a.clone().qr().q();
        let qb = b.clone().qr().q();
        let s = (qa.transpose() * qb).singular_values();
        let smin = s.iter().cloned().fold(f64::INFINITY, f64::min).clamp(-1.0, 1.0);
        smin.acos().to_degrees()
    }

    #[test]
    fn recovers_speaker_subspace() {
        let truth = random_model(16, 2, 11);
        let (xs, ls) = sample(&truth, 50, 10, 12);
        let cfg = PldaConfig {
            speaker_rank: 2,
            channel_rank: 2,
            iterations: 25,
            seed: 3,
        };
        let model = train_plda(&xs, &ls, &cfg).unwrap();
        let angle = max_principal_angle(&model.v, &truth.v);
        assert!(angle < 10.0, "angle {angle}");
    }

    #[test]
    fn log_likelihood_monotone() {
        for seed in 0..5 {
            let truth = random_model(8, 3, 100 + seed);
            let (xs, ls) = sample(&truth, 20, 4, 200 + seed);
            let cfg = PldaConfig {
                speaker_rank: 3,
                channel_rank: 2,
                iterations: 15,
                seed,
            };
            let fit = train_plda_traced(&xs, &ls, &cfg).unwrap();
            for w in fit.log_likelihood.windows(2) {
                assert!(w[1] >= w[0] - 1e-8 * w[0].abs(), "seed {seed}: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn one_utterance_per_speaker_terminates() {
        let truth = random_model(6, 2, 5);
        let (xs, ls) = sample(&truth, 30, 1, 6);
        let cfg = PldaConfig {
            speaker_rank: 2,
            channel_rank: 2,
            iterations: 10,
            seed: 1,
        };
        let m = train_plda(&xs, &ls, &cfg).unwrap();
        assert!(m.v.iter().chain(m.u.iter()).chain(m.psi.iter()).all(|v| v.is_finite()));
        assert!(m.psi.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn deterministic_given_seed() {
        let truth = random_model(6, 2, 8);
        let (xs, ls) = sample(&truth, 10, 3, 9);
        let cfg = PldaConfig {
            speaker_rank: 2,
            channel_rank: 1,
            iterations: 4,
            seed: 42,
        };
        assert_eq!(train_plda(&xs, &ls, &cfg).unwrap(), train_plda(&xs, &ls, &cfg).unwrap());
    }

    #[test]
    fn rejects_bad_inputs() {
        let xs = vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![2.0, 2.0]];
        let mut cfg = PldaConfig {
            speaker_rank: 3,
            channel_rank: 1,
            iterations: 1,
            seed: 0,
        };
        assert!(train_plda(&xs, &[0, 1, 1], &cfg).is_err());
        cfg.speaker_rank = 1;
        assert!(matches!(
            train_plda(&xs, &[0, 0, 0], &cfg),
            Err(Error::TooFewClasses(1))
        ));
    }

    /// Brute-force marginal likelihood of one speaker's stacked utterances.
    fn stacked_loglik(model: &PldaModel, rs: &[DVector<f64>]) -> f64 {
        let d = model.dim();
        let n = rs.len();
        let b = model.between();
        let w = model.within();
        let mut cov = DMatrix::zeros(n * d, n * d);
        for i in 0..n {
            for j in 0..n {
                let blk = if i == j { &b + &w } else { b.clone() };
                cov.view_mut((i * d, j * d), (d, d)).copy_from(&blk);
            }
        }
        let x = DVector::from_iterator(
            n * d,
            rs.iter()
                .flat_map(|r| (r - &model.mu).iter().cloned().collect::<Vec<_>>()),
        );
        let c = cov.cholesky().unwrap();
        -0.5 * ((n * d) as f64 * (2.0 * PI).ln() + chol_logdet(&c) + x.dot(&c.solve(&x)))
    }

    #[test]
    fn log_likelihood_matches_stacked_gaussian() {
        let model = random_model(4, 2, 21);
        let (xs, ls) = sample(&model, 3, 3, 22);
        let mut oracle = 0.0;
        for s in 0..3 {
            let rs: Vec<DVector<f64>> = (0..3).map(|j| DVector::from_column_slice(&xs[s * 3 + j])).collect();
            oracle += stacked_loglik(&model, &rs);
        }
        let got = model.log_likelihood(&xs, &ls).unwrap();
        assert!((got - oracle).abs() < 1e-9 * oracle.abs().max(1.0), "{got} vs {oracle}");
    }

    #[test]
    fn zero_between_gives_zero_llr() {
        let mut m = random_model(5, 2, 31);
        m.v.fill(0.0);
        let s = PldaScorer::new(&m).unwrap();
        let mut rng = stream_rng(1, Stream::Trials, 0);
        for _ in 0..20 {
            let e = DVector::from_fn(5, |_, _| gauss(&mut rng));
            let t = DVector::from_fn(5, |_, _| gauss(&mut rng));
            assert!(s.llr(&e, &t).unwrap().abs() < 1e-12);
        }
    }

    fn normal_logpdf_2d(x: [f64; 2], c: [[f64; 2]; 2]) -> f64 {
        let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
        let q = (c[1][1] * x[0] * x[0] - 2.0 * c[0][1] * x[0] * x[1] + c[0][0] * x[1] * x[1]) / det;
        -0.5 * (2.0 * (2.0 * PI).ln() + det.ln() + q)
    }

    fn normal_logpdf_1d(x: f64, v: f64) -> f64 {
        -0.5 * ((2.0 * PI).ln() + v.ln() + x * x / v)
    }

    #[test]
    fn scalar_model_matches_joint_densities() {
        let m = PldaModel {
            mu: DVector::from_element(1, 0.3),
            v: DMatrix::from_element(1, 1, 1.7),
            u: DMatrix::from_element(1, 1, 0.6),
            psi: DVector::from_element(1, 0.2),
        };
        let b = 1.7f64 * 1.7;
        let w = 0.6f64 * 0.6 + 0.2;
        for (e, t) in [(0.0, 0.0), (1.0, 1.2), (-2.0, 1.5), (3.3, -0.7)] {
            let (ec, tc) = (e - 0.3, t - 0.3);
            let same = normal_logpdf_2d([ec, tc], [[b + w, b], [b, b + w]]);
            let diff = normal_logpdf_1d(ec, b + w) + normal_logpdf_1d(tc, b + w);
            let got = plda_llr(&m, &[e], &[t]).unwrap();
            assert!((got - (same - diff)).abs() < 1e-9, "{got} vs {}", same - diff);
        }
    }

    #[test]
    fn llr_is_symmetric() {
        let m = random_model(6, 3, 41);
        let s = PldaScorer::new(&m).unwrap();
        let mut rng = stream_rng(2, Stream::Trials, 0);
        for _ in 0..1000 {
            let e = DVector::from_fn(6, |_, _| gauss(&mut rng));
            let t = DVector::from_fn(6, |_, _| gauss(&mut rng));
            let ab = s.llr(&e, &t).unwrap();
            let ba = s.llr(&t, &e).unwrap();
            assert!((ab - ba).abs() < 1e-10);
        }
    }

    #[test]
    fn non_pd_within_is_error() {
        let mut m = random_model(3, 1, 51);
        m.u.fill(0.0);
        m.psi[1] = 0.0;
        assert!(PldaScorer::new(&m).is_err());
    }
}
