//! Detection metrics: DET operating points, EER and normalized minDCF.

use std::fmt;

use crate::error::{Error, Result};
use crate::trials::{ScoreSet, TrialList};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcfParams {
    pub p_target: f64,
    pub c_miss: f64,
    pub c_fa: f64,
}

impl Default for DcfParams {
    fn default() -> Self {
        Self {
            p_target: 0.05,
            c_miss: 1.0,
            c_fa: 1.0,
        }
    }
}

impl DcfParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_target > 0.0 && self.p_target < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "p_target must be in (0, 1), got {}",
                self.p_target
            )));
        }
        if !(self.c_miss > 0.0 && self.c_fa > 0.0) {
            return Err(Error::InvalidConfig("DCF costs must be positive".into()));
        }
        Ok(())
    }
}

/// One DET operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetPoint {
    pub p_miss: f64,
    pub p_fa: f64,
}

/// Operating points for thresholds below every score and at each unique
/// score in ascending order. At threshold `u` a trial is accepted when its
/// score is above `u`.
pub fn det_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<DetPoint>> {
    if scores.len() != labels.len() {
        return Err(Error::DimMismatch {
            expected: labels.len(),
            got: scores.len(),
        });
    }
    let n_tgt = labels.iter().filter(|&&l| l).count();
    let n_non = labels.len() - n_tgt;
    if n_tgt == 0 || n_non == 0 {
        return Err(Error::SingleClassKey);
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::InvalidConfig(format!("non-finite score {s}")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let (nt, nn) = (n_tgt as f64, n_non as f64);
    let mut points = vec![DetPoint { p_miss: 0.0, p_fa: 1.0 }];
    let (mut miss, mut rejected_non) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let u = scores[order[i]];
        while i < order.len() && scores[order[i]] == u {
            if labels[order[i]] {
                miss += 1;
            } else {
                rejected_non += 1;
            }
            i += 1;
        }
        points.push(DetPoint {
            p_miss: miss as f64 / nt,
            p_fa: (n_non - rejected_non) as f64 / nn,
        });
    }
    Ok(points)
}

/// Equal error rate in percent, linearly interpolated between the two
/// operating points where `P_miss − P_fa` changes sign.
pub fn eer(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let pts = det_curve(scores, labels)?;
    for w in pts.windows(2) {
        let d0 = w[0].p_miss - w[0].p_fa;
        let d1 = w[1].p_miss - w[1].p_fa;
        if d0 == 0.0 {
            return Ok(100.0 * w[0].p_miss);
        }
        if d0 < 0.0 && d1 >= 0.0 {
            let t = d0 / (d0 - d1);
            return Ok(100.0 * (w[0].p_miss + t * (w[1].p_miss - w[0].p_miss)));
        }
    }
    unreachable!("curve ends at P_miss = 1, P_fa = 0")
}

/// Minimum detection cost normalized by the best trivial system.
pub fn min_dcf(scores: &[f64], labels: &[bool], params: &DcfParams) -> Result<f64> {
    params.validate()?;
    let pts = det_curve(scores, labels)?;
    let cm = params.c_miss * params.p_target;
    let cf = params.c_fa * (1.0 - params.p_target);
    let best = pts
        .iter()
        .map(|p| cm * p.p_miss + cf * p.p_fa)
        .fold(f64::INFINITY, f64::min);
    Ok(best / cm.min(cf))
}

pub fn det_points(scores: &ScoreSet, key: &TrialList) -> Result<Vec<DetPoint>> {
    det_curve(&scores.aligned_values(key)?, &key.labels()?)
}

pub fn compute_eer(scores: &ScoreSet, key: &TrialList) -> Result<f64> {
    eer(&scores.aligned_values(key)?, &key.labels()?)
}

pub fn compute_min_dcf(scores: &ScoreSet, key: &TrialList, params: &DcfParams) -> Result<f64> {
    min_dcf(&scores.aligned_values(key)?, &key.labels()?, params)
}

/// Evaluation summary printed by the command-line tool.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Report {
    pub eer: f64,
    pub min_dcf: f64,
    pub p_target: f64,
}

pub fn evaluate(scores: &ScoreSet, key: &TrialList, params: &DcfParams) -> Result<Report> {
    let values = scores.aligned_values(key)?;
    let labels = key.labels()?;
    Ok(Report {
        eer: eer(&values, &labels)?,
        min_dcf: min_dcf(&values, &labels, params)?,
        p_target: params.p_target,
    })
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "EER={:.3}%  minDCF(p={})={:.4}",
            self.eer, self.p_target, self.min_dcf
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use rand::RngExt;
    use rand_distr::{Distribution, StandardNormal};

    /// Brute force: for each candidate threshold count errors from scratch.
    fn oracle_points(scores: &[f64], labels: &[bool]) -> Vec<(f64, f64)> {
        let nt = labels.iter().filter(|&&l| l).count() as f64;
        let nn = labels.len() as f64 - nt;
        let mut thr: Vec<f64> = scores.to_vec();
        thr.sort_by(f64::total_cmp);
        thr.dedup();
        let mut cands = vec![f64::NEG_INFINITY];
        cands.extend(thr);
        cands
            .iter()
            .map(|&u| {
                let mut miss = 0.0;
                let mut fa = 0.0;
                for (s, l) in scores.iter().zip(labels) {
                    if *l && *s <= u {
                        miss += 1.0;
                    }
                    if !*l && *s > u {
                        fa += 1.0;
                    }
                }
                (miss / nt, fa / nn)
            })
            .collect()
    }

    fn oracle_eer(scores: &[f64], labels: &[bool]) -> f64 {
        let p = oracle_points(scores, labels);
        for i in 0..p.len() - 1 {
            let (a, b) = (p[i], p[i + 1]);
            if a.0 == a.1 {
                return 100.0 * a.0;
            }
            if a.0 < a.1 && b.0 >= b.1 {
                // intersect the segment with the diagonal
                let t = (a.1 - a.0) / ((b.0 - a.0) - (b.1 - a.1));
                return 100.0 * (a.0 + t * (b.0 - a.0));
            }
        }
        panic!("no crossing");
    }

    fn oracle_dcf(scores: &[f64], labels: &[bool], p: f64) -> f64 {
        oracle_points(scores, labels)
            .iter()
            .map(|&(m, f)| p * m + (1.0 - p) * f)
            .fold(f64::INFINITY, f64::min)
            / p.min(1.0 - p)
    }

    fn random_set(seed: u64, n: usize) -> (Vec<f64>, Vec<bool>) {
        let mut rng = stream_rng(seed, Stream::Trials, 0);
        let labels: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
        let scores = labels
            .iter()
            .map(|&l| {
                let z: f64 = StandardNormal.sample(&mut rng);
                // coarse rounding creates ties
                let s = z + if l { 1.5 } else { 0.0 };
                if rng.random::<f64>() < 0.3 {
                    (s * 4.0).round() / 4.0
                } else {
                    s
                }
            })
            .collect();
        (scores, labels)
    }

    #[test]
    fn separated_scores() {
        let s = [0.1, 0.2, 0.9, 1.0];
        let l = [false, false, true, true];
        assert_eq!(eer(&s, &l).unwrap(), 0.0);
        assert_eq!(min_dcf(&s, &l, &DcfParams::default()).unwrap(), 0.0);
    }

    #[test]
    fn constant_scores() {
        let s = [0.5; 6];
        let l = [true, false, false, true, false, false];
        assert!((eer(&s, &l).unwrap() - 50.0).abs() < 1e-12);
        assert!((min_dcf(&s, &l, &DcfParams::default()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn det_corner_points() {
        let pts = det_curve(&[1.0, 0.0], &[true, false]).unwrap();
        let v: Vec<(f64, f64)> = pts.iter().map(|p| (p.p_miss, p.p_fa)).collect();
        assert_eq!(v, vec![(0.0, 1.0), (0.0, 0.0), (1.0, 0.0)]);
    }

    #[test]
    fn single_class_is_error() {
        assert!(matches!(
            det_curve(&[1.0, 2.0], &[true, true]),
            Err(Error::SingleClassKey)
        ));
        assert!(eer(&[1.0], &[false]).is_err());
    }

    #[test]
    fn det_is_monotone_staircase() {
        for seed in 0..100 {
            let (s, l) = random_set(seed, 60);
            let pts = det_curve(&s, &l).unwrap();
            for w in pts.windows(2) {
                assert!(w[1].p_miss >= w[0].p_miss && w[1].p_fa <= w[0].p_fa);
            }
        }
    }

    #[test]
    fn matches_exhaustive_oracle() {
        for seed in 0..50 {
            let (s, l) = random_set(1000 + seed, 1000);
            assert!((eer(&s, &l).unwrap() - oracle_eer(&s, &l)).abs() < 1e-12);
            for p in [0.01, 0.05] {
                let params = DcfParams {
                    p_target: p,
                    ..Default::default()
                };
                assert!((min_dcf(&s, &l, &params).unwrap() - oracle_dcf(&s, &l, p)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn invariant_to_increasing_maps_and_order() {
        for seed in 0..20 {
            let (s, l) = random_set(2000 + seed, 300);
            let e = eer(&s, &l).unwrap();
            let d = min_dcf(&s, &l, &DcfParams::default()).unwrap();
            let affine: Vec<f64> = s.iter().map(|x| 2.0 * x + 1.0).collect();
            let squashed: Vec<f64> = s.iter().map(|x| (x / 4.0).tanh()).collect();
            for t in [&affine, &squashed] {
                assert!((eer(t, &l).unwrap() - e).abs() < 1e-12);
                assert!((min_dcf(t, &l, &DcfParams::default()).unwrap() - d).abs() < 1e-12);
            }
            let rs: Vec<f64> = s.iter().rev().cloned().collect();
            let rl: Vec<bool> = l.iter().rev().cloned().collect();
            assert_eq!(eer(&rs, &rl).unwrap(), e);
            assert!((0.0..=50.0).contains(&e) && (0.0..=1.0).contains(&d));
        }
    }

    #[test]
    fn report_format() {
        let r = Report {
            eer: 0.0,
            min_dcf: 0.0,
            p_target: 0.05,
        };
        assert_eq!(r.to_string(), "EER=0.000%  minDCF(p=0.05)=0.0000");
    }
}
