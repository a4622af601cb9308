//! Trial lists and score sets.

use std::collections::HashSet;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Trial {
    pub enroll: String,
    pub test: String,
    /// `Some(true)` for target, `Some(false)` for nontarget, `None` if unkeyed.
    pub target: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrialList {
    pub trials: Vec<Trial>,
}

impl TrialList {
    pub fn new(trials: Vec<Trial>) -> Result<Self> {
        let mut seen = HashSet::new();
        for t in &trials {
            if !seen.insert((t.enroll.as_str(), t.test.as_str())) {
                return Err(Error::DuplicateTrial(t.enroll.clone(), t.test.clone()));
            }
        }
        Ok(Self { trials })
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn is_keyed(&self) -> bool {
        !self.trials.is_empty() && self.trials.iter().all(|t| t.target.is_some())
    }

    /// Labels for every trial; errors unless keyed with both classes present.
    pub fn labels(&self) -> Result<Vec<bool>> {
        let labels: Option<Vec<bool>> = self.trials.iter().map(|t| t.target).collect();
        let labels = labels.filter(|l| !l.is_empty()).ok_or(Error::Unkeyed)?;
        if !labels.iter().any(|&l| l) || labels.iter().all(|&l| l) {
            return Err(Error::SingleClassKey);
        }
        Ok(labels)
    }

    pub fn num_targets(&self) -> usize {
        self.trials.iter().filter(|t| t.target == Some(true)).count()
    }

    /// Kaldi-style text: `label enroll test` or `enroll test` per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.trials {
            match t.target {
                Some(l) => s.push_str(&format!("{} {} {}\n", u8::from(l), t.enroll, t.test)),
                None => s.push_str(&format!("{} {}\n", t.enroll, t.test)),
            }
        }
        s
    }
}

/// Parse a trial list. Every nonempty line is either `label enroll test`
/// with label 1 (target) or 0 (nontarget), or `enroll test`; the two forms
/// cannot be mixed.
pub fn parse_trials(text: &str) -> Result<TrialList> {
    let mut trials = Vec::new();
    let mut keyed: Option<bool> = None;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let err = |msg: &str| Error::Parse {
            line: line_no,
            msg: msg.to_string(),
        };
        let trial = match fields.as_slice() {
            [label, e, t] => {
                let target = match *label {
                    "1" => true,
                    "0" => false,
                    other => return Err(err(&format!("label must be 1 or 0, got {other:?}"))),
                };
                Trial {
                    enroll: e.to_string(),
                    test: t.to_string(),
                    target: Some(target),
                }
            }
            [e, t] => Trial {
                enroll: e.to_string(),
                test: t.to_string(),
                target: None,
            },
            _ => return Err(err("expected \"label enroll test\" or \"enroll test\"")),
        };
        let this_keyed = trial.target.is_some();
        if *keyed.get_or_insert(this_keyed) != this_keyed {
            return Err(err("mixed keyed and keyless lines"));
        }
        trials.push(trial);
    }
    TrialList::new(trials).map_err(|e| match e {
        Error::DuplicateTrial(a, b) => Error::Parse {
            line: 0,
            msg: format!("duplicate trial ({a}, {b})"),
        },
        e => e,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Score {
    pub enroll: String,
    pub test: String,
    pub score: f64,
}

/// Ordered per-trial scores.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreSet {
    pub scores: Vec<Score>,
}

impl ScoreSet {
    pub fn new(scores: Vec<Score>) -> Self {
        Self { scores }
    }

    /// Pair scores with `trials` in order.
    pub fn from_values(trials: &TrialList, values: Vec<f64>) -> Self {
        debug_assert_eq!(trials.len(), values.len());
        Self {
            scores: trials
                .trials
                .iter()
                .zip(values)
                .map(|(t, score)| Score {
                    enroll: t.enroll.clone(),
                    test: t.test.clone(),
                    score,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.scores.iter().map(|s| s.score).collect()
    }

    /// Check that `self` lists exactly the trials of `other`, in order.
    pub fn check_aligned(&self, other: &ScoreSet) -> Result<()> {
        for (index, (a, b)) in self.scores.iter().zip(&other.scores).enumerate() {
            if a.enroll != b.enroll || a.test != b.test {
                return Err(Error::TrialMismatch {
                    index,
                    enroll: b.enroll.clone(),
                    test: b.test.clone(),
                });
            }
        }
        if self.len() != other.len() {
            let (index, longer) = if self.len() > other.len() {
                (other.len(), self)
            } else {
                (self.len(), other)
            };
            let s = &longer.scores[index];
            return Err(Error::TrialMismatch {
                index,
                enroll: s.enroll.clone(),
                test: s.test.clone(),
            });
        }
        Ok(())
    }

    /// Scores ordered to match `key`, which must list the same trials.
    pub fn aligned_values(&self, key: &TrialList) -> Result<Vec<f64>> {
        if self.len() == key.len()
            && self
                .scores
                .iter()
                .zip(&key.trials)
                .all(|(s, t)| s.enroll == t.enroll && s.test == t.test)
        {
            return Ok(self.values());
        }
        let lookup: std::collections::HashMap<(&str, &str), f64> = self
            .scores
            .iter()
            .map(|s| ((s.enroll.as_str(), s.test.as_str()), s.score))
            .collect();
        key.trials
            .iter()
            .enumerate()
            .map(|(index, t)| {
                lookup
                    .get(&(t.enroll.as_str(), t.test.as_str()))
                    .copied()
                    .ok_or_else(|| Error::TrialMismatch {
                        index,
                        enroll: t.enroll.clone(),
                        test: t.test.clone(),
                    })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_forms() {
        let t = parse_trials("1 a.wav b.wav\n").unwrap();
        assert_eq!(
            t.trials,
            vec![Trial {
                enroll: "a.wav".into(),
                test: "b.wav".into(),
                target: Some(true)
            }]
        );
        let t = parse_trials("a.wav b.wav\n\n").unwrap();
        assert_eq!(t.trials[0].target, None);
        assert!(!t.is_keyed());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        assert!(matches!(parse_trials("2 a b"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            parse_trials("1 a b\nx y\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_trials("1 a b\n\n0 a c d\n"),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn text_round_trip() {
        let src = "1 a b\n0 a c\n0 b c\n";
        assert_eq!(parse_trials(src).unwrap().to_text(), src);
    }

    #[test]
    fn labels_need_both_classes() {
        assert!(matches!(
            parse_trials("1 a b\n1 a c").unwrap().labels(),
            Err(Error::SingleClassKey)
        ));
        assert!(matches!(parse_trials("a b").unwrap().labels(), Err(Error::Unkeyed)));
        assert_eq!(
            parse_trials("1 a b\n0 a c").unwrap().labels().unwrap(),
            vec![true, false]
        );
    }

    #[test]
    fn duplicates_rejected() {
        assert!(parse_trials("1 a b\n0 a b").is_err());
    }

    #[test]
    fn alignment_reports_first_offender() {
        let key = parse_trials("1 a b\n0 a c\n").unwrap();
        let s1 = ScoreSet::from_values(&key, vec![1.0, 2.0]);
        let mut s2 = s1.clone();
        s2.scores[1].test = "z".into();
        match s1.check_aligned(&s2) {
            Err(Error::TrialMismatch { index, test, .. }) => {
                assert_eq!(index, 1);
                assert_eq!(test, "z");
            }
            other => panic!("{other:?}"),
        }
        let mut rev = s1.clone();
        rev.scores.reverse();
        assert_eq!(rev.aligned_values(&key).unwrap(), vec![1.0, 2.0]);
    }
}
