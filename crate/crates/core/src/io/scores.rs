use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::trials::{Score, ScoreSet};

/// 17 significant digits: parses back to the identical f64.
pub fn format_score(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_scores_to<W: Write>(mut w: W, scores: &ScoreSet) -> Result<()> {
    for s in &scores.scores {
        writeln!(w, "{} {} {}", s.enroll, s.test, format_score(s.score))?;
    }
    Ok(())
}

pub fn write_scores(path: impl AsRef<Path>, scores: &ScoreSet) -> Result<()> {
    let mut buf = Vec::new();
    write_scores_to(&mut buf, scores)?;
    fs::write(path, buf)?;
    Ok(())
}

/// Parse `enroll test score` lines.
pub fn read_scores(text: &str) -> Result<ScoreSet> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { line: i + 1, msg };
        let [e, t, s] = fields.as_slice() else {
            return Err(err("expected \"enroll test score\"".into()));
        };
        let score: f64 = s.parse().map_err(|_| err(format!("bad score {s:?}")))?;
        if !score.is_finite() {
            return Err(err(format!("non-finite score {s:?}")));
        }
        out.push(Score {
            enroll: e.to_string(),
            test: t.to_string(),
            score,
        });
    }
    Ok(ScoreSet::new(out))
}
