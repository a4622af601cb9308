//! Small text and container formats shared by the subcommands.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use svkit::io::{read_tensors, write_tensors, Tensor, TensorFile};
use svkit::VadMask;

/// Whitespace-separated two-column lines, order preserved.
fn read_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        match (it.next(), it.next(), it.next()) {
            (Some(a), Some(b), None) => out.push((a.to_string(), b.to_string())),
            _ => bail!("{}:{}: expected two fields", path.display(), n + 1),
        }
    }
    Ok(out)
}

fn write_pairs(path: &Path, pairs: &[(String, String)]) -> Result<()> {
    let mut s = String::new();
    for (a, b) in pairs {
        writeln!(s, "{a} {b}").unwrap();
    }
    std::fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

/// `utt path` lines; relative paths resolve against the list's directory.
pub fn read_scp(path: &Path) -> Result<Vec<(String, PathBuf)>> {
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(read_pairs(path)?
        .into_iter()
        .map(|(u, p)| {
            let p = PathBuf::from(p);
            let p = if p.is_relative() { base.join(p) } else { p };
            (u, p)
        })
        .collect())
}

pub fn write_scp(path: &Path, entries: &[(String, String)]) -> Result<()> {
    write_pairs(path, entries)
}

pub fn read_utt2spk(path: &Path) -> Result<Vec<(String, String)>> {
    read_pairs(path)
}

pub fn write_utt2spk(path: &Path, entries: &[(String, String)]) -> Result<()> {
    write_pairs(path, entries)
}

/// Dense speaker indices in first-appearance order.
pub fn speaker_indices(utt2spk: &[(String, String)]) -> Vec<usize> {
    let mut ids: HashMap<&str, usize> = HashMap::new();
    utt2spk
        .iter()
        .map(|(_, s)| {
            let n = ids.len();
            *ids.entry(s.as_str()).or_insert(n)
        })
        .collect()
}

/// One rank-1 tensor per utterance, keyed by utterance id.
pub fn read_embeddings(path: &Path) -> Result<BTreeMap<String, Vec<f64>>> {
    let f = read_tensors(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = BTreeMap::new();
    for (name, t) in &f.tensors {
        if t.shape.len() != 1 {
            bail!("{}: tensor {name} is not a vector", path.display());
        }
        out.insert(name.clone(), t.to_f64());
    }
    if out.is_empty() {
        bail!("{}: no embeddings", path.display());
    }
    Ok(out)
}

pub fn write_embeddings(path: &Path, embs: &BTreeMap<String, Vec<f64>>) -> Result<()> {
    let mut f = TensorFile::new();
    for (k, v) in embs {
        f.insert(k.clone(), Tensor::from_f64(vec![v.len()], v));
    }
    write_tensors(path, &f).with_context(|| format!("writing {}", path.display()))
}

/// Embeddings and speaker labels for the utterances listed in `utt2spk`.
pub fn labelled_embeddings(
    embs: &BTreeMap<String, Vec<f64>>,
    utt2spk: &[(String, String)],
) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let labels = speaker_indices(utt2spk);
    let xs = utt2spk
        .iter()
        .map(|(u, _)| {
            embs.get(u)
                .cloned()
                .with_context(|| format!("no embedding for utterance {u}"))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((xs, labels))
}

/// `utt 0110…` lines, one character per frame.
pub fn write_vad(path: &Path, masks: &[(String, VadMask)]) -> Result<()> {
    let mut s = String::new();
    for (u, m) in masks {
        let bits: String = m.0.iter().map(|&b| if b { '1' } else { '0' }).collect();
        writeln!(s, "{u} {bits}").unwrap();
    }
    std::fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

pub fn read_vad(path: &Path) -> Result<HashMap<String, VadMask>> {
    read_pairs(path)?
        .into_iter()
        .map(|(u, bits)| {
            let mask = bits
                .chars()
                .map(|c| match c {
                    '1' => Ok(true),
                    '0' => Ok(false),
                    _ => bail!("{}: bad VAD symbol {c:?} for {u}", path.display()),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((u, VadMask(mask)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn speaker_indices_in_order_of_appearance() {
        let u2s: Vec<(String, String)> = [("a", "x"), ("b", "y"), ("c", "x")]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        assert_eq!(speaker_indices(&u2s), vec![0, 1, 0]);
    }

    #[test]
    fn vad_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vad.txt");
        let masks = vec![("u1".to_string(), VadMask(vec![true, false, true]))];
        write_vad(&p, &masks).unwrap();
        assert_eq!(read_vad(&p).unwrap()["u1"], masks[0].1);
    }

    #[test]
    fn scp_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("wav.scp");
        std::fs::write(&p, "u1 wav/u1.wav\nu2 /abs/u2.wav\n").unwrap();
        let e = read_scp(&p).unwrap();
        assert_eq!(e[0].1, dir.path().join("wav/u1.wav"));
        assert_eq!(e[1].1, PathBuf::from("/abs/u2.wav"));
        std::fs::write(&p, "u1\n").unwrap();
        assert!(read_scp(&p).is_err());
    }
}
