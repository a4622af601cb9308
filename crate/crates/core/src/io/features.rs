use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::frontend::FeatureMatrix;

const MAGIC: &[u8; 4] = b"SVF1";

/// `SVF1` layout: magic, u32 rows, u32 cols, row-major little-endian f32.
pub fn write_features_to<W: Write>(mut w: W, feats: &FeatureMatrix) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(feats.rows() as u32).to_le_bytes())?;
    w.write_all(&(feats.cols() as u32).to_le_bytes())?;
    for v in feats.data().iter() {
        w.write_all(&(*v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_features_from<R: Read>(mut r: R, frame_shift: f64) -> Result<FeatureMatrix> {
    let bad = |m: &str| Error::BadFeatureFile(m.to_string());
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
    if &magic != MAGIC {
        return Err(bad("bad magic"));
    }
    let mut u = [0u8; 4];
    r.read_exact(&mut u).map_err(|_| bad("truncated header"))?;
    let rows = u32::from_le_bytes(u) as usize;
    r.read_exact(&mut u).map_err(|_| bad("truncated header"))?;
    let cols = u32::from_le_bytes(u) as usize;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != rows * cols * 4 {
        return Err(bad("payload size does not match header"));
    }
    let data: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let data = Array2::from_shape_vec((rows, cols), data).map_err(|_| bad("shape"))?;
    Ok(FeatureMatrix::new(data, frame_shift))
}

pub fn write_features(path: impl AsRef<Path>, feats: &FeatureMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_features_to(&mut w, feats)?;
    w.flush()?;
    Ok(())
}

/// Frame shift is not stored in the file; callers supply it.
pub fn read_features(path: impl AsRef<Path>, frame_shift: f64) -> Result<FeatureMatrix> {
    read_features_from(BufReader::new(File::open(path)?), frame_shift)
}
