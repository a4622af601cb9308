use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SVW1";

/// Dense row-major f32 tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn from_f64(shape: Vec<usize>, data: &[f64]) -> Self {
        Self::new(shape, data.iter().map(|&v| v as f32).collect())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

/// Named tensors, kept sorted by name so files are byte-reproducible.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorFile {
    pub tensors: BTreeMap<String, Tensor>,
}

impl TensorFile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }
}

/// `SVW1` layout: magic, u32 count, then per tensor u16 name length, name,
/// u8 rank, rank x u32 dims, row-major little-endian f32 values.
pub fn write_tensors_to<W: Write>(mut w: W, file: &TensorFile) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(file.tensors.len() as u32).to_le_bytes())?;
    for (name, t) in &file.tensors {
        let n = u16::try_from(name.len()).map_err(|_| Error::BadWeightFile(format!("tensor name too long: {name}")))?;
        w.write_all(&n.to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&[t.shape.len() as u8])?;
        for &d in &t.shape {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for v in &t.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_tensors_from<R: Read>(mut r: R) -> Result<TensorFile> {
    let bad = |m: String| Error::BadWeightFile(m);
    let mut take = |n: usize, what: &str| -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        r.read_exact(&mut buf)
            .map_err(|_| Error::BadWeightFile(format!("truncated while reading {what}")))?;
        Ok(buf)
    };
    if take(4, "magic")? != MAGIC {
        return Err(bad("bad magic".into()));
    }
    let u32_of = |b: &[u8]| u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize;
    let count = u32_of(&take(4, "tensor count")?);
    let mut file = TensorFile::new();
    for _ in 0..count {
        let b = take(2, "name length")?;
        let name_len = u16::from_le_bytes([b[0], b[1]]) as usize;
        let name = String::from_utf8(take(name_len, "name")?).map_err(|_| bad("tensor name is not UTF-8".into()))?;
        let rank = take(1, "rank")?[0] as usize;
        let dims = take(4 * rank, "dims")?;
        let shape: Vec<usize> = dims.chunks_exact(4).map(u32_of).collect();
        let numel = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| bad(format!("tensor {name} too large")))?;
        let bytes = take(4 * numel, "tensor data")?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if file.tensors.insert(name.clone(), Tensor::new(shape, data)).is_some() {
            return Err(bad(format!("duplicate tensor {name}")));
        }
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(bad("trailing bytes".into()));
    }
    Ok(file)
}

pub fn write_tensors(path: impl AsRef<Path>, file: &TensorFile) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tensors_to(&mut w, file)?;
    w.flush()?;
    Ok(())
}

pub fn read_tensors(path: impl AsRef<Path>) -> Result<TensorFile> {
    read_tensors_from(BufReader::new(File::open(path)?))
}
