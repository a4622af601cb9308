use nalgebra::DVector;

use crate::error::{Error, Result};

/// Training-set mean of the embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterStats {
    pub mean: DVector<f64>,
}

pub fn estimate_center(embeddings: &[Vec<f64>]) -> Result<CenterStats> {
    let first = embeddings.first().ok_or(Error::EmptyInput("no embeddings to center"))?;
    let dim = first.len();
    let mut sum = DVector::zeros(dim);
    for e in embeddings {
        if e.len() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                got: e.len(),
            });
        }
        sum += DVector::from_column_slice(e);
    }
    Ok(CenterStats {
        mean: sum / embeddings.len() as f64,
    })
}

impl CenterStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, emb: &DVector<f64>) -> Result<DVector<f64>> {
        if emb.len() != self.mean.len() {
            return Err(Error::DimMismatch {
                expected: self.mean.len(),
                got: emb.len(),
            });
        }
        Ok(emb - &self.mean)
    }
}

pub fn apply_center(emb: &[f64], c: &CenterStats) -> Result<Vec<f64>> {
    Ok(c.apply(&DVector::from_column_slice(emb))?.as_slice().to_vec())
}
