use crate::error::{Error, Result};

/// Sparse feature vector with strictly increasing indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVector {
    pairs: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn new(pairs: Vec<(usize, f64)>) -> Result<Self> {
        if pairs.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::InvalidParams(
                "sparse indices must be strictly increasing".into(),
            ));
        }
        Ok(SparseVector { pairs })
    }

    /// Keeps every entry, explicit zeros included.
    pub fn from_dense(values: &[f64]) -> Self {
        SparseVector {
            pairs: values.iter().copied().enumerate().collect(),
        }
    }

    pub fn pairs(&self) -> &[(usize, f64)] {
        &self.pairs
    }

    pub fn nnz(&self) -> usize {
        self.pairs.len()
    }

    /// One past the largest index, 0 for the empty vector.
    pub fn min_dim(&self) -> usize {
        self.pairs.last().map_or(0, |&(i, _)| i + 1)
    }

    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.pairs.iter().map(|&(i, v)| v * dense[i]).sum()
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for &(i, v) in &self.pairs {
            out[i] = v;
        }
        out
    }

    pub fn norm_sq(&self) -> f64 {
        self.pairs.iter().map(|(_, v)| v * v).sum()
    }
}
