use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Tolerance on the total mass of a normalized distribution.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Masses over a set of class ids. Masses need not sum to one; `is_normalized`
/// reports whether they do.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDist {
    // sorted by class id
    entries: Vec<(usize, f64)>,
    normalized: bool,
}

impl ClassDist {
    pub fn new(mut entries: Vec<(usize, f64)>) -> Result<Self> {
        if let Some(&(id, m)) = entries.iter().find(|(_, m)| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::InvalidDistribution(format!(
                "class {id} has invalid mass {m}"
            )));
        }
        entries.sort_by_key(|&(id, _)| id);
        if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidDistribution(format!(
                "duplicate class id {}",
                w[0].0
            )));
        }
        let total: f64 = entries.iter().map(|(_, m)| m).sum();
        Ok(ClassDist {
            normalized: (total - 1.0).abs() <= NORMALIZATION_TOL,
            entries,
        })
    }

    /// Distribution over ids `0..probs.len()`.
    pub fn from_probs(probs: &[f64]) -> Result<Self> {
        Self::new(probs.iter().copied().enumerate().collect())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn require_normalized(&self) -> Result<()> {
        if self.normalized {
            Ok(())
        } else {
            Err(Error::InvalidDistribution(format!(
                "masses sum to {}, expected 1",
                self.total_mass()
            )))
        }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|&(id, _)| id)
    }

    /// Mass of `id`, zero if absent.
    pub fn mass(&self, id: usize) -> f64 {
        self.entries
            .binary_search_by_key(&id, |&(c, _)| c)
            .map(|i| self.entries[i].1)
            .unwrap_or(0.0)
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|(_, m)| m).sum()
    }

    /// Entries by decreasing mass, ties by increasing id.
    pub fn sorted_desc(&self) -> Vec<(usize, f64)> {
        let mut sorted = self.entries.clone();
        sorted.sort_by(desc_mass_then_id);
        sorted
    }

    /// Every mass multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "bad scale factor {factor}"
            )));
        }
        Self::new(self.entries.iter().map(|&(c, m)| (c, m * factor)).collect())
    }

    pub fn same_universe(&self, other: &ClassDist) -> bool {
        self.ids().eq(other.ids())
    }
}

/// Total order: larger mass first, then smaller id.
pub fn desc_mass_then_id(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}
