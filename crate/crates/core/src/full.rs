//! Exact provider: scores every class once, sorts, then streams.

use crate::dist::{desc_mass_then_id, ClassDist};
use crate::error::Result;
use crate::inference::ClassProvider;
use crate::linear::{softmax_in_place, LinearModel};
use crate::sparse::SparseVector;

#[derive(Debug, Clone)]
pub struct FullProvider {
    queue: Vec<(usize, f64)>,
    cursor: usize,
}

impl FullProvider {
    /// Streams the classes of an explicit distribution.
    pub fn from_dist(dist: &ClassDist) -> Self {
        FullProvider {
            queue: dist.sorted_desc(),
            cursor: 0,
        }
    }

    /// Masses from raw scores: softmax when `normalize`, otherwise
    /// `exp(score - max_score)`. Both give the same order.
    pub fn from_scores(scores: Vec<f64>, normalize: bool) -> Self {
        // sort on scores so underflowed masses keep the score order
        let mut queue: Vec<(usize, f64)> = scores.into_iter().enumerate().collect();
        queue.sort_by(desc_mass_then_id);
        let mut masses: Vec<f64> = queue.iter().map(|&(_, s)| s).collect();
        if normalize {
            softmax_in_place(&mut masses);
        } else if let Some(&max) = masses.first() {
            for m in masses.iter_mut() {
                *m = (*m - max).exp();
            }
        }
        for (entry, m) in queue.iter_mut().zip(masses) {
            entry.1 = m;
        }
        FullProvider { queue, cursor: 0 }
    }

    /// One dot product per class, then a single sort.
    pub fn new(model: &LinearModel, x: &SparseVector, normalize: bool) -> Result<Self> {
        Ok(Self::from_scores(model.predict_scores(x)?, normalize))
    }

    /// The full sorted queue, emitted or not.
    pub fn sorted(&self) -> &[(usize, f64)] {
        &self.queue
    }
}

impl ClassProvider for FullProvider {
    fn num_classes(&self) -> usize {
        self.queue.len()
    }

    fn next_class(&mut self) -> Option<(usize, f64)> {
        let item = self.queue.get(self.cursor).copied();
        if item.is_some() {
            self.cursor += 1;
        }
        item
    }
}
