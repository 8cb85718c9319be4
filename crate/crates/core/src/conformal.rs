//! Inductive conformal prediction with nonconformity `1 - P(y|x)`.
//!
//! The calibration set must be disjoint from the data the model was trained
//! on; that is the caller's responsibility.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::hf::TreeModel;
use crate::linear::LinearModel;
use crate::sparse::SparseVector;

/// Anything that produces a normalized distribution over classes.
pub trait ProbabilisticClassifier {
    fn num_classes(&self) -> usize;

    fn predict_proba(&self, x: &SparseVector) -> Result<Vec<f64>>;
}

impl ProbabilisticClassifier for LinearModel {
    fn num_classes(&self) -> usize {
        self.n_out()
    }

    fn predict_proba(&self, x: &SparseVector) -> Result<Vec<f64>> {
        LinearModel::predict_proba(self, x)
    }
}

impl ProbabilisticClassifier for TreeModel {
    fn num_classes(&self) -> usize {
        TreeModel::num_classes(self)
    }

    fn predict_proba(&self, x: &SparseVector) -> Result<Vec<f64>> {
        TreeModel::predict_proba(self, x)
    }
}

/// Sorted calibration scores.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationTable {
    scores: Vec<f64>,
}

impl CalibrationTable {
    pub fn from_scores(mut scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::EmptyCalibration);
        }
        if let Some(s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::InvalidParams(format!(
                "nonconformity score {s} outside [0, 1]"
            )));
        }
        scores.sort_by(f64::total_cmp);
        Ok(CalibrationTable { scores })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// `(#{alpha_i >= alpha} + 1) / (n + 1)`.
    pub fn p_value(&self, alpha: f64) -> f64 {
        let below = self.scores.partition_point(|&s| s < alpha);
        (self.scores.len() - below + 1) as f64 / (self.scores.len() + 1) as f64
    }
}

fn nonconformity(p: f64) -> f64 {
    (1.0 - p).clamp(0.0, 1.0)
}

pub fn icp_calibrate<M: ProbabilisticClassifier + ?Sized>(
    model: &M,
    calib: &Dataset,
) -> Result<CalibrationTable> {
    if calib.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    let scores = calib
        .examples()
        .iter()
        .map(|(x, y)| Ok(nonconformity(model.predict_proba(x)?[*y])))
        .collect::<Result<Vec<f64>>>()?;
    CalibrationTable::from_scores(scores)
}

/// Classes whose p-value exceeds `epsilon`, ascending. May be empty.
pub fn icp_predict_from_probs(table: &CalibrationTable, probs: &[f64], epsilon: f64) -> Vec<usize> {
    probs
        .iter()
        .enumerate()
        .filter(|(_, &p)| table.p_value(nonconformity(p)) > epsilon)
        .map(|(c, _)| c)
        .collect()
}

pub fn icp_predict<M: ProbabilisticClassifier + ?Sized>(
    model: &M,
    table: &CalibrationTable,
    x: &SparseVector,
    epsilon: f64,
) -> Result<Vec<usize>> {
    Ok(icp_predict_from_probs(
        table,
        &model.predict_proba(x)?,
        epsilon,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_scores() {
        let uniform = LinearModel::zeros(4, 2, true);
        let data = Dataset::with_classes(
            vec![
                (SparseVector::from_dense(&[1.0, 0.0]), 0),
                (SparseVector::from_dense(&[0.0, 1.0]), 3),
            ],
            2,
            4,
        )
        .unwrap();
        let table = icp_calibrate(&uniform, &data).unwrap();
        assert_eq!(table.scores(), &[0.75, 0.75]);

        let empty = Dataset::with_classes(vec![], 2, 4).unwrap();
        assert!(matches!(
            icp_calibrate(&uniform, &empty),
            Err(Error::EmptyCalibration)
        ));
    }

    #[test]
    fn confident_model_scores_zero() {
        let model = LinearModel::constant(vec![0.0, -1e4], 1);
        let data = Dataset::with_classes(vec![(SparseVector::default(), 0); 3], 1, 2).unwrap();
        let table = icp_calibrate(&model, &data).unwrap();
        assert!(table.scores().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn p_values() {
        let table = CalibrationTable::from_scores(vec![0.5, 0.1, 0.9, 0.3]).unwrap();
        assert_eq!(table.scores(), &[0.1, 0.3, 0.5, 0.9]);
        assert_eq!(table.p_value(0.0), 1.0);
        assert_eq!(table.p_value(0.3), 4.0 / 5.0);
        assert_eq!(table.p_value(0.95), 1.0 / 5.0);
    }

    #[test]
    fn epsilon_limits() {
        let table = CalibrationTable::from_scores(vec![0.2, 0.4, 0.6]).unwrap();
        let probs = [0.5, 0.3, 0.2];
        assert_eq!(icp_predict_from_probs(&table, &probs, 1e-9), vec![0, 1, 2]);
        assert!(icp_predict_from_probs(&table, &probs, 0.999).is_empty());
        let wide = icp_predict_from_probs(&table, &probs, 0.3);
        let narrow = icp_predict_from_probs(&table, &probs, 0.6);
        assert!(narrow.iter().all(|c| wide.contains(c)));
    }
}
