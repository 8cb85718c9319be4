//! Bayes-optimal set-valued prediction for multi-class classification.
//!
//! Given conditional class probabilities, the predictors in this crate return
//! the non-empty set of classes with the highest expected utility under a
//! set-based utility `u(c, Ŷ) = g(|Ŷ|) * [c ∈ Ŷ]`. Probabilities can come from
//! an explicit distribution or a flat softmax model ([`full`]), an
//! approximate inner-product index over class weights ([`hnsw`], [`hsg`]), or
//! a label tree that factorizes the distribution ([`tree`], [`hf`]).

pub mod bundle;
pub mod conformal;
pub mod dataset;
pub mod dist;
pub mod error;
pub mod eval;
pub mod full;
pub mod hf;
pub mod hnsw;
pub mod hsg;
pub mod inference;
pub mod linear;
pub mod sparse;
pub mod synth;
pub mod tree;
pub mod utility;

pub use bundle::{Bundle, Model, ModelKind};
pub use conformal::{icp_calibrate, icp_predict, CalibrationTable, ProbabilisticClassifier};
pub use dataset::{Dataset, LabelMap};
pub use dist::ClassDist;
pub use error::{Error, ErrorCategory, Result};
pub use eval::{run_experiment, EvalOptions, Method, MetricsReport, Predictor, ReportFormat};
pub use full::FullProvider;
pub use hf::{train_tree, HfProvider, NodeModels, TreeModel};
pub use hnsw::{HnswIndex, HnswParams};
pub use hsg::HsgProvider;
pub use inference::{
    brute_force_bayes, compute_regret, expected_utility, prefix_utility_curve, svbop,
    threshold_predict, top_s_predict, ClassProvider, PredictionSet, Regret, Svbop,
};
pub use linear::{LinearModel, TrainConfig};
pub use sparse::SparseVector;
pub use tree::{LabelTree, NodeProbs};
pub use utility::{gen_reject_admissible_region, Utility, UtilitySpec};
