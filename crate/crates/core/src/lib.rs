//! Optimally weighted random forests for regression.
//!
//! Instead of averaging trees with equal weights, the forest's tree weights
//! are chosen on the probability simplex by minimizing Mallows-type
//! criteria: a one-step cubic criterion, and a faster two-step scheme that
//! solves two quadratic programs. Competitor weightings based on
//! out-of-bag error (inverse-error weights and Cesàro rank weights) are
//! included, along with CART and split-unsupervised (SUT) tree growers, a
//! synthetic-data oracle that checks the optimality of the selected
//! weights against the infeasible best, and a benchmark harness for CSV
//! datasets.
//!
//! Tree growth, hat-matrix construction, and replication loops run in
//! parallel through rayon when the default `parallel` feature is enabled;
//! build with `--no-default-features` for a fully sequential library.

pub mod bench;
pub mod bootstrap;
pub mod dataset;
pub mod error;
pub mod forest;
pub mod grow;
pub mod hat;
pub mod importance;
pub mod matrix;
pub mod oracle;
mod parallel;
pub mod rng;
pub mod tree;
pub mod weights;

pub use bootstrap::{bootstrap_sample, BootstrapSample};
pub use dataset::Dataset;
pub use error::{Error, Result};
pub use forest::{aggregate_predict, Forest, WeightMethod};
pub use grow::{grow_cart, grow_sut, sut_score, GrowConfig};
pub use hat::{hat_matrix, HatMatrix};
pub use importance::{prob_sequence_from_importance, variable_importance};
pub use matrix::Matrix;
pub use tree::{RegressionTree, TreeKind};
pub use weights::{
    crf_weights, solve_one_step, solve_quadratic_simplex, solve_two_steps, tpe_star, wrf_weights,
    CriterionContext, SolveReport, WeightVector,
};
