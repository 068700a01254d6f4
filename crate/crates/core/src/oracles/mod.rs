//! Exact or exhaustive reference computations used to check learned values.

mod argmax;
mod fits;
mod regression;
mod value_iteration;

pub use argmax::{brute_force_argmax, JointQTable, ARGMAX_BUDGET};
pub use fits::{
    matrix_to_csv, optimal_additive_fit, optimal_monotone_fit, parse_matrix_csv, sq_residual, MONOTONE_FIT_MAX_SIDE,
};
pub use regression::{regression_harness, regression_mixer, train_regression, RegressionConfig, RegressionTask};
pub use value_iteration::{joint_value_iteration, ValueIteration, VALUE_ITERATION_BUDGET};
