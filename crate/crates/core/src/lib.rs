//! Surrogate-based optimization of noisy black-box functions.
//!
//! The optimizer fits a cheap model (MARS, tree-knot MARS, RBF or a Gaussian
//! process) to the points evaluated so far, picks new candidates from the
//! Pareto front of predicted value against distance to the data, and evaluates
//! them under a replication policy. Progress is recorded after every
//! black-box evaluation so runs can be scored by area-under-curve metrics.

pub mod cart;
pub mod doe;
pub mod error;
pub mod kernels;
pub mod mars;
pub mod metrics;
pub mod optimizer;
pub mod problem;
pub mod replication;
pub mod sampling;
pub mod seed;

pub use cart::{fit_tree, Centroid, RegressionTree, TreeParams};
pub use doe::{lhd, uniform_pool, Design, DesignKind};
pub use error::{Error, Result};
pub use kernels::{fit_gp, fit_nonrbf, fit_rbf, GpModel, GpParams, RbfModel};
pub use mars::{
    evenly_spaced_knots, fit_mars, fit_tk_mars, tk_knots, BasisFunction, Knots, MarsModel,
    MarsParams, MaxTerms, TkMars,
};
pub use metrics::{auc, mtfauc, Quadrature};
pub use optimizer::{
    export_trace, import_trace, run, ExperimentConfig, MarsKnots, RunResult, Surrogate,
    SurrogateKind,
};
pub use problem::{Bounds, Budget, FunctionId, NoisyObjective, TestFunction};
pub use replication::{Dataset, PointRecord, Replication, RunState, TraceEntry};
pub use sampling::{eepa_select, pareto_front, CandidatePool, CandidateScores};
