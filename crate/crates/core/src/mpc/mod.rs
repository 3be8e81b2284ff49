//! Model predictive control on lifted linear predictors: cost and constraint stacking,
//! condensation to a dense QP, an ADMM solver and the closed loop.

mod closed_loop;
mod condense;
mod qp;
mod spec;

pub use closed_loop::{
    closed_loop, ClosedLoopLog, LoopOptions, LoopRecord, LoopTiming, TrackingExperiment,
};
pub use condense::{condense, prediction_matrices, DenseQp};
pub use qp::{kkt_residuals, solve_qp, AdmmSettings, Kkt, QpSolution, QpSolver, WarmStart};
pub use spec::{
    stack_observable, MpcSpec, Reference, StackParts, StackedObservable, Stage, Terminal,
};
