//! Optimal boundary values of the eigenfunctions on the trajectory initial points.

mod lmat;
mod optimal;

pub(crate) use lmat::Projector;
pub use lmat::{build_L, exp_powers, LMatrix};
pub use optimal::{
    format_complex, optimal_boundary, optimal_boundary_from_targets, parse_complex, BoundaryMatrix,
    OutputPartition, Regularizer,
};
