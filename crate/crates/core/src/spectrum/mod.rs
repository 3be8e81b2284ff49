//! Eigenvalue seeding, lattices and optimization of the projection error.

mod dmd;
mod eigset;
mod objective;
mod optimize;

pub use dmd::{discrete_to_continuous, dmd_eigenvalues};
pub use eigset::{is_conjugate_closed, lattice, lattice_prefix, EigenvalueSet};
pub use objective::{objective_gradient, objective_value, LambdaObjective, MAX_GRAM_COND};
pub use optimize::{optimize_eigenvalues, OptimizeOptions, OptimizeResult};
