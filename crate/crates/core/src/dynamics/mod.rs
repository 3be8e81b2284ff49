//! Vector fields, fixed-step integration and trajectory datasets.

mod dataset;
mod field;
mod integrate;

pub use dataset::{
    generate_dataset, steps_for, GenerateOptions, InputPolicy, Sampler, Signal, TrajectoryDataset,
};
pub use field::{inflate_state, VectorField};
pub use integrate::{integrate, Rk4, MAX_SUBSTEP};
