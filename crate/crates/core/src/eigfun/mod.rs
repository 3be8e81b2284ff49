//! Eigenfunction values on data, generalized and product eigenfunctions, and
//! their extension off the data.

mod delaunay;
mod extension;
mod kdtree;
mod set;

pub use delaunay::{Location, Triangulation};
pub use extension::{fit_extension, ExtensionKind, ExtensionModel, ExtensionOptions};
pub use kdtree::KdTree;
pub use set::{
    product_eigenfunction, propagate_generalized, propagate_values, EigenfunctionSet, RowSource,
};
