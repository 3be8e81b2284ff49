//! Linear predictors on learned eigenfunctions: assembly, input-matrix regression,
//! rollouts and prediction-error tables.

mod fit_b;
mod learn;
mod model;
mod observable;
mod regions;
mod table;

pub use fit_b::{fit_b, fit_bd, multistep_error, regression_data, RegressionData};
pub use learn::{
    c_fit_samples, learn, ComponentReport, EigMode, LearnOptions, LearnReport, ProductSpec,
};
pub use model::{
    assemble_ac, b_from_bd, bd_from_b, fit_c_l2, fit_c_sup, rmse_error, sup_residual, CMode,
    LinearPredictor,
};
pub use observable::{Observable, ObservableTerm};
pub use regions::{limit_cycle, Polygon, TestRegion};
pub use table::{
    evaluate_protocol, evaluate_table, Control, ErrorTable, Protocol, RegionSpec, TableCell,
};
