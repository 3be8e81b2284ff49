//! Dense complex and real linear algebra.
//!
//! Everything here is a pure function of its inputs. Least-squares solves go through a
//! Householder QR followed by a one-sided Jacobi SVD of the triangular factor, so the
//! rank decision is made on singular values.

mod cmat;
mod eig;
mod jordan;
mod lstsq;
mod real;

pub use cmat::{dotc, norm2_sqr, CMat, C64};
pub use eig::eigvals;
pub use jordan::{jordan_exp, JordanBlock};
pub use lstsq::{pinv_solve, ridge_solve, LeastSquares, Svd, RTOL_FACTOR};
pub use real::{dot, lu_solve, norm_inf, sym_eigen, Cholesky, Mat};
