//! Dense linear-algebra kernel: state vectors, matrices, LU, matrix exponential,
//! RK4 stepping and composite quadrature.

mod matrix;
mod quadrature;
mod rk4;
mod vector;

pub use matrix::{expm_apply, lu_solve, DenseMatrix, LuFactors, SymmetricDecomposition, PIVOT_TOLERANCE};
pub use quadrature::{gauss_legendre_reference, QuadratureKind, QuadratureRule};
pub use rk4::{rk4_integrate, rk4_integrate_from};
pub use vector::StateVector;
