//! Dense linear-algebra carriers shared by all modules.
//!
//! Thin aliases over `nalgebra` dynamic matrices: complex matrices hold
//! channels and precoding vectors, real ones hold the stacked forms used by
//! the quadratic programs.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Dense complex matrix (channel `H`, lookup-table payloads).
pub type CMat = DMatrix<Complex64>;
/// Dense complex vector (precoding vector `x`, data vector `s`).
pub type CVec = DVector<Complex64>;
/// Dense real matrix (stacked channel `H_r`, constraint matrices).
pub type RMat = DMatrix<f64>;
/// Dense real vector (stacked vectors, QP variables).
pub type RVec = DVector<f64>;

/// Squared Euclidean norm of a complex vector.
pub fn norm_sqr(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Hermitian inner product `a^H b`.
pub fn inner(a: &CVec, b: &CVec) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}
