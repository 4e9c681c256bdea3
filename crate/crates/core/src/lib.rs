//! Explicit spectral solutions of the 1D linear wave equation with a single
//! constant time delay.
//!
//! The pipeline: [`reduction`] turns the physical problem (mixed lower-order
//! terms, inhomogeneous Dirichlet data) into a self-adjoint form with
//! homogeneous boundaries, [`kernels`] builds the delayed cosine/sine kernel
//! pair that solves the modal delay ODE, [`scalar_dde`] assembles the scalar
//! representation formula (history + forcing convolutions), [`assembly`] sums
//! the Fourier sine series, and [`oracle_fd`] provides an independent
//! finite-difference cross-check. [`dsl`] is the small expression language
//! used for problem data.

pub mod assembly;
pub mod cheb;
pub mod dsl;
pub mod field;
pub mod kernels;
pub mod numeric;
pub mod oracle_fd;
pub mod quad;
pub mod reduction;
pub mod scalar_dde;

pub use field::{CompareReport, GridField, Quantity, Region};
pub use kernels::{KernelKind, KernelParams, Side, StepwiseKernel};
