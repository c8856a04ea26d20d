//! Constraint-based causal discovery with kernel independence tests.
//!
//! The PC algorithm is driven by kernel (conditional) independence tests
//! whose kernels are either classical Gaussian kernels or quantum fidelity
//! kernels computed by an embedded statevector simulator. Kernel
//! hyperparameters can be tuned by minimizing kernel target alignment on
//! decoupled data.

pub mod datagen;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod kcit;
pub mod kernels;
pub mod kta;
pub mod pc;
pub mod qsim;

pub use dataset::Dataset;
pub use error::{Error, Result};
