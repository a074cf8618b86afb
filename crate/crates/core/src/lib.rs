//! Kernel PCA estimators (exact, Nyström, random features), their
//! population oracle for a spectral kernel, and reconstruction-error
//! estimation.
//!
//! The crate builds without `std` (`--no-default-features`); it needs `alloc`.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod error;
pub mod kernels;
pub mod estimators;
pub mod linalg;
pub mod oracle;
pub mod recon;
pub mod rng;

pub use error::{Error, Result};
pub use kernels::{KernelSpec, RffMap, SampleSet, SpectralKernel};
pub use oracle::{build_oracle, OracleSpectrum};
pub use estimators::{fit_ekpca, fit_nystrom, fit_rff, KpcaModel, Variant};
pub use recon::{MeanSource, Norm, ReconContext, ReconReport, Target};
