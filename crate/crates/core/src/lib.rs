//! Simulation and estimation of realised semivariance and semicovariance for
//! Brownian semistationary processes, with tools to check their law of large
//! numbers and central limit behaviour by Monte Carlo.

pub mod asymptotics;
pub mod bss;
pub mod error;
pub mod estimators;
pub mod gaussian_sim;
pub mod harness;
pub mod hermite;
pub mod kernels;
pub mod quadrature;
pub mod rng;
pub mod stats;
pub mod volatility;

pub use error::{Error, Result};
pub use kernels::{BivariateKernelSpec, BivariateModel, CovarianceModel, CrossLagTable, KernelFamily, KernelSpec};
pub use quadrature::QuadratureConfig;
