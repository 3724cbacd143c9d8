//! Shared fixtures for the benchmarks.

use semicov_core::kernels::{BivariateKernelSpec, BivariateModel, CovarianceModel, KernelSpec};

pub fn univariate_model() -> CovarianceModel {
    CovarianceModel::new(KernelSpec::gamma(-0.25, 1.0).expect("valid kernel"))
}

pub fn bivariate_model(rho: f64) -> BivariateModel {
    let spec = BivariateKernelSpec::new(
        KernelSpec::gamma(-0.25, 1.0).expect("valid kernel"),
        KernelSpec::gamma(-0.25, 2.0).expect("valid kernel"),
        rho,
    )
    .expect("valid pair");
    BivariateModel::new(spec)
}
