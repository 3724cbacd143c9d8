use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("quadrature did not converge on [{a}, {b}]: error estimate {estimate:e} exceeds tolerance {tol:e}")]
    QuadratureNonConvergence { a: f64, b: f64, estimate: f64, tol: f64 },

    #[error("quadrature degeneracy: {0}")]
    QuadratureDegeneracy(String),

    #[error("hermite rank undetermined: all {0} coefficients vanish")]
    RankUndetermined(usize),

    #[error("matrix is not positive semidefinite (minimum eigenvalue {0:e})")]
    NotPositiveSemidefinite(f64),

    #[error("invalid test function: {0}")]
    InvalidTestFunction(String),

    #[error("invalid volatility specification: {0}")]
    InvalidVolatility(String),

    #[error("invalid simulation request: {0}")]
    InvalidSimulation(String),

    #[error("kernel tail energy {energy:e} beyond truncation horizon {horizon} exceeds budget {budget:e}")]
    TruncationBudget { energy: f64, horizon: f64, budget: f64 },

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
