use thiserror::Error;

/// Crate-level error for operations that cross module boundaries (pipelines,
/// bootstrap refits, simulation studies). Module-local APIs return their own
/// error enums; this type collects them.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error(transparent)]
    Fit(#[from] crate::regression::FitError),
    #[error(transparent)]
    Dale(#[from] crate::dale::DaleError),
    #[error(transparent)]
    Estimator(#[from] crate::estimators::EstimatorError),
    #[error(transparent)]
    Inference(#[from] crate::inference::InferenceError),
    #[error(transparent)]
    Oracle(#[from] crate::oracle::OracleError),
    #[error(transparent)]
    Simulate(#[from] crate::simulate::SimulateError),
    #[error("{0}")]
    Config(String),
}
