use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite coordinate in input")]
    NonFinite,
    #[error("matrix is not unimodular (det = {0})")]
    NotUnimodular(i128),
    #[error("automorphism is not hyperbolic: eigenvalue modulus {0} on the unit circle")]
    NotHyperbolic(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("singular linear map: {0}")]
    Singular(String),
    #[error("not dominated: xi = {xi} (fiber norm {fiber_norm} vs base rate {base_rate})")]
    NotDominated { xi: f64, fiber_norm: f64, base_rate: f64 },
    #[error("transition matrix is reducible")]
    Reducible,
    #[error("empty region: {0}")]
    EmptyRegion(String),
    #[error("degenerate: {0}")]
    Degenerate(String),
    #[error("orbit diverged at step {0}")]
    Diverged(usize),
    #[error("curve construction aborted: {0}")]
    CurveAborted(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
