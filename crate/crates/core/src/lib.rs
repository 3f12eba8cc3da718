//! Exact simulation and certification of network-assisted self-testing experiments.
//!
//! A multipartite target state is certified by letting every party share a maximally
//! entangled pair with an auxiliary party. The crate builds the ideal experiment,
//! computes its exact correlation tables, checks them against the self-testing
//! conditions and runs the extraction isometry on arbitrary physical models.

pub mod adversary;
pub mod certify;
pub mod commands;
pub mod experiment;
pub mod extract;
pub mod gates;
pub mod io;
mod par;
pub mod states;
pub mod tensor;
pub mod tomography;

pub use num_complex::Complex64 as C64;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("site {site} out of range for a layout with {sites} sites")]
    SiteOutOfRange { site: usize, sites: usize },
    #[error("cannot trace out every site")]
    EmptyKeep,
    #[error("operator is not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("state is not normalized (norm {0})")]
    NotNormalized(f64),
    #[error("eigenvalue {0:.3e} below the positivity floor")]
    NegativeEigenvalue(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("outside the alphabet: {0}")]
    Alphabet(String),
    #[error("behavior has missing inputs: {0}")]
    MissingInputs(String),
    #[error("invalid behavior: {0}")]
    InvalidBehavior(String),
    #[error("model violates source independence: {0}")]
    SourceIndependence(String),
    #[error("frame is not tomographically complete (rank {rank}, need {needed})")]
    RankDeficient { rank: usize, needed: usize },
    #[error("Kraus family is not complete (deviation {0:.3e})")]
    KrausIncomplete(f64),
    #[error("model does not pass certification: {0}")]
    NotCertified(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
