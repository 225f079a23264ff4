use thiserror::Error;

use crate::model::AssociationViolation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("association violation: {0}")]
    Association(#[from] AssociationViolation),

    #[error("user {user}: zero transmit power gives zero uplink rate")]
    ZeroRate { user: usize },

    #[error("energy budget infeasible (z = {z:.6} >= 1)")]
    EnergyInfeasible { z: f64 },

    #[error("lambert W argument {x} outside the domain of the {branch} branch")]
    LambertDomain { x: f64, branch: &'static str },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("derivative undefined: {0}")]
    Singular(String),

    #[error("SDP solver stopped at the iteration cap ({iterations}) with primal residual {primal:e}, dual residual {dual:e}")]
    SdpIterationCap {
        iterations: usize,
        primal: f64,
        dual: f64,
    },

    #[error("instance too large for enumeration: {0}")]
    TooLarge(String),

    #[error("io: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
