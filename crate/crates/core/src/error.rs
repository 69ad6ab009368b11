use thiserror::Error;

use crate::qframework::SapWitness;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid potential outcomes table: {0}")]
    InvalidTable(String),
    #[error("invalid contrast: {0}")]
    InvalidContrast(String),
    #[error("invalid factorial structure: {0}")]
    InvalidFactorial(String),
    #[error("unknown treatment `{0}`")]
    UnknownTreatment(String),
    #[error("invalid assignment mechanism: {0}")]
    InvalidMechanism(String),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("support has {count} partitions, above the cap of {cap}")]
    SupportTooLarge { count: String, cap: usize },
    #[error("invalid estimator: {0}")]
    InvalidEstimator(String),
    #[error("invalid Q matrix: {0}")]
    InvalidQ(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("SAP condition fails: {0}")]
    SapViolation(SapWitness),
    #[error("no admissible Q matrix for this mechanism")]
    NoAdmissibleQ,
    #[error("{0}")]
    Parse(String),
    #[error("i/o: {0}")]
    Io(String),
}
