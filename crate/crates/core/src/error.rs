use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("quaternion norm {0} is not within 1e-9 of one")]
    NonUnitQuaternion(f64),
    #[error("invalid chain: {}", .0.join("; "))]
    InvalidChain(Vec<String>),
    #[error("chain config: {0}")]
    Config(String),
    #[error("trajectory: {0}")]
    Trajectory(String),
    #[error("controller: {0}")]
    Controller(String),
    #[error("oracle: {0}")]
    Oracle(String),
    #[error(transparent)]
    Qp(#[from] hmpc_qp::QpError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { what, expected, got })
    }
}
