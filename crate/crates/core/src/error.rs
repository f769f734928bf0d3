use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("structural error: {0}")]
    Structure(String),
    #[error("parse error at offset {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("relaxation order {order} is below the minimum {min}")]
    OrderTooLow { order: usize, min: usize },
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error(transparent)]
    Sdp(#[from] rcbf_sdp::SdpError),
}

pub type Result<T> = std::result::Result<T, CoreError>;

pub(crate) fn structure<T>(msg: impl Into<String>) -> Result<T> {
    Err(CoreError::Structure(msg.into()))
}
