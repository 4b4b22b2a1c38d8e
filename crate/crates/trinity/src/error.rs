use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("coordinate out of grid on axis {axis}: index {index} exceeds {max}")]
    OutOfGrid { axis: char, index: i128, max: u64 },

    #[error("quotient filter is full ({capacity} slots)")]
    FilterFull { capacity: u64 },

    #[error("cannot expand: remainder has a single bit left")]
    RemainderExhausted,

    #[error("dimension mismatch: ciphertext has {ciphertext}, token expects {token}")]
    DimensionMismatch { ciphertext: usize, token: usize },

    #[error("counter {j} is outside the capability bound {bound}")]
    OutOfRange { j: u64, bound: u64 },

    #[error("stale capability: token covers counter {token}, server is at {server}")]
    StaleCapability { token: u64, server: u64 },

    #[error("token failed authentication")]
    TokenCorrupt,

    #[error("corrupt header: {0}")]
    CorruptHeader(String),

    #[error("unsupported format version {found} (this build reads version {expected})")]
    VersionMismatch { found: u16, expected: u16 },

    #[error("journal replay failed: {0}")]
    ReplayFailure(String),

    #[error("malformed message: {0}")]
    Malformed(String),

    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}
