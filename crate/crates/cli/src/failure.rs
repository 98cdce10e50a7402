use std::fmt;

use fstucker::Error;

/// Command failure, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Exit 1: the computation itself failed.
    Compute(String),
    /// Exit 2: a file could not be read, written or decoded.
    Io(String),
    /// Exit 3: invalid parameters or arguments.
    Param(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Compute(_) => 1,
            Failure::Io(_) => 2,
            Failure::Param(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Compute(m) => write!(f, "computation failed: {m}"),
            Failure::Io(m) => write!(f, "I/O error: {m}"),
            Failure::Param(m) => write!(f, "invalid parameters: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Io(_) | Error::Decode(_) => Failure::Io(msg),
            Error::Parameter(_) | Error::Shape(_) | Error::ModeIndex { .. } | Error::Domain { .. } => {
                Failure::Param(msg)
            }
            Error::Degenerate(_) | Error::Data(_) => Failure::Compute(msg),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}
