use std::fmt;

use lattice_deconv::Error;

/// A failed run and the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    /// Bad arguments or an unmet precondition (exit 2).
    Usage(String),
    /// A computed invariant did not hold (exit 1).
    Breach(String),
}

impl Failure {
    pub fn usage(msg: impl Into<String>) -> Self {
        Failure::Usage(msg.into())
    }

    pub fn breach(msg: impl Into<String>) -> Self {
        Failure::Breach(msg.into())
    }

    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Breach(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Breach(m) => f.write_str(m),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::DimensionMismatch(..)
            | Error::DimensionTooSmall(_)
            | Error::InvalidParameter(_)
            | Error::InsufficientData(_)
            | Error::NotSymmetric(_)
            | Error::UnsupportedLayout(_)
            | Error::GridTooSmall { .. }
            | Error::MemoryCap { .. }
            | Error::RhoOutOfRange { .. }
            | Error::Io(_)
            | Error::Json(_)
            | Error::Decode(_) => Failure::Usage(msg),
            Error::PoleOnGrid { .. }
            | Error::MomentResidual { .. }
            | Error::NonPositiveDenominator(_)
            | Error::EpsilonUnderflow { .. }
            | Error::AssumptionFailed(_) => Failure::Breach(msg),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}
