use thiserror::Error;

/// Errors raised by the library. Assumption failures that are verdicts
/// (see [`crate::models::AssumptionReport`]) are not errors.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("dimension d = {0} not supported here: d > 2 required")]
    DimensionTooSmall(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("operation needs a fully symmetric function: {0}")]
    NotSymmetric(String),

    #[error("unsupported layout for this operation: {0}")]
    UnsupportedLayout(String),

    #[error("FFT path needs M >= 2R+1 (M = {m}, R = {r})")]
    GridTooSmall { m: usize, r: usize },

    #[error("pole on grid: |value| = {value:e} at node {node:?}")]
    PoleOnGrid { node: Vec<f64>, value: f64 },

    #[error("memory cap exceeded: {cells} cells requested, cap is {cap}")]
    MemoryCap { cells: u128, cap: u128 },

    #[error("moment residual too large: sum E = {zeroth:e}, sum |x|^2 E = {second:e} (scale {scale:e})")]
    MomentResidual { zeroth: f64, second: f64, scale: f64 },

    #[error("critical constants undefined: F(0)^ + K''_F = {0:e} <= 0")]
    NonPositiveDenominator(f64),

    #[error("rho = {rho} outside the admissible range rho > max((d-8)/2, 0) = {bound} for d = {d}; the argument needs rho > (d-8)/2 to keep the convolution products of the error kernel integrable")]
    RhoOutOfRange { d: u32, rho: String, bound: String },

    #[error("infrared bound unattainable after {halvings} halvings of epsilon; last failing node {node:?}")]
    EpsilonUnderflow { halvings: u32, node: Vec<f64> },

    #[error("assumption check failed: {0}")]
    AssumptionFailed(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("decode error: {0}")]
    Decode(String),
}

pub type Result<T> = std::result::Result<T, Error>;
