//! Crate-wide error type.

use alloc::string::String;
use core::fmt;

/// Errors raised by model, task, training, and analysis code.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An input vector contained NaN or infinity.
    NonFiniteInput { what: &'static str },
    /// A tensor had the wrong dimensions for the operation.
    ShapeMismatch {
        what: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
    /// A token id is outside the model vocabulary.
    TokenOutOfVocab { token: u32, vocab_size: usize },
    /// A vocabulary pool is too small for the requested task size.
    VocabTooSmall {
        pool: &'static str,
        needed: usize,
        available: usize,
    },
    /// Periodic sequences only support a fixed set of periods.
    InvalidPeriod { period: usize },
    /// Rejection sampling could not find enough unique instances.
    UniquenessExhausted { retries: usize },
    /// An analysis asked for more timesteps than the trace holds.
    TraceTooShort { requested: usize, len: usize },
    /// An operation that needs a captured trace was given none.
    MissingTrace,
    /// A probability/threshold parameter left [0, 1].
    InvalidThreshold { name: &'static str, value: f64 },
    /// An intervention referenced layers, channels, or timesteps that
    /// do not exist for this model/input.
    InvalidIntervention { reason: String },
    /// A gradient became NaN or infinite.
    NonFiniteGradient { param: String },
    /// Training loss became non-finite; the last good checkpoint is
    /// retained in the returned history.
    Diverged { step: usize },
    /// A configuration value violated its invariants.
    InvalidConfig { reason: String },
    /// Instances passed to an evaluation did not share a condition.
    ConditionMismatch { reason: String },
    /// An operation was given an empty input it cannot handle.
    EmptyInput { what: &'static str },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NonFiniteInput { what } => write!(f, "non-finite values in {what}"),
            Error::ShapeMismatch {
                what,
                expected,
                got,
            } => write!(
                f,
                "shape mismatch in {what}: expected {}x{}, got {}x{}",
                expected.0, expected.1, got.0, got.1
            ),
            Error::TokenOutOfVocab { token, vocab_size } => {
                write!(f, "token id {token} out of vocabulary (size {vocab_size})")
            }
            Error::VocabTooSmall {
                pool,
                needed,
                available,
            } => write!(
                f,
                "vocabulary pool `{pool}` too small: need {needed}, have {available}"
            ),
            Error::InvalidPeriod { period } => {
                write!(f, "invalid period {period}; expected one of 2,4,8,16,32,64")
            }
            Error::UniquenessExhausted { retries } => {
                write!(f, "could not generate a unique instance in {retries} retries")
            }
            Error::TraceTooShort { requested, len } => {
                write!(f, "trace has {len} steps, analysis requested {requested}")
            }
            Error::MissingTrace => write!(f, "operation requires a captured gate trace"),
            Error::InvalidThreshold { name, value } => {
                write!(f, "{name} = {value} outside [0, 1]")
            }
            Error::InvalidIntervention { reason } => write!(f, "invalid intervention: {reason}"),
            Error::NonFiniteGradient { param } => {
                write!(f, "non-finite gradient in parameter {param}")
            }
            Error::Diverged { step } => write!(f, "training loss diverged at step {step}"),
            Error::InvalidConfig { reason } => write!(f, "invalid configuration: {reason}"),
            Error::ConditionMismatch { reason } => {
                write!(f, "instances do not share a condition: {reason}")
            }
            Error::EmptyInput { what } => write!(f, "empty input: {what}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
