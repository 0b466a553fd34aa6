//! IO side of the selective-SSM memory laboratory: checkpoint and dataset
//! file formats, CSV/SVG emission, reproducible run directories, and the
//! command implementations behind the `ssmlab` binary.

pub mod checkpoint;
pub mod commands;
pub mod dataset;
pub mod report;
pub mod runcfg;
pub mod svg;

/// Command failure classified by exit code: configuration/input problems
/// exit 1, numerical failures exit 2.
#[derive(Debug)]
pub enum CmdError {
    Config(anyhow::Error),
    Numeric(anyhow::Error),
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Config(_) => 1,
            CmdError::Numeric(_) => 2,
        }
    }

    pub fn inner(&self) -> &anyhow::Error {
        match self {
            CmdError::Config(e) | CmdError::Numeric(e) => e,
        }
    }
}

impl std::fmt::Display for CmdError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.inner())
    }
}

impl From<anyhow::Error> for CmdError {
    fn from(e: anyhow::Error) -> Self {
        CmdError::Config(e)
    }
}

impl From<std::io::Error> for CmdError {
    fn from(e: std::io::Error) -> Self {
        CmdError::Config(e.into())
    }
}

/// Core errors about numbers are numerical failures; the rest are misuse.
impl From<ssmlab_core::Error> for CmdError {
    fn from(e: ssmlab_core::Error) -> Self {
        use ssmlab_core::Error as E;
        match e {
            E::NonFiniteInput { .. }
            | E::NonFiniteGradient { .. }
            | E::Diverged { .. } => CmdError::Numeric(anyhow::anyhow!(e)),
            other => CmdError::Config(anyhow::anyhow!(other)),
        }
    }
}

pub type CmdResult<T> = Result<T, CmdError>;
