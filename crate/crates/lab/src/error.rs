//! Error type for the harness side: IO, file formats, config files, and
//! aborted training runs, with the process exit code each one maps to.

use std::fmt;
use std::path::{Path, PathBuf};

use w2s_core::train::TrainFailure;

/// Harness failure. Wraps core errors so callers see one type end to end.
#[derive(Debug)]
pub enum LabError {
    /// Invalid configuration: bad JSON, missing required fields, values out
    /// of range, or a kind/subcommand mismatch.
    Config(String),
    /// A binary file does not match its format. `offset` is the byte where
    /// parsing stopped making sense.
    Parse {
        path: PathBuf,
        offset: usize,
        msg: String,
    },
    /// Filesystem trouble, annotated with the path involved.
    Io { path: PathBuf, source: std::io::Error },
    /// A training run aborted mid-flight; partial results were persisted.
    Train(Box<TrainFailure>),
    /// Everything else the core reports (shape, contract, numeric).
    Core(w2s_core::Error),
}

/// Exit codes promised by the CLI contract.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_TRAIN: i32 = 3;

impl LabError {
    pub fn config(msg: impl Into<String>) -> Self {
        LabError::Config(msg.into())
    }

    pub fn parse(path: impl Into<PathBuf>, offset: usize, msg: impl Into<String>) -> Self {
        LabError::Parse {
            path: path.into(),
            offset,
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for this failure: 2 for anything the user can fix
    /// in the config, 3 for a run that started and died, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) => EXIT_CONFIG,
            LabError::Core(w2s_core::Error::Config(_)) => EXIT_CONFIG,
            LabError::Parse { .. } => EXIT_CONFIG,
            LabError::Train(_) => EXIT_TRAIN,
            _ => 1,
        }
    }
}

impl fmt::Display for LabError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabError::Config(msg) => write!(f, "config error: {msg}"),
            LabError::Parse { path, offset, msg } => {
                write!(f, "parse error in {} at byte {offset}: {msg}", path.display())
            }
            LabError::Io { path, source } => write!(f, "io error on {}: {source}", path.display()),
            LabError::Train(fail) => write!(f, "{fail}"),
            LabError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for LabError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            LabError::Io { source, .. } => Some(source),
            LabError::Core(e) => Some(e),
            _ => None,
        }
    }
}

impl From<w2s_core::Error> for LabError {
    fn from(e: w2s_core::Error) -> Self {
        // Core config errors stay config errors for exit-code purposes.
        LabError::Core(e)
    }
}

impl From<Box<TrainFailure>> for LabError {
    fn from(f: Box<TrainFailure>) -> Self {
        LabError::Train(f)
    }
}

pub type Result<T> = std::result::Result<T, LabError>;

/// `std::fs::read` with the path attached to the error.
pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| LabError::io(path, e))
}

/// `std::fs::write` with the path attached to the error.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| LabError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_contract() {
        assert_eq!(LabError::config("x").exit_code(), 2);
        assert_eq!(LabError::parse("f.bin", 0, "bad magic").exit_code(), 2);
        assert_eq!(
            LabError::from(w2s_core::Error::config("bad")).exit_code(),
            2
        );
        assert_eq!(
            LabError::from(w2s_core::Error::contract("bad")).exit_code(),
            1
        );
        let io = LabError::io("f", std::io::Error::new(std::io::ErrorKind::NotFound, "gone"));
        assert_eq!(io.exit_code(), 1);
    }

    #[test]
    fn parse_errors_carry_path_and_offset() {
        let e = LabError::parse("data/images.idx", 4, "bad magic");
        let text = e.to_string();
        assert!(text.contains("data/images.idx"), "{text}");
        assert!(text.contains("byte 4"), "{text}");
    }
}
