//! Process exit codes. Stable: scripts depend on them.

use std::fmt;

use evbc::container::ContainerError;
use evbc::eval::EvalError;
use evbc::pipeline::{AlignError, BuildError};
use evbc::synth::SynthError;

pub const OK: u8 = 0;
pub const FAILURE: u8 = 1;
pub const CONFIG: u8 = 2;
pub const IO: u8 = 3;
pub const SYNC: u8 = 4;
pub const MISSING_PREDICTIONS: u8 = 5;
pub const CHECKSUM: u8 = 6;
pub const INGEST: u8 = 10;
pub const CLOCK_MODEL: u8 = 11;
pub const WINDOWING: u8 = 12;
pub const RASTERIZE: u8 = 13;
pub const GEOMETRY: u8 = 14;
pub const ACTIONS: u8 = 15;
pub const CONTAINER: u8 = 16;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn new(code: u8, message: impl fmt::Display) -> Self {
        CliError {
            code,
            message: message.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        let code = match e {
            SynthError::ConfigInvalid(_) | SynthError::Json(_) => CONFIG,
            _ => IO,
        };
        CliError::new(code, e)
    }
}

impl From<AlignError> for CliError {
    fn from(e: AlignError) -> Self {
        let code = match e {
            AlignError::Ingest(_) => INGEST,
            AlignError::Sync(_) => SYNC,
            AlignError::Io(_) | AlignError::Json(_) => IO,
        };
        CliError::new(code, e)
    }
}

impl From<BuildError> for CliError {
    fn from(e: BuildError) -> Self {
        let code = match &e {
            BuildError::Ingest(_) => INGEST,
            BuildError::MissingClockModel { .. } | BuildError::BadClockModel { .. } => CLOCK_MODEL,
            BuildError::Windowing(_) => WINDOWING,
            BuildError::Rasterize(_) => RASTERIZE,
            BuildError::Homography { .. }
            | BuildError::RgbFrame { .. }
            | BuildError::Geometry(_) => GEOMETRY,
            BuildError::Actions(_) => ACTIONS,
            BuildError::Container(_) => CONTAINER,
        };
        CliError::new(code, e)
    }
}

impl From<ContainerError> for CliError {
    fn from(e: ContainerError) -> Self {
        let code = match e {
            ContainerError::ChecksumMismatch { .. } => CHECKSUM,
            _ => CONTAINER,
        };
        CliError::new(code, e)
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        let code = match e {
            EvalError::MissingPredictions { .. } | EvalError::UnknownFrames { .. } => {
                MISSING_PREDICTIONS
            }
            EvalError::Io(_) => IO,
            _ => CONFIG,
        };
        CliError::new(code, e)
    }
}
