//! Pieces of the `socialgaze` command line that are worth testing on their own.

pub mod draw;
pub mod render;

use std::process::ExitCode;

use socialgaze_core::Error;
use socialgaze_model::ModelError;

/// Successful run.
pub const EXIT_OK: u8 = 0;
/// Unexpected failure, such as an unreadable file.
pub const EXIT_FAILURE: u8 = 1;
/// Invalid input or configuration.
pub const EXIT_VALIDATION: u8 = 2;
/// An input declares a schema or format version this build does not read.
pub const EXIT_SCHEMA: u8 = 3;

fn core_code(e: &Error) -> u8 {
    match e {
        Error::SchemaMismatch { .. } => EXIT_SCHEMA,
        Error::Validation(_) | Error::Parse { .. } | Error::Config(_) | Error::Json(_) => EXIT_VALIDATION,
        Error::Io(_) | Error::Image(_) => EXIT_FAILURE,
    }
}

/// Exit status for an error, from the first typed cause in its chain.
pub fn exit_code(err: &anyhow::Error) -> ExitCode {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return ExitCode::from(core_code(e));
        }
        if let Some(e) = cause.downcast_ref::<ModelError>() {
            return ExitCode::from(match e {
                ModelError::Core(c) => core_code(c),
                ModelError::Validation(_) | ModelError::Checkpoint(_) | ModelError::Json(_) => EXIT_VALIDATION,
                ModelError::Tensor(_) | ModelError::Io(_) => EXIT_FAILURE,
            });
        }
    }
    ExitCode::from(EXIT_FAILURE)
}
