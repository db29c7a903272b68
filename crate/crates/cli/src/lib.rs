//! Command-line experiment runner over `stnn-core`.

pub mod commands;
pub mod compare;
pub mod config;
pub mod experiment;

use stnn_core::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

/// Process exit status for an error: 2 for bad config or input, 3 for numerical divergence.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidConfig(_)
        | Error::InvalidInput(_)
        | Error::InvalidParameter(_)
        | Error::Parse { .. }
        | Error::Dimension { .. } => EXIT_INVALID,
        Error::Divergence { .. } | Error::NonFiniteState { .. } => EXIT_DIVERGED,
        _ => EXIT_FAILURE,
    }
}
