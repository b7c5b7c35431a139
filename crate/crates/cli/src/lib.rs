//! Library side of the `fedsim` binary, kept separate so it can be tested.

pub mod commands;
pub mod config;
pub mod summary;

use fedsim_core::Error;

/// 3 for broken internal contracts, 2 for anything wrong with the inputs.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Invariant(_) => 3,
        _ => 2,
    }
}
