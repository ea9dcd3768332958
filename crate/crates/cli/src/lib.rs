//! Batch pipeline behind the `dualformer` binary: synthesize data, pretrain
//! the graph teacher, distill the student, sweep the loss weights and
//! evaluate checkpoints.

pub mod commands;
pub mod config;

pub use config::{DataPaths, RunConfig};

use dualformer::Error;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "DUALFORMER_OUT";

/// Process exit status for a pipeline error: 2 configuration, 3 data, 4
/// numeric abort, 1 anything else.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Dimension { .. } => 2,
        Error::Data(_) | Error::Io { .. } | Error::Checkpoint(_) => 3,
        Error::NonFinite(_) => 4,
        Error::Contract(_) => 1,
    }
}
