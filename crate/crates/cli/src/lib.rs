//! Configuration, experiment runners and reports behind the `pilotwave` binary.

pub mod config;
pub mod experiments;
pub mod report;

use std::ffi::OsString;
use std::path::PathBuf;

/// Environment variable overriding the configured output directory.
pub const OUT_ENV: &str = "PILOTWAVE_OUT";

/// Output base directory: the command-line flag wins, then `PILOTWAVE_OUT`,
/// then the config's `experiment.output_dir`.
pub fn resolve_output_dir(flag: Option<PathBuf>, env: Option<OsString>, config: PathBuf) -> PathBuf {
    flag.or_else(|| env.filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or(config)
}
