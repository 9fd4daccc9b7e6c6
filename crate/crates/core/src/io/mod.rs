//! Configuration documents, CSV tables and run manifests.

mod config;
mod format;
mod manifest;

pub use config::{resolved_document, resolved_toml, validate_config, validate_table, RunConfig};
pub use format::{fmt_num, read_schedule, write_table, write_trajectory, TRAJECTORY_COLUMNS};
pub use manifest::{sha256_hex, RunManifest};
