//! Persistence: snapshots, spec and config files, manifests.

pub mod config;
pub mod manifest;
pub mod snapshot;
pub mod spec_file;
