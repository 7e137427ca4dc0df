//! Desk-side companion to `handeye-core`: ASCII cloud files, dataset
//! manifests, result records, reference reporting, and the flat run-config
//! format shared by the `handeye` command-line tool.
//!
//! Everything in memory is SI (meters, radians); millimeters and degrees
//! appear only inside serialized reports, matching the convention of the
//! computation crate.

#![warn(missing_docs)]

pub mod cloud_io;
pub mod config;
pub mod error;
pub mod manifest;
pub mod report;
pub mod results;

pub use error::IoError;
