//! Core algorithms for flange-based robot hand-eye calibration and tactile
//! seam tracking.
//!
//! The crate is organized bottom-up:
//!
//! - [`se3`]: rigid transforms, roll-pitch-yaw conversions, pose errors;
//! - [`cloud`]: point-cloud container and preprocessing filters
//!   (pass-through crop, statistical outlier removal, Euclidean clustering);
//! - [`circle`]: RANSAC estimation of the flange's outer circle, yielding
//!   the tool center point seen by the camera;
//! - [`rigid`]: closed-form SVD fit of the hand-eye transform from paired
//!   TCP observations;
//! - [`icp`]: point-to-point ICP and the calibration error metric;
//! - [`calib`]: the iterative optimal-pool calibration loop and error
//!   compensation;
//! - [`sim`]: synthetic flange scenes, pose grids, noise models, and the
//!   Monte-Carlo sweep harness;
//! - [`weld`]: a 2D welding-seam servo simulator driven by a compliant
//!   touch probe.
//!
//! All internal math is SI (meters, radians); millimeters and degrees appear
//! only in reporting types. The crate is `no_std`-compatible (with `alloc`);
//! the default `std` feature enables std error integration in dependencies.

#![cfg_attr(not(feature = "std"), no_std)]
#![warn(missing_docs)]

extern crate alloc;

pub mod calib;
pub mod circle;
pub mod cloud;
pub mod error;
pub mod icp;
pub mod kdtree;
pub mod rigid;
pub mod se3;
pub mod sim;
pub mod weld;

pub use error::Error;
