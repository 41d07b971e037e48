//! Core library for `exoforge`: hand-exoskeleton mechanism modeling, fingertip
//! workspace matching, bound-constrained design optimization, and the
//! deterministic data-pipeline pieces used to turn raw demonstration logs into
//! training-ready episodes.
//!
//! The crate is organized around independent subsystems:
//!
//! - [`kinemodel`] — finger mechanisms (serial chains, four-bar linkages) and
//!   forward kinematics.
//! - [`workspace`] — fingertip workspace sampling and the bidirectional
//!   workspace similarity metric.
//! - [`designopt`] — differential-evolution design search over parameterized
//!   mechanisms, plus physical-implementation adjustments.
//! - [`calibmap`] — encoder-angle to motor-value regression with hysteresis
//!   (per-direction) support.
//! - [`sensorstream`] — wire-format packet framing and the analog conversion
//!   formulas for joint encoders and force sensors.
//! - [`timeline`] — latency compensation, camera-aligned interpolation, and
//!   downsampling into episodes.
//! - [`actionexec`] — relative/absolute action resolution, horizon windowing,
//!   and command-rate interpolation.
//! - [`maskcompose`] — occlusion-aware mask intersection compositing.
//! - [`synth`] — synthetic fixture generators shared by tests and the CLI.
//!
//! Conventions: lengths are millimeters and angles are radians everywhere in
//! the API; degrees appear only at file and CLI boundaries.

pub mod actionexec;
pub mod calibmap;
pub mod designopt;
pub mod interval;
pub mod kinemodel;
pub mod maskcompose;
pub mod sensorstream;
pub mod synth;
pub mod timeline;

// Downstream binaries build images for the compositing APIs; re-exporting
// keeps them on this crate's `image` version and feature set.
pub use image;
pub mod workspace;
