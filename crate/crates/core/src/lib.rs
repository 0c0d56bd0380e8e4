//! Multi-class multi-object tracking in three stages.
//!
//! Stage 1 ([`online`]) turns per-frame detections into short, reliable
//! tracklets using Kalman prediction, camera-motion compensation and
//! appearance matching. Stage 2 ([`globallink`]) links tracklets into long
//! trajectories with clip-level appearance banks and spatio-temporal costs.
//! Stage 3 ([`postprocess`]) denoises, interpolates, rescores and fuses
//! trajectory sets.
//!
//! The [`evalsim`] module provides a trajectory-mAP evaluator and a synthetic
//! scenario simulator so the whole pipeline can be verified without real
//! video data. All stages exchange data through the MOT text formats in
//! [`io`].

pub mod appearance;
pub mod camera;
pub mod evalsim;
pub mod globallink;
pub mod io;
pub mod model;
pub mod motion;
pub mod online;
pub mod postprocess;

mod error;

pub use error::{Error, Result};
