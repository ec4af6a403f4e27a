//! Radar-camera association at desk scale.
//!
//! The crate covers the full pipeline: synthetic driving-scene generation
//! with radar pins, camera bounding boxes and ground-truth association
//! labels (`scenesim`); a rule-based association baseline used as a noisy
//! teacher (`teacher`); pseudo-image encoding of a frame and per-object
//! representation extraction (`encode`); a compact encoder-decoder network
//! with reverse-mode autodiff (`nnet`); the pull/push/ordinal loss suite and
//! the training loop (`learn`); affinity-based inference and uncertain-aware
//! evaluation (`infereval`); and the `radcam` command-line front end (`cli`).
//!
//! Start with the runnable programs under `examples/` - each demonstrates
//! one capability end to end.

pub mod cli;
pub mod encode;
pub mod geom;
pub mod infereval;
pub mod learn;
pub mod rng;
pub mod nnet;
pub mod scenesim;
pub mod teacher;

pub use geom::{BBox2D, CamPoint3, Category, CameraIntrinsics, PixelCoord, RadarPin, RigidTransform};
