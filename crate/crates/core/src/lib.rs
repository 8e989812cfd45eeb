//! Deterministic haptic liver-palpation simulation engine.
//!
//! The crate is organised by subsystem: [`geometry`] (mesh, BVH, queries,
//! decimation), [`tissue`] (stiffness fields and disease presets),
//! [`haptics`] (contact, force law, thresholds, visual deformation, the
//! 1 kHz step), [`session`] (training flow and assessment report),
//! [`ctplane`] (CT section overlay) and [`validity`] (rater statistics).

pub mod ctplane;
pub mod geometry;
pub mod haptics;
pub mod numfmt;
pub mod session;
pub mod tissue;
pub mod validity;
