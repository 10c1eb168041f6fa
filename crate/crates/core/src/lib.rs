//! Differential-privacy building blocks for private in-context learning:
//! selection mechanisms, teacher-ensemble aggregation, RDP accounting, a toy
//! DP-SGD trainer, a simulation harness and an API cost model.

pub mod accounting;
pub mod aggregation;
pub mod cli;
pub mod costmodel;
pub mod dpsgd;
pub mod mechanisms;
pub mod rng;
pub mod simharness;

pub use rng::RngStream;
