//! Rain-streak removal for sequential driving frames.
//!
//! The crate covers the whole experimental pipeline: procedural paired
//! clear/rainy sequences ([`synth`]), dataset I/O ([`dataset`]), temporal
//! batch planning ([`batching`]), the encoder-decoder network ([`model`])
//! on a small CPU engine ([`nn`]), training and evaluation ([`training`]),
//! and the steering-angle study ([`steering`]).

pub mod batching;
pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod frame;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod plot;
pub mod steering;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
