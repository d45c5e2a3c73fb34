//! Numeric core for joint foreground segmentation and background inpainting.
//!
//! Everything algorithmic lives here: a dense f32 tensor engine with
//! reverse-mode automatic differentiation, the dual-branch generator and the
//! patch discriminator built on top of it, adversarial training with Adam,
//! procedural sample synthesis, and image quality metrics. The crate is
//! `no_std`-compatible (with `alloc`); file formats, image I/O and the
//! command line live in the companion `neglectnet-cli` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod error;
pub mod gradcheck;
mod math;
pub mod metrics;
pub mod net;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
