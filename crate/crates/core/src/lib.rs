//! Brain tissue segmentation directly from under-sampled MRI k-space.
//!
//! The crate is organised bottom-up:
//!
//! * [`phantom`] generates procedural brain label maps and spin-echo images,
//! * [`kspace`] holds centered FFTs, sampling masks, noise, data consistency and the
//!   dataset container,
//! * [`nn`] is a small reverse-mode autodiff engine over channel-first tensors,
//! * [`network`] assembles regularization blocks, the recurrent UNet segmenter, the
//!   segmentation-driven attention module and the full recurrent network,
//! * [`training`] provides losses, Dice, Adam and the training loops,
//! * [`harness`] implements the command-line experiments.

pub mod error;
pub mod harness;
pub mod kspace;
pub mod network;
pub mod nn;
pub mod phantom;
pub mod real;
pub mod training;

pub use error::{Error, Result};
