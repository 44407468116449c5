//! Unsupervised anomalous-sound detection.
//!
//! An autoencoder scores audio frames by reconstruction error. Instead of
//! training it only to reconstruct normal sounds, the trainer can maximize a
//! Neyman-Pearson objective (true-positive rate minus false-positive rate at
//! a sorted-score threshold) or a smoothed AUC objective, using anomalous
//! feature vectors simulated by rejection sampling in latent space: draw
//! from the standard normal, keep draws a normal-latent Gaussian mixture
//! finds unlikely, and decode them through a generator network.
//!
//! The crate also ships the evaluation harness: mixture synthesis at fixed
//! anomaly-to-normal power ratios, clip-level detection, and ROC/AUC/pAUC
//! metrics.

pub mod audio;
pub mod detect;
pub mod error;
pub mod eval;
pub mod gmm;
pub mod model;
pub mod nn;
pub mod objectives;
pub mod sampler;
pub mod trainer;

pub use error::{Error, Result};
