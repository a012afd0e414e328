//! Stochastic skeleton-action generation by learning smooth latent
//! transitions.
//!
//! The generator rolls an LSTM over i.i.d. noise (plus a class label) to
//! produce residual latent steps, integrates them into a latent trajectory
//! and decodes every latent frame with a shared MLP. It is trained jointly
//! with a bidirectional-LSTM classifier against a bidirectional-LSTM
//! discriminator; the decoder is pretrained as a conditional WGAN-GP
//! generator. [`eval`] implements the MMD, accuracy and diversity metrics.

pub mod critics;
pub mod data;
pub mod error;
pub mod eval;
pub mod generator;
pub mod layers;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
