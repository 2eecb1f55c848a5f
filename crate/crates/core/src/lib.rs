//! Variational-autoencoder latent feature analysis for incomplete power-load
//! monitoring tensors.
//!
//! The crate is organised bottom-up:
//!
//! * [`data`] builds, normalizes, masks, splits and vectorizes `k × N × M`
//!   time-days tensors, and generates synthetic load data.
//! * [`vae`] is the network itself: forward passes, reparameterized sampling,
//!   the masked ELBO loss, hand-derived gradients and the Adam update.
//! * [`trainer`] runs epochs with validation-based early stopping and does
//!   posterior-mean imputation.
//! * [`lfa`] holds the linear matrix-factorization baseline and a mean imputer.
//! * [`eval`] computes RMSE / MAE over the held-out set.
//! * [`cli`] wires everything into the `vaelf` command-line tool.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod lfa;
pub mod rng;
pub mod trainer;
pub mod vae;

pub use error::{Error, Result};
