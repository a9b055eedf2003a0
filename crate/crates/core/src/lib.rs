//! Recurrent wavelet probabilistic neural network (RWPNN) for unsupervised
//! time-series anomaly detection.
//!
//! The pipeline compresses each window with a stacked LSTM encoder, maps the
//! latent vector into `[0, 1]^n`, and scores it with a bank of online B-spline
//! frame density estimators that forget at different rates. Windows whose
//! density falls below a validated threshold are flagged as anomalies.

pub mod autoencoder;
pub mod codec;
pub mod data;
pub mod detector;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod mrwpn;
pub mod scaling;
pub mod synthetic;
pub mod wavelet;
pub mod window;

pub use error::{Error, Result};
