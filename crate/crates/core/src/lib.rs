//! Closed-form collaborative filtering.
//!
//! The crate fits two scorers on a binary user-item matrix: a truncated-SVD
//! autoencoder over the degree-normalized matrix ([`models::fit_svd_ae`]) and
//! the EASE item-item baseline ([`models::fit_ease`]). Around them sit
//! all-ranking evaluation ([`eval`]), rank / regularization / noise sweeps
//! ([`harness`]), dataset and model I/O ([`io`]) and a synthetic data
//! generator ([`synth`]).

pub mod error;
pub mod sparse;
pub mod rsvd;
pub mod models;
pub mod eval;
pub mod io;
pub mod harness;
pub mod synth;

pub use error::{Error, Result};
