//! Two-party secure Transformer-inference building blocks.
//!
//! Layers, bottom up:
//! - [`wide`], [`fixed_ring`], [`poly_ring`]: number formats and ring arithmetic
//! - [`toy_he`]: symmetric RLWE-style encryption with explicit noise tracking
//! - [`encodings`]: plaintext packings for matrix multiplication
//! - [`mpc_core`]: shares, channels, transcripts, dealer-backed functionalities
//! - [`linear_protocols`]: the two HE matmul protocols (input-packed and
//!   weight-packed output rotation)
//! - [`approx`]: distribution-aware piecewise polynomial fitting
//! - [`secure_nonlinear`]: GELU / exp / softmax over shares, fused
//!   truncation-upcast

pub mod approx;
pub mod counters;
pub mod harness;
pub mod encodings;
pub mod fixed_ring;
pub mod linear_protocols;
pub mod mpc_core;
pub mod toy_he;

pub use harness::run;

pub mod poly_ring;
pub mod secure_nonlinear;
pub mod wide;
