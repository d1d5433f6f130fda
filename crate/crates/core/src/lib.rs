//! Coarse quantization and compressive sampling primitives.
//!
//! The crate collects a family of analog-to-digital encoding schemes that
//! trade amplitude resolution for redundancy: beta-encoders, a golden-ratio
//! two-term recurrence encoder, first- and second-order sigma-delta
//! modulators (including leaky and chaotic variants), and the supporting
//! machinery to study them: flaky quantizer models, decoder-parameter
//! recovery from pairs of bitstreams, bandlimited reconstruction filters,
//! and a cross-validation layer for compressed-sensing decoders.
//!
//! Everything is deterministic given a seed; the only random source is
//! [`rng::Rng`].

pub mod beta;
pub mod bitstream;
pub mod cs;
pub mod error;
pub mod gamma;
pub mod gre;
pub mod quantizers;
pub mod rng;
pub mod sampling;
pub mod sigma_delta;

pub use bitstream::{Alphabet, Bitstream};
pub use error::{Error, Result};
pub use rng::Rng;
