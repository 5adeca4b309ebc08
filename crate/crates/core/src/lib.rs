//! Masked-autoencoder foundation model for space-time-frequency channel
//! state information (CSI).
//!
//! The crate covers the whole pipeline: synthetic CSI generation from a
//! geometric multipath model ([`channel`]), 3D patching ([`patch`]),
//! sinusoidal space-time-frequency positional encoding ([`pe`]), token
//! masking ([`mask`]), the asymmetric encoder/decoder transformer
//! ([`model`]), self-supervised pre-training ([`train`]) and zero-shot
//! prediction with NMSE scoring ([`eval`]).

pub mod channel;
pub mod error;
pub mod eval;
pub mod mask;
pub mod model;
pub mod num;
pub mod patch;
pub mod pe;
pub mod rng;
pub mod train;

pub use error::{Result, WifoError};
pub use num::Real;
