//! The asymmetric masked-autoencoder transformer.

mod checkpoint;
mod config;
mod layers;
mod network;
mod params;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use config::{ModelConfig, DEFAULT_PATCH};
pub use network::{backward, decode, encode, forward_tokens, forward_traced, reconstruct, ForwardTrace};
pub use params::{param_count, Block, LayerNorm, Linear, ParamKind, Parameters, TensorSpec};
