//! Error-bounded lossy compression of spatiotemporal scientific fields.
//!
//! The pipeline tiles each field into 3D blocks, encodes every block to a
//! small latent with a learned codec (a conditional diffusion model or a
//! convolutional autoencoder), entropy-codes the quantized latent, and on
//! decode refines the reconstruction with a temporal correction network and
//! a PCA residual stage that enforces an l2 bound on every small block.
//!
//! See the crate's `examples/` directory for one runnable program per stage.

mod bytes;
pub mod correction;
pub mod data_io;
pub mod diffusion;
pub mod entropy;
pub mod error;
pub mod guarantee;
pub mod nn;
pub mod pipeline;
pub mod tensor;

pub use error::{Error, Result};
