//! Small reverse-mode autodiff engine with the layers used by the codecs.

mod adam;
mod checkpoint;
mod conv;
mod embedding;
mod graph;
mod params;
mod tensor;


pub use adam::AdamState;
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use embedding::sinusoidal_time_embedding;
pub use graph::{Graph, Var};
pub use params::{ParamId, ParamStore, ParamTensor};
pub use tensor::Tensor;
