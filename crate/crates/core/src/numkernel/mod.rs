//! Dense numeric core with hand-derived gradients.
//!
//! Every operator comes as an explicit forward function that records what its
//! backward pass needs, and a backward function that accumulates parameter
//! gradients into a [`Gradients`] buffer. Activations are kept time-major
//! (`[T × B × features]`) so the input projections of a whole sequence run as a
//! single matrix product. All kernels are generic over [`Real`]: `f32` for
//! training, `f64` for finite-difference verification.

mod attention;
mod bilstm;
mod checkpoint;
pub mod gradcheck;
mod lstm;
pub mod ops;
mod optim;
mod params;
mod real;
mod tensor;

pub use attention::{AttentionCache, AttentionPool};
pub use bilstm::{BiLstm, BiLstmCache};
pub use checkpoint::{Checkpoint, TrainingState, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use lstm::{LstmCache, LstmLayer};
pub use ops::affine;
pub use optim::{adamw_step, clip_global_norm, AdamWConfig};
pub use params::{uniform, xavier_uniform, Gradients, ParamId, ParameterSet};
pub use real::{gemm, Real};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NumError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
    #[error("parameter `{0}` has no gradient")]
    MissingGrad(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
