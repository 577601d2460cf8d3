//! The CTR predictor: masked embedding lookup feeding a pluggable interaction
//! network with a sigmoid head.

mod ctr;
mod embedding;
mod masked;
mod mlp;

pub use ctr::{CtrModel, Gradients};
pub use embedding::{EmbeddingTable, RowGrads};
pub use masked::{apply_masks, MaskedEmbedding};
pub use mlp::{Interaction, Mlp, MlpLayer};
