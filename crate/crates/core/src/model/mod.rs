//! The per-point classifier, its optimizer and checkpoint format.

mod adam;
mod checkpoint;
mod features;
mod mlp;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use features::{extract_features, FEATURE_DIM};
pub use mlp::{backward, forward, forward_cached, softmax_rows, ForwardCache, Gradients, Layer, MlpParams};

/// Layer widths `F -> H -> H -> C`.
pub fn architecture(hidden: usize, num_classes: usize) -> [usize; 4] {
    [FEATURE_DIM, hidden, hidden, num_classes]
}
