//! Desk-scale stand-in for adapter fine-tuning on badminton video.
//!
//! Clips are synthetic (C, T, H, W) blocks with actions defined by the
//! direction of motion. A frozen random pointwise stem produces features, one
//! adapter is inserted between its two layers, and a per-frame linear head
//! trained with sigmoid focal loss predicts class activity. Per-frame
//! probabilities are decoded into proposals and scored with [`crate::eval`].
//!
//! The stem is pointwise and its pooling is square, so the model without
//! spatial branches sees vertical and horizontal motion identically up to a
//! transpose. Only the height/width branches can tell them apart.

mod data;
mod decode;
mod experiment;
mod loss;
mod model;
mod optim;
mod train;

pub use data::{frame_targets, generate_dataset, SynthClass, SyntheticConfig, SyntheticDataset};
pub use decode::decode_intervals;
pub use experiment::{
    DEFAULT_ALPHA_SWEEP,
    run_experiment, write_experiment, ExperimentConfig, ExperimentResult, RunKey, RunResult,
    SummaryRow,
};
pub use loss::{focal_loss, sigmoid, FocalLoss};
pub use model::{FrozenStem, Head, Model, ModelConfig};
pub use optim::Adam;
pub use train::{frame_probabilities, predict_proposals, train, TrainConfig, TrainOutcome, TrainSet};

/// Derives an independent seed for a named random stream.
pub fn derive_seed(seed: u64, stream: &str) -> u64 {
    // FNV-1a over the stream name, then a splitmix64 finalizer.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stream.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over the bit patterns of a stream of floats.
pub(crate) fn fnv64(values: impl IntoIterator<Item = f64>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in values {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}
