//! Decoupled spatio-temporal adapters for temporal action localization.
//!
//! The crate is split by concern:
//!
//! * [`tensor`]: the (C, T, H, W) tensor type and differentiable primitives.
//! * [`gradcheck`]: central finite-difference verification of analytic gradients.
//! * [`adapter`]: TIA, the tri-branch DST block and the full DSTA adapter,
//!   plus closed-form parameter and FLOP accounting.
//! * [`eval`]: tIoU, greedy matching, AP and mAP over tIoU thresholds.
//! * [`pipeline`]: stroke-to-interval conversion, frame-rate resampling,
//!   inactivity segmentation and dataset statistics.
//! * [`synth`]: a desk-scale synthetic benchmark that trains adapters end to end.

pub mod adapter;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod jsonl;
pub mod pipeline;
pub mod synth;
pub mod tensor;

pub use adapter::{Adapter, AdapterConfig, AdapterParams, FlopCount, ParamCount, Variant};
pub use error::{Error, Result};
pub use eval::{EvalReport, IntervalAnnotation, Proposal};
pub use tensor::{Axis, Dims4, ParamTensor, Tensor4};
