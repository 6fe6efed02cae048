//! Residual classification networks with pluggable channel attention,
//! parameter/FLOP accounting and checkpoints.

mod arch;
mod block;
pub mod checkpoint;
mod model;
mod summary;

pub use arch::{ArchSpec, BlockKind, StageSpec, StemSpec, PRESETS};
pub use block::{Block, BlockTrace, ConvBn};
pub use model::{Network, Trace};
pub use summary::{conv_flops, linear_flops, LayerRow, ModelSummary};
