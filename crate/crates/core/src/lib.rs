//! Training-free co-salient object detection over precomputed per-image
//! inputs.
//!
//! Each image's raw proposals pass through [`qmg`] and then [`isf`]. Across
//! the group, [`ips`] picks the candidate per image that agrees best with the
//! other images. [`pipeline`] drives a whole group and [`interchange`] holds
//! the on-disk format.

pub mod attention;
pub mod config;
pub mod error;
pub mod interchange;
pub mod ips;
pub mod isf;
pub mod mask;
pub mod metrics;
pub mod pipeline;
pub mod qmg;
pub mod synth;
pub mod types;
pub mod viz;

pub use attention::AttentionMap;
pub use config::{config_load, ConfigOverrides, PipelineConfig, TieBreakPolicy};
pub use error::{Error, Result};
pub use ips::{CoSaliencyResult, PrototypeBank};
pub use isf::SalientMask;
pub use mask::BinaryMask;
pub use pipeline::{run_group, Mode, RunOutcome, RunReport};
pub use qmg::ScoredProposal;
pub use types::{GroupRecord, ImageRecord, MaskProposal, PrototypeVector};
