//! Skeleton-aware building blocks.

pub mod conv;
pub mod modulation;
pub mod skeleton;

pub use conv::{tap_index, Conv1d, LEAKY_SLOPE};
pub use modulation::{ModulationBlock, ModulationKind, SkeletonIdMap};
pub use skeleton::{build_neighborhoods, motion_group_sizes, SkeletonNeighborhoods};
