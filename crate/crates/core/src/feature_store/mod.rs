//! Embedding caches (`.sfew`), class tables, and per-class center targets.

mod cache;
mod centers;
mod class_table;
pub mod kmeans;

pub use cache::{
    read_cache, write_cache, DType, FeatureCache, FeatureCacheHeader, FeatureRecord, MAGIC,
    VERSION,
};
pub use centers::{class_centers, cluster_centers, ClassCenterSet};
pub use class_table::{ClassEntry, ClassTable};

/// Split holding the classes used for training the alignment network.
pub const BASE_SPLIT: &str = "base";
pub const VAL_SPLIT: &str = "val";
pub const NOVEL_SPLIT: &str = "novel";
