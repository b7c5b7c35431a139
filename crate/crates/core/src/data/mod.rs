//! Datasets, synthetic and IDX sources, and non-IID partitioning.

mod blobs;
mod dataset;
pub mod idx;
pub mod partition;

pub use blobs::{generate_blobs, test_per_class, Blobs};
pub use dataset::{entropy, label_distribution, ClientDataset, Dataset, LabelDistribution};
pub use idx::load_idx;
pub use partition::{dirichlet_partition, Partition, PartitionRecord, PartitionSpec};
