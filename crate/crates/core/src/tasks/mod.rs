//! Concrete federated tasks and their data.

mod data;
mod mlp;
mod quadratic;

pub use data::{
    make_synthetic_classification, partition_label_skew, read_idx, write_idx,
    ClassificationDataset, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC,
};
pub use mlp::MlpTask;
pub use quadratic::{make_quadratic_task, segment_dims, QuadraticConstants, QuadraticFederatedTask};
