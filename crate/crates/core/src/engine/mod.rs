//! Federated training core: depth-truncated local SGD and the three
//! server-side aggregation rules.

mod aggregate;
mod model;
mod round;
mod update;

pub use aggregate::{aggregate_drop, aggregate_fedavg, aggregate_layerwise, contributor_sets};
pub use model::{FederatedTask, LayeredModel};
pub use round::{
    draw_batches, run_round, run_wait_round, wait_round_times, Aggregation, BatchRule, NoContributorSource,
    RoundConfig, RoundOutcome,
};
pub use update::{local_sgd_update, PartialUpdate};
