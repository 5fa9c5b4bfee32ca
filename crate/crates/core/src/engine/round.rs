use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{
    aggregate_drop, aggregate_fedavg, aggregate_layerwise, contributor_sets, local_sgd_update,
    FederatedTask, LayeredModel, PartialUpdate,
};
use crate::error::{Error, Result};
use crate::gamma::Probability;
use crate::rng::{stream, Domain};
use crate::system::{
    batch_size, lemma1_bound, no_contributor_prob, rate_for_batch, sample_depth, sample_full_pass,
    ClientProfile, DepthSample,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    FedAvg,
    Drop,
    LayerWise,
}

/// How the layer-wise rule obtains `p^l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoContributorSource {
    /// Poisson product over the actual per-client rates.
    Exact,
    /// `Q(L + 1 − l, T/m)^U`; only defined for the scaled batch rule.
    Bound,
    /// Supplied values, one per layer.
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchRule {
    /// `⌊m P_u (T − B_u)/T⌋` with the schedule's `m`.
    Scaled,
    /// The same batch size for every client and round.
    Fixed(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundConfig {
    pub aggregation: Aggregation,
    pub batch_rule: BatchRule,
    pub p_source: NoContributorSource,
    pub local_iters: usize,
    pub weight_decay: f64,
    pub seed: u64,
    /// Test hook: every client completes exactly this many layers.
    pub forced_completed: Option<u64>,
}

impl RoundConfig {
    pub fn new(aggregation: Aggregation, batch_rule: BatchRule, seed: u64) -> Self {
        RoundConfig {
            aggregation,
            batch_rule,
            p_source: NoContributorSource::Exact,
            local_iters: 1,
            weight_decay: 0.0,
            seed,
            forced_completed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub round: usize,
    pub deadline: f64,
    /// Wall-clock time charged for the round.
    pub elapsed: f64,
    pub batch_sizes: Vec<u64>,
    pub depth_samples: Vec<DepthSample>,
    /// Client ids in `U^l`, `l = 1..=L`.
    pub contributor_sets: Vec<Vec<usize>>,
    pub no_contributor_probs: Vec<f64>,
    pub aggregate_model: LayeredModel,
}

impl RoundOutcome {
    pub fn mean_depth(&self) -> f64 {
        let n = self.depth_samples.len() as f64;
        self.depth_samples.iter().map(|d| d.reached_depth as f64).sum::<f64>() / n
    }
}

/// `iters` batches of `batch` indices drawn uniformly with replacement.
pub fn draw_batches<R: Rng + ?Sized>(
    rng: &mut R,
    local_size: usize,
    batch: u64,
    iters: usize,
) -> Vec<Vec<usize>> {
    (0..iters)
        .map(|_| (0..batch).map(|_| rng.random_range(0..local_size)).collect())
        .collect()
}

fn check_clients<T: FederatedTask + ?Sized>(task: &T, clients: &[ClientProfile]) -> Result<()> {
    if clients.len() != task.num_users() {
        return Err(Error::DimensionMismatch(format!(
            "{} client profiles for {} users",
            clients.len(),
            task.num_users()
        )));
    }
    Ok(())
}

fn batch_for(rule: BatchRule, m: f64, client: &ClientProfile, deadline: f64) -> Result<u64> {
    match rule {
        BatchRule::Scaled => batch_size(m, client, deadline),
        BatchRule::Fixed(0) => Err(Error::Config("fixed batch size must be ≥ 1".into())),
        BatchRule::Fixed(s) => Ok(s),
    }
}

fn local_update<T: FederatedTask + ?Sized>(
    task: &T,
    model: &LayeredModel,
    user: usize,
    batch: u64,
    depth: usize,
    eta: f64,
    round: usize,
    cfg: &RoundConfig,
) -> Result<PartialUpdate> {
    let size = task.local_size(user);
    if size == 0 {
        return Err(Error::EmptyDataset(user));
    }
    let mut rng = stream(cfg.seed, Domain::Batch, user as u64, round as u64);
    let batches = draw_batches(&mut rng, size, batch, cfg.local_iters.max(1));
    local_sgd_update(task, model, user, &batches, eta, depth, cfg.weight_decay)
}

/// One synchronous round under `deadline`: sample depths, run truncated
/// local SGD, and aggregate.
pub fn run_round<T: FederatedTask + ?Sized>(
    task: &T,
    model: &LayeredModel,
    clients: &[ClientProfile],
    deadline: f64,
    m: f64,
    round: usize,
    eta: f64,
    cfg: &RoundConfig,
) -> Result<RoundOutcome> {
    check_clients(task, clients)?;
    let num_layers = task.num_layers();
    let mut batch_sizes = Vec::with_capacity(clients.len());
    let mut samples = Vec::with_capacity(clients.len());
    let mut updates = Vec::with_capacity(clients.len());
    for (user, client) in clients.iter().enumerate() {
        let batch = batch_for(cfg.batch_rule, m, client, deadline)?;
        let sample = match cfg.forced_completed {
            Some(z) => DepthSample::from_completed(client.id, z, num_layers),
            None => {
                let mut rng = stream(cfg.seed, Domain::Compute, user as u64, round as u64);
                sample_depth(client, deadline, batch, num_layers, &mut rng)?
            }
        };
        updates.push(local_update(task, model, user, batch, sample.reached_depth, eta, round, cfg)?);
        batch_sizes.push(batch);
        samples.push(sample);
    }

    let p: Vec<Probability> = match &cfg.p_source {
        NoContributorSource::Fixed(values) => {
            if values.len() != num_layers {
                return Err(Error::DimensionMismatch(format!(
                    "{} fixed probabilities for {num_layers} layers",
                    values.len()
                )));
            }
            values.iter().map(|&v| Probability::new(v)).collect::<Result<_>>()?
        }
        NoContributorSource::Exact => {
            let rates: Vec<f64> = clients
                .iter()
                .zip(&batch_sizes)
                .map(|(c, &s)| rate_for_batch(c, s, deadline))
                .collect();
            (1..=num_layers)
                .map(|l| no_contributor_prob(l, num_layers, &rates))
                .collect::<Result<_>>()?
        }
        NoContributorSource::Bound => {
            if cfg.batch_rule != BatchRule::Scaled {
                return Err(Error::Config("the bound on p needs the scaled batch rule".into()));
            }
            (1..=num_layers)
                .map(|l| lemma1_bound(l, num_layers, clients.len(), m, deadline))
                .collect::<Result<_>>()?
        }
    };

    let aggregate_model = match cfg.aggregation {
        Aggregation::FedAvg => aggregate_fedavg(&updates, model)?,
        Aggregation::Drop => aggregate_drop(&updates, model)?,
        Aggregation::LayerWise => aggregate_layerwise(&updates, model, &p)?,
    };
    let sets = contributor_sets(&updates, num_layers)
        .into_iter()
        .map(|set| set.into_iter().map(|i| clients[i].id).collect())
        .collect();
    Ok(RoundOutcome {
        round,
        deadline,
        elapsed: deadline,
        batch_sizes,
        depth_samples: samples,
        contributor_sets: sets,
        no_contributor_probs: p.iter().map(|v| v.value()).collect(),
        aggregate_model,
    })
}

/// Per-client finish times `full pass + B_u` of a round with no deadline,
/// drawn from the same streams as [`run_round`].
pub fn wait_round_times(
    clients: &[ClientProfile],
    batch: u64,
    num_layers: usize,
    round: usize,
    seed: u64,
) -> Vec<f64> {
    clients
        .iter()
        .enumerate()
        .map(|(user, c)| {
            let mut rng = stream(seed, Domain::Compute, user as u64, round as u64);
            let pass = sample_full_pass(c, batch, num_layers, &mut rng);
            pass[num_layers - 1] + c.comm_time
        })
        .collect()
}

/// A FedAvg round that waits for every client; charged the slowest
/// client's finish time.
pub fn run_wait_round<T: FederatedTask + ?Sized>(
    task: &T,
    model: &LayeredModel,
    clients: &[ClientProfile],
    batch: u64,
    round: usize,
    eta: f64,
    cfg: &RoundConfig,
) -> Result<RoundOutcome> {
    check_clients(task, clients)?;
    if batch == 0 {
        return Err(Error::Config("fixed batch size must be ≥ 1".into()));
    }
    let num_layers = task.num_layers();
    let mut samples = Vec::with_capacity(clients.len());
    let mut updates = Vec::with_capacity(clients.len());
    let mut elapsed: f64 = 0.0;
    for (user, client) in clients.iter().enumerate() {
        let mut rng = stream(cfg.seed, Domain::Compute, user as u64, round as u64);
        let pass = sample_full_pass(client, batch, num_layers, &mut rng);
        elapsed = elapsed.max(pass[num_layers - 1] + client.comm_time);
        samples.push(DepthSample {
            client_id: client.id,
            layers_completed: num_layers as u64,
            reached_depth: 1,
            layer_finish_times: pass,
        });
        updates.push(local_update(task, model, user, batch, 1, eta, round, cfg)?);
    }
    let aggregate_model = aggregate_fedavg(&updates, model)?;
    let everyone: Vec<usize> = clients.iter().map(|c| c.id).collect();
    Ok(RoundOutcome {
        round,
        deadline: elapsed,
        elapsed,
        batch_sizes: vec![batch; clients.len()],
        depth_samples: samples,
        contributor_sets: vec![everyone; num_layers],
        no_contributor_probs: vec![0.0; num_layers],
        aggregate_model,
    })
}
