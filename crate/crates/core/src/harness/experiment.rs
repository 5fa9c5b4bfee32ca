use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cost::AnalysisParams;
use crate::engine::{
    run_round, run_wait_round, Aggregation, BatchRule, FederatedTask, LayeredModel,
    NoContributorSource, RoundConfig, RoundOutcome,
};
use crate::error::{Error, Result};
use crate::harness::config::{ClientSpec, DataSpec, ExperimentConfig, Method, PSource, TaskSpec};
use crate::rng::{stream, Domain};
use crate::scheduler::{optimize_schedule, ScheduleSolution};
use crate::system::{ClientProfile, Schedule};
use crate::tasks::{
    make_quadratic_task, make_synthetic_classification, partition_label_skew, read_idx, MlpTask,
    QuadraticFederatedTask,
};

/// Slack on the time budget.
pub const BUDGET_SLACK: f64 = 1e-9;

#[derive(Debug, Clone)]
pub enum TaskInstance {
    Quadratic(QuadraticFederatedTask),
    Mlp(MlpTask),
}

impl FederatedTask for TaskInstance {
    fn num_users(&self) -> usize {
        match self {
            TaskInstance::Quadratic(t) => t.num_users(),
            TaskInstance::Mlp(t) => t.num_users(),
        }
    }

    fn layer_dims(&self) -> Vec<usize> {
        match self {
            TaskInstance::Quadratic(t) => t.layer_dims(),
            TaskInstance::Mlp(t) => t.layer_dims(),
        }
    }

    fn local_size(&self, user: usize) -> usize {
        match self {
            TaskInstance::Quadratic(t) => t.local_size(user),
            TaskInstance::Mlp(t) => t.local_size(user),
        }
    }

    fn partial_gradient(
        &self,
        user: usize,
        model: &LayeredModel,
        batch: &[usize],
        from_layer: usize,
    ) -> Result<Vec<Vec<f64>>> {
        match self {
            TaskInstance::Quadratic(t) => t.partial_gradient(user, model, batch, from_layer),
            TaskInstance::Mlp(t) => t.partial_gradient(user, model, batch, from_layer),
        }
    }

    fn batch_loss(&self, user: usize, model: &LayeredModel, batch: &[usize]) -> Result<f64> {
        match self {
            TaskInstance::Quadratic(t) => t.batch_loss(user, model, batch),
            TaskInstance::Mlp(t) => t.batch_loss(user, model, batch),
        }
    }
}

/// Everything a run needs besides the method: task, clients, constants and
/// the initial model.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub task: TaskInstance,
    pub clients: Vec<ClientProfile>,
    pub analysis: Option<AnalysisParams>,
    pub initial_model: LayeredModel,
    pub w_opt: Option<Vec<f64>>,
}

fn generate_clients(spec: &ClientSpec, users: usize, seed: u64) -> Result<Vec<ClientProfile>> {
    match spec {
        ClientSpec::Explicit { profiles } => {
            if profiles.len() != users {
                return Err(Error::Config(format!(
                    "{} client profiles for {users} users",
                    profiles.len()
                )));
            }
            for p in profiles {
                p.validate().map_err(|e| Error::Config(e.to_string()))?;
            }
            Ok(profiles.clone())
        }
        ClientSpec::Generated {
            compute_rate,
            comm_time,
            noise_scale_sq,
        } => {
            let mut rng = stream(seed, Domain::Clients, 0, 0);
            let (ln_lo, ln_hi) = (compute_rate[0].ln(), compute_rate[1].ln());
            (0..users)
                .map(|u| {
                    let rate = (ln_lo + (ln_hi - ln_lo) * rng.random::<f64>()).exp();
                    let comm = comm_time[0] + (comm_time[1] - comm_time[0]) * rng.random::<f64>();
                    ClientProfile::new(u, rate, comm, *noise_scale_sq)
                })
                .collect()
        }
    }
}

impl Scenario {
    pub fn build(config: &ExperimentConfig, seed: u64) -> Result<Scenario> {
        let scenario_seed = config.scenario_seed(seed);
        match &config.task {
            TaskSpec::Quadratic {
                users,
                dim,
                heterogeneity,
                num_layers,
                ..
            } => {
                let task = make_quadratic_task(
                    *users,
                    *dim,
                    *heterogeneity,
                    *num_layers,
                    &mut stream(scenario_seed, Domain::Task, 0, 0),
                )?;
                let mut clients = generate_clients(&config.clients, *users, scenario_seed)?;
                let w1 = DVector::zeros(*dim);
                let analysis = match &config.analysis {
                    Some(given) => AnalysisParams {
                        rho_c: given.rho_c,
                        rho_s: given.rho_s,
                        grad_bound_sq: given.grad_bound_sq,
                        het_gap: given.het_gap,
                        delta_1: given.delta_1,
                        lr: config.lr,
                        num_layers: *num_layers,
                        num_users: *users,
                    },
                    None => {
                        let radius = config
                            .derive
                            .radius
                            .unwrap_or_else(|| (&w1 - task.w_opt()).norm());
                        let consts = task.derive_constants(
                            &w1,
                            radius,
                            config.derive.samples,
                            &mut stream(scenario_seed, Domain::Analysis, 0, 0),
                        )?;
                        for (c, &s) in clients.iter_mut().zip(&consts.noise_scale_sq) {
                            c.noise_scale_sq = s;
                        }
                        AnalysisParams {
                            rho_c: consts.rho_c,
                            rho_s: consts.rho_s,
                            grad_bound_sq: consts.grad_bound_sq,
                            het_gap: consts.het_gap,
                            delta_1: consts.delta_1,
                            lr: config.lr,
                            num_layers: *num_layers,
                            num_users: *users,
                        }
                    }
                };
                let initial_model = LayeredModel::from_flat(w1.as_slice(), &task.layer_dims())?;
                let w_opt = Some(task.w_opt().as_slice().to_vec());
                Ok(Scenario {
                    task: TaskInstance::Quadratic(task),
                    clients,
                    analysis: Some(analysis),
                    initial_model,
                    w_opt,
                })
            }
            TaskSpec::Mlp {
                widths,
                data,
                users,
                skew,
                holdout,
                ..
            } => {
                let dataset = match data {
                    DataSpec::Idx { images, labels, limit } => read_idx(images, labels, *limit)?,
                    DataSpec::Synthetic { samples, classes, spread } => make_synthetic_classification(
                        *samples,
                        widths[0],
                        *classes,
                        *spread,
                        &mut stream(scenario_seed, Domain::Task, 0, 0),
                    )?,
                };
                let (mut train, validation) =
                    dataset.split_holdout(*holdout, &mut stream(scenario_seed, Domain::Partition, 1, 0))?;
                train.partition = partition_label_skew(
                    &train.labels,
                    *users,
                    *skew,
                    &mut stream(scenario_seed, Domain::Partition, 0, 0),
                )?;
                let task = MlpTask::new(widths.clone(), train, validation)?;
                let clients = generate_clients(&config.clients, *users, scenario_seed)?;
                let analysis = config.analysis.as_ref().map(|given| AnalysisParams {
                    rho_c: given.rho_c,
                    rho_s: given.rho_s,
                    grad_bound_sq: given.grad_bound_sq,
                    het_gap: given.het_gap,
                    delta_1: given.delta_1,
                    lr: config.lr,
                    num_layers: widths.len() - 1,
                    num_users: *users,
                });
                let initial_model = task.init_model(&mut stream(scenario_seed, Domain::Init, 0, 0))?;
                Ok(Scenario {
                    task: TaskInstance::Mlp(task),
                    clients,
                    analysis,
                    initial_model,
                    w_opt: None,
                })
            }
        }
    }

    pub fn analysis(&self) -> Result<&AnalysisParams> {
        self.analysis
            .as_ref()
            .ok_or_else(|| Error::Config("no analysis constants for this task".into()))
    }

    pub fn distance_sq(&self, model: &LayeredModel) -> Option<f64> {
        self.w_opt.as_ref().map(|w| model.distance_sq(w))
    }

    pub fn accuracy(&self, model: &LayeredModel) -> Option<f64> {
        match &self.task {
            TaskInstance::Mlp(t) => Some(t.accuracy(model)),
            TaskInstance::Quadratic(_) => None,
        }
    }

    /// `⌊m_ref · median P_u⌋`.
    pub fn fixed_batch(&self, m_ref: f64) -> Result<u64> {
        let mut rates: Vec<f64> = self.clients.iter().map(|c| c.compute_rate).collect();
        rates.sort_by(f64::total_cmp);
        let n = rates.len();
        let median = if n % 2 == 1 {
            rates[n / 2]
        } else {
            0.5 * (rates[n / 2 - 1] + rates[n / 2])
        };
        let batch = (m_ref * median).floor();
        if batch < 1.0 {
            return Err(Error::Config(format!(
                "m_ref = {m_ref} gives an empty fixed batch"
            )));
        }
        Ok(batch as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLogRecord {
    pub round: usize,
    pub deadline: f64,
    pub cumulative_time: f64,
    pub distance_sq: Option<f64>,
    pub accuracy: Option<f64>,
    pub mean_depth: f64,
    /// `|U^l|` for `l = 1..=L`.
    pub contributors: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub method: Method,
    pub records: Vec<RoundLogRecord>,
    pub final_model: LayeredModel,
    pub schedule: Option<ScheduleSolution>,
}

impl ExperimentResult {
    pub fn final_distance_sq(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.distance_sq)
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.accuracy)
    }

    pub fn total_time(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.cumulative_time)
    }
}

/// Test and ablation hooks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOverrides {
    /// Every client completes this many layers each round.
    pub forced_completed: Option<u64>,
    /// Fixed `p^l` in place of the computed values.
    pub fixed_p: Option<Vec<f64>>,
    /// Use this schedule for `adel` instead of optimising one.
    pub schedule: Option<Schedule>,
}

/// Schedule and round settings for `method`.
fn plan(
    config: &ExperimentConfig,
    scenario: &Scenario,
    method: Method,
    t_max: f64,
    seed: u64,
    overrides: &RunOverrides,
) -> Result<(Option<ScheduleSolution>, Schedule, RoundConfig)> {
    let mut round_cfg = match method {
        Method::Adel => RoundConfig::new(Aggregation::LayerWise, BatchRule::Scaled, seed),
        Method::SalfFixed => RoundConfig::new(
            Aggregation::LayerWise,
            BatchRule::Fixed(scenario.fixed_batch(config.m_ref.unwrap_or(0.0))?),
            seed,
        ),
        Method::Drop => RoundConfig::new(
            Aggregation::Drop,
            BatchRule::Fixed(scenario.fixed_batch(config.m_ref.unwrap_or(0.0))?),
            seed,
        ),
        Method::Wait => RoundConfig::new(
            Aggregation::FedAvg,
            BatchRule::Fixed(scenario.fixed_batch(config.m_ref.unwrap_or(0.0))?),
            seed,
        ),
    };
    round_cfg.local_iters = config.local_iters;
    round_cfg.weight_decay = config.weight_decay;
    round_cfg.forced_completed = overrides.forced_completed;
    round_cfg.p_source = match (&overrides.fixed_p, config.p_source) {
        (Some(p), _) => NoContributorSource::Fixed(p.clone()),
        (None, PSource::Exact) => NoContributorSource::Exact,
        (None, PSource::Bound) if method == Method::Adel => NoContributorSource::Bound,
        (None, PSource::Bound) => NoContributorSource::Exact,
    };

    let (solution, schedule) = match (method, &overrides.schedule) {
        (Method::Adel, Some(s)) => (None, s.clone()),
        (Method::Adel, None) => {
            let solution = optimize_schedule(
                &config.search_spec(t_max),
                &scenario.clients,
                scenario.analysis()?,
                seed,
            )?;
            let schedule = solution.schedule.clone();
            (Some(solution), schedule)
        }
        _ => (None, Schedule::uniform(config.rounds, t_max, 1.0)),
    };
    if method != Method::Wait {
        schedule.validate(t_max, &scenario.clients)?;
    }
    Ok((solution, schedule, round_cfg))
}

/// Runs `method` for up to `R` rounds within `t_max`.
pub fn run_method(
    config: &ExperimentConfig,
    scenario: &Scenario,
    method: Method,
    t_max: f64,
    seed: u64,
    overrides: &RunOverrides,
) -> Result<ExperimentResult> {
    let (solution, schedule, round_cfg) = plan(config, scenario, method, t_max, seed, overrides)?;
    let mut model = scenario.initial_model.clone();
    let mut records = Vec::with_capacity(config.rounds);
    let mut clock = 0.0;
    for t in 1..=config.rounds {
        let eta = config.lr.eta(t);
        let outcome: RoundOutcome = match method {
            Method::Wait => {
                let BatchRule::Fixed(batch) = round_cfg.batch_rule else {
                    unreachable!("wait always uses a fixed batch")
                };
                let outcome = run_wait_round(&scenario.task, &model, &scenario.clients, batch, t, eta, &round_cfg)?;
                // a round that would overrun the budget is never started
                if clock + outcome.elapsed > t_max * (1.0 + BUDGET_SLACK) {
                    break;
                }
                outcome
            }
            _ => run_round(
                &scenario.task,
                &model,
                &scenario.clients,
                schedule.deadlines[t - 1],
                schedule.batch_scale,
                t,
                eta,
                &round_cfg,
            )?,
        };
        clock += outcome.elapsed;
        model = outcome.aggregate_model.clone();
        records.push(RoundLogRecord {
            round: t,
            deadline: outcome.deadline,
            cumulative_time: clock,
            distance_sq: scenario.distance_sq(&model),
            accuracy: scenario.accuracy(&model),
            mean_depth: outcome.mean_depth(),
            contributors: outcome.contributor_sets.iter().map(Vec::len).collect(),
        });
    }
    Ok(ExperimentResult {
        method,
        records,
        final_model: model,
        schedule: solution,
    })
}

/// Runs the configured method at the configured budget.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let scenario = Scenario::build(config, config.seed)?;
    run_method(config, &scenario, config.method, config.t_max, config.seed, &RunOverrides::default())
}
