use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cost::LrSchedule;
use crate::error::{Error, Result};
use crate::scheduler::{ScheduleSearchSpec, TrustRegionParams};
use crate::system::ClientProfile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskSpec {
    Quadratic {
        users: usize,
        dim: usize,
        heterogeneity: f64,
        num_layers: usize,
        /// Seed for the task and client profiles; the run seed when absent.
        #[serde(default)]
        scenario_seed: Option<u64>,
    },
    Mlp {
        /// Layer widths from input to output.
        widths: Vec<usize>,
        data: DataSpec,
        users: usize,
        #[serde(default)]
        skew: f64,
        #[serde(default = "default_holdout")]
        holdout: f64,
        #[serde(default)]
        scenario_seed: Option<u64>,
    },
}

fn default_holdout() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSpec {
    Idx {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default)]
        limit: Option<usize>,
    },
    Synthetic {
        samples: usize,
        classes: usize,
        #[serde(default = "default_spread")]
        spread: f64,
    },
}

fn default_spread() -> f64 {
    0.15
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClientSpec {
    Explicit { profiles: Vec<ClientProfile> },
    /// Log-uniform compute rates and uniform upload times.
    Generated {
        compute_rate: [f64; 2],
        comm_time: [f64; 2],
        #[serde(default)]
        noise_scale_sq: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Adel,
    SalfFixed,
    Drop,
    Wait,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Adel => "adel",
            Method::SalfFixed => "salf_fixed",
            Method::Drop => "drop",
            Method::Wait => "wait",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown method {s:?}")))
    }
}

/// Analysis constants supplied by hand (required for MLP tasks).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GivenConstants {
    pub rho_c: f64,
    pub rho_s: f64,
    pub grad_bound_sq: f64,
    pub het_gap: f64,
    pub delta_1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeriveSettings {
    /// Radius of the parameter ball around `w_opt`; `‖w_1 − w_opt‖` if absent.
    pub radius: Option<f64>,
    pub samples: usize,
}

impl Default for DeriveSettings {
    fn default() -> Self {
        DeriveSettings {
            radius: None,
            samples: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchedulerConfig {
    pub m_bounds: Option<[f64; 2]>,
    pub floor_margin: Option<f64>,
    pub tr: TrustRegionParams,
    pub multistart_count: usize,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            m_bounds: None,
            floor_margin: None,
            tr: TrustRegionParams::default(),
            multistart_count: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PSource {
    #[default]
    Exact,
    Bound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: TaskSpec,
    pub clients: ClientSpec,
    pub rounds: usize,
    pub t_max: f64,
    #[serde(default = "default_method")]
    pub method: Method,
    pub lr: LrSchedule,
    #[serde(default = "default_local_iters")]
    pub local_iters: usize,
    #[serde(default)]
    pub weight_decay: f64,
    /// Hand-set constants; derived from the task when absent.
    #[serde(default)]
    pub analysis: Option<GivenConstants>,
    #[serde(default)]
    pub derive: DeriveSettings,
    #[serde(default)]
    pub scheduler: SchedulerConfig,
    /// Fixed-batch methods use `⌊m_ref · median P_u⌋` samples per client.
    #[serde(default)]
    pub m_ref: Option<f64>,
    #[serde(default)]
    pub p_source: PSource,
    #[serde(default)]
    pub seed: u64,
    /// Methods and seeds for comparisons.
    #[serde(default)]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    /// Extra budgets for comparisons; `t_max` alone when empty.
    #[serde(default)]
    pub t_max_values: Vec<f64>,
}

fn default_method() -> Method {
    Method::Adel
}

fn default_local_iters() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 || !(self.t_max.is_finite() && self.t_max > 0.0) {
            return Err(Error::Config("need rounds ≥ 1 and t_max > 0".into()));
        }
        if self.local_iters == 0 {
            return Err(Error::Config("local_iters must be ≥ 1".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight_decay must be ≥ 0".into()));
        }
        if !(self.lr.eta0() > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        match &self.task {
            TaskSpec::Quadratic { users, dim, num_layers, heterogeneity, .. } => {
                if *users < 2 || *dim < 1 || *num_layers < 1 || *num_layers > *dim || !(*heterogeneity >= 0.0) {
                    return Err(Error::Config("invalid quadratic task".into()));
                }
            }
            TaskSpec::Mlp { widths, users, skew, holdout, .. } => {
                if widths.len() < 2 || *users < 1 || !(0.0..=1.0).contains(skew) || !(0.0..1.0).contains(holdout) {
                    return Err(Error::Config("invalid MLP task".into()));
                }
            }
        }
        if let ClientSpec::Generated { compute_rate, comm_time, noise_scale_sq } = &self.clients {
            let ok = compute_rate[0] > 0.0
                && compute_rate[1] >= compute_rate[0]
                && comm_time[0] >= 0.0
                && comm_time[1] >= comm_time[0]
                && *noise_scale_sq >= 0.0;
            if !ok {
                return Err(Error::Config("invalid client generator ranges".into()));
            }
        }
        for method in self.methods.iter().copied().chain([self.method]) {
            self.validate_method(method)?;
        }
        Ok(())
    }

    pub fn validate_method(&self, method: Method) -> Result<()> {
        match method {
            Method::Adel => {
                if self.analysis.is_none() && matches!(self.task, TaskSpec::Mlp { .. }) {
                    return Err(Error::Config(
                        "adel on an MLP task needs hand-set analysis constants".into(),
                    ));
                }
            }
            Method::SalfFixed | Method::Drop | Method::Wait => match self.m_ref {
                Some(m) if m > 0.0 => {}
                _ => {
                    return Err(Error::Config(format!(
                        "method {} needs a positive m_ref",
                        method.name()
                    )))
                }
            },
        }
        Ok(())
    }

    pub fn search_spec(&self, t_max: f64) -> ScheduleSearchSpec {
        let mut spec = ScheduleSearchSpec::new(t_max, self.rounds);
        if let Some(bounds) = self.scheduler.m_bounds {
            spec.m_bounds = bounds;
        }
        spec.floor_margin = self.scheduler.floor_margin;
        spec.tr = self.scheduler.tr.clone();
        spec.multistart_count = self.scheduler.multistart_count;
        spec
    }

    pub fn num_layers(&self) -> usize {
        match &self.task {
            TaskSpec::Quadratic { num_layers, .. } => *num_layers,
            TaskSpec::Mlp { widths, .. } => widths.len() - 1,
        }
    }

    pub fn scenario_seed(&self, seed: u64) -> u64 {
        match &self.task {
            TaskSpec::Quadratic { scenario_seed, .. } | TaskSpec::Mlp { scenario_seed, .. } => {
                scenario_seed.unwrap_or(seed)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "task": {"kind": "quadratic", "users": 3, "dim": 4, "heterogeneity": 0.2, "num_layers": 2},
        "clients": {"kind": "generated", "compute_rate": [5, 20], "comm_time": [0, 1]},
        "rounds": 5, "t_max": 50,
        "lr": {"kind": "inverse_decay", "eta0": 0.1}
    }"#;

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.method, Method::Adel);
        assert_eq!(c.local_iters, 1);
        assert_eq!(c.scheduler.multistart_count, 8);
        assert_eq!(c.p_source, PSource::Exact);
    }

    #[test]
    fn fixed_batch_methods_need_reference_scale() {
        let text = MINIMAL.replace("\"rounds\"", "\"method\": \"drop\", \"rounds\"");
        assert!(ExperimentConfig::from_json(&text).unwrap_err().is_config());
        let text = MINIMAL.replace("\"rounds\"", "\"method\": \"drop\", \"m_ref\": 2.0, \"rounds\"");
        assert!(ExperimentConfig::from_json(&text).is_ok());
    }

    #[test]
    fn method_names_parse() {
        for m in [Method::Adel, Method::SalfFixed, Method::Drop, Method::Wait] {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("fedprox".parse::<Method>().is_err());
    }
}
