#![allow(dead_code)]

use adelfl::cost::{AnalysisParams, LrSchedule};
use adelfl::rng::{stream, Domain};
use adelfl::scheduler::{Parameterization, ScheduleSearchSpec};
use adelfl::system::ClientProfile;
use rand::Rng;

pub struct RandomSpec {
    pub spec: ScheduleSearchSpec,
    pub clients: Vec<ClientProfile>,
    pub params: AnalysisParams,
}

/// Draws a random scheduling problem; retries until the search space is
/// non-empty.
pub fn random_spec(index: u64) -> RandomSpec {
    let mut rng = stream(0x5eed, Domain::Verify, 900, index);
    loop {
        let users = rng.random_range(2..=6);
        let layers = rng.random_range(2..=5);
        let rounds = rng.random_range(2..=8);
        let clients: Vec<ClientProfile> = (0..users)
            .map(|u| {
                ClientProfile::new(
                    u,
                    rng.random_range(5.0..50.0),
                    rng.random_range(0.0..1.0),
                    rng.random_range(0.1..2.0),
                )
                .unwrap()
            })
            .collect();
        let rho_c = rng.random_range(0.2..1.0);
        let rho_s = rho_c * rng.random_range(1.0..3.0);
        let params = AnalysisParams {
            rho_c,
            rho_s,
            grad_bound_sq: rng.random_range(0.01..1.0),
            het_gap: rng.random_range(0.0..0.5),
            delta_1: rng.random_range(1.0..10.0),
            lr: LrSchedule::InverseDecay {
                eta0: rng.random_range(0.3..1.0) / (2.0 * rho_s),
            },
            num_layers: layers,
            num_users: users,
        };
        let t_max = rounds as f64 * rng.random_range(2.0..12.0);
        let spec = ScheduleSearchSpec::new(t_max, rounds);
        if Parameterization::new(&spec, &clients, &params).is_ok() {
            return RandomSpec { spec, clients, params };
        }
    }
}
