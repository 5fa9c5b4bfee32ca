use adelfl::rng::{stream, Domain};
use adelfl::system::{
    batch_size, exact_no_contributor_prob, lemma1_bound, poisson_rate, sample_depth, ClientProfile,
};
use proptest::prelude::*;

fn feasible_case() -> impl Strategy<Value = (ClientProfile, f64, f64)> {
    (0.5f64..50.0, 0.0f64..5.0, 0.1f64..20.0, 1.0f64..10.0).prop_map(|(p, b, extra, slack)| {
        let client = ClientProfile::new(0, p, b, 0.0).unwrap();
        let deadline = b + extra;
        // smallest m giving a batch of one, times a slack factor
        let m = slack * deadline / (p * (deadline - b));
        (client, deadline, m)
    })
}

proptest! {
    #[test]
    fn batch_is_the_floor((client, deadline, m) in feasible_case()) {
        let s = batch_size(m, &client, deadline).unwrap();
        let value = m * client.compute_rate * (deadline - client.comm_time) / deadline;
        prop_assert!(s >= 1);
        prop_assert_eq!(s, value.floor() as u64);
    }

    #[test]
    fn rate_at_least_deadline_over_m((client, deadline, m) in feasible_case()) {
        let lambda = poisson_rate(m, &client, deadline).unwrap();
        prop_assert!(lambda >= deadline / m * (1.0 - 1e-12));
        let s = batch_size(m, &client, deadline).unwrap() as f64;
        let direct = client.compute_rate / s * (deadline - client.comm_time);
        prop_assert!((lambda - direct).abs() <= 1e-12 * direct.max(1.0));
    }

    #[test]
    fn exact_probability_below_bound_and_decreasing(
        rates in prop::collection::vec(0.5f64..40.0, 1..8),
        comms in prop::collection::vec(0.0f64..2.0, 8),
        layers in 1usize..8,
        ratio in 0.3f64..6.0,
    ) {
        let deadline = 10.0;
        let m = deadline / ratio;
        let clients: Vec<ClientProfile> = rates
            .iter()
            .zip(&comms)
            .enumerate()
            .map(|(u, (&p, &b))| {
                // push P up so every client has a batch of at least one
                let min_p = deadline / (m * (deadline - b));
                ClientProfile::new(u, p.max(min_p * 1.001), b, 0.0).unwrap()
            })
            .collect();
        let mut prev = 1.0;
        for l in 1..=layers {
            let exact = exact_no_contributor_prob(l, layers, &clients, m, deadline).unwrap().value();
            let bound = lemma1_bound(l, layers, clients.len(), m, deadline).unwrap().value();
            prop_assert!(exact <= bound + 1e-12);
            prop_assert!(exact <= prev);
            prev = exact;
        }
    }

    #[test]
    fn depth_samples_are_consistent(
        (client, deadline, m) in feasible_case(),
        layers in 1usize..10,
        seed in any::<u64>(),
    ) {
        let s = batch_size(m, &client, deadline).unwrap();
        let mut rng = stream(seed, Domain::Compute, 0, 0);
        let d = sample_depth(&client, deadline, s, layers, &mut rng).unwrap();
        prop_assert_eq!(d.reached_depth, (layers as u64 + 1).saturating_sub(d.layers_completed).max(1) as usize);
        prop_assert_eq!(d.layer_finish_times.len() as u64, d.layers_completed.min(layers as u64));
        prop_assert!(d.layer_finish_times.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(d.layer_finish_times.iter().all(|&t| t <= deadline - client.comm_time));
        let mut again = stream(seed, Domain::Compute, 0, 0);
        prop_assert_eq!(d, sample_depth(&client, deadline, s, layers, &mut again).unwrap());
    }
}
