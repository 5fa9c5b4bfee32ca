//! Simulates per-layer compute times for a handful of clients and compares
//! the observed frequency of layers nobody reached with the exact Poisson
//! product and the closed-form bound.

use adelfl::rng::{stream, Domain};
use adelfl::system::{
    batch_size, exact_no_contributor_prob, lemma1_bound, sample_depth, ClientProfile,
};

fn main() -> adelfl::Result<()> {
    let layers = 4;
    let deadline = 10.0;
    let m = 3.0;
    let clients = vec![
        ClientProfile::new(0, 5.0, 0.5, 1.0)?,
        ClientProfile::new(1, 12.0, 1.5, 1.0)?,
        ClientProfile::new(2, 30.0, 0.2, 1.0)?,
    ];
    let batches: Vec<u64> = clients
        .iter()
        .map(|c| batch_size(m, c, deadline))
        .collect::<adelfl::Result<_>>()?;
    println!("batch sizes: {batches:?}");

    let rounds = 200_000;
    let mut empty = vec![0usize; layers];
    for round in 0..rounds {
        let mut shallowest = layers + 1;
        for (u, (c, &s)) in clients.iter().zip(&batches).enumerate() {
            let mut rng = stream(1, Domain::Compute, u as u64, round);
            shallowest = shallowest.min(sample_depth(c, deadline, s, layers, &mut rng)?.reached_depth);
        }
        for slot in empty.iter_mut().take(shallowest - 1) {
            *slot += 1;
        }
    }

    println!("{:>3} {:>12} {:>12} {:>12}", "l", "observed", "exact", "bound");
    for l in 1..=layers {
        let exact = exact_no_contributor_prob(l, layers, &clients, m, deadline)?.value();
        let bound = lemma1_bound(l, layers, clients.len(), m, deadline)?.value();
        let observed = empty[l - 1] as f64 / rounds as f64;
        println!("{l:>3} {observed:>12.6} {exact:>12.6} {bound:>12.6}");
    }
    Ok(())
}
