//! Aggregating partial updates layer by layer, against FedAvg and dropping
//! stragglers.

use adelfl::engine::{
    aggregate_drop, aggregate_fedavg, aggregate_layerwise, LayeredModel, PartialUpdate,
};
use adelfl::gamma::Probability;

fn main() -> adelfl::Result<()> {
    let prev = LayeredModel::new(vec![vec![0.0, 0.0], vec![0.0], vec![0.0]])?;
    let local = |v: f64| vec![vec![v, v], vec![v], vec![v]];
    let full = vec![
        PartialUpdate { client_id: 0, reached_depth: 1, layer_params: local(1.0) },
        PartialUpdate { client_id: 1, reached_depth: 1, layer_params: local(2.0) },
        PartialUpdate { client_id: 2, reached_depth: 1, layer_params: local(6.0) },
    ];
    println!("fedavg (everyone finished): {:?}", aggregate_fedavg(&full, &prev)?.layers());

    // client 1 only reached layer 2, client 2 only the output layer
    let partial = vec![full[0].clone(), full[1].truncated(2), full[2].truncated(3)];
    println!("drop stragglers:            {:?}", aggregate_drop(&partial, &prev)?.layers());

    let p: Vec<Probability> = [0.05, 0.01, 0.0]
        .iter()
        .map(|&v| Probability::new(v))
        .collect::<adelfl::Result<_>>()?;
    println!("layer-wise, corrected:      {:?}", aggregate_layerwise(&partial, &prev, &p)?.layers());
    Ok(())
}
