use serde::{Deserialize, Serialize};

use crate::engine::{FederatedTask, LayeredModel};
use crate::error::{Error, Result};

/// The layers a client managed to update in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialUpdate {
    pub client_id: usize,
    /// `d`: the update holds layers `d..=L`; `L + 1` means none.
    pub reached_depth: usize,
    pub layer_params: Vec<Vec<f64>>,
}

impl PartialUpdate {
    /// Parameters of layer `l`, if this client reached it.
    pub fn layer(&self, l: usize) -> Option<&[f64]> {
        if l < self.reached_depth {
            return None;
        }
        self.layer_params.get(l - self.reached_depth).map(Vec::as_slice)
    }

    pub fn is_complete(&self) -> bool {
        self.reached_depth == 1
    }

    /// The same update restricted to layers `depth..=L`.
    pub fn truncated(&self, depth: usize) -> PartialUpdate {
        let depth = depth.max(self.reached_depth);
        PartialUpdate {
            client_id: self.client_id,
            reached_depth: depth,
            layer_params: self.layer_params[depth - self.reached_depth..].to_vec(),
        }
    }
}

/// Runs one local SGD step per entry of `batches` on layers `depth..=L`:
/// `w^l ← w^l − η(∇_l F_u(w; batch) + weight_decay · w^l)`.
pub fn local_sgd_update<T: FederatedTask + ?Sized>(
    task: &T,
    model: &LayeredModel,
    client: usize,
    batches: &[Vec<usize>],
    eta: f64,
    depth: usize,
    weight_decay: f64,
) -> Result<PartialUpdate> {
    let dims = task.layer_dims();
    model.check_dims(&dims)?;
    let num_layers = dims.len();
    if depth < 1 || depth > num_layers + 1 {
        return Err(Error::Domain(format!("depth {depth} outside [1, {}]", num_layers + 1)));
    }
    if batches.is_empty() {
        return Err(Error::Domain("at least one local iteration required".into()));
    }
    if task.local_size(client) == 0 {
        return Err(Error::EmptyDataset(client));
    }
    if depth == num_layers + 1 {
        return Ok(PartialUpdate {
            client_id: client,
            reached_depth: depth,
            layer_params: Vec::new(),
        });
    }
    let mut local = model.clone();
    for batch in batches {
        let grads = task.partial_gradient(client, &local, batch, depth)?;
        for (offset, grad) in grads.iter().enumerate() {
            let layer = local.layer_mut(depth + offset);
            for (w, g) in layer.iter_mut().zip(grad) {
                *w -= eta * (g + weight_decay * *w);
            }
        }
    }
    Ok(PartialUpdate {
        client_id: client,
        reached_depth: depth,
        layer_params: local.layers()[depth - 1..].to_vec(),
    })
}
