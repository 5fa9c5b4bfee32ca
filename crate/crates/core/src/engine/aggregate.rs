use crate::engine::{LayeredModel, PartialUpdate};
use crate::error::{Error, Result};
use crate::gamma::Probability;

/// `U^l` for `l = 1..=L`: indices into `updates` of the clients that reached
/// layer `l`. Nested: `U^l ⊆ U^{l+1}`.
pub fn contributor_sets(updates: &[PartialUpdate], num_layers: usize) -> Vec<Vec<usize>> {
    (1..=num_layers)
        .map(|l| {
            updates
                .iter()
                .enumerate()
                .filter(|(_, u)| u.reached_depth <= l)
                .map(|(i, _)| i)
                .collect()
        })
        .collect()
}

fn layer_mean(updates: &[PartialUpdate], members: &[usize], l: usize, dim: usize) -> Result<Vec<f64>> {
    let mut sum = vec![0.0; dim];
    for &i in members {
        let params = updates[i].layer(l).ok_or(Error::MissingClient {
            client: updates[i].client_id,
            depth: updates[i].reached_depth,
        })?;
        if params.len() != dim {
            return Err(Error::DimensionMismatch(format!(
                "client {} layer {l} has {} parameters, expected {dim}",
                updates[i].client_id,
                params.len()
            )));
        }
        for (s, v) in sum.iter_mut().zip(params) {
            *s += v;
        }
    }
    let n = members.len() as f64;
    Ok(sum.into_iter().map(|s| s / n).collect())
}

fn check_layers(updates: &[PartialUpdate], prev: &LayeredModel) -> Result<()> {
    let l1 = prev.num_layers() + 1;
    for u in updates {
        if u.reached_depth < 1 || u.reached_depth > l1 || u.layer_params.len() != l1 - u.reached_depth {
            return Err(Error::DimensionMismatch(format!(
                "client {} update does not match a {}-layer model",
                u.client_id,
                prev.num_layers()
            )));
        }
    }
    Ok(())
}

/// Plain average of complete client models.
pub fn aggregate_fedavg(updates: &[PartialUpdate], prev: &LayeredModel) -> Result<LayeredModel> {
    check_layers(updates, prev)?;
    if updates.is_empty() {
        return Err(Error::Domain("no client updates".into()));
    }
    if let Some(u) = updates.iter().find(|u| !u.is_complete()) {
        return Err(Error::MissingClient {
            client: u.client_id,
            depth: u.reached_depth,
        });
    }
    let all: Vec<usize> = (0..updates.len()).collect();
    let layers = (1..=prev.num_layers())
        .map(|l| layer_mean(updates, &all, l, prev.layer(l).len()))
        .collect::<Result<Vec<_>>>()?;
    LayeredModel::new(layers)
}

/// Average over the clients that finished every layer; `prev` if none did.
pub fn aggregate_drop(updates: &[PartialUpdate], prev: &LayeredModel) -> Result<LayeredModel> {
    check_layers(updates, prev)?;
    let done: Vec<usize> = (0..updates.len()).filter(|&i| updates[i].is_complete()).collect();
    if done.is_empty() {
        return Ok(prev.clone());
    }
    let layers = (1..=prev.num_layers())
        .map(|l| layer_mean(updates, &done, l, prev.layer(l).len()))
        .collect::<Result<Vec<_>>>()?;
    LayeredModel::new(layers)
}

/// Per-layer bias-corrected average:
/// `w̃^l = prev^l` if `U^l` is empty, otherwise
/// `(mean_{U^l} w_u^l − p^l prev^l) / (1 − p^l)`.
pub fn aggregate_layerwise(
    updates: &[PartialUpdate],
    prev: &LayeredModel,
    p: &[Probability],
) -> Result<LayeredModel> {
    check_layers(updates, prev)?;
    let num_layers = prev.num_layers();
    if p.len() != num_layers {
        return Err(Error::DimensionMismatch(format!(
            "{} probabilities for {num_layers} layers",
            p.len()
        )));
    }
    for (l, pl) in p.iter().enumerate() {
        if pl.value() >= 1.0 {
            return Err(Error::BiasCorrection {
                layer: l + 1,
                p: pl.value(),
            });
        }
    }
    let sets = contributor_sets(updates, num_layers);
    let mut layers = Vec::with_capacity(num_layers);
    for l in 1..=num_layers {
        let members = &sets[l - 1];
        let old = prev.layer(l);
        if members.is_empty() {
            layers.push(old.to_vec());
            continue;
        }
        let mean = layer_mean(updates, members, l, old.len())?;
        let pl = p[l - 1].value();
        if pl == 0.0 {
            layers.push(mean);
            continue;
        }
        let scale = 1.0 / (1.0 - pl);
        layers.push(
            mean.iter()
                .zip(old)
                .map(|(m, w)| scale * (m - pl * w))
                .collect(),
        );
    }
    LayeredModel::new(layers)
}
