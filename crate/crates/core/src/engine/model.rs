use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Model parameters split into `L` ordered layers.
///
/// Layer 1 is the input side; layer `L` is the output layer, the first one
/// backpropagation reaches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayeredModel {
    layers: Vec<Vec<f64>>,
}

impl LayeredModel {
    pub fn new(layers: Vec<Vec<f64>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::DimensionMismatch("a model needs at least one layer".into()));
        }
        Ok(LayeredModel { layers })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        LayeredModel::new(dims.iter().map(|&d| vec![0.0; d]).collect())
    }

    /// Splits `flat` into consecutive segments of the given sizes.
    pub fn from_flat(flat: &[f64], dims: &[usize]) -> Result<Self> {
        let total: usize = dims.iter().sum();
        if total != flat.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} parameters for layer sizes summing to {total}",
                flat.len()
            )));
        }
        let mut offset = 0;
        let layers = dims
            .iter()
            .map(|&d| {
                let layer = flat[offset..offset + d].to_vec();
                offset += d;
                layer
            })
            .collect();
        LayeredModel::new(layers)
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        self.layers.iter().map(Vec::len).collect()
    }

    /// Layer `l`, 1-based.
    pub fn layer(&self, l: usize) -> &[f64] {
        &self.layers[l - 1]
    }

    pub fn layer_mut(&mut self, l: usize) -> &mut Vec<f64> {
        &mut self.layers[l - 1]
    }

    pub fn layers(&self) -> &[Vec<f64>] {
        &self.layers
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.layers.iter().flatten().copied().collect()
    }

    pub fn distance_sq(&self, flat: &[f64]) -> f64 {
        self.layers
            .iter()
            .flatten()
            .zip(flat)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn check_dims(&self, dims: &[usize]) -> Result<()> {
        if self.layer_dims() != dims {
            return Err(Error::DimensionMismatch(format!(
                "model layers {:?}, expected {:?}",
                self.layer_dims(),
                dims
            )));
        }
        Ok(())
    }
}

/// A federated learning problem: `U` users with local datasets and a layered
/// parameter space.
pub trait FederatedTask {
    fn num_users(&self) -> usize;

    fn layer_dims(&self) -> Vec<usize>;

    fn num_layers(&self) -> usize {
        self.layer_dims().len()
    }

    /// Number of local samples of `user`.
    fn local_size(&self, user: usize) -> usize;

    /// Mean gradient of `user`'s loss over `batch`, for layers
    /// `from_layer..=L` only, returned in that order.
    fn partial_gradient(
        &self,
        user: usize,
        model: &LayeredModel,
        batch: &[usize],
        from_layer: usize,
    ) -> Result<Vec<Vec<f64>>>;

    /// Mean loss of `user` over `batch`.
    fn batch_loss(&self, user: usize, model: &LayeredModel, batch: &[usize]) -> Result<f64>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_round_trip() {
        let flat: Vec<f64> = (0..7).map(f64::from).collect();
        let m = LayeredModel::from_flat(&flat, &[3, 1, 3]).unwrap();
        assert_eq!(m.layer(2), &[3.0]);
        assert_eq!(m.flatten(), flat);
        assert!(LayeredModel::from_flat(&flat, &[3, 3]).is_err());
        assert!(LayeredModel::new(vec![]).is_err());
    }
}
