//! Fully connected ReLU network with a softmax cross-entropy head.
//!
//! Layer `l` maps width `widths[l−1]` to `widths[l]`; its parameters are the
//! row-major weight matrix followed by the bias. Backpropagation starts at
//! the output layer and stops at the requested depth, so a truncated client
//! never pays for the input-side layers.

use rand::Rng;

use crate::engine::{FederatedTask, LayeredModel};
use crate::error::{Error, Result};
use crate::tasks::ClassificationDataset;

#[derive(Debug, Clone)]
pub struct MlpTask {
    widths: Vec<usize>,
    train: ClassificationDataset,
    validation: ClassificationDataset,
}

struct Forward {
    /// Activations `a_0 = x, a_1, …, a_{L−1}`.
    activations: Vec<Vec<f64>>,
    /// Softmax output.
    probs: Vec<f64>,
}

impl MlpTask {
    /// `train.partition` must assign samples to users.
    pub fn new(
        widths: Vec<usize>,
        train: ClassificationDataset,
        validation: ClassificationDataset,
    ) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Config(format!("invalid layer widths {widths:?}")));
        }
        if train.partition.is_empty() {
            return Err(Error::Config("training data has no user partition".into()));
        }
        for ds in [&train, &validation] {
            if !ds.is_empty() && ds.feature_dim() != widths[0] {
                return Err(Error::DimensionMismatch(format!(
                    "features have dimension {}, input width is {}",
                    ds.feature_dim(),
                    widths[0]
                )));
            }
            if ds.labels.iter().any(|&y| y >= widths[widths.len() - 1]) {
                return Err(Error::DimensionMismatch("label outside the output width".into()));
            }
        }
        Ok(MlpTask {
            widths,
            train,
            validation,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// He-uniform weights, zero biases.
    pub fn init_model<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<LayeredModel> {
        let layers = self
            .widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / fan_in as f64).sqrt();
                let mut params: Vec<f64> =
                    (0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)).collect();
                params.extend(std::iter::repeat_n(0.0, fan_out));
                params
            })
            .collect();
        LayeredModel::new(layers)
    }

    fn forward(&self, model: &LayeredModel, x: &[f64]) -> Forward {
        let num_layers = self.widths.len() - 1;
        let mut activations = vec![x.to_vec()];
        let mut logits = Vec::new();
        for l in 1..=num_layers {
            let (fan_in, fan_out) = (self.widths[l - 1], self.widths[l]);
            let params = model.layer(l);
            let input = &activations[l - 1];
            let z: Vec<f64> = (0..fan_out)
                .map(|j| {
                    let row = &params[j * fan_in..(j + 1) * fan_in];
                    row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>() + params[fan_in * fan_out + j]
                })
                .collect();
            if l < num_layers {
                activations.push(z.into_iter().map(|v| v.max(0.0)).collect());
            } else {
                logits = z;
            }
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = exp.iter().sum();
        Forward {
            activations,
            probs: exp.into_iter().map(|e| e / total).collect(),
        }
    }

    fn sample_loss(&self, model: &LayeredModel, x: &[f64], y: usize) -> f64 {
        -self.forward(model, x).probs[y].max(1e-300).ln()
    }

    /// Adds the gradient of one sample's loss for layers `from_layer..=L`
    /// into `acc` (indexed from `from_layer`).
    fn accumulate_gradient(
        &self,
        model: &LayeredModel,
        x: &[f64],
        y: usize,
        from_layer: usize,
        acc: &mut [Vec<f64>],
    ) {
        let num_layers = self.widths.len() - 1;
        let fwd = self.forward(model, x);
        let mut delta = fwd.probs;
        delta[y] -= 1.0;
        for l in (from_layer..=num_layers).rev() {
            let (fan_in, fan_out) = (self.widths[l - 1], self.widths[l]);
            let input = &fwd.activations[l - 1];
            let grad = &mut acc[l - from_layer];
            for j in 0..fan_out {
                let row = &mut grad[j * fan_in..(j + 1) * fan_in];
                for (g, a) in row.iter_mut().zip(input) {
                    *g += delta[j] * a;
                }
                grad[fan_in * fan_out + j] += delta[j];
            }
            if l > from_layer {
                let params = model.layer(l);
                delta = (0..fan_in)
                    .map(|i| {
                        if input[i] <= 0.0 {
                            return 0.0;
                        }
                        (0..fan_out).map(|j| params[j * fan_in + i] * delta[j]).sum()
                    })
                    .collect();
            }
        }
    }

    pub fn predict(&self, model: &LayeredModel, x: &[f64]) -> usize {
        let probs = self.forward(model, x).probs;
        (0..probs.len())
            .max_by(|&a, &b| probs[a].total_cmp(&probs[b]).then(b.cmp(&a)))
            .unwrap_or(0)
    }

    /// Fraction of validation samples classified correctly.
    pub fn accuracy(&self, model: &LayeredModel) -> f64 {
        if self.validation.is_empty() {
            return f64::NAN;
        }
        let hits = self
            .validation
            .samples
            .iter()
            .zip(&self.validation.labels)
            .filter(|(x, &y)| self.predict(model, x) == y)
            .count();
        hits as f64 / self.validation.len() as f64
    }
}

impl FederatedTask for MlpTask {
    fn num_users(&self) -> usize {
        self.train.partition.len()
    }

    fn layer_dims(&self) -> Vec<usize> {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).collect()
    }

    fn local_size(&self, user: usize) -> usize {
        self.train.partition[user].len()
    }

    fn partial_gradient(
        &self,
        user: usize,
        model: &LayeredModel,
        batch: &[usize],
        from_layer: usize,
    ) -> Result<Vec<Vec<f64>>> {
        let dims = self.layer_dims();
        model.check_dims(&dims)?;
        if batch.is_empty() {
            return Err(Error::Domain("empty batch".into()));
        }
        let local = &self.train.partition[user];
        if local.is_empty() {
            return Err(Error::EmptyDataset(user));
        }
        let mut acc: Vec<Vec<f64>> = dims[from_layer - 1..].iter().map(|&d| vec![0.0; d]).collect();
        for &i in batch {
            let idx = local[i];
            self.accumulate_gradient(model, &self.train.samples[idx], self.train.labels[idx], from_layer, &mut acc);
        }
        let scale = 1.0 / batch.len() as f64;
        for g in acc.iter_mut().flatten() {
            *g *= scale;
        }
        Ok(acc)
    }

    fn batch_loss(&self, user: usize, model: &LayeredModel, batch: &[usize]) -> Result<f64> {
        let local = &self.train.partition[user];
        let total: f64 = batch
            .iter()
            .map(|&i| self.sample_loss(model, &self.train.samples[local[i]], self.train.labels[local[i]]))
            .sum();
        Ok(total / batch.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};
    use crate::tasks::make_synthetic_classification;

    fn toy(widths: Vec<usize>) -> MlpTask {
        let mut rng = stream(3, Domain::Task, 0, 0);
        let mut ds = make_synthetic_classification(12, widths[0], *widths.last().unwrap(), 0.2, &mut rng).unwrap();
        ds.partition = vec![(0..6).collect(), (6..12).collect()];
        MlpTask::new(widths, ds, ClassificationDataset::default()).unwrap()
    }

    #[test]
    fn truncated_gradient_is_tail_of_full() {
        let task = toy(vec![3, 4, 3, 2]);
        let model = task.init_model(&mut stream(3, Domain::Init, 0, 0)).unwrap();
        let full = task.partial_gradient(0, &model, &[0, 1, 5], 1).unwrap();
        let tail = task.partial_gradient(0, &model, &[0, 1, 5], 2).unwrap();
        assert_eq!(&full[1..], &tail[..]);
    }

    #[test]
    fn layer_sizes() {
        let task = toy(vec![3, 4, 2]);
        assert_eq!(task.layer_dims(), vec![16, 10]);
        assert_eq!(task.num_users(), 2);
    }
}
