//! Minibatch SGD on the mean per-sample Dice loss.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{dice_loss, dice_loss_grad};
use super::tensor::Tensor;
use super::unet::{backward, forward, ModelWeights, UNetSpec};
use crate::volume::{Image, LabelSlice};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Hyper {
    pub lr: f64,
    /// Heavy-ball momentum; 0 is plain SGD.
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Random subset drawn each epoch; `None` visits every pair.
    pub samples_per_epoch: Option<usize>,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            lr: 0.05,
            momentum: 0.9,
            epochs: 30,
            batch_size: 4,
            seed: 0,
            samples_per_epoch: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub weights: ModelWeights<f32>,
    /// Mean per-sample loss of each epoch, measured during the epoch.
    pub loss_trace: Vec<f64>,
}

pub(crate) fn image_tensor(image: &Image) -> Tensor<f32> {
    let (r, c) = image.dims();
    Tensor::from_parts([1, 1, r, c], image.data().to_vec())
}

fn label_tensor(label: &LabelSlice) -> Tensor<f32> {
    let (r, c) = label.dims();
    Tensor::from_parts(
        [1, 1, r, c],
        label.data().iter().map(|&v| v as f32).collect(),
    )
}

/// Loss and parameter gradient for one (image, label) pair.
pub fn sample_gradient(
    spec: &UNetSpec,
    weights: &ModelWeights<f32>,
    image: &Image,
    label: &LabelSlice,
) -> Result<(f64, ModelWeights<f32>)> {
    let x = image_tensor(image);
    let y = label_tensor(label);
    let cache = forward(spec, weights, &x)?;
    let loss = dice_loss(cache.output(), &y)?;
    let g = dice_loss_grad(cache.output(), &y)?;
    Ok((loss, backward(spec, weights, &cache, &g)?))
}

fn check_dataset(spec: &UNetSpec, dataset: &[(Image, LabelSlice)]) -> Result<()> {
    let (first, _) = dataset.first().ok_or(Error::Empty("no training pairs"))?;
    let dims = first.dims();
    spec.check_input(dims.0, dims.1)?;
    for (k, (image, label)) in dataset.iter().enumerate() {
        if image.dims() != dims || label.dims() != dims {
            return Err(Error::mismatch(
                "training pair dims",
                dims,
                alloc::format!("{:?}/{:?} at pair {k}", image.dims(), label.dims()),
            ));
        }
    }
    Ok(())
}

fn batch_gradients(
    spec: &UNetSpec,
    weights: &ModelWeights<f32>,
    dataset: &[(Image, LabelSlice)],
    batch: &[usize],
) -> Result<Vec<(f64, ModelWeights<f32>)>> {
    let run = |&i: &usize| sample_gradient(spec, weights, &dataset[i].0, &dataset[i].1);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        batch.par_iter().map(run).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        batch.iter().map(run).collect()
    }
}

/// Trains from a seeded initialization. Results depend only on the inputs; the
/// per-sample gradients of a batch are reduced in batch order.
pub fn fit(spec: &UNetSpec, dataset: &[(Image, LabelSlice)], hyper: &Hyper) -> Result<FitOutcome> {
    spec.validate()?;
    check_dataset(spec, dataset)?;
    if hyper.batch_size == 0 {
        return Err(Error::InvalidData("batch size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut weights = ModelWeights::<f32>::init(spec, hyper.seed);
    let mut velocity = ModelWeights::<f32>::zeros(spec);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let per_epoch = hyper
        .samples_per_epoch
        .map_or(dataset.len(), |n| n.clamp(1, dataset.len()));
    let mut trace = Vec::with_capacity(hyper.epochs);

    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order[..per_epoch].chunks(hyper.batch_size) {
            let results = batch_gradients(spec, &weights, dataset, batch)?;
            let mut grad = ModelWeights::<f32>::zeros(spec);
            for (loss, g) in &results {
                if !loss.is_finite() {
                    return Err(Error::Divergence { epoch });
                }
                loss_sum += loss;
                grad.add_scaled(g, 1.0 / batch.len() as f32);
            }
            if hyper.lr != 0.0 {
                for (v, g) in velocity.params.iter_mut().zip(&grad.params) {
                    for (vi, &gi) in v.data.iter_mut().zip(&g.data) {
                        *vi = hyper.momentum as f32 * *vi + gi;
                    }
                }
                weights.add_scaled(&velocity, -hyper.lr as f32);
            }
        }
        let mean = loss_sum / per_epoch as f64;
        if !mean.is_finite() || weights.iter_values().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { epoch });
        }
        trace.push(mean);
    }
    Ok(FitOutcome {
        weights,
        loss_trace: trace,
    })
}
