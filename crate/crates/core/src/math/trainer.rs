use rand::seq::SliceRandom;

use super::mlp::{train_step, Example, MlpModel};
use super::optim::OptimizerState;
use super::rng::RngStream;
use crate::error::{Error, Result};

/// Minibatch SGD loop shared by teacher and student training.
///
/// Batch order is reshuffled every epoch from `seed`; step `s` draws its
/// dropout masks from stream `(seed, s)`. `on_step` sees the global step
/// number (1-based), the batch loss and the updated model.
pub fn run_epochs<F>(
    model: &mut MlpModel,
    examples: &[Example<'_>],
    epochs: usize,
    batch_size: usize,
    opt: &mut OptimizerState,
    seed: u64,
    mut on_step: F,
) -> Result<Vec<f64>>
where
    F: FnMut(usize, f64, &MlpModel) -> Result<()>,
{
    if examples.is_empty() {
        return Err(Error::InvalidInput("no training examples".into()));
    }
    if batch_size == 0 || epochs == 0 {
        return Err(Error::InvalidInput("epochs and batch size must be positive".into()));
    }
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut shuffler = RngStream::new(seed, 0x5b0f);
    let mut epoch_means = Vec::with_capacity(epochs);
    let mut step = 0usize;
    let mut batch = Vec::with_capacity(batch_size);
    for _ in 0..epochs {
        order.shuffle(&mut shuffler);
        let mut sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| examples[i]));
            step += 1;
            let loss = train_step(model, &batch, opt, &RngStream::new(seed, step as u64)).map_err(|e| match e {
                Error::TrainingDiverged { loss, .. } => Error::TrainingDiverged { step, loss },
                other => other,
            })?;
            sum += loss;
            batches += 1;
            on_step(step, loss, model)?;
        }
        epoch_means.push(sum / batches as f64);
    }
    Ok(epoch_means)
}
