use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Codec;
use crate::error::{Error, Result};
use crate::nn::AdamState;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOptions {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { steps: 300, batch_size: 4, lr: 1e-3, seed: 0 }
    }
}

/// Runs `opts.steps` optimizer updates over shuffled epochs of `blocks`
/// (normalized samples) and returns the per-step losses.
pub fn train_codec(codec: &mut Codec, blocks: &[Vec<f64>], opts: &TrainOptions) -> Result<Vec<f64>> {
    if blocks.is_empty() {
        return Err(Error::Shape("no training blocks".into()));
    }
    if opts.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut adam = AdamState::new(codec.params(), opts.lr);
    let mut order: Vec<usize> = Vec::new();
    let mut losses = Vec::with_capacity(opts.steps);
    for _ in 0..opts.steps {
        let mut batch = Vec::with_capacity(opts.batch_size);
        while batch.len() < opts.batch_size.min(blocks.len()) {
            if order.is_empty() {
                order = (0..blocks.len()).collect();
                order.shuffle(&mut rng);
            }
            batch.push(blocks[order.pop().unwrap()].as_slice());
        }
        let loss = match codec {
            Codec::Gcd(m) => m.train_step(&mut adam, &batch, &mut rng)?,
            Codec::Gcae(m) => m.train_step(&mut adam, &batch)?,
        };
        losses.push(loss);
    }
    Ok(losses)
}
