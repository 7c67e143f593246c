use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::{TrainingMeta, TransformerCheckpoint};
use super::config::ModelConfig;
use super::model::{Transformer, WORDS};
use crate::addr::WordSequence;
use crate::corpus::{Vocabulary, WordId};
use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::numcore::{Adam, AdamConfig, Graph};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub batch_size: usize,
    /// Sequences drawn per epoch from a seeded cycling permutation of the
    /// training split; `None` means one full pass.
    pub epoch_size: Option<usize>,
    pub validation_fraction: f64,
    pub validation_every: usize,
    /// Cap on held-out sequences scored per validation.
    pub validation_max: usize,
    pub fine_tune: bool,
    /// Optimizer steps of linear learning-rate warmup from lr/warmup to lr.
    pub warmup_steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::default(),
            epochs: 100,
            lr: 1e-3,
            seed: 0,
            batch_size: 16,
            epoch_size: None,
            validation_fraction: 0.05,
            validation_every: 10,
            validation_max: 32,
            fine_tune: false,
            warmup_steps: 100,
        }
    }
}

/// Word ids of every seed, reporting all out-of-vocabulary words at once.
pub fn encode_seeds(seeds: &[WordSequence], vocab: &Vocabulary) -> Result<Vec<[WordId; WORDS]>> {
    let mut out = Vec::with_capacity(seeds.len());
    let mut missing: Vec<String> = Vec::new();
    for s in seeds {
        match vocab.encode(s) {
            Ok(ids) => out.push(ids),
            Err(Error::Vocab(words)) => {
                for w in words {
                    if !missing.contains(&w) {
                        missing.push(w);
                    }
                }
            }
            Err(e) => return Err(e),
        }
    }
    if missing.is_empty() {
        Ok(out)
    } else {
        Err(Error::Vocab(missing))
    }
}

/// Seeded 95/5-style split; tiny seed sets keep everything for training.
fn split(n: usize, fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let held = (n as f64 * fraction).floor() as usize;
    if held == 0 || held >= n {
        return (idx, Vec::new());
    }
    let train = idx.split_off(held);
    (train, idx)
}

/// Cycles through a permutation, reshuffling after each full pass.
struct Cycle {
    order: Vec<usize>,
    pos: usize,
}

impl Cycle {
    fn take(&mut self, n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            if self.pos == self.order.len() {
                self.order.shuffle(rng);
                self.pos = 0;
            }
            let k = (n - out.len()).min(self.order.len() - self.pos);
            out.extend_from_slice(&self.order[self.pos..self.pos + k]);
            self.pos += k;
        }
        out
    }
}

pub fn train_lm(seeds: &[WordSequence], table: &EmbeddingTable, config: &TrainConfig) -> Result<TransformerCheckpoint> {
    if seeds.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if config.batch_size == 0 || !(config.lr > 0.0) {
        return Err(Error::param("batch size and learning rate must be positive"));
    }
    if !(0.0..1.0).contains(&config.validation_fraction) {
        return Err(Error::param("validation fraction must be in [0, 1)"));
    }
    if table.dim() != config.model.d_model {
        return Err(Error::param(format!(
            "embedding dimension {} differs from d_model {}",
            table.dim(),
            config.model.d_model
        )));
    }
    let encoded = encode_seeds(seeds, table.vocab())?;
    let rms = table.rms();
    let input_scale = if rms > 0.0 { 1.0 / rms } else { 1.0 };
    let embed = config.fine_tune.then(|| table.vectors().clone());
    let mut model = Transformer::new(config.model.clone(), config.seed, input_scale, embed)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7a11_5eed);
    let (train, held) = split(encoded.len(), config.validation_fraction, &mut rng);
    let per_epoch = config.epoch_size.unwrap_or(train.len()).max(1);
    let mut cycle = Cycle {
        order: train,
        pos: 0,
    };
    let held: Vec<[WordId; WORDS]> = held.iter().take(config.validation_max).map(|&i| encoded[i]).collect();

    let optimizer = AdamConfig {
        lr: config.lr,
        ..AdamConfig::default()
    };
    let mut adam = Adam::new(optimizer, model.params());
    let mut meta = TrainingMeta {
        seed: config.seed,
        epochs: config.epochs,
        optimizer,
        ..TrainingMeta::default()
    };
    let vectors = table.vectors();
    for epoch in 1..=config.epochs {
        let picked = cycle.take(per_epoch, &mut rng);
        let (mut total, mut rows) = (0.0, 0usize);
        for chunk in picked.chunks(config.batch_size) {
            let seqs: Vec<_> = chunk.iter().map(|&i| encoded[i]).collect();
            let batch = model.batch(vectors, &seqs)?;
            let dropout_rng = ChaCha8Rng::seed_from_u64(rng.gen());
            let (loss, grads) = {
                let mut g = Graph::training(model.params(), dropout_rng);
                let loss = model.loss(&mut g, &batch)?;
                (g.scalar(loss), g.backward(loss)?)
            };
            if !loss.is_finite() {
                return Err(Error::State(format!("loss diverged at epoch {epoch}")));
            }
            total += loss * seqs.len() as f64;
            rows += seqs.len();
            model.params_mut().accumulate(&grads);
            let step = adam.steps() as usize + 1;
            if step <= config.warmup_steps {
                adam.set_lr(config.lr * step as f64 / config.warmup_steps as f64);
            } else {
                adam.set_lr(config.lr);
            }
            adam.step(model.params_mut());
        }
        let mean = total / rows as f64;
        meta.epoch_losses.push(mean);
        let validate = !held.is_empty() && (epoch % config.validation_every.max(1) == 0 || epoch == config.epochs);
        if validate {
            let v = model.evaluate(&model.batch(vectors, &held)?)?;
            meta.validation_losses.push((epoch, v));
            log::info!("epoch {epoch}: loss {mean:.6}, validation {v:.6}");
        } else {
            log::info!("epoch {epoch}: loss {mean:.6}");
        }
    }
    Ok(TransformerCheckpoint::new(model, meta))
}
