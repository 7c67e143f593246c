//! Encoder-decoder transformer predicting the 16 suffix word vectors of an
//! address from its 16 prefix word vectors.

mod checkpoint;
mod config;
mod decode;
mod model;
mod train;

pub use checkpoint::{CheckpointManifest, TensorEntry, TrainingMeta, TransformerCheckpoint, CHECKPOINT_FORMAT};
pub use config::{ModelConfig, OutputActivation, HALF};
pub use decode::{attention_dump, AttentionDump, DecoderCache, Memory, StepRows};
pub use model::{positional, ForwardVars, SequenceBatch, Transformer};
pub use train::{encode_seeds, train_lm, TrainConfig};

use crate::error::Result;
use crate::numcore::{Graph, Objective, ParamSet, Tensor};

/// `1 - cos(pred, target)`. A zero target is a norm error; otherwise the
/// denominator is floored so a zero prediction scores exactly 1.
pub fn cosine_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    let (cos, _) = crate::numcore::cosine_guarded(pred, target)?;
    Ok(1.0 - cos)
}

/// Teacher-forced loss of a fixed batch, for gradient checking.
pub struct LmObjective {
    pub model: Transformer,
    pub batch: SequenceBatch,
}

impl Objective for LmObjective {
    fn params(&self) -> &ParamSet {
        self.model.params()
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        self.model.params_mut()
    }

    fn loss(&self) -> Result<f64> {
        self.model.evaluate(&self.batch)
    }

    fn loss_and_grad(&self) -> Result<(f64, Vec<Tensor>)> {
        let mut g = Graph::new(self.model.params());
        let loss = self.model.loss(&mut g, &self.batch)?;
        let grads = g.backward(loss)?;
        Ok((g.scalar(loss), grads.to_dense(self.model.params())))
    }
}
