//! Inference without the tape: cached encoder memory and one decoder
//! position at a time.

use serde::Serialize;

use super::config::{OutputActivation, HALF};
use super::model::{AttnIds, FfnIds, NormIds, Transformer, WORDS};
use crate::corpus::WordId;
use crate::error::{Error, Result};
use crate::numcore::kernels::{gemm, layer_norm, softmax_in_place};
use crate::numcore::{Graph, Tensor};

/// Cross-attention keys and values of one prefix, per decoder layer.
#[derive(Clone, Debug)]
pub struct Memory {
    keys: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
}

/// Self-attention keys and values of the decoder positions fed so far.
#[derive(Clone, Debug, Default)]
pub struct DecoderCache {
    keys: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
    len: usize,
}

/// The key and value rows one decoder step appends, per layer.
#[derive(Clone, Debug)]
pub struct StepRows {
    pub keys: Vec<Vec<f64>>,
    pub values: Vec<Vec<f64>>,
}

impl DecoderCache {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Rebuilds a cache from the rows of consecutive steps.
    pub fn from_steps<'a>(steps: impl IntoIterator<Item = &'a StepRows>) -> Self {
        let mut cache = DecoderCache::default();
        for s in steps {
            cache.push(s);
        }
        cache
    }

    pub fn push(&mut self, rows: &StepRows) {
        if self.keys.is_empty() {
            self.keys = vec![Vec::new(); rows.keys.len()];
            self.values = vec![Vec::new(); rows.values.len()];
        }
        for (dst, src) in self.keys.iter_mut().zip(&rows.keys) {
            dst.extend_from_slice(src);
        }
        for (dst, src) in self.values.iter_mut().zip(&rows.values) {
            dst.extend_from_slice(src);
        }
        self.len += 1;
    }
}

fn vec_mat(x: &[f64], w: &Tensor) -> Vec<f64> {
    let (k, n) = (w.rows(), w.cols());
    let mut out = vec![0.0; n];
    gemm(1, k, n, 1.0, x, false, w.data(), false, 0.0, &mut out);
    out
}

/// One query row against `n` cached key/value rows, head by head. Mirrors
/// the batched kernel's arithmetic order.
fn attend(q: &[f64], keys: &[f64], values: &[f64], n: usize, heads: usize) -> Vec<f64> {
    let d = q.len();
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut out = vec![0.0; d];
    let mut w = vec![0.0; n];
    for head in 0..heads {
        let col = head * dh;
        let qrow = &q[col..col + dh];
        for (j, wj) in w.iter_mut().enumerate() {
            let krow = &keys[j * d + col..][..dh];
            let dot: f64 = qrow.iter().zip(krow).map(|(a, b)| a * b).sum();
            *wj = dot * scale + 0.0;
        }
        softmax_in_place(&mut w);
        let orow = &mut out[col..col + dh];
        for (j, &wj) in w.iter().enumerate() {
            if wj == 0.0 {
                continue;
            }
            let vrow = &values[j * d + col..][..dh];
            for (o, x) in orow.iter_mut().zip(vrow) {
                *o += wj * x;
            }
        }
    }
    out
}

impl Transformer {
    fn value(&self, id: crate::numcore::ParamId) -> &Tensor {
        &self.params.get(id).value
    }

    fn add_norm(&self, x: &[f64], sub: &[f64], ids: &NormIds) -> Vec<f64> {
        let sum: Vec<f64> = x.iter().zip(sub).map(|(a, b)| a + b).collect();
        layer_norm(&sum, self.value(ids.gain).data(), self.value(ids.bias).data()).expect("d_model >= 2")
    }

    fn ffn_row(&self, x: &[f64], ids: &FfnIds) -> Vec<f64> {
        let mut h = vec_mat(x, self.value(ids.w1));
        for (v, b) in h.iter_mut().zip(self.value(ids.b1).data()) {
            *v = (*v + b).max(0.0);
        }
        let mut o = vec_mat(&h, self.value(ids.w2));
        for (v, b) in o.iter_mut().zip(self.value(ids.b2).data()) {
            *v += b;
        }
        o
    }

    /// Encodes one prefix and projects it into every layer's cross-attention
    /// keys and values.
    pub fn memory(&self, vectors: &Tensor, prefix: &[WordId; HALF]) -> Result<Memory> {
        let mut seq = [0 as WordId; WORDS];
        seq[..HALF].copy_from_slice(prefix);
        seq[HALF..].copy_from_slice(prefix);
        let batch = self.batch(vectors, &[seq])?;
        let mut g = Graph::new(&self.params);
        let x = g.constant(batch.encoder);
        let mem = self.encode(&mut g, x, 1, &mut Vec::new())?;
        let mem = g.value(mem);
        let (d, mut keys, mut values) = (self.config.d_model, Vec::new(), Vec::new());
        for layer in &self.decoder {
            let mut k = vec![0.0; HALF * d];
            let mut v = vec![0.0; HALF * d];
            gemm(HALF, d, d, 1.0, mem.data(), false, self.value(layer.cross.wk).data(), false, 0.0, &mut k);
            gemm(HALF, d, d, 1.0, mem.data(), false, self.value(layer.cross.wv).data(), false, 0.0, &mut v);
            keys.push(k);
            values.push(v);
        }
        Ok(Memory { keys, values })
    }

    /// Decoder input of slot 0: the learned start vector plus position code.
    pub fn start_input(&self) -> Vec<f64> {
        let pe = self.position_code(HALF);
        pe.iter().zip(self.value(self.start).data()).map(|(p, s)| p + s).collect()
    }

    /// Decoder input of slot `slot ≥ 1` given the word chosen at suffix
    /// position `slot - 1`.
    pub fn word_input(&self, vectors: &Tensor, id: WordId, slot: usize) -> Vec<f64> {
        let vectors = self.embedding().unwrap_or(vectors);
        self.decoder_input(vectors.row(usize::from(id)), slot)
    }

    fn qkv_step(&self, x: &[f64], ids: &AttnIds) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        (
            vec_mat(x, self.value(ids.wq)),
            vec_mat(x, self.value(ids.wk)),
            vec_mat(x, self.value(ids.wv)),
        )
    }

    /// Feeds one decoder input and returns the predicted vector for that
    /// position plus the cache rows it produced. `cache` is not modified.
    pub fn step(&self, memory: &Memory, cache: &DecoderCache, input: &[f64]) -> Result<(Vec<f64>, StepRows)> {
        let d = self.config.d_model;
        if input.len() != d {
            return Err(Error::shape(format!("decoder input of width {} for d_model {d}", input.len())));
        }
        if cache.len >= HALF {
            return Err(Error::State(format!("decoder already holds {HALF} positions")));
        }
        let heads = self.config.heads;
        let n = cache.len + 1;
        let mut rows = StepRows {
            keys: Vec::with_capacity(self.decoder.len()),
            values: Vec::with_capacity(self.decoder.len()),
        };
        let mut x = input.to_vec();
        for (l, layer) in self.decoder.iter().enumerate() {
            let (q, k, v) = self.qkv_step(&x, &layer.self_attn);
            let mut keys = cache.keys.get(l).cloned().unwrap_or_default();
            let mut values = cache.values.get(l).cloned().unwrap_or_default();
            keys.extend_from_slice(&k);
            values.extend_from_slice(&v);
            let a = vec_mat(&attend(&q, &keys, &values, n, heads), self.value(layer.self_attn.wo));
            rows.keys.push(k);
            rows.values.push(v);
            x = self.add_norm(&x, &a, &layer.ln1);

            let q = vec_mat(&x, self.value(layer.cross.wq));
            let c = attend(&q, &memory.keys[l], &memory.values[l], HALF, heads);
            let c = vec_mat(&c, self.value(layer.cross.wo));
            x = self.add_norm(&x, &c, &layer.ln2);

            let f = self.ffn_row(&x, &layer.ffn);
            x = self.add_norm(&x, &f, &layer.ln3);
        }
        let mut y = vec_mat(&x, self.value(self.out_w));
        for (v, b) in y.iter_mut().zip(self.value(self.out_b).data()) {
            *v += b;
        }
        if self.config.output_activation == OutputActivation::Sigmoid {
            y.iter_mut().for_each(|v| *v = 1.0 / (1.0 + (-*v).exp()));
        }
        Ok((y, rows))
    }
}

/// Head-by-head attention weights of one sequence; each matrix is 16 × 16.
#[derive(Clone, Debug, Serialize)]
pub struct AttentionDump {
    pub encoder: Vec<Vec<Tensor>>,
    pub decoder_self: Vec<Vec<Tensor>>,
    pub decoder_cross: Vec<Vec<Tensor>>,
}

fn split_heads(weights: &[f64], heads: usize) -> Vec<Tensor> {
    weights
        .chunks(HALF * HALF)
        .take(heads)
        .map(|c| Tensor::matrix(HALF, HALF, c.to_vec()).expect("16x16 block"))
        .collect()
}

/// Attention weights for one teacher-forced sequence, dropout disabled.
pub fn attention_dump(model: &Transformer, vectors: &Tensor, seq: &[WordId; WORDS]) -> Result<AttentionDump> {
    let batch = model.batch(vectors, &[*seq])?;
    let mut g = Graph::new(model.params());
    let vars = model.forward(&mut g, &batch)?;
    let heads = model.config().heads;
    let collect = |vs: &[crate::numcore::Var]| -> Vec<Vec<Tensor>> {
        vs.iter()
            .map(|&v| {
                let (_, w) = g.attention_weights(v).expect("attention node");
                split_heads(w, heads)
            })
            .collect()
    };
    Ok(AttentionDump {
        encoder: collect(&vars.encoder_attention),
        decoder_self: collect(&vars.decoder_self_attention),
        decoder_cross: collect(&vars.decoder_cross_attention),
    })
}
