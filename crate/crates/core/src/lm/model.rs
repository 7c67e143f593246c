use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, OutputActivation, HALF};
use crate::corpus::WordId;
use crate::error::{Error, Result};
use crate::numcore::{causal_mask, AttentionSpec, Graph, ParamId, ParamSet, Tensor, Var};

pub(crate) const WORDS: usize = 2 * HALF;

#[derive(Clone, Copy, Debug)]
pub(crate) struct AttnIds {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct FfnIds {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct NormIds {
    pub gain: ParamId,
    pub bias: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct EncoderIds {
    pub attn: AttnIds,
    pub ln1: NormIds,
    pub ffn: FfnIds,
    pub ln2: NormIds,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct DecoderIds {
    pub self_attn: AttnIds,
    pub ln1: NormIds,
    pub cross: AttnIds,
    pub ln2: NormIds,
    pub ffn: FfnIds,
    pub ln3: NormIds,
}

/// Encoder-decoder transformer mapping the 16 prefix word vectors to 16
/// predicted suffix word vectors.
#[derive(Clone, Debug)]
pub struct Transformer {
    pub(crate) config: ModelConfig,
    pub(crate) params: ParamSet,
    pub(crate) encoder: Vec<EncoderIds>,
    pub(crate) decoder: Vec<DecoderIds>,
    pub(crate) start: ParamId,
    pub(crate) out_w: ParamId,
    pub(crate) out_b: ParamId,
    /// Present only when the embedding table is fine-tuned.
    pub(crate) embed: Option<ParamId>,
    /// Multiplier applied to word vectors before the positional code.
    pub(crate) input_scale: f64,
}

struct Init {
    rng: ChaCha8Rng,
    params: ParamSet,
}

impl Init {
    fn xavier(&mut self, name: String, rows: usize, cols: usize) -> ParamId {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| self.rng.gen_range(-limit..limit)).collect();
        self.params.add(name, Tensor::new(&[rows, cols], data).expect("shape"))
    }

    fn zeros(&mut self, name: String, n: usize) -> ParamId {
        self.params.add(name, Tensor::zeros(&[1, n]))
    }

    fn ones(&mut self, name: String, n: usize) -> ParamId {
        self.params.add(name, Tensor::new(&[1, n], vec![1.0; n]).expect("shape"))
    }

    fn attn(&mut self, p: &str, d: usize) -> AttnIds {
        AttnIds {
            wq: self.xavier(format!("{p}.wq"), d, d),
            wk: self.xavier(format!("{p}.wk"), d, d),
            wv: self.xavier(format!("{p}.wv"), d, d),
            wo: self.xavier(format!("{p}.wo"), d, d),
        }
    }

    fn ffn(&mut self, p: &str, d: usize, ff: usize) -> FfnIds {
        FfnIds {
            w1: self.xavier(format!("{p}.w1"), d, ff),
            b1: self.zeros(format!("{p}.b1"), ff),
            w2: self.xavier(format!("{p}.w2"), ff, d),
            b2: self.zeros(format!("{p}.b2"), d),
        }
    }

    fn norm(&mut self, p: &str, d: usize) -> NormIds {
        NormIds {
            gain: self.ones(format!("{p}.gain"), d),
            bias: self.zeros(format!("{p}.bias"), d),
        }
    }
}

/// Sinusoidal code for absolute word position `pos`.
pub fn positional(pos: usize, d: usize) -> Vec<f64> {
    (0..d)
        .map(|j| {
            let angle = pos as f64 / 10000f64.powf((j - j % 2) as f64 / d as f64);
            if j % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        })
        .collect()
}

/// Model inputs for a batch of word-id sequences. Identical prefixes share
/// one encoder pass; `kv_map[b]` names the prefix of sequence `b`.
#[derive(Clone, Debug)]
pub struct SequenceBatch {
    /// `[prefixes·16, d]` scaled word vectors plus positional code.
    pub encoder: Tensor,
    /// `[B·16, d]`; slot 0 of each sequence holds only the positional code,
    /// the learned start vector is added during the forward pass.
    pub decoder: Tensor,
    /// `[B·16, d]` suffix word vectors.
    pub targets: Tensor,
    pub kv_map: Vec<usize>,
    pub prefixes: Vec<[WordId; HALF]>,
    pub sequences: Vec<[WordId; WORDS]>,
}

impl SequenceBatch {
    pub fn len(&self) -> usize {
        self.kv_map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kv_map.is_empty()
    }
}

/// Values recorded by one forward pass.
pub struct ForwardVars {
    pub output: Var,
    pub encoder_attention: Vec<Var>,
    pub decoder_self_attention: Vec<Var>,
    pub decoder_cross_attention: Vec<Var>,
}

impl Transformer {
    pub fn new(config: ModelConfig, seed: u64, input_scale: f64, embed: Option<Tensor>) -> Result<Self> {
        config.validate()?;
        if !(input_scale.is_finite() && input_scale > 0.0) {
            return Err(Error::param("input scale must be positive"));
        }
        let d = config.d_model;
        let mut init = Init {
            rng: ChaCha8Rng::seed_from_u64(seed),
            params: ParamSet::new(),
        };
        let start_data = (0..d).map(|_| init.rng.gen_range(-1.0..1.0)).collect();
        let start = init.params.add("start", Tensor::new(&[1, d], start_data)?);
        let encoder = (0..config.layers)
            .map(|l| EncoderIds {
                attn: init.attn(&format!("enc.{l}.attn"), d),
                ln1: init.norm(&format!("enc.{l}.ln1"), d),
                ffn: init.ffn(&format!("enc.{l}.ffn"), d, config.d_ff),
                ln2: init.norm(&format!("enc.{l}.ln2"), d),
            })
            .collect();
        let decoder = (0..config.layers)
            .map(|l| DecoderIds {
                self_attn: init.attn(&format!("dec.{l}.self"), d),
                ln1: init.norm(&format!("dec.{l}.ln1"), d),
                cross: init.attn(&format!("dec.{l}.cross"), d),
                ln2: init.norm(&format!("dec.{l}.ln2"), d),
                ffn: init.ffn(&format!("dec.{l}.ffn"), d, config.d_ff),
                ln3: init.norm(&format!("dec.{l}.ln3"), d),
            })
            .collect();
        let out_w = init.xavier("out.w".into(), d, d);
        let out_b = init.zeros("out.b".into(), d);
        let embed = match embed {
            Some(t) if t.cols() != d => {
                return Err(Error::shape(format!("embedding width {} vs d_model {d}", t.cols())))
            }
            Some(t) => Some(init.params.add("embed", t)),
            None => None,
        };
        Ok(Transformer {
            config,
            params: init.params,
            encoder,
            decoder,
            start,
            out_w,
            out_b,
            embed,
            input_scale,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn input_scale(&self) -> f64 {
        self.input_scale
    }

    pub fn is_fine_tuned(&self) -> bool {
        self.embed.is_some()
    }

    /// The fine-tuned table, if any.
    pub fn embedding(&self) -> Option<&Tensor> {
        self.embed.map(|id| &self.params.get(id).value)
    }

    /// Positional code for word position `pos`, or zeros when disabled.
    pub(crate) fn position_code(&self, pos: usize) -> Vec<f64> {
        if self.config.positional_encoding {
            positional(pos, self.config.d_model)
        } else {
            vec![0.0; self.config.d_model]
        }
    }

    /// Decoder input for an already chosen word vector at suffix slot `slot`.
    pub(crate) fn decoder_input(&self, vector: &[f64], slot: usize) -> Vec<f64> {
        let pe = self.position_code(HALF + slot);
        vector.iter().zip(pe).map(|(x, p)| x * self.input_scale + p).collect()
    }

    /// Builds the batch tensors from word ids against `vectors` (|V| × d).
    pub fn batch(&self, vectors: &Tensor, sequences: &[[WordId; WORDS]]) -> Result<SequenceBatch> {
        let d = self.config.d_model;
        if vectors.cols() != d {
            return Err(Error::shape(format!("word vectors of width {} for d_model {d}", vectors.cols())));
        }
        if sequences.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let vectors = self.embedding().unwrap_or(vectors);
        let vocab = vectors.rows();
        if let Some(&bad) = sequences.iter().flatten().find(|&&id| usize::from(id) >= vocab) {
            return Err(Error::Index {
                index: usize::from(bad),
                size: vocab,
            });
        }
        let pe: Vec<Vec<f64>> = (0..WORDS).map(|p| self.position_code(p)).collect();
        let row = |id: WordId, pos: usize, out: &mut Vec<f64>| {
            out.extend(vectors.row(usize::from(id)).iter().zip(&pe[pos]).map(|(x, p)| x * self.input_scale + p));
        };

        let mut prefixes: Vec<[WordId; HALF]> = Vec::new();
        let mut kv_map = Vec::with_capacity(sequences.len());
        let mut enc = Vec::new();
        let mut dec = Vec::with_capacity(sequences.len() * HALF * d);
        let mut targets = Vec::with_capacity(sequences.len() * HALF * d);
        for seq in sequences {
            let mut prefix = [0 as WordId; HALF];
            prefix.copy_from_slice(&seq[..HALF]);
            let slot = match prefixes.iter().position(|p| *p == prefix) {
                Some(i) => i,
                None => {
                    for (pos, &id) in prefix.iter().enumerate() {
                        row(id, pos, &mut enc);
                    }
                    prefixes.push(prefix);
                    prefixes.len() - 1
                }
            };
            kv_map.push(slot);
            dec.extend_from_slice(&pe[HALF]);
            for s in 1..HALF {
                row(seq[HALF + s - 1], HALF + s, &mut dec);
            }
            for &id in &seq[HALF..] {
                targets.extend_from_slice(vectors.row(usize::from(id)));
            }
        }
        Ok(SequenceBatch {
            encoder: Tensor::matrix(prefixes.len() * HALF, d, enc)?,
            decoder: Tensor::matrix(sequences.len() * HALF, d, dec)?,
            targets: Tensor::matrix(sequences.len() * HALF, d, targets)?,
            kv_map,
            prefixes,
            sequences: sequences.to_vec(),
        })
    }

    fn attention<'a>(
        &'a self,
        g: &mut Graph<'a>,
        ids: &AttnIds,
        xq: Var,
        xkv: Var,
        spec: AttentionSpec,
    ) -> Result<(Var, Var)> {
        let wq = g.param(ids.wq);
        let wk = g.param(ids.wk);
        let wv = g.param(ids.wv);
        let wo = g.param(ids.wo);
        let q = g.matmul(xq, wq)?;
        let k = g.matmul(xkv, wk)?;
        let v = g.matmul(xkv, wv)?;
        let att = g.attention(q, k, v, spec)?;
        Ok((g.matmul(att, wo)?, att))
    }

    fn ffn<'a>(&'a self, g: &mut Graph<'a>, ids: &FfnIds, x: Var) -> Result<Var> {
        let (w1, b1, w2, b2) = (g.param(ids.w1), g.param(ids.b1), g.param(ids.w2), g.param(ids.b2));
        let h = g.matmul(x, w1)?;
        let h = g.add_bias(h, b1)?;
        let h = g.relu(h);
        let o = g.matmul(h, w2)?;
        g.add_bias(o, b2)
    }

    /// `LayerNorm(x + dropout(sub))`.
    fn residual<'a>(&'a self, g: &mut Graph<'a>, ids: &NormIds, x: Var, sub: Var) -> Result<Var> {
        let sub = g.dropout(sub, self.config.dropout);
        let sum = g.add(x, sub)?;
        let (gain, bias) = (g.param(ids.gain), g.param(ids.bias));
        g.layer_norm(sum, gain, bias)
    }

    pub(crate) fn encode<'a>(&'a self, g: &mut Graph<'a>, mut x: Var, prefixes: usize, attn: &mut Vec<Var>) -> Result<Var> {
        let heads = self.config.heads;
        for layer in &self.encoder {
            let spec = AttentionSpec::self_attention(prefixes, HALF, heads, None);
            let (a, w) = self.attention(g, &layer.attn, x, x, spec)?;
            attn.push(w);
            x = self.residual(g, &layer.ln1, x, a)?;
            let f = self.ffn(g, &layer.ffn, x)?;
            x = self.residual(g, &layer.ln2, x, f)?;
        }
        Ok(x)
    }

    /// Records the full forward pass; dropout is active only on training graphs.
    pub fn forward<'a>(&'a self, g: &mut Graph<'a>, batch: &SequenceBatch) -> Result<ForwardVars> {
        let d = self.config.d_model;
        if batch.encoder.cols() != d || batch.decoder.cols() != d {
            return Err(Error::shape(format!("batch width {} for d_model {d}", batch.encoder.cols())));
        }
        let b = batch.len();
        if batch.decoder.rows() != b * HALF || batch.encoder.rows() != batch.prefixes.len() * HALF {
            return Err(Error::shape(format!(
                "batch of {b} with encoder {:?}, decoder {:?}",
                batch.encoder.shape(),
                batch.decoder.shape()
            )));
        }
        let (enc_in, dec_in) = match self.embed {
            None => (g.constant(batch.encoder.clone()), g.constant(batch.decoder.clone())),
            Some(table) => self.fine_tune_inputs(g, table, batch)?,
        };

        let mut vars = ForwardVars {
            output: enc_in,
            encoder_attention: Vec::new(),
            decoder_self_attention: Vec::new(),
            decoder_cross_attention: Vec::new(),
        };
        let memory = self.encode(g, enc_in, batch.prefixes.len(), &mut vars.encoder_attention)?;

        let start = g.param(self.start);
        let mut x = g.place_rows(dec_in, start, (0..b).map(|i| i * HALF).collect())?;
        let heads = self.config.heads;
        for layer in &self.decoder {
            let spec = AttentionSpec::self_attention(b, HALF, heads, Some(causal_mask(HALF)));
            let (a, w) = self.attention(g, &layer.self_attn, x, x, spec)?;
            vars.decoder_self_attention.push(w);
            x = self.residual(g, &layer.ln1, x, a)?;
            let spec = AttentionSpec {
                heads,
                q_len: HALF,
                k_len: HALF,
                kv_map: batch.kv_map.clone(),
                mask: None,
            };
            let (c, w) = self.attention(g, &layer.cross, x, memory, spec)?;
            vars.decoder_cross_attention.push(w);
            x = self.residual(g, &layer.ln2, x, c)?;
            let f = self.ffn(g, &layer.ffn, x)?;
            x = self.residual(g, &layer.ln3, x, f)?;
        }
        let (w, bias) = (g.param(self.out_w), g.param(self.out_b));
        let y = g.matmul(x, w)?;
        let y = g.add_bias(y, bias)?;
        vars.output = match self.config.output_activation {
            OutputActivation::Linear => y,
            OutputActivation::Sigmoid => g.sigmoid(y),
        };
        Ok(vars)
    }

    /// Encoder and decoder inputs gathered from the trainable table.
    fn fine_tune_inputs<'a>(&'a self, g: &mut Graph<'a>, table: ParamId, batch: &SequenceBatch) -> Result<(Var, Var)> {
        let d = self.config.d_model;
        let pe: Vec<Vec<f64>> = (0..WORDS).map(|p| self.position_code(p)).collect();
        let t = g.param(table);

        let enc_ids: Vec<usize> = batch.prefixes.iter().flatten().map(|&i| usize::from(i)).collect();
        let enc = g.gather(t, enc_ids)?;
        let enc = g.scale(enc, self.input_scale);
        let enc_pe: Vec<f64> = (0..batch.prefixes.len()).flat_map(|_| pe[..HALF].concat()).collect();
        let enc_pe = g.constant(Tensor::matrix(batch.prefixes.len() * HALF, d, enc_pe)?);
        let enc = g.add(enc, enc_pe)?;

        // slot 0 gathers an arbitrary row and is then zeroed
        let dec_ids: Vec<usize> = batch
            .sequences
            .iter()
            .flat_map(|s| std::iter::once(s[HALF]).chain(s[HALF..WORDS - 1].iter().copied()))
            .map(usize::from)
            .collect();
        let n = dec_ids.len();
        let dec = g.gather(t, dec_ids)?;
        let dec = g.scale(dec, self.input_scale);
        let keep: Vec<f64> = (0..n)
            .flat_map(|r| std::iter::repeat(if r % HALF == 0 { 0.0 } else { 1.0 }).take(d))
            .collect();
        let keep = g.constant(Tensor::matrix(n, d, keep)?);
        let dec = g.mul(dec, keep)?;
        let dec_pe: Vec<f64> = (0..batch.len()).flat_map(|_| pe[HALF..].concat()).collect();
        let dec_pe = g.constant(Tensor::matrix(n, d, dec_pe)?);
        let dec = g.add(dec, dec_pe)?;
        Ok((enc, dec))
    }

    /// Mean cosine loss of a batch, recorded in `g`.
    pub fn loss<'a>(&'a self, g: &mut Graph<'a>, batch: &SequenceBatch) -> Result<Var> {
        let vars = self.forward(g, batch)?;
        g.cosine_loss(vars.output, batch.targets.clone())
    }

    /// Predicted suffix vectors `[B·16, d]` with dropout disabled.
    pub fn predict(&self, batch: &SequenceBatch) -> Result<Tensor> {
        let mut g = Graph::new(&self.params);
        let vars = self.forward(&mut g, batch)?;
        Ok(g.value(vars.output).clone())
    }

    /// Mean cosine loss with dropout disabled.
    pub fn evaluate(&self, batch: &SequenceBatch) -> Result<f64> {
        let mut g = Graph::new(&self.params);
        let loss = self.loss(&mut g, batch)?;
        Ok(g.scalar(loss))
    }
}
