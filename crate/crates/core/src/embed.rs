//! Skip-gram word vectors over address words.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::addr::{AddressWord, WordSequence, NYBBLE_VALUES, WORDS_PER_ADDRESS};
use crate::corpus::{cooccurrence, SkipGramSample, Vocabulary, WordId, DEFAULT_WINDOW};
use crate::error::{Error, Result};
use crate::numcore::{Adam, AdamConfig, Graph, Objective, ParamId, ParamSet, Tensor};

pub const DEFAULT_DIM: usize = 100;
pub const VECTORS_FORMAT: &str = "veclm-vectors/1";
pub const ONE_HOT_DIM: usize = WORDS_PER_ADDRESS * NYBBLE_VALUES;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbedConfig {
    pub dim: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub window: usize,
    /// Input words per optimizer step. Each step sees every sample of its
    /// input words, so one epoch is exactly one pass over the corpus.
    pub batch_words: usize,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            dim: DEFAULT_DIM,
            epochs: 50,
            lr: 1e-3,
            seed: 0,
            window: DEFAULT_WINDOW,
            batch_words: 1,
        }
    }
}

/// One trained vector per vocabulary word.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    vocab: Vocabulary,
    vectors: Tensor,
}

impl EmbeddingTable {
    pub fn new(vocab: Vocabulary, vectors: Tensor) -> Result<Self> {
        if vectors.shape().len() != 2 || vectors.rows() != vocab.len() {
            return Err(Error::shape(format!(
                "table {:?} for {} words",
                vectors.shape(),
                vocab.len()
            )));
        }
        Ok(EmbeddingTable { vocab, vectors })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn vectors(&self) -> &Tensor {
        &self.vectors
    }

    pub fn vector(&self, id: WordId) -> &[f64] {
        self.vectors.row(usize::from(id))
    }

    pub fn word_vector(&self, word: AddressWord) -> Result<&[f64]> {
        self.vocab
            .id(word)
            .map(|id| self.vector(id))
            .ok_or_else(|| Error::Vocab(vec![word.render()]))
    }

    /// Lookup by rendered word; malformed text is also a vocabulary error.
    pub fn word_vector_text(&self, text: &str) -> Result<&[f64]> {
        let id = self
            .vocab
            .id_of_text(text)
            .map_err(|_| Error::Vocab(vec![text.to_string()]))?;
        Ok(self.vector(id))
    }

    /// Arithmetic mean of the 32 word vectors.
    pub fn address_vector(&self, seq: &WordSequence) -> Result<Vec<f64>> {
        let ids = self.vocab.encode(seq)?;
        let mut out = vec![0.0; self.dim()];
        for id in ids {
            for (o, x) in out.iter_mut().zip(self.vector(id)) {
                *o += x;
            }
        }
        let n = WORDS_PER_ADDRESS as f64;
        out.iter_mut().for_each(|x| *x /= n);
        Ok(out)
    }

    /// Root mean square over all table entries.
    pub fn rms(&self) -> f64 {
        let d = self.vectors.data();
        (d.iter().map(|x| x * x).sum::<f64>() / d.len().max(1) as f64).sqrt()
    }

    /// vectors.tsv: a format comment, then `word<TAB>f1..<TAB>fd` per word
    /// in id order, nine significant digits.
    pub fn to_tsv(&self) -> String {
        let mut out = format!("# {VECTORS_FORMAT} dim={}\n", self.dim());
        for (i, w) in self.vocab.words().iter().enumerate() {
            out.push_str(&w.render());
            for x in self.vectors.row(i) {
                write!(out, "\t{x:.8e}").expect("string write");
            }
            out.push('\n');
        }
        out
    }

    /// Parses `to_tsv` output. `path` is only used in error messages.
    pub fn from_tsv(text: &str, path: &Path) -> Result<Self> {
        let mut rows: Vec<(AddressWord, Vec<f64>)> = Vec::new();
        let mut dim = None;
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split('\t');
            let word: AddressWord = fields
                .next()
                .unwrap_or_default()
                .parse()
                .map_err(|e: Error| Error::data(path, line_no, e.to_string()))?;
            let values = fields
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::data(path, line_no, format!("bad coordinate: {e}")))?;
            match dim {
                None if values.is_empty() => return Err(Error::data(path, line_no, "no coordinates")),
                None => dim = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(Error::data(path, line_no, format!("expected {d} coordinates, got {}", values.len())))
                }
                _ => {}
            }
            if rows.iter().any(|(w, _)| *w == word) {
                return Err(Error::data(path, line_no, format!("duplicate word {}", word.render())));
            }
            rows.push((word, values));
        }
        let dim = dim.ok_or_else(|| Error::data(path, 0, "no vectors"))?;
        let vocab = Vocabulary::from_words(rows.iter().map(|(w, _)| *w))?;
        let mut data = vec![0.0; vocab.len() * dim];
        for (w, values) in rows {
            let id = usize::from(vocab.id(w).expect("built from these words"));
            data[id * dim..(id + 1) * dim].copy_from_slice(&values);
        }
        let n = vocab.len();
        EmbeddingTable::new(vocab, Tensor::matrix(n, dim, data)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        EmbeddingTable::from_tsv(&text, path)
    }
}

/// Baseline address vector: 32 concatenated 16-way one-hot nybbles.
pub fn one_hot_address_vector(seq: &WordSequence) -> Vec<f64> {
    let mut v = vec![0.0; ONE_HOT_DIM];
    for (i, w) in seq.words().iter().enumerate() {
        v[i * NYBBLE_VALUES + usize::from(w.nybble())] = 1.0;
    }
    v
}

/// Input→hidden→full-softmax network. Samples sharing an input word are
/// folded into one weighted cross-entropy row.
#[derive(Clone, Debug)]
pub struct SkipGram {
    params: ParamSet,
    hidden: ParamId,
    output: ParamId,
    counts: Vec<Vec<(WordId, u64)>>,
    totals: Vec<u64>,
}

impl SkipGram {
    /// Hidden weights uniform in ±0.5/dim, output weights zero.
    pub fn new(counts: Vec<Vec<(WordId, u64)>>, dim: usize, seed: u64) -> Result<Self> {
        let v = counts.len();
        if v == 0 {
            return Err(Error::EmptyCorpus);
        }
        if dim == 0 {
            return Err(Error::param("embedding dimension must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 0.5 / dim as f64;
        let init = (0..v * dim).map(|_| rng.gen_range(-bound..bound)).collect();
        let mut params = ParamSet::new();
        let hidden = params.add("hidden", Tensor::matrix(v, dim, init)?);
        let output = params.add("output", Tensor::zeros(&[dim, v]));
        let totals = counts.iter().map(|row| row.iter().map(|(_, c)| c).sum()).collect();
        Ok(SkipGram {
            params,
            hidden,
            output,
            counts,
            totals,
        })
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn hidden(&self) -> &Tensor {
        &self.params.get(self.hidden).value
    }

    /// Total samples.
    pub fn sample_count(&self) -> u64 {
        self.totals.iter().sum()
    }

    /// Input words that have at least one sample.
    pub fn active_words(&self) -> Vec<usize> {
        (0..self.counts.len()).filter(|&w| self.totals[w] > 0).collect()
    }

    /// Mean cross-entropy over all samples of `words`, recorded in `g`.
    fn record<'a>(&'a self, g: &mut Graph<'a>, words: &[usize]) -> Result<(crate::numcore::Var, u64)> {
        let v = self.counts.len();
        let mut targets = Tensor::zeros(&[words.len(), v]);
        let mut n = 0;
        for (r, &w) in words.iter().enumerate() {
            for &(ctx, c) in &self.counts[w] {
                targets.row_mut(r)[usize::from(ctx)] = c as f64;
            }
            n += self.totals[w];
        }
        if n == 0 {
            return Err(Error::EmptyCorpus);
        }
        let table = g.param(self.hidden);
        let h = g.gather(table, words.to_vec())?;
        let out = g.param(self.output);
        let logits = g.matmul(h, out)?;
        Ok((g.softmax_cross_entropy(logits, targets, n as f64)?, n))
    }

    /// Mean cross-entropy over `words` together with its gradients.
    pub fn loss_and_grad(&self, words: &[usize]) -> Result<(f64, u64, crate::numcore::Gradients)> {
        let mut g = Graph::new(&self.params);
        let (loss, n) = self.record(&mut g, words)?;
        let grads = g.backward(loss)?;
        Ok((g.scalar(loss), n, grads))
    }

    pub fn loss(&self, words: &[usize]) -> Result<f64> {
        let mut g = Graph::new(&self.params);
        let (loss, _) = self.record(&mut g, words)?;
        Ok(g.scalar(loss))
    }

    /// One epoch in seeded word order; returns the mean per-sample loss.
    fn epoch(&mut self, adam: &mut Adam, order: &[usize], batch: usize) -> Result<f64> {
        let mut total = 0.0;
        let mut seen = 0u64;
        for chunk in order.chunks(batch.max(1)) {
            let (loss, n, grads) = self.loss_and_grad(chunk)?;
            total += loss * n as f64;
            seen += n;
            self.params.accumulate(&grads);
            adam.step(&mut self.params);
        }
        Ok(total / seen.max(1) as f64)
    }
}

/// Full-corpus objective for gradient checking.
pub struct SkipGramObjective(pub SkipGram);

impl Objective for SkipGramObjective {
    fn params(&self) -> &ParamSet {
        &self.0.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.0.params
    }

    fn loss(&self) -> Result<f64> {
        self.0.loss(&self.0.active_words())
    }

    fn loss_and_grad(&self) -> Result<(f64, Vec<Tensor>)> {
        let (loss, _, grads) = self.0.loss_and_grad(&self.0.active_words())?;
        Ok((loss, grads.to_dense(&self.0.params)))
    }
}

pub fn train_embedding(samples: &[SkipGramSample], vocab: &Vocabulary, config: &EmbedConfig) -> Result<EmbeddingTable> {
    Ok(train_embedding_traced(samples, vocab, config)?.0)
}

/// Like `train_embedding`, also returning the mean loss of every epoch.
pub fn train_embedding_traced(
    samples: &[SkipGramSample],
    vocab: &Vocabulary,
    config: &EmbedConfig,
) -> Result<(EmbeddingTable, Vec<f64>)> {
    if samples.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if let Some(bad) = samples
        .iter()
        .flat_map(|s| [s.input, s.context])
        .find(|&id| usize::from(id) >= vocab.len())
    {
        return Err(Error::Index {
            index: usize::from(bad),
            size: vocab.len(),
        });
    }
    train_from_counts(cooccurrence(samples, vocab.len()), vocab, config)
}

/// Trains on precomputed co-occurrence counts (see `corpus::seed_cooccurrence`).
pub fn train_from_counts(
    counts: Vec<Vec<(WordId, u64)>>,
    vocab: &Vocabulary,
    config: &EmbedConfig,
) -> Result<(EmbeddingTable, Vec<f64>)> {
    if counts.len() != vocab.len() {
        return Err(Error::shape(format!("{} count rows for {} words", counts.len(), vocab.len())));
    }
    if !(config.lr > 0.0) {
        return Err(Error::param("learning rate must be positive"));
    }
    let mut model = SkipGram::new(counts, config.dim, config.seed)?;
    let mut order = model.active_words();
    if order.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut adam = Adam::new(
        AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        },
        &model.params,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0e0b);
    let mut losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let loss = model.epoch(&mut adam, &order, config.batch_words)?;
        log::debug!("embedding epoch {} loss {loss:.6}", epoch + 1);
        if !loss.is_finite() {
            return Err(Error::State(format!("embedding loss diverged at epoch {}", epoch + 1)));
        }
        losses.push(loss);
    }
    let table = EmbeddingTable::new(vocab.clone(), model.hidden().clone())?;
    Ok((table, losses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::addr::{parse_address, to_words};
    use crate::corpus::{build_vocabulary, generate_samples};
    use crate::numcore::{cosine, gradcheck};

    fn seq(s: &str) -> WordSequence {
        to_words(parse_address(s).unwrap())
    }

    fn small_config(epochs: usize) -> EmbedConfig {
        EmbedConfig {
            dim: 16,
            epochs,
            ..EmbedConfig::default()
        }
    }

    fn table_of(seeds: &[WordSequence], config: &EmbedConfig) -> (EmbeddingTable, Vec<f64>) {
        let vocab = build_vocabulary(seeds).unwrap();
        let samples = generate_samples(seeds, &vocab, config.window).unwrap();
        train_embedding_traced(&samples, &vocab, config).unwrap()
    }

    #[test]
    fn repeated_sample_loss_decreases() {
        let vocab = build_vocabulary(&[seq("::")]).unwrap();
        let samples = vec![SkipGramSample { input: 0, context: 1 }; 20];
        let (_, losses) = train_embedding_traced(&samples, &vocab, &small_config(10)).unwrap();
        for w in losses.windows(2) {
            assert!(w[1] < w[0], "{losses:?}");
        }
    }

    #[test]
    fn training_is_deterministic() {
        let seeds = [seq("2001:db8::1"), seq("2001:db8::2:1"), seq("2001:db8:1::1")];
        let cfg = small_config(5);
        assert_eq!(table_of(&seeds, &cfg).0, table_of(&seeds, &cfg).0);
        let other = EmbedConfig { seed: 1, ..cfg.clone() };
        assert_ne!(table_of(&seeds, &cfg).0, table_of(&seeds, &other).0);
    }

    #[test]
    fn loss_falls_and_vectors_are_nonzero() {
        let seeds: Vec<_> = (1..12).map(|i| seq(&format!("2001:db8:{i:x}::{:x}", i * 7))).collect();
        let (table, losses) = table_of(&seeds, &small_config(8));
        assert!(losses.iter().all(|l| l.is_finite()));
        assert!(losses.last().unwrap() < &losses[0]);
        for i in 0..table.vocab().len() {
            assert!(table.vector(i as WordId).iter().any(|&x| x != 0.0));
        }
    }

    #[test]
    fn empty_samples_rejected() {
        let vocab = build_vocabulary(&[seq("::")]).unwrap();
        assert!(matches!(
            train_embedding(&[], &vocab, &EmbedConfig::default()),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn word_and_address_vectors() {
        let seeds = [seq("::"), seq("::1")];
        let (table, _) = table_of(&seeds, &small_config(2));
        let v = table.word_vector_text("00").unwrap();
        assert_eq!(v.len(), 16);
        assert!((cosine(v, v) - 1.0).abs() < 1e-12);
        assert!(matches!(table.word_vector_text("ZZ"), Err(Error::Vocab(_))));
        assert!(matches!(table.word_vector_text("5a"), Err(Error::Vocab(_))));

        let zero = table.address_vector(&seq("::")).unwrap();
        let mut expect = vec![0.0; 16];
        for k in 0..32u8 {
            let w = AddressWord::new(0, k).unwrap();
            for (e, x) in expect.iter_mut().zip(table.word_vector(w).unwrap()) {
                *e += x / 32.0;
            }
        }
        for (a, b) in zero.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
        match table.address_vector(&seq("::5:0:0:7")) {
            Err(Error::Vocab(missing)) => assert_eq!(missing.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn identical_word_vectors_average_to_themselves() {
        let vocab = build_vocabulary(&[seq("::")]).unwrap();
        let row: Vec<f64> = (0..4).map(|i| i as f64 - 1.5).collect();
        let data = (0..32).flat_map(|_| row.clone()).collect();
        let table = EmbeddingTable::new(vocab, Tensor::matrix(32, 4, data).unwrap()).unwrap();
        assert_eq!(table.address_vector(&seq("::")).unwrap(), row);
    }

    #[test]
    fn one_hot_baseline() {
        let zero = one_hot_address_vector(&seq("::"));
        assert_eq!(zero.len(), 512);
        assert_eq!(zero.iter().sum::<f64>(), 32.0);
        for (i, &x) in zero.iter().enumerate() {
            assert_eq!(x, if i % 16 == 0 { 1.0 } else { 0.0 });
        }
        let other = one_hot_address_vector(&seq("::1"));
        let hamming = zero.iter().zip(&other).filter(|(a, b)| a != b).count();
        assert_eq!(hamming, 2);
    }

    #[test]
    fn tsv_roundtrip() {
        let seeds = [seq("2001:db8::1"), seq("fe80::abcd")];
        let (table, _) = table_of(&seeds, &small_config(3));
        let text = table.to_tsv();
        assert!(text.starts_with("# veclm-vectors/1"));
        let back = EmbeddingTable::from_tsv(&text, Path::new("v.tsv")).unwrap();
        assert_eq!(back.vocab(), table.vocab());
        assert!(back.vectors().max_abs_diff(table.vectors()) < 1e-6);

        let bad = text.replacen("\t", "\tx", 2);
        match EmbeddingTable::from_tsv(&bad, Path::new("v.tsv")) {
            Err(Error::Data { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    /// Words "10" and "20" share every context; "30" shares none.
    pub(crate) fn context_twins() -> Vec<WordSequence> {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut seeds = Vec::new();
        for _ in 0..6 {
            let mut tail = [0u8; 31];
            tail.iter_mut().for_each(|n| *n = rng.gen_range(4..6));
            let mut other = [0u8; 31];
            other.iter_mut().for_each(|n| *n = rng.gen_range(8..10));
            for (lead, rest) in [(1u8, tail), (2, tail), (3, other)] {
                let words: Vec<_> = std::iter::once(lead)
                    .chain(rest)
                    .enumerate()
                    .map(|(i, n)| AddressWord::new(n, i as u8).unwrap())
                    .collect();
                seeds.push(WordSequence::new(&words).unwrap());
            }
        }
        seeds
    }

    #[test]
    fn shared_contexts_give_similar_vectors() {
        let cfg = EmbedConfig::default();
        let (table, _) = table_of(&context_twins(), &cfg);
        let v = |t: &str| table.word_vector_text(t).unwrap().to_vec();
        let (a, b, z) = (v("10"), v("20"), v("30"));
        let margin = cosine(&a, &b) - cosine(&a, &z).max(cosine(&b, &z));
        assert!(margin > 0.3, "margin {margin}");
    }

    #[test]
    fn skipgram_gradcheck() {
        let seeds = [seq("2001:db8::1"), seq("2001:db8::2:1")];
        let vocab = build_vocabulary(&seeds).unwrap();
        let counts = crate::corpus::seed_cooccurrence(&seeds, &vocab, 5).unwrap();
        let mut model = SkipGram::new(counts, 8, 3).unwrap();
        // nonzero output weights so the hidden gradient is exercised
        let out = model.output;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        model.params.get_mut(out).value.data_mut().iter_mut().for_each(|x| *x = rng.gen_range(-0.5..0.5));
        let mut obj = SkipGramObjective(model);
        let report = gradcheck(&mut obj, 200, 1e-4, 1).unwrap();
        assert!(report.passed(), "{report:?}");
        assert!(report.checked >= 200);
    }
}
