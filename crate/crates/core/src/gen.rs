//! Candidate generation: predicted vectors become per-position word
//! distributions, from which suffix words are sampled.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::addr::{format_address, from_word_list, AddressWord, Ipv6Addr, WordSequence};
use crate::corpus::{Vocabulary, WordId};
use crate::error::{Error, Result};
use crate::lm::{DecoderCache, Memory, StepRows, Transformer, HALF};
use crate::numcore::{cosine, softmax, Tensor};

/// Best-performing temperature; values in (0, 0.05] are recommended.
pub const DEFAULT_TEMPERATURE: f64 = 0.01;
pub const CANDIDATES_FORMAT: &str = "veclm-candidates/1";
/// Attempts allowed per requested candidate.
pub const ATTEMPTS_PER_CANDIDATE: u64 = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Greedy,
    Random,
    Temperature,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(Strategy::Greedy),
            "random" => Ok(Strategy::Random),
            "temperature" => Ok(Strategy::Temperature),
            other => Err(Error::param(format!("unknown strategy {other:?}"))),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::Greedy => "greedy",
            Strategy::Random => "random",
            Strategy::Temperature => "temperature",
        })
    }
}

/// `P(i) = e^{cos_i} / Σ_j e^{cos_j}`.
pub fn base_probabilities(similarities: &[f64]) -> Vec<f64> {
    softmax(similarities)
}

fn check_temperature(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("temperature must be positive and finite, got {t}")))
    }
}

/// `Pr(i) ∝ P(i)^{1/t}`, evaluated as a softmax of `ln P(i) / t`.
pub fn temper(p: &[f64], t: f64) -> Result<Vec<f64>> {
    check_temperature(t)?;
    if t == 1.0 {
        return Ok(p.to_vec());
    }
    let logits: Vec<f64> = p.iter().map(|&x| x.ln() / t).collect();
    Ok(softmax(&logits))
}

/// Word distribution for one suffix position.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SamplingDistribution {
    pub position: usize,
    /// Vocabulary ids with this position's index, ascending.
    pub candidates: Vec<WordId>,
    pub similarities: Vec<f64>,
    pub base: Vec<f64>,
    pub tempered: Vec<f64>,
    pub temperature: f64,
}

impl SamplingDistribution {
    pub fn new(position: usize, candidates: Vec<WordId>, similarities: Vec<f64>, temperature: f64) -> Result<Self> {
        if candidates.is_empty() || candidates.len() != similarities.len() {
            return Err(Error::param(format!(
                "{} candidates with {} similarities at position {position}",
                candidates.len(),
                similarities.len()
            )));
        }
        let base = base_probabilities(&similarities);
        let tempered = temper(&base, temperature)?;
        Ok(SamplingDistribution {
            position,
            candidates,
            similarities,
            base,
            tempered,
            temperature,
        })
    }

    /// Distribution for `predicted` against the candidate words' vectors.
    pub fn from_prediction(
        vocab: &Vocabulary,
        vectors: &Tensor,
        position: usize,
        predicted: &[f64],
        temperature: f64,
    ) -> Result<Self> {
        let candidates = vocab.ids_at(position).to_vec();
        let sims = candidates
            .iter()
            .map(|&id| cosine(predicted, vectors.row(usize::from(id))))
            .collect();
        SamplingDistribution::new(position, candidates, sims, temperature)
    }
}

/// Greedy: argmax of Pr, ties to the lowest id. Random: uniform over the
/// candidates, ignoring Pr. Temperature: a draw from Pr.
pub fn sample_word<R: Rng>(dist: &SamplingDistribution, strategy: Strategy, rng: &mut R) -> WordId {
    let i = match strategy {
        Strategy::Greedy => argmax(&dist.tempered),
        Strategy::Random => rng.gen_range(0..dist.candidates.len()),
        Strategy::Temperature => draw(&dist.tempered, rng),
    };
    dist.candidates[i]
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in p.iter().enumerate() {
        if x > p[best] {
            best = i;
        }
    }
    best
}

fn draw<R: Rng>(p: &[f64], rng: &mut R) -> usize {
    let total: f64 = p.iter().sum();
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (i, &x) in p.iter().enumerate() {
        acc += x;
        if u < acc {
            return i;
        }
    }
    // rounding left u at the top of the range: take the last nonzero entry
    p.iter().rposition(|&x| x > 0.0).unwrap_or(0)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Candidate {
    pub address: Ipv6Addr,
    /// Index into `GenerationRun::prefixes`.
    pub prefix: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerationRun {
    pub strategy: Strategy,
    pub temperature: f64,
    pub seed: u64,
    pub requested: usize,
    /// Distinct 64-bit seed prefixes, in the order they were cycled.
    pub prefixes: Vec<Ipv6Addr>,
    /// Distinct candidates in production order.
    pub candidates: Vec<Candidate>,
    pub attempts: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub format_version: String,
    pub strategy: Strategy,
    pub temperature: f64,
    pub seed: u64,
    pub requested: usize,
    pub produced: usize,
    pub attempts: u64,
    pub prefixes: usize,
    pub complete: bool,
}

impl GenerationRun {
    pub fn addresses(&self) -> Vec<Ipv6Addr> {
        self.candidates.iter().map(|c| c.address).collect()
    }

    /// candidates.txt: one canonical address per line under a format line.
    pub fn candidates_text(&self) -> String {
        let mut out = String::with_capacity(self.candidates.len() * 24 + 32);
        out.push_str(&format!("# {CANDIDATES_FORMAT}\n"));
        for c in &self.candidates {
            out.push_str(&format_address(c.address));
            out.push('\n');
        }
        out
    }

    pub fn metadata(&self) -> RunMetadata {
        RunMetadata {
            format_version: "veclm-generation/1".into(),
            strategy: self.strategy,
            temperature: self.temperature,
            seed: self.seed,
            requested: self.requested,
            produced: self.candidates.len(),
            attempts: self.attempts,
            prefixes: self.prefixes.len(),
            complete: self.candidates.len() >= self.requested,
        }
    }
}

impl GenerationRun {
    /// Fraction of candidates already present in `seeds`.
    pub fn repetition_rate(&self, seeds: &HashSet<Ipv6Addr>) -> f64 {
        if self.candidates.is_empty() {
            return 0.0;
        }
        let rep = self.candidates.iter().filter(|c| seeds.contains(&c.address)).count();
        rep as f64 / self.candidates.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateConfig {
    pub count: usize,
    pub strategy: Strategy,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            count: 1000,
            strategy: Strategy::Temperature,
            temperature: DEFAULT_TEMPERATURE,
            seed: 0,
        }
    }
}

/// Decoder states reached so far under one prefix, keyed by the words
/// chosen. Paths sampled repeatedly are decoded once.
struct Trie {
    memory: Memory,
    nodes: Vec<Node>,
}

struct Node {
    rows: StepRows,
    dist: SamplingDistribution,
    children: HashMap<WordId, usize>,
}

struct Decoder<'a> {
    model: &'a Transformer,
    vocab: &'a Vocabulary,
    vectors: &'a Tensor,
    temperature: f64,
}

impl Decoder<'_> {
    fn node(&self, memory: &Memory, cache: &DecoderCache, input: &[f64], depth: usize) -> Result<Node> {
        let (y, rows) = self.model.step(memory, cache, input)?;
        let dist = SamplingDistribution::from_prediction(self.vocab, self.vectors, HALF + depth, &y, self.temperature)?;
        Ok(Node {
            rows,
            dist,
            children: HashMap::new(),
        })
    }

    fn trie(&self, prefix: &[WordId; HALF]) -> Result<Trie> {
        let memory = self.model.memory(self.vectors, prefix)?;
        let root = self.node(&memory, &DecoderCache::default(), &self.model.start_input(), 0)?;
        Ok(Trie {
            memory,
            nodes: vec![root],
        })
    }

    /// Samples 16 suffix words, re-feeding each choice to the decoder.
    fn suffix<R: Rng>(&self, trie: &mut Trie, strategy: Strategy, rng: &mut R) -> Result<[WordId; HALF]> {
        let mut out = [0 as WordId; HALF];
        let mut cache = DecoderCache::default();
        let mut at = 0;
        for depth in 0..HALF {
            let word = sample_word(&trie.nodes[at].dist, strategy, rng);
            out[depth] = word;
            if depth + 1 == HALF {
                break;
            }
            cache.push(&trie.nodes[at].rows);
            at = match trie.nodes[at].children.get(&word) {
                Some(&next) => next,
                None => {
                    let input = self.model.word_input(self.vectors, word, depth + 1);
                    let node = self.node(&trie.memory, &cache, &input, depth + 1)?;
                    trie.nodes.push(node);
                    let next = trie.nodes.len() - 1;
                    trie.nodes[at].children.insert(word, next);
                    next
                }
            };
        }
        Ok(out)
    }
}

/// Distinct seed prefixes in first-seen order.
fn unique_prefixes(seeds: &[[WordId; 2 * HALF]]) -> Vec<[WordId; HALF]> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for s in seeds {
        let mut p = [0 as WordId; HALF];
        p.copy_from_slice(&s[..HALF]);
        if seen.insert(p) {
            out.push(p);
        }
    }
    out
}

/// Cycles through the seeds' distinct prefixes in seeded order, completing
/// each with a sampled suffix, until `count` distinct addresses exist or
/// `10 × count` attempts are spent. The random strategy never consults the
/// model. Each prefix owns an RNG stream derived from (seed, prefix slot).
pub fn generate_candidates(
    model: &Transformer,
    table: &crate::embed::EmbeddingTable,
    seeds: &[WordSequence],
    config: &GenerateConfig,
) -> Result<GenerationRun> {
    check_temperature(config.temperature)?;
    if seeds.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let vocab = table.vocab();
    let vectors = model.embedding().unwrap_or(table.vectors());
    if vectors.rows() != vocab.len() {
        return Err(Error::shape(format!("{} vectors for {} words", vectors.rows(), vocab.len())));
    }
    let encoded = crate::lm::encode_seeds(seeds, vocab)?;
    let mut prefixes = unique_prefixes(&encoded);
    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed);
    prefixes.shuffle(&mut order_rng);

    let words_of = |ids: &[WordId]| -> Vec<AddressWord> { ids.iter().map(|&id| vocab.word(id).expect("vocabulary id")).collect() };
    let prefix_addrs: Vec<Ipv6Addr> = prefixes
        .iter()
        .map(|p| {
            let bits = words_of(p).iter().fold(0u128, |acc, w| acc << 4 | u128::from(w.nybble()));
            Ipv6Addr::from_bits(bits << 64)
        })
        .collect();

    let decoder = Decoder {
        model,
        vocab,
        vectors,
        temperature: config.temperature,
    };
    let mut tries: Vec<Option<Trie>> = (0..prefixes.len()).map(|_| None).collect();
    let mut rngs: Vec<ChaCha8Rng> = (0..prefixes.len())
        .map(|i| {
            let mut r = ChaCha8Rng::seed_from_u64(config.seed);
            r.set_stream(i as u64 + 1);
            r
        })
        .collect();

    let budget = ATTEMPTS_PER_CANDIDATE * config.count as u64;
    let mut seen = HashSet::new();
    let mut run = GenerationRun {
        strategy: config.strategy,
        temperature: config.temperature,
        seed: config.seed,
        requested: config.count,
        prefixes: prefix_addrs,
        candidates: Vec::new(),
        attempts: 0,
    };
    while run.candidates.len() < config.count && run.attempts < budget {
        let slot = (run.attempts % prefixes.len() as u64) as usize;
        run.attempts += 1;
        let rng = &mut rngs[slot];
        let suffix = match config.strategy {
            Strategy::Random => {
                let mut s = [0 as WordId; HALF];
                for (i, w) in s.iter_mut().enumerate() {
                    let ids = vocab.ids_at(HALF + i);
                    *w = ids[rng.gen_range(0..ids.len())];
                }
                s
            }
            _ => {
                if tries[slot].is_none() {
                    tries[slot] = Some(decoder.trie(&prefixes[slot])?);
                }
                decoder.suffix(tries[slot].as_mut().expect("built above"), config.strategy, rng)?
            }
        };
        let mut words = words_of(&prefixes[slot]);
        words.extend(words_of(&suffix));
        let address = from_word_list(&words)?;
        if seen.insert(address) {
            run.candidates.push(Candidate { address, prefix: slot });
        }
    }
    if run.candidates.len() < config.count {
        return Err(Error::PartialResult(Box::new(run)));
    }
    Ok(run)
}

/// The run from either a complete or a budget-exhausted generation.
pub fn accept_partial(result: Result<GenerationRun>) -> Result<GenerationRun> {
    match result {
        Err(Error::PartialResult(run)) => Ok(*run),
        other => other,
    }
}
