//! The synthetic end-to-end benchmark: universe, split, embedding,
//! language model, generation and scoring.

use std::collections::HashSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::addr::{to_words, Ipv6Addr, WordSequence};
use crate::corpus::{build_vocabulary, seed_cooccurrence};
use crate::embed::{one_hot_address_vector, train_from_counts, EmbedConfig, EmbeddingTable};
use crate::error::{Error, Result};
use crate::eval::{EvalReport, Pipeline};
use crate::gen::{GenerateConfig, GenerationRun, Strategy};
use crate::lm::{train_lm, TrainConfig, TransformerCheckpoint};
use crate::synthoracle::{default_specs, random_baseline_rate, split, synthesize, SchemeSpec, Universe};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub seed: u64,
    pub total: usize,
    pub prefixes: usize,
    pub seed_fraction: f64,
    pub embed: EmbedConfig,
    pub train: TrainConfig,
    pub generate: GenerateConfig,
    /// Seeded greedy-versus-random repetition trials.
    pub trials: usize,
    /// Required r_hit over the analytic random-guess rate.
    pub baseline_factor: f64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            seed: 0,
            total: crate::synthoracle::DEFAULT_TOTAL,
            prefixes: crate::synthoracle::DEFAULT_PREFIXES,
            seed_fraction: 0.4,
            embed: EmbedConfig::default(),
            train: TrainConfig {
                epochs: 100,
                epoch_size: Some(256),
                ..TrainConfig::default()
            },
            generate: GenerateConfig {
                count: 1000,
                temperature: 0.01,
                ..GenerateConfig::default()
            },
            trials: 10,
            baseline_factor: 10.0,
        }
    }
}

impl BenchmarkConfig {
    /// Every stage seeded from the one global seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.embed.seed = seed;
        self.train.seed = seed;
        self.generate.seed = seed;
        self
    }
}

/// Seeds as word sequences plus a membership set.
pub struct SeedSet {
    pub addresses: Vec<Ipv6Addr>,
    pub words: Vec<WordSequence>,
    pub set: HashSet<Ipv6Addr>,
}

impl SeedSet {
    pub fn new(addresses: Vec<Ipv6Addr>) -> Self {
        let words = addresses.iter().map(|&a| to_words(a)).collect();
        let set = addresses.iter().copied().collect();
        SeedSet { addresses, words, set }
    }
}

pub fn embed_seeds(seeds: &[WordSequence], config: &EmbedConfig) -> Result<(EmbeddingTable, Vec<f64>)> {
    let vocab = build_vocabulary(seeds)?;
    let counts = seed_cooccurrence(seeds, &vocab, config.window)?;
    train_from_counts(counts, &vocab, config)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub seed: u64,
    pub greedy_candidates: usize,
    pub greedy_repetition: f64,
    pub random_candidates: usize,
    pub random_repetition: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub format_version: String,
    pub config: BenchmarkConfig,
    pub universe_size: usize,
    pub seeds: usize,
    pub vocabulary: usize,
    pub baseline_rate: f64,
    pub r_hit: f64,
    pub hit_multiple: f64,
    pub n_gen: u64,
    pub trials: Vec<Trial>,
    pub greedy_wins: usize,
    pub checkpoint_sha256: String,
    pub seconds: f64,
}

pub struct BenchmarkOutcome {
    pub specs: Vec<SchemeSpec>,
    pub universe: Universe,
    pub seeds: SeedSet,
    pub table: EmbeddingTable,
    pub checkpoint: TransformerCheckpoint,
    pub run: GenerationRun,
    pub report: EvalReport,
    pub summary: BenchmarkSummary,
}

impl BenchmarkOutcome {
    pub fn pipeline(&self) -> Pipeline<'_> {
        Pipeline {
            model: &self.checkpoint.model,
            table: &self.table,
            seeds: &self.seeds.words,
            seed_set: &self.seeds.set,
            oracle: &self.universe,
        }
    }

    pub fn passed(&self) -> bool {
        let s = &self.summary;
        s.hit_multiple >= s.config.baseline_factor && s.n_gen >= 1 && s.greedy_wins * 10 >= s.trials.len() * 8
    }
}

/// Greedy and random generations at the same budget for each trial seed.
pub fn repetition_trials(pipeline: &Pipeline, base: &GenerateConfig, trials: usize) -> Result<Vec<Trial>> {
    (0..trials as u64)
        .map(|k| {
            let seed = base.seed.wrapping_add(k);
            let with = |strategy| GenerateConfig {
                strategy,
                seed,
                ..base.clone()
            };
            let (greedy, _) = pipeline.run(&with(Strategy::Greedy))?;
            let (random, _) = pipeline.run(&with(Strategy::Random))?;
            Ok(Trial {
                seed,
                greedy_candidates: greedy.candidates.len(),
                greedy_repetition: greedy.repetition_rate(pipeline.seed_set),
                random_candidates: random.candidates.len(),
                random_repetition: random.repetition_rate(pipeline.seed_set),
            })
        })
        .collect()
}

pub fn run_benchmark(config: &BenchmarkConfig) -> Result<BenchmarkOutcome> {
    let start = Instant::now();
    let specs = default_specs(config.total, config.prefixes)?;
    let universe = synthesize(&specs, config.seed)?;
    let (seed_addrs, _hidden) = split(&universe, config.seed_fraction, config.seed)?;
    let seeds = SeedSet::new(seed_addrs);
    log::info!("universe {} addresses, {} seeds", universe.len(), seeds.addresses.len());

    let (table, _) = embed_seeds(&seeds.words, &config.embed)?;
    log::info!("embedding done after {:.1}s", start.elapsed().as_secs_f64());
    let checkpoint = train_lm(&seeds.words, &table, &config.train)?;
    log::info!("language model done after {:.1}s", start.elapsed().as_secs_f64());

    let pipeline = Pipeline {
        model: &checkpoint.model,
        table: &table,
        seeds: &seeds.words,
        seed_set: &seeds.set,
        oracle: &universe,
    };
    let (run, report) = pipeline.run(&config.generate)?;
    let trials = repetition_trials(&pipeline, &config.generate, config.trials)?;
    let greedy_wins = trials.iter().filter(|t| t.greedy_repetition > t.random_repetition).count();

    let baseline_rate = random_baseline_rate(&specs);
    let r_hit = report.r_hit.to_f64();
    let summary = BenchmarkSummary {
        format_version: "veclm-benchmark/1".into(),
        config: config.clone(),
        universe_size: universe.len(),
        seeds: seeds.addresses.len(),
        vocabulary: table.vocab().len(),
        baseline_rate,
        r_hit,
        hit_multiple: r_hit / baseline_rate,
        n_gen: report.n_gen,
        trials,
        greedy_wins,
        checkpoint_sha256: checkpoint.hash().to_string(),
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok(BenchmarkOutcome {
        specs,
        universe,
        seeds,
        table,
        checkpoint,
        run,
        report,
        summary,
    })
}

/// Embedding and one-hot address vectors for the same addresses.
pub fn address_vectors(table: &EmbeddingTable, addrs: &[Ipv6Addr]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let mut embedded = Vec::with_capacity(addrs.len());
    let mut one_hot = Vec::with_capacity(addrs.len());
    for &a in addrs {
        let seq = to_words(a);
        embedded.push(table.address_vector(&seq)?);
        one_hot.push(one_hot_address_vector(&seq));
    }
    if embedded.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok((embedded, one_hot))
}
