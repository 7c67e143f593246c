use std::collections::HashSet;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use veclm::addr::Ipv6Addr;
use veclm::cluster::{compare_baseline, ClusterConfig};
use veclm::embed::{EmbedConfig, EmbeddingTable};
use veclm::error::{Error, Result};
use veclm::eval::{evaluate, growth_curve, sweep_temperature, GrowthRow, Pipeline, SweepRow};
use veclm::gen::{generate_candidates, GenerateConfig};
use veclm::io::{addresses_text, read_addresses, write_text};
use veclm::lm::{train_lm, ModelConfig, TrainConfig, TransformerCheckpoint};
use veclm::pipeline::{address_vectors, embed_seeds, SeedSet};
use veclm::synthoracle::{default_specs, random_baseline_rate, split, synthesize, Universe};

use crate::args::*;
use crate::manifest::{digests, RunManifest};

/// Shared by every command: global flags and the subcommand's own.
pub struct Context<'a> {
    pub global: &'a Global,
    pub command: &'static str,
}

impl Context<'_> {
    fn manifest(
        &self,
        config: &impl Serialize,
        inputs: &[&Path],
        outputs: &[&Path],
        details: serde_json::Value,
    ) -> Result<RunManifest> {
        Ok(RunManifest {
            format_version: crate::manifest::MANIFEST_FORMAT,
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            seed: self.global.seed,
            deterministic: self.global.deterministic,
            threads: self.global.threads,
            config: serde_json::to_value(config)?,
            inputs: digests(inputs)?,
            outputs: digests(outputs)?,
            details,
            created_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        })
    }
}

fn seeds(path: &Path) -> Result<SeedSet> {
    let addrs = read_addresses(path)?;
    if addrs.is_empty() {
        return Err(Error::Data {
            path: path.into(),
            line: 0,
            message: "no addresses".into(),
        });
    }
    Ok(SeedSet::new(addrs))
}

fn model_inputs(inputs: &ModelInputs) -> Result<(SeedSet, EmbeddingTable, TransformerCheckpoint)> {
    Ok((
        seeds(&inputs.seeds)?,
        EmbeddingTable::read(&inputs.vectors)?,
        TransformerCheckpoint::load(&inputs.checkpoint)?,
    ))
}

pub fn synth(ctx: &Context, a: &SynthArgs) -> Result<()> {
    let specs = default_specs(a.total, a.prefixes)?;
    let universe = synthesize(&specs, ctx.global.seed)?;
    let (seed_addrs, hidden) = split(&universe, a.seed_fraction, ctx.global.seed)?;
    let (u, s, h) = (a.out.join("universe.txt"), a.out.join("seeds.txt"), a.out.join("hidden.txt"));
    universe.write(&u)?;
    write_text(&s, &addresses_text("veclm-seeds/1", &seed_addrs))?;
    write_text(&h, &addresses_text("veclm-hidden/1", &hidden))?;
    let details = serde_json::json!({
        "specs": specs,
        "labels": universe.label_counts(),
        "random_baseline_rate": random_baseline_rate(&specs),
    });
    ctx.manifest(a, &[], &[&u, &s, &h], details)?.write(&a.out)?;
    eprintln!(
        "universe {} addresses, {} seeds, {} hidden",
        universe.len(),
        seed_addrs.len(),
        hidden.len()
    );
    Ok(())
}

pub fn embed(ctx: &Context, a: &EmbedArgs) -> Result<()> {
    let seeds = seeds(&a.seeds)?;
    let config = EmbedConfig {
        dim: a.dim,
        epochs: a.epochs,
        lr: a.lr,
        seed: ctx.global.seed,
        window: a.window,
        batch_words: a.batch_words,
    };
    let (table, losses) = embed_seeds(&seeds.words, &config)?;
    table.write(&a.out)?;
    let details = serde_json::json!({ "vocabulary": table.vocab().len(), "epoch_losses": losses });
    ctx.manifest(&config, &[&a.seeds], &[&a.out], details)?.write(&a.out)?;
    eprintln!("{} word vectors of dimension {}", table.vocab().len(), table.dim());
    Ok(())
}

pub fn train(ctx: &Context, a: &TrainArgs) -> Result<()> {
    let seeds = seeds(&a.seeds)?;
    let table = EmbeddingTable::read(&a.vectors)?;
    let config = TrainConfig {
        model: ModelConfig {
            layers: a.layers,
            heads: a.heads,
            d_model: table.dim(),
            d_ff: a.d_ff,
            positional_encoding: !a.no_positional_encoding,
            output_activation: a.output_activation.parse()?,
            dropout: a.dropout,
        },
        epochs: a.epochs,
        lr: a.lr,
        seed: ctx.global.seed,
        batch_size: a.batch_size,
        epoch_size: a.epoch_size,
        validation_fraction: a.validation_fraction,
        fine_tune: a.fine_tune,
        warmup_steps: a.warmup_steps,
        ..TrainConfig::default()
    };
    config.model.validate()?;
    let ckpt = train_lm(&seeds.words, &table, &config)?;
    ckpt.save(&a.out)?;
    let details = serde_json::json!({ "params_sha256": ckpt.hash() });
    ctx.manifest(&config, &[&a.seeds, &a.vectors], &[&a.out], details)?.write(&a.out)?;
    let last = ckpt.manifest.training.epoch_losses.last().copied().unwrap_or(f64::NAN);
    eprintln!("trained {} epochs, final loss {last:.6}", config.epochs);
    Ok(())
}

pub fn generate(ctx: &Context, a: &GenerateArgs) -> Result<()> {
    let (seeds, table, ckpt) = model_inputs(&a.inputs)?;
    let config = GenerateConfig {
        count: a.count,
        strategy: a.strategy.parse()?,
        temperature: a.temperature,
        seed: ctx.global.seed,
    };
    let run = match generate_candidates(&ckpt.model, &table, &seeds.words, &config) {
        Err(Error::PartialResult(run)) => {
            log::warn!(
                "attempt budget exhausted: {} of {} candidates",
                run.candidates.len(),
                run.requested
            );
            *run
        }
        other => other?,
    };
    write_text(&a.out, &run.candidates_text())?;
    let inputs = [a.inputs.seeds.as_path(), &a.inputs.vectors, &a.inputs.checkpoint];
    let details = serde_json::to_value(run.metadata())?;
    ctx.manifest(&config, &inputs, &[&a.out], details)?.write(&a.out)?;
    eprintln!("{} candidates after {} attempts", run.candidates.len(), run.attempts);
    Ok(())
}

pub fn eval(ctx: &Context, a: &EvalArgs) -> Result<()> {
    let candidates = read_addresses(&a.candidates)?;
    let seeds: HashSet<Ipv6Addr> = read_addresses(&a.seeds)?.into_iter().collect();
    let universe = Universe::read(&a.universe)?;
    let report = evaluate(&candidates, &seeds, &universe)?;
    write_text(&a.out, &report.to_json()?)?;
    ctx.manifest(a, &[&a.candidates, &a.seeds, &a.universe], &[&a.out], serde_json::Value::Null)?
        .write(&a.out)?;
    println!("{}", report.summary());
    Ok(())
}

/// A seeded subsample in original order; `n == 0` or `n ≥ len` keeps all.
fn sample_addresses(addrs: &[Ipv6Addr], n: usize, seed: u64) -> Vec<Ipv6Addr> {
    if n == 0 || n >= addrs.len() {
        return addrs.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, addrs.len(), n).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| addrs[i]).collect()
}

pub fn cluster(ctx: &Context, a: &ClusterArgs) -> Result<()> {
    let addrs = sample_addresses(&read_addresses(&a.seeds)?, a.sample, ctx.global.seed);
    let table = EmbeddingTable::read(&a.vectors)?;
    let (embedded, one_hot) = address_vectors(&table, &addrs)?;
    let config = ClusterConfig {
        eps: a.eps,
        min_pts: a.min_pts,
        metric: a.metric.parse()?,
    };
    let (report, e, o) = compare_baseline(&embedded, &one_hot, &config)?;
    let (ct, ot, sj) = (
        a.out.join("clusters.tsv"),
        a.out.join("clusters-onehot.tsv"),
        a.out.join("summary.json"),
    );
    write_text(&ct, &e.to_tsv(&addrs))?;
    write_text(&ot, &o.to_tsv(&addrs))?;
    write_text(&sj, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    ctx.manifest(a, &[&a.seeds, &a.vectors], &[&ct, &ot, &sj], serde_json::Value::Null)?
        .write(&a.out)?;
    let fmt = |s: Option<f64>| s.map_or("undefined".to_string(), |v| format!("{v:.4}"));
    println!(
        "embedding: {} clusters, silhouette {}; one-hot: {} clusters, silhouette {}",
        report.embedding.clusters,
        fmt(report.embedding.silhouette),
        report.one_hot.clusters,
        fmt(report.one_hot.silhouette)
    );
    Ok(())
}

#[derive(Serialize)]
struct SweepOutput {
    format_version: &'static str,
    temperatures: Vec<SweepRow>,
    growth: Vec<GrowthRow>,
}

pub fn sweep(ctx: &Context, a: &SweepArgs) -> Result<()> {
    let (seeds, table, ckpt) = model_inputs(&a.inputs)?;
    let universe = Universe::read(&a.universe)?;
    let pipeline = Pipeline {
        model: &ckpt.model,
        table: &table,
        seeds: &seeds.words,
        seed_set: &seeds.set,
        oracle: &universe,
    };
    let base = GenerateConfig {
        count: a.count,
        strategy: a.strategy.parse()?,
        temperature: a.temperature,
        seed: ctx.global.seed,
    };
    let out = SweepOutput {
        format_version: "veclm-sweep/1",
        temperatures: sweep_temperature(&pipeline, &a.temperatures, &base)?,
        growth: growth_curve(&pipeline, &a.budgets, &base)?,
    };
    write_text(&a.out, &(serde_json::to_string_pretty(&out)? + "\n"))?;
    let inputs = [
        a.inputs.seeds.as_path(),
        &a.inputs.vectors,
        &a.inputs.checkpoint,
        &a.universe,
    ];
    ctx.manifest(a, &inputs, &[&a.out], serde_json::Value::Null)?.write(&a.out)?;
    for row in &out.temperatures {
        println!(
            "t={}  r_hit {}%  r_gen {}%  distinct suffixes {}",
            row.temperature, row.report.r_hit_pct, row.report.r_gen_pct, row.distinct_suffixes
        );
    }
    for row in &out.growth {
        println!("N_candidate {}  N_gen {}  r_gen {:.4}", row.n_candidate, row.n_gen, row.r_gen);
    }
    Ok(())
}
