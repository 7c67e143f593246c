//! Hit and generation rates of a candidate set against the seeds and the
//! activity oracle.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::addr::{Ipv6Addr, WordSequence};
use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::gen::{accept_partial, generate_candidates, GenerateConfig, GenerationRun, RunMetadata};
use crate::lm::Transformer;
use crate::synthoracle::Universe;

pub const METRICS_FORMAT: &str = "veclm-metrics/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl Ratio {
    /// Reduced `num / den`; `den` must be positive.
    pub fn new(num: u64, den: u64) -> Self {
        let g = gcd(num, den).max(1);
        Ratio {
            num: num / g,
            den: den / g,
        }
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `100 · num / den` to two decimals, half-up, from integers only.
    pub fn percent(self) -> String {
        let (n, d) = (u128::from(self.num), u128::from(self.den));
        let hundredths = (20_000 * n + d) / (2 * d);
        format!("{}.{:02}", hundredths / 100, hundredths % 100)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: String,
    pub n_candidate: u64,
    pub n_hit: u64,
    pub n_gen: u64,
    pub r_hit: Ratio,
    pub r_gen: Ratio,
    pub r_hit_pct: String,
    pub r_gen_pct: String,
    /// Active candidates per scheme label.
    pub per_scheme: BTreeMap<String, u64>,
    /// Active candidates outside the seeds, per scheme label.
    pub per_scheme_new: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<RunMetadata>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn summary(&self) -> String {
        format!(
            "N_candidate {}  N_hit {}  N_gen {}  r_hit {}%  r_gen {}%",
            self.n_candidate, self.n_hit, self.n_gen, self.r_hit_pct, self.r_gen_pct
        )
    }
}

/// `r_hit = N_hit / N_candidate`, `r_gen = N_gen / N_candidate`, where a
/// hit is an active candidate and a generated hit is one not among the
/// seeds. Duplicate candidates count once.
pub fn evaluate(candidates: &[Ipv6Addr], seeds: &HashSet<Ipv6Addr>, oracle: &Universe) -> Result<EvalReport> {
    let mut seen = HashSet::with_capacity(candidates.len());
    let (mut n, mut hit, mut new) = (0u64, 0u64, 0u64);
    let (mut per_scheme, mut per_scheme_new) = (BTreeMap::new(), BTreeMap::new());
    for &c in candidates {
        if !seen.insert(c) {
            continue;
        }
        n += 1;
        if let Some(kind) = oracle.label(c) {
            hit += 1;
            *per_scheme.entry(kind.label().to_string()).or_insert(0) += 1;
            if !seeds.contains(&c) {
                new += 1;
                *per_scheme_new.entry(kind.label().to_string()).or_insert(0) += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::param("empty candidate set"));
    }
    let (r_hit, r_gen) = (Ratio::new(hit, n), Ratio::new(new, n));
    Ok(EvalReport {
        format_version: METRICS_FORMAT.to_string(),
        n_candidate: n,
        n_hit: hit,
        n_gen: new,
        r_hit,
        r_gen,
        r_hit_pct: r_hit.percent(),
        r_gen_pct: r_gen.percent(),
        per_scheme,
        per_scheme_new,
        run: None,
    })
}

pub fn evaluate_run(run: &GenerationRun, seeds: &HashSet<Ipv6Addr>, oracle: &Universe) -> Result<EvalReport> {
    let mut report = evaluate(&run.addresses(), seeds, oracle)?;
    report.run = Some(run.metadata());
    Ok(report)
}

/// Model, vectors and seeds shared by the sweeps.
pub struct Pipeline<'a> {
    pub model: &'a Transformer,
    pub table: &'a EmbeddingTable,
    pub seeds: &'a [WordSequence],
    pub seed_set: &'a HashSet<Ipv6Addr>,
    pub oracle: &'a Universe,
}

impl Pipeline<'_> {
    /// Generates and evaluates, keeping a budget-exhausted partial run.
    pub fn run(&self, config: &GenerateConfig) -> Result<(GenerationRun, EvalReport)> {
        let run = accept_partial(generate_candidates(self.model, self.table, self.seeds, config))?;
        let report = evaluate_run(&run, self.seed_set, self.oracle)?;
        Ok((run, report))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub temperature: f64,
    /// Distinct interface identifiers among the candidates.
    pub distinct_suffixes: usize,
    pub report: EvalReport,
}

/// One generation per temperature, all with the same RNG seed and budget.
pub fn sweep_temperature(pipeline: &Pipeline, temperatures: &[f64], base: &GenerateConfig) -> Result<Vec<SweepRow>> {
    temperatures
        .iter()
        .map(|&t| {
            let config = GenerateConfig {
                temperature: t,
                ..base.clone()
            };
            let (run, report) = pipeline.run(&config)?;
            let distinct_suffixes = run.candidates.iter().map(|c| c.address.iid()).collect::<HashSet<_>>().len();
            Ok(SweepRow {
                temperature: t,
                distinct_suffixes,
                report,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow {
    pub n_candidate: u64,
    pub n_gen: u64,
    pub r_gen: f64,
}

/// N_gen against candidate budget. Generation runs once at the largest
/// budget; smaller budgets score its leading candidates, so each set
/// contains the previous one.
pub fn growth_curve(pipeline: &Pipeline, budgets: &[usize], base: &GenerateConfig) -> Result<Vec<GrowthRow>> {
    if budgets.windows(2).any(|w| w[0] > w[1]) || budgets.first() == Some(&0) {
        return Err(Error::param("budgets must be positive and non-decreasing"));
    }
    let Some(&max) = budgets.last() else {
        return Ok(Vec::new());
    };
    let (run, _) = pipeline.run(&GenerateConfig {
        count: max,
        ..base.clone()
    })?;
    let addrs = run.addresses();
    budgets
        .iter()
        .map(|&b| {
            let r = evaluate(&addrs[..b.min(addrs.len())], pipeline.seed_set, pipeline.oracle)?;
            Ok(GrowthRow {
                n_candidate: r.n_candidate,
                n_gen: r.n_gen,
                r_gen: r.r_gen.to_f64(),
            })
        })
        .collect()
}
