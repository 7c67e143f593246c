//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test --release --test acceptance`.

use std::collections::{HashMap, HashSet};
use std::time::{Duration, Instant};

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use veclm::addr::{format_address, from_words, parse_address, to_words, AddressWord, Ipv6Addr, WordSequence};
use veclm::cluster::{compare_baseline, dbscan, same_partition, ClusterConfig, Metric};
use veclm::corpus::{build_vocabulary, generate_samples, seed_cooccurrence};
use veclm::embed::{EmbedConfig, SkipGram, SkipGramObjective};
use veclm::eval::evaluate;
use veclm::gen::{base_probabilities, sample_word, temper, SamplingDistribution, Strategy};
use veclm::lm::{attention_dump, encode_seeds, train_lm, LmObjective, ModelConfig, TrainConfig, Transformer};
use veclm::numcore::{cosine, gradcheck, Objective, Tensor};
use veclm::pipeline::{address_vectors, embed_seeds, run_benchmark, BenchmarkConfig, BenchmarkOutcome};
use veclm::synthoracle::{SchemeKind, Universe};

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        passed,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit: Duration) -> bool {
    elapsed < limit
}

fn codec() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut bad = 0;
    for _ in 0..10_000 {
        let a = Ipv6Addr::from_bits(rng.gen());
        if parse_address(&format_address(a)).ok() != Some(a) || from_words(&to_words(a)) != a {
            bad += 1;
        }
    }
    let example = AddressWord::new(2, 10).unwrap().render() == "2a";
    let elapsed = start.elapsed();
    verdict(
        bad == 0 && example && within(elapsed, Duration::from_secs(1)),
        format!("{bad} roundtrip failures in 10000, nybble 2 at position 10 renders \"2a\": {example}, {elapsed:.2?}"),
    )
}

/// Pairs (i, j) with 1 ≤ |i − j| ≤ w inside one sequence, counted by distance.
fn enumerated_pairs(len: usize, w: usize) -> usize {
    (1..=w.min(len - 1)).map(|d| 2 * (len - d)).sum()
}

fn corpus() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let seqs: Vec<WordSequence> = (0..1000).map(|_| to_words(Ipv6Addr::from_bits(rng.gen()))).collect();
    let vocab = build_vocabulary(&seqs).unwrap();
    let single = generate_samples(&seqs[..1], &vocab, 5).unwrap().len();
    let oracle = enumerated_pairs(32, 5);
    let counts = seed_cooccurrence(&seqs, &vocab, 5).unwrap();
    let lookup: Vec<HashMap<u16, u64>> = counts.iter().map(|row| row.iter().copied().collect()).collect();
    let symmetric = lookup
        .iter()
        .enumerate()
        .all(|(a, row)| row.iter().all(|(&b, &c)| lookup[usize::from(b)].get(&(a as u16)) == Some(&c)));
    let total = generate_samples(&seqs, &vocab, 5).unwrap().len();
    verdict(
        single == oracle && symmetric && total == 1000 * oracle,
        format!(
            "{single} samples per sequence, enumeration gives {oracle} (270 is not reachable by any clipped \
             symmetric window); symmetric over 1000 sequences: {symmetric}"
        ),
    )
}

fn numeric_core() -> Verdict {
    let start = Instant::now();
    // skip-gram
    let seeds = [to_words("2001:db8::1".parse().unwrap()), to_words("2001:db8::2:1".parse().unwrap())];
    let vocab = build_vocabulary(&seeds).unwrap();
    let model = SkipGram::new(seed_cooccurrence(&seeds, &vocab, 5).unwrap(), 8, 3).unwrap();
    let mut obj = SkipGramObjective(model);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for p in obj.params_mut().iter_mut().filter(|p| p.name == "output") {
        p.value.data_mut().iter_mut().for_each(|x| *x = rng.gen_range(-0.5..0.5));
    }
    let sg = gradcheck(&mut obj, 200, 1e-4, 5).unwrap();

    // 2-layer, 2-head transformer
    let seqs: Vec<WordSequence> = (0..2).map(|_| to_words(Ipv6Addr::from_bits(rng.gen()))).collect();
    let vocab = build_vocabulary(&seqs).unwrap();
    let vectors = Tensor::matrix(vocab.len(), 100, (0..vocab.len() * 100).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let ids = encode_seeds(&seqs, &vocab).unwrap();
    let config = ModelConfig {
        layers: 2,
        heads: 2,
        d_ff: 64,
        dropout: 0.0,
        ..ModelConfig::default()
    };
    let model = Transformer::new(config.clone(), 21, 1.0, None).unwrap();
    let batch = model.batch(&vectors, &ids).unwrap();
    let mut obj = LmObjective { model, batch };
    let lm = gradcheck(&mut obj, 200, 1e-4, 5).unwrap();

    // attention rows and causal leakage
    let model = Transformer::new(ModelConfig { heads: 10, ..config }, 22, 1.0, None).unwrap();
    let dump = attention_dump(&model, &vectors, &ids[0]).unwrap();
    let mut row_err: f64 = 0.0;
    for head in dump.encoder.iter().chain(&dump.decoder_self).chain(&dump.decoder_cross).flatten() {
        for r in 0..16 {
            row_err = row_err.max((head.row(r).iter().sum::<f64>() - 1.0).abs());
        }
    }
    let batch = model.batch(&vectors, &ids).unwrap();
    let base = model.predict(&batch).unwrap();
    let mut leak: f64 = 0.0;
    for j in 1..16 {
        let mut perturbed = batch.clone();
        for b in 0..ids.len() {
            perturbed.decoder.row_mut(b * 16 + j).iter_mut().for_each(|x| *x += 3.0);
        }
        let out = model.predict(&perturbed).unwrap();
        for b in 0..ids.len() {
            for i in 0..j {
                let r = b * 16 + i;
                let d = base.row(r).iter().zip(out.row(r)).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                leak = leak.max(d);
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        sg.passed() && lm.passed() && row_err <= 1e-9 && leak < 1e-12 && within(elapsed, Duration::from_secs(120)),
        format!(
            "skip-gram max rel err {:.2e} over {} coords, transformer {:.2e} over {}, attention row error {row_err:.1e}, \
             causal leakage {leak:.1e}, {elapsed:.2?}",
            sg.max_rel_error, sg.checked, lm.max_rel_error, lm.checked
        ),
    )
}

/// Words "10" and "20" appear in identical contexts; "30" in disjoint ones.
fn context_twins() -> Vec<WordSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut seeds = Vec::new();
    for _ in 0..6 {
        let tail: Vec<u8> = (0..31).map(|_| rng.gen_range(4..6)).collect();
        let other: Vec<u8> = (0..31).map(|_| rng.gen_range(8..10)).collect();
        for (lead, rest) in [(1u8, &tail), (2, &tail), (3, &other)] {
            let words: Vec<AddressWord> = std::iter::once(lead)
                .chain(rest.iter().copied())
                .enumerate()
                .map(|(i, n)| AddressWord::new(n, i as u8).unwrap())
                .collect();
            seeds.push(WordSequence::new(&words).unwrap());
        }
    }
    seeds
}

fn embedding_semantics() -> Verdict {
    let start = Instant::now();
    let (table, _) = embed_seeds(&context_twins(), &EmbedConfig::default()).unwrap();
    let v = |t: &str| table.word_vector_text(t).unwrap().to_vec();
    let (a, b, z) = (v("10"), v("20"), v("30"));
    let (ab, az, bz) = (cosine(&a, &b), cosine(&a, &z), cosine(&b, &z));
    let margin = (ab - az).min(ab - bz);
    let elapsed = start.elapsed();
    verdict(
        margin > 0.3 && within(elapsed, Duration::from_secs(60)),
        format!("cos(A,B) {ab:.3}, cos(A,Z) {az:.3}, cos(B,Z) {bz:.3}, margin {margin:.3} after 50 epochs, {elapsed:.2?}"),
    )
}

fn memorization() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pool: Vec<WordSequence> = (0..64).map(|_| to_words(Ipv6Addr::from_bits(rng.gen()))).collect();
    let (table, _) = embed_seeds(
        &pool,
        &EmbedConfig {
            epochs: 10,
            ..EmbedConfig::default()
        },
    )
    .unwrap();
    let one = vec![pool[0]];
    let mut config = TrainConfig {
        epochs: 200,
        ..TrainConfig::default()
    };
    // memorizing one sequence: no regularization
    config.model.dropout = 0.0;
    let ckpt = train_lm(&one, &table, &config).unwrap();
    let ids = encode_seeds(&one, table.vocab()).unwrap();
    let loss = ckpt.model.evaluate(&ckpt.model.batch(table.vectors(), &ids).unwrap()).unwrap();
    let first = ckpt.manifest.training.epoch_losses[0];
    verdict(
        loss < 0.05,
        format!("mean cosine loss {first:.4} at epoch 1, {loss:.4} after 200 epochs, {:.2?}", start.elapsed()),
    )
}

fn temperature_limits() -> Verdict {
    let cos = [0.12, -0.35, 0.81, 0.44, 0.05];
    let p = base_probabilities(&cos);
    let identity = temper(&p, 1.0).unwrap() == p;
    let hot = temper(&p, 1e6).unwrap();
    let uniform_err = hot.iter().map(|x| (x - 0.2).abs()).fold(0.0, f64::max);
    let dist = SamplingDistribution::new(16, (0..5).collect(), cos.to_vec(), 0.001).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let top = (0..10_000).filter(|_| sample_word(&dist, Strategy::Temperature, &mut rng) == 2).count();
    let freq = top as f64 / 10_000.0;
    let q = temper(&[0.6, 0.4], 0.5).unwrap();
    let exact_err = (q[0] - 9.0 / 13.0).abs().max((q[1] - 4.0 / 13.0).abs());
    verdict(
        identity && uniform_err < 1e-3 && freq > 0.999 && exact_err < 1e-12,
        format!(
            "temper(P,1)=P: {identity}, t=1e6 max deviation from uniform {uniform_err:.1e}, \
             t=0.001 argmax frequency {freq:.4}, [0.6,0.4]@0.5 error {exact_err:.1e}"
        ),
    )
}

fn rate_arithmetic() -> Verdict {
    let addr = |i: u64| Ipv6Addr::from_bits(0x2001_0db8_u128 << 96 | u128::from(i));
    let cands: Vec<Ipv6Addr> = (1..=100).map(addr).collect();
    let seeds: HashSet<Ipv6Addr> = (1..=4).map(addr).collect();
    let universe = Universe::from_members((1..=10).map(|i| (addr(i), SchemeKind::FixedIid)).collect(), 0).unwrap();
    let r = evaluate(&cands, &seeds, &universe).unwrap();
    let exact = r.r_hit.num * 10 == r.r_hit.den && r.r_gen.num * 100 == r.r_gen.den * 6;
    verdict(
        exact && r.r_hit_pct == "10.00" && r.r_gen_pct == "6.00",
        format!("r_hit {}/{} = {}%, r_gen {}/{} = {}%", r.r_hit.num, r.r_hit.den, r.r_hit_pct, r.r_gen.num, r.r_gen.den, r.r_gen_pct),
    )
}

fn benchmark_config() -> BenchmarkConfig {
    BenchmarkConfig::default().with_seed(0)
}

fn benchmark(out: &BenchmarkOutcome) -> Verdict {
    let s = &out.summary;
    let within_time = s.seconds < 15.0 * 60.0;
    verdict(
        out.passed() && within_time,
        format!(
            "r_hit {}% = {:.3e} x random baseline {:.3e}, N_gen {}, greedy repeats seeds more often than random in {} of {} \
             trials, {:.0}s",
            out.report.r_hit_pct,
            s.hit_multiple,
            s.baseline_rate,
            s.n_gen,
            s.greedy_wins,
            s.trials.len(),
            s.seconds
        ),
    )
}

fn clustering(out: &BenchmarkOutcome) -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let pool = &out.seeds.addresses;
    let sample: Vec<Ipv6Addr> = index::sample(&mut rng, pool.len(), 2000).into_iter().map(|i| pool[i]).collect();
    let (embedded, one_hot) = address_vectors(&out.table, &sample).unwrap();
    let config = ClusterConfig::default();
    let (report, e, _) = compare_baseline(&embedded, &one_hot, &config).unwrap();

    let mut perm: Vec<usize> = (0..sample.len()).collect();
    perm.shuffle(&mut rng);
    let shuffled: Vec<Vec<f64>> = perm.iter().map(|&i| embedded[i].clone()).collect();
    let relabeled = dbscan(&shuffled, e.eps, config.min_pts, Metric::Euclidean).unwrap();
    let mut back = vec![0; sample.len()];
    for (k, &i) in perm.iter().enumerate() {
        back[i] = relabeled[k];
    }
    let invariant = same_partition(&e.labels, &back);
    let fmt = |s: Option<f64>| s.map_or("undefined".to_string(), |v| format!("{v:.3}"));
    verdict(
        report.embedding_wins() && invariant,
        format!(
            "silhouette {} ({} clusters) vs one-hot {} ({} clusters) on 2000 addresses, order invariant: {invariant}, {:.2?}",
            fmt(report.embedding.silhouette),
            report.embedding.clusters,
            fmt(report.one_hot.silhouette),
            report.one_hot.clusters,
            start.elapsed()
        ),
    )
}

fn determinism(first: &BenchmarkOutcome) -> Verdict {
    let second = run_benchmark(&benchmark_config()).unwrap();
    let same_cands = first.run.candidates_text() == second.run.candidates_text();
    let same_metrics = first.report.to_json().unwrap() == second.report.to_json().unwrap();
    verdict(
        same_cands && same_metrics,
        format!(
            "candidates.txt identical: {same_cands}, metrics.json identical: {same_metrics}, checkpoint {} vs {}",
            &first.checkpoint.hash()[..12],
            &second.checkpoint.hash()[..12]
        ),
    )
}

fn report(n: usize, name: &str, v: &Verdict) -> bool {
    println!("criterion {n:>2} {name:<22} {}  {}", if v.passed { "PASS" } else { "FAIL" }, v.detail);
    v.passed
}

fn main() {
    let mut all = true;
    all &= report(1, "codec", &codec());
    all &= report(2, "corpus", &corpus());
    all &= report(3, "numeric core", &numeric_core());
    all &= report(4, "embedding semantics", &embedding_semantics());
    all &= report(5, "lm memorization", &memorization());
    all &= report(6, "temperature limits", &temperature_limits());
    all &= report(7, "rate arithmetic", &rate_arithmetic());
    let bench = run_benchmark(&benchmark_config()).unwrap();
    all &= report(8, "end-to-end benchmark", &benchmark(&bench));
    all &= report(9, "clustering", &clustering(&bench));
    all &= report(10, "determinism", &determinism(&bench));
    if !all {
        std::process::exit(1);
    }
}
