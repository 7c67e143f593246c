//! Vocabulary construction and skip-gram sample generation.

use crate::addr::{AddressWord, WordSequence, MAX_WORDS, WORDS_PER_ADDRESS};
use crate::error::{Error, Result};

/// Default skip-gram window, in word positions.
pub const DEFAULT_WINDOW: usize = 5;

pub type WordId = u16;

/// Dense word ids for every address word seen in a seed set.
///
/// Ids follow (index, nybble) order, so the vocabulary of a given seed set
/// is independent of seed order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<AddressWord>,
    // dense lookup by AddressWord::key
    ids: [Option<WordId>; MAX_WORDS],
    by_index: Vec<Vec<WordId>>,
}

impl Vocabulary {
    /// Build from an explicit word set; duplicates are collapsed.
    pub fn from_words(words: impl IntoIterator<Item = AddressWord>) -> Result<Self> {
        let mut present = [false; MAX_WORDS];
        let mut any = false;
        for w in words {
            present[w.key()] = true;
            any = true;
        }
        if !any {
            return Err(Error::EmptyCorpus);
        }
        let mut vocab = Vocabulary {
            words: Vec::new(),
            ids: [None; MAX_WORDS],
            by_index: vec![Vec::new(); WORDS_PER_ADDRESS],
        };
        for key in (0..MAX_WORDS).filter(|&k| present[k]) {
            let word = AddressWord::from_key(key)?;
            let id = vocab.words.len() as WordId;
            vocab.ids[key] = Some(id);
            vocab.by_index[usize::from(word.index())].push(id);
            vocab.words.push(word);
        }
        Ok(vocab)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: AddressWord) -> Option<WordId> {
        self.ids[word.key()]
    }

    pub fn word(&self, id: WordId) -> Option<AddressWord> {
        self.words.get(usize::from(id)).copied()
    }

    pub fn words(&self) -> &[AddressWord] {
        &self.words
    }

    /// All ids whose word sits at position `index`.
    pub fn ids_at(&self, index: usize) -> &[WordId] {
        &self.by_index[index]
    }

    /// Look up by rendered text, e.g. `"2a"`.
    pub fn id_of_text(&self, text: &str) -> Result<WordId> {
        let word: AddressWord = text.parse()?;
        self.id(word).ok_or_else(|| Error::Vocab(vec![text.to_string()]))
    }

    /// Map a sequence to ids, reporting every missing word.
    pub fn encode(&self, seq: &WordSequence) -> Result<[WordId; WORDS_PER_ADDRESS]> {
        let mut out = [0 as WordId; WORDS_PER_ADDRESS];
        let mut missing = Vec::new();
        for (slot, w) in out.iter_mut().zip(seq.words()) {
            match self.id(*w) {
                Some(id) => *slot = id,
                None => missing.push(w.render()),
            }
        }
        if missing.is_empty() {
            Ok(out)
        } else {
            Err(Error::Vocab(missing))
        }
    }
}

/// The distinct words across `seeds`.
pub fn build_vocabulary(seeds: &[WordSequence]) -> Result<Vocabulary> {
    if seeds.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Vocabulary::from_words(seeds.iter().flat_map(|s| s.words().iter().copied()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SkipGramSample {
    pub input: WordId,
    pub context: WordId,
}

/// (position, context position) pairs for one 32-word sequence, in emission
/// order: by input position, then by context position. The window is
/// clipped at both ends.
pub fn window_pairs(window: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for p in 0..WORDS_PER_ADDRESS {
        let lo = p.saturating_sub(window);
        let hi = (p + window).min(WORDS_PER_ADDRESS - 1);
        pairs.extend((lo..=hi).filter(|&q| q != p).map(|q| (p, q)));
    }
    pairs
}

/// Skip-gram samples for every sequence, in sequence order.
///
/// Sequences containing words outside `vocab` are rejected.
pub fn generate_samples(
    seeds: &[WordSequence],
    vocab: &Vocabulary,
    window: usize,
) -> Result<Vec<SkipGramSample>> {
    if window == 0 {
        return Err(Error::param("window must be at least 1"));
    }
    let pairs = window_pairs(window);
    let mut out = Vec::with_capacity(seeds.len() * pairs.len());
    for seq in seeds {
        let ids = vocab.encode(seq)?;
        out.extend(pairs.iter().map(|&(p, q)| SkipGramSample {
            input: ids[p],
            context: ids[q],
        }));
    }
    Ok(out)
}

/// Co-occurrence counts grouped by input word: for each input id, the
/// (context id, count) pairs sorted by context id.
pub fn cooccurrence(samples: &[SkipGramSample], vocab_size: usize) -> Vec<Vec<(WordId, u64)>> {
    let mut dense = vec![0u64; vocab_size * vocab_size];
    for s in samples {
        dense[usize::from(s.input) * vocab_size + usize::from(s.context)] += 1;
    }
    sparsify(&dense, vocab_size)
}

/// Same counts as `cooccurrence(generate_samples(..))` without
/// materializing the samples.
pub fn seed_cooccurrence(
    seeds: &[WordSequence],
    vocab: &Vocabulary,
    window: usize,
) -> Result<Vec<Vec<(WordId, u64)>>> {
    if window == 0 {
        return Err(Error::param("window must be at least 1"));
    }
    let n = vocab.len();
    let pairs = window_pairs(window);
    let mut dense = vec![0u64; n * n];
    for seq in seeds {
        let ids = vocab.encode(seq)?;
        for &(p, q) in &pairs {
            dense[usize::from(ids[p]) * n + usize::from(ids[q])] += 1;
        }
    }
    Ok(sparsify(&dense, n))
}

fn sparsify(dense: &[u64], n: usize) -> Vec<Vec<(WordId, u64)>> {
    dense
        .chunks(n.max(1))
        .take(n)
        .map(|row| {
            row.iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(j, &c)| (j as WordId, c))
                .collect()
        })
        .collect()
}

pub fn one_hot(id: usize, size: usize) -> Result<Vec<f64>> {
    if id >= size {
        return Err(Error::Index { index: id, size });
    }
    let mut v = vec![0.0; size];
    v[id] = 1.0;
    Ok(v)
}

/// Corpus dump: one `input<TAB>context` line per sample.
pub fn samples_tsv(samples: &[SkipGramSample], vocab: &Vocabulary) -> String {
    let mut out = String::with_capacity(samples.len() * 6);
    for s in samples {
        if let (Some(a), Some(b)) = (vocab.word(s.input), vocab.word(s.context)) {
            out.push_str(&a.render());
            out.push('\t');
            out.push_str(&b.render());
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::addr::{parse_address, to_words, Ipv6Addr};
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn seq(s: &str) -> WordSequence {
        to_words(parse_address(s).unwrap())
    }

    /// Brute-force count of context positions for position p.
    fn brute_context_count(p: usize, window: usize) -> usize {
        (0..WORDS_PER_ADDRESS)
            .filter(|&q| q != p && (q as isize - p as isize).unsigned_abs() <= window)
            .count()
    }

    #[test]
    fn vocabulary_of_zero_address() {
        let v = build_vocabulary(&[seq("::")]).unwrap();
        assert_eq!(v.len(), 32);
        for (i, w) in v.words().iter().enumerate() {
            assert_eq!(usize::from(w.index()), i);
            assert_eq!(w.nybble(), 0);
        }
        assert_eq!(v.ids_at(10), &[10]);
    }

    #[test]
    fn vocabulary_upper_bound() {
        let seeds: Vec<_> = (0..16u128)
            .map(|n| {
                let bits = (0..32).fold(0u128, |acc, _| (acc << 4) | n);
                to_words(Ipv6Addr::from_bits(bits))
            })
            .collect();
        let v = build_vocabulary(&seeds).unwrap();
        assert_eq!(v.len(), 512);
        for k in 0..32 {
            assert_eq!(v.ids_at(k).len(), 16);
        }
    }

    #[test]
    fn vocabulary_is_a_set() {
        let a = build_vocabulary(&[seq("2001:db8::1")]).unwrap();
        let b = build_vocabulary(&[seq("2001:db8::1"), seq("2001:db8::1")]).unwrap();
        assert_eq!(a, b);
        assert!(matches!(build_vocabulary(&[]), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn window_counts_match_enumeration() {
        let pairs = window_pairs(5);
        for p in 0..32 {
            let n = pairs.iter().filter(|(a, _)| *a == p).count();
            assert_eq!(n, brute_context_count(p, 5));
        }
        assert_eq!(brute_context_count(0, 5), 5);
        assert_eq!(brute_context_count(1, 5), 6);
        assert_eq!(brute_context_count(10, 5), 10);
        assert_eq!(brute_context_count(31, 5), 5);
        // per distance d there are 2 * (32 - d) ordered pairs
        let by_distance: usize = (1..=5).map(|d| 2 * (32 - d)).sum();
        let total: usize = (0..32).map(|p| brute_context_count(p, 5)).sum();
        assert_eq!(total, by_distance);
        assert_eq!(total, 290);
        assert_eq!(pairs.len(), total);
        assert_eq!(window_pairs(1).len(), 62);
        assert_eq!(window_pairs(31).len(), 992);
    }

    #[test]
    fn samples_follow_window_pairs() {
        let seeds = [seq("2001:db8::1"), seq("2001:db8::2")];
        let v = build_vocabulary(&seeds).unwrap();
        let samples = generate_samples(&seeds, &v, DEFAULT_WINDOW).unwrap();
        assert_eq!(samples.len(), 580);
        assert!(generate_samples(&seeds, &v, 0).is_err());
        let other = build_vocabulary(&[seq("::")]).unwrap();
        assert!(matches!(generate_samples(&seeds, &other, 5), Err(Error::Vocab(_))));
    }

    #[test]
    fn direct_counts_match_samples() {
        let seeds = [seq("2001:db8::1"), seq("2001:db8:0:1::2"), seq("fe80::1")];
        let v = build_vocabulary(&seeds).unwrap();
        let samples = generate_samples(&seeds, &v, 3).unwrap();
        assert_eq!(cooccurrence(&samples, v.len()), seed_cooccurrence(&seeds, &v, 3).unwrap());
        let total: u64 = cooccurrence(&samples, v.len()).iter().flatten().map(|(_, c)| c).sum();
        assert_eq!(total as usize, samples.len());
    }

    #[test]
    fn one_hot_vectors() {
        assert_eq!(one_hot(0, 3).unwrap(), vec![1.0, 0.0, 0.0]);
        assert_eq!(one_hot(2, 3).unwrap(), vec![0.0, 0.0, 1.0]);
        assert!(matches!(one_hot(3, 3), Err(Error::Index { .. })));
    }

    proptest! {
        #[test]
        fn samples_are_symmetric(bits in any::<u128>(), window in 1usize..32) {
            let seeds = [to_words(Ipv6Addr::from_bits(bits))];
            let v = build_vocabulary(&seeds).unwrap();
            let samples = generate_samples(&seeds, &v, window).unwrap();
            let mut counts = std::collections::HashMap::new();
            for s in &samples {
                prop_assert!(usize::from(s.input) < v.len() && usize::from(s.context) < v.len());
                *counts.entry((s.input, s.context)).or_insert(0usize) += 1;
            }
            for (&(a, b), &n) in &counts {
                prop_assert_eq!(counts.get(&(b, a)).copied(), Some(n));
            }
            let hot: f64 = one_hot(usize::from(samples[0].input), v.len()).unwrap().iter().sum();
            prop_assert_eq!(hot, 1.0);
        }

        #[test]
        fn rendered_words_bounded(bits in proptest::collection::vec(any::<u128>(), 1..50)) {
            let seeds: Vec<_> = bits.iter().map(|&b| to_words(Ipv6Addr::from_bits(b))).collect();
            let v = build_vocabulary(&seeds).unwrap();
            let rendered: HashSet<_> = seeds.iter().flat_map(|s| s.render()).collect();
            prop_assert_eq!(rendered.len(), v.len());
            prop_assert!(v.len() <= 512);
            for k in 0..32 {
                prop_assert!(v.ids_at(k).len() <= 16);
                for &id in v.ids_at(k) {
                    prop_assert_eq!(usize::from(v.word(id).unwrap().index()), k);
                }
            }
        }
    }
}
