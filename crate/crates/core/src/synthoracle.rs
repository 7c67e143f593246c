//! Synthetic ground truth: a materialized set of "active" addresses drawn
//! from four addressing schemes, standing in for a live scan.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::addr::{parse_address, Ipv6Addr};
use crate::error::{Error, Result};

pub const UNIVERSE_FORMAT: &str = "veclm-universe/1";
pub const DEFAULT_TOTAL: usize = 50_000;
pub const DEFAULT_PREFIXES: usize = 20;
/// Nybble positions of the ff:fe marker in an EUI-64 interface identifier.
pub const EUI64_MARKER: std::ops::Range<usize> = 22..26;

// universal/local flag of the IID's first octet
const UL_BIT: u64 = 0x0200_0000_0000_0000;
const MARKER_MASK: u64 = 0x0000_00ff_ff00_0000;
const MARKER: u64 = 0x0000_00ff_fe00_0000;
// a scheme fills its quota by rejection; give up after this many draws per address
const DRAWS_PER_ADDRESS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    FixedIid,
    StructuredSubnet,
    Eui64,
    Privacy,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 4] = [
        SchemeKind::FixedIid,
        SchemeKind::StructuredSubnet,
        SchemeKind::Eui64,
        SchemeKind::Privacy,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SchemeKind::FixedIid => "fixed-iid",
            SchemeKind::StructuredSubnet => "structured-subnet",
            SchemeKind::Eui64 => "eui64",
            SchemeKind::Privacy => "privacy",
        }
    }
}

impl std::str::FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeKind::ALL
            .into_iter()
            .find(|k| k.label() == s)
            .ok_or_else(|| Error::param(format!("unknown scheme {s:?}")))
    }
}

impl std::fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SchemeParams {
    /// IIDs 1..=iid_count under every prefix.
    FixedIid { iid_count: u64 },
    /// IID nybbles at `positions` take values from `alphabet`; the last
    /// `random_nybbles` are uniform; every other IID nybble is zero.
    StructuredSubnet {
        alphabet: Vec<u8>,
        positions: Vec<usize>,
        random_nybbles: usize,
    },
    /// Modified EUI-64: OUI with the U/L bit flipped, ff:fe, then
    /// `device_bits` random low bits of the NIC-specific part.
    Eui64 { ouis: Vec<u32>, device_bits: u32 },
    /// Uniform 64-bit IIDs with the U/L bit clear and no ff:fe marker.
    Privacy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeSpec {
    /// Upper 64 bits of each prefix.
    pub prefixes: Vec<u64>,
    pub params: SchemeParams,
    pub count: usize,
}

impl SchemeSpec {
    pub fn kind(&self) -> SchemeKind {
        match self.params {
            SchemeParams::FixedIid { .. } => SchemeKind::FixedIid,
            SchemeParams::StructuredSubnet { .. } => SchemeKind::StructuredSubnet,
            SchemeParams::Eui64 { .. } => SchemeKind::Eui64,
            SchemeParams::Privacy => SchemeKind::Privacy,
        }
    }

    /// Distinct IIDs the scheme can produce under one prefix, saturating.
    pub fn iid_space(&self) -> u128 {
        match &self.params {
            SchemeParams::FixedIid { iid_count } => u128::from(*iid_count),
            SchemeParams::StructuredSubnet {
                alphabet,
                positions,
                random_nybbles,
            } => {
                let patterns = (alphabet.len() as u128).saturating_pow(positions.len() as u32);
                patterns.saturating_mul(1u128 << (4 * random_nybbles.min(&16)))
            }
            SchemeParams::Eui64 { ouis, device_bits } => (ouis.len() as u128) << device_bits.min(&24),
            // 2^63 minus the marker-bearing values; an upper bound is enough here
            SchemeParams::Privacy => 1u128 << 63,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.prefixes.is_empty() {
            return Err(Error::param(format!("{} scheme without prefixes", self.kind())));
        }
        match &self.params {
            SchemeParams::FixedIid { iid_count } if *iid_count == 0 => {
                return Err(Error::param("fixed-iid scheme needs at least one IID"))
            }
            SchemeParams::StructuredSubnet {
                alphabet,
                positions,
                random_nybbles,
            } => {
                if alphabet.is_empty() || alphabet.iter().any(|&v| v > 15) {
                    return Err(Error::param("structured-subnet alphabet must be non-empty nybble values"));
                }
                if *random_nybbles > 16
                    || positions.iter().any(|&p| !(16..32 - random_nybbles).contains(&p))
                    || positions.iter().collect::<HashSet<_>>().len() != positions.len()
                {
                    return Err(Error::param(
                        "structured-subnet positions must be distinct IID nybbles above the random tail",
                    ));
                }
            }
            SchemeParams::Eui64 { ouis, device_bits } => {
                if ouis.is_empty() || ouis.iter().any(|&o| o > 0xff_ffff) || *device_bits > 24 {
                    return Err(Error::param("eui64 scheme needs 24-bit OUIs and at most 24 device bits"));
                }
            }
            _ => {}
        }
        let capacity = self.iid_space().saturating_mul(self.prefixes.len() as u128);
        if self.count as u128 > capacity {
            return Err(Error::param(format!(
                "{} scheme asks for {} addresses but can produce {capacity}",
                self.kind(),
                self.count
            )));
        }
        Ok(())
    }

    /// The scheme predicate.
    pub fn matches(&self, addr: Ipv6Addr) -> bool {
        if !self.prefixes.contains(&addr.prefix64()) {
            return false;
        }
        let iid = addr.iid();
        match &self.params {
            SchemeParams::FixedIid { iid_count } => (1..=*iid_count).contains(&iid),
            SchemeParams::StructuredSubnet {
                alphabet,
                positions,
                random_nybbles,
            } => (16..32).all(|n| {
                let v = addr.nybble(n);
                if n >= 32 - random_nybbles {
                    true
                } else if positions.contains(&n) {
                    alphabet.contains(&v)
                } else {
                    v == 0
                }
            }),
            SchemeParams::Eui64 { ouis, device_bits } => {
                let oui = ((iid >> 40) as u32) ^ 0x02_0000;
                iid & MARKER_MASK == MARKER && ouis.contains(&oui) && (iid & 0xff_ffff) >> device_bits == 0
            }
            SchemeParams::Privacy => iid & UL_BIT == 0 && iid & MARKER_MASK != MARKER,
        }
    }

    fn draw_iid<R: Rng>(&self, rng: &mut R) -> u64 {
        match &self.params {
            SchemeParams::FixedIid { iid_count } => rng.gen_range(1..=*iid_count),
            SchemeParams::StructuredSubnet {
                alphabet,
                positions,
                random_nybbles,
            } => {
                let mut iid = 0u64;
                for &p in positions {
                    iid |= u64::from(*alphabet.choose(rng).expect("non-empty alphabet")) << (4 * (31 - p));
                }
                if *random_nybbles > 0 {
                    let mask = if *random_nybbles == 16 { u64::MAX } else { (1u64 << (4 * random_nybbles)) - 1 };
                    iid |= rng.gen::<u64>() & mask;
                }
                iid
            }
            SchemeParams::Eui64 { ouis, device_bits } => {
                let oui = u64::from(*ouis.choose(rng).expect("non-empty OUI pool") ^ 0x02_0000);
                let device = if *device_bits == 0 { 0 } else { rng.gen::<u64>() & ((1u64 << device_bits) - 1) };
                oui << 40 | MARKER | device
            }
            SchemeParams::Privacy => loop {
                let iid = rng.gen::<u64>() & !UL_BIT;
                if iid & MARKER_MASK != MARKER {
                    break iid;
                }
            },
        }
    }

    fn generate<R: Rng>(&self, rng: &mut R) -> Result<Vec<Ipv6Addr>> {
        let make = |prefix: u64, iid: u64| Ipv6Addr::from_bits(u128::from(prefix) << 64 | u128::from(iid));
        if let SchemeParams::FixedIid { iid_count } = self.params {
            // sample without replacement from the (prefix, iid) grid
            let total = iid_count as usize * self.prefixes.len();
            let picked = index::sample(rng, total, self.count);
            let mut out: Vec<Ipv6Addr> = picked
                .into_iter()
                .map(|k| make(self.prefixes[k / iid_count as usize], (k % iid_count as usize) as u64 + 1))
                .collect();
            out.sort();
            return Ok(out);
        }
        let mut seen = HashSet::with_capacity(self.count);
        let mut out = Vec::with_capacity(self.count);
        let mut draws = 0usize;
        while out.len() < self.count {
            draws += 1;
            if draws > DRAWS_PER_ADDRESS * self.count.max(1) {
                return Err(Error::param(format!(
                    "{} scheme produced only {} distinct addresses",
                    self.kind(),
                    out.len()
                )));
            }
            let prefix = *self.prefixes.choose(rng).expect("validated prefixes");
            let addr = make(prefix, self.draw_iid(rng));
            if seen.insert(addr) {
                out.push(addr);
            }
        }
        Ok(out)
    }
}

/// `2001:db8:i::/64` for i in 0..n.
pub fn documentation_prefixes(n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| 0x2001_0db8_0000_0000 | i << 16).collect()
}

/// The default mixture of 30% fixed-iid, 30% structured-subnet, 30% eui64
/// and 10% privacy, each scheme owning a quarter of the prefix pool.
pub fn default_specs(total: usize, prefixes: usize) -> Result<Vec<SchemeSpec>> {
    if prefixes < 4 {
        return Err(Error::param("the default mixture needs at least 4 prefixes"));
    }
    let pool = documentation_prefixes(prefixes);
    let quarter = prefixes / 4;
    let slice = |k: usize| {
        let end = if k == 3 { prefixes } else { (k + 1) * quarter };
        pool[k * quarter..end].to_vec()
    };
    let big = total * 3 / 10;
    let counts = [big, big, big, total - 3 * big];
    let fixed_per_prefix = (counts[0] as u64).div_ceil(quarter as u64).max(1);
    let params = [
        SchemeParams::FixedIid {
            iid_count: fixed_per_prefix,
        },
        SchemeParams::StructuredSubnet {
            alphabet: (0..8).collect(),
            positions: vec![17, 21, 25],
            random_nybbles: 2,
        },
        SchemeParams::Eui64 {
            ouis: vec![0x00_1b_21, 0x00_25_90, 0x3c_ec_ef, 0xac_1f_6b, 0x00_50_56, 0xb8_27_eb, 0xdc_a6_32, 0x52_54_00],
            device_bits: 24,
        },
        SchemeParams::Privacy,
    ];
    let specs: Vec<SchemeSpec> = params
        .into_iter()
        .enumerate()
        .map(|(k, params)| SchemeSpec {
            prefixes: slice(k),
            params,
            count: counts[k],
        })
        .collect();
    for s in &specs {
        s.validate()?;
    }
    Ok(specs)
}

/// The active set, sorted by address, with each member's scheme.
#[derive(Clone, Debug, PartialEq)]
pub struct Universe {
    members: Vec<(Ipv6Addr, SchemeKind)>,
    index: HashMap<Ipv6Addr, SchemeKind>,
    pub seed: u64,
}

impl Universe {
    pub fn from_members(mut members: Vec<(Ipv6Addr, SchemeKind)>, seed: u64) -> Result<Self> {
        members.sort();
        members.dedup_by_key(|m| m.0);
        if members.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let index = members.iter().copied().collect();
        Ok(Universe { members, index, seed })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[(Ipv6Addr, SchemeKind)] {
        &self.members
    }

    pub fn addresses(&self) -> Vec<Ipv6Addr> {
        self.members.iter().map(|m| m.0).collect()
    }

    pub fn label(&self, addr: Ipv6Addr) -> Option<SchemeKind> {
        self.index.get(&addr).copied()
    }

    pub fn is_active(&self, addr: Ipv6Addr) -> bool {
        self.index.contains_key(&addr)
    }

    pub fn label_counts(&self) -> BTreeMap<SchemeKind, usize> {
        let mut out = BTreeMap::new();
        for (_, k) in &self.members {
            *out.entry(*k).or_insert(0) += 1;
        }
        out
    }

    /// Distinct 64-bit prefixes of the active set.
    pub fn prefixes(&self) -> Vec<u64> {
        let mut p: Vec<u64> = self.members.iter().map(|m| m.0.prefix64()).collect();
        p.dedup();
        p
    }

    /// universe.txt: `address<TAB>label` per member.
    pub fn to_text(&self) -> String {
        let mut out = format!("# {UNIVERSE_FORMAT} seed={}\n", self.seed);
        for (a, k) in &self.members {
            out.push_str(&format!("{}\t{}\n", crate::addr::format_address(*a), k.label()));
        }
        out
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let seed = text
            .lines()
            .next()
            .and_then(|l| l.strip_prefix(&format!("# {UNIVERSE_FORMAT} seed=")))
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::data(path, 1, format!("missing \"# {UNIVERSE_FORMAT}\" header")))?;
        let mut members = Vec::new();
        for (line, cols) in crate::io::records(text) {
            if cols.len() != 2 {
                return Err(Error::data(path, line, "expected address<TAB>label"));
            }
            let addr = parse_address(cols[0]).map_err(|e| Error::data(path, line, e.to_string()))?;
            let kind = cols[1].parse().map_err(|e: Error| Error::data(path, line, e.to_string()))?;
            members.push((addr, kind));
        }
        Universe::from_members(members, seed).map_err(|_| Error::data(path, 1, "universe has no members"))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::io::write_text(path, &self.to_text())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Universe::from_text(&crate::io::read_text(path)?, path)
    }
}

/// Materializes every scheme and checks each address against its own
/// predicate. Addresses claimed by two schemes keep the first label.
pub fn synthesize(specs: &[SchemeSpec], seed: u64) -> Result<Universe> {
    if specs.is_empty() {
        return Err(Error::param("no scheme specs"));
    }
    if specs.iter().map(|s| s.count).sum::<usize>() == 0 {
        return Err(Error::param("scheme counts sum to zero"));
    }
    let mut members = Vec::new();
    let mut seen = HashSet::new();
    for (i, spec) in specs.iter().enumerate() {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        for addr in spec.generate(&mut rng)? {
            if !spec.matches(addr) {
                return Err(Error::State(format!("{addr} violates the {} predicate", spec.kind())));
            }
            if seen.insert(addr) {
                members.push((addr, spec.kind()));
            }
        }
    }
    Universe::from_members(members, seed)
}

/// Seeds and hidden addresses; each label contributes `round(n · fraction)`
/// of its members to the seeds.
pub fn split(universe: &Universe, seed_fraction: f64, rng_seed: u64) -> Result<(Vec<Ipv6Addr>, Vec<Ipv6Addr>)> {
    if !(seed_fraction > 0.0 && seed_fraction < 1.0) {
        return Err(Error::param(format!("seed fraction {seed_fraction} outside (0, 1)")));
    }
    if universe.len() < 2 {
        return Err(Error::param("cannot split fewer than 2 addresses"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let (mut seeds, mut hidden) = (Vec::new(), Vec::new());
    for kind in SchemeKind::ALL {
        let mut group: Vec<Ipv6Addr> = universe.members.iter().filter(|m| m.1 == kind).map(|m| m.0).collect();
        let take = (group.len() as f64 * seed_fraction).round() as usize;
        group.shuffle(&mut rng);
        hidden.extend_from_slice(&group[take..]);
        seeds.extend_from_slice(&group[..take]);
    }
    if seeds.is_empty() || hidden.is_empty() {
        return Err(Error::param(format!(
            "fraction {seed_fraction} leaves an empty side of the split"
        )));
    }
    seeds.sort();
    hidden.sort();
    Ok((seeds, hidden))
}

/// Expected hit rate of a uniformly random IID under a uniformly chosen
/// active prefix: the per-prefix active count over 2^64, averaged over the
/// distinct prefixes of all specs.
pub fn random_baseline_rate(specs: &[SchemeSpec]) -> f64 {
    let mut per_prefix: BTreeMap<u64, f64> = BTreeMap::new();
    for s in specs {
        if s.prefixes.is_empty() {
            continue;
        }
        let share = s.count as f64 / s.prefixes.len() as f64;
        for p in &s.prefixes {
            *per_prefix.entry(*p).or_insert(0.0) += share;
        }
    }
    if per_prefix.is_empty() {
        return 0.0;
    }
    let mean = per_prefix.values().sum::<f64>() / per_prefix.len() as f64;
    mean / 2f64.powi(64)
}

/// The same rate measured on a materialized universe.
pub fn universe_baseline_rate(universe: &Universe) -> f64 {
    universe.len() as f64 / universe.prefixes().len() as f64 / 2f64.powi(64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::addr::to_words;

    fn p() -> u64 {
        documentation_prefixes(1)[0]
    }

    #[test]
    fn fixed_iid_single_prefix() {
        let spec = SchemeSpec {
            prefixes: vec![p()],
            params: SchemeParams::FixedIid { iid_count: 3 },
            count: 3,
        };
        let u = synthesize(&[spec], 1).unwrap();
        let want: Vec<Ipv6Addr> = ["2001:db8::1", "2001:db8::2", "2001:db8::3"].iter().map(|s| s.parse().unwrap()).collect();
        assert_eq!(u.addresses(), want);
    }

    #[test]
    fn eui64_marker_words() {
        let spec = default_specs(1000, 20).unwrap().remove(2);
        let u = synthesize(&[spec], 4).unwrap();
        assert_eq!(u.len(), 300);
        for (a, _) in u.members() {
            let words = to_words(*a).render();
            assert_eq!(&words[22..26], &["fm", "fn", "fo", "ep"]);
        }
    }

    #[test]
    fn default_mixture() {
        let specs = default_specs(DEFAULT_TOTAL, DEFAULT_PREFIXES).unwrap();
        let u = synthesize(&specs, 0).unwrap();
        assert_eq!(u.len(), DEFAULT_TOTAL);
        let counts = u.label_counts();
        assert_eq!(counts[&SchemeKind::FixedIid], 15_000);
        assert_eq!(counts[&SchemeKind::Privacy], 5_000);
        assert_eq!(u.prefixes().len(), 20);
        assert_eq!(synthesize(&specs, 0).unwrap(), u);
        assert_ne!(synthesize(&specs, 1).unwrap().addresses(), u.addresses());
        for (a, k) in u.members() {
            let spec = specs.iter().find(|s| s.kind() == *k).unwrap();
            assert!(spec.matches(*a));
        }
    }

    #[test]
    fn empty_specs_rejected() {
        assert!(matches!(synthesize(&[], 0), Err(Error::Param(_))));
    }

    #[test]
    fn stratified_split() {
        let specs = default_specs(1000, 8).unwrap();
        let u = synthesize(&specs, 2).unwrap();
        let (seeds, hidden) = split(&u, 0.4, 3).unwrap();
        assert_eq!(seeds.len(), 400);
        assert_eq!(seeds.len() + hidden.len(), u.len());
        let s: HashSet<_> = seeds.iter().collect();
        assert!(hidden.iter().all(|h| !s.contains(h)));
        for (kind, n) in u.label_counts() {
            let k = seeds.iter().filter(|a| u.label(**a) == Some(kind)).count() as f64;
            assert!((k - n as f64 * 0.4).abs() <= 1.0, "{kind}: {k} of {n}");
        }
        assert_eq!(split(&u, 0.4, 3).unwrap(), (seeds, hidden));
        assert!(split(&u, 0.0, 3).is_err());
        assert!(split(&u, 1.0, 3).is_err());
    }

    #[test]
    fn membership() {
        let u = synthesize(&default_specs(2000, 8).unwrap(), 5).unwrap();
        assert!(u.members().iter().all(|m| u.is_active(m.0)));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert!((0..1000).all(|_| !u.is_active(Ipv6Addr::from_bits(rng.gen()))));
    }

    #[test]
    fn baseline_rates() {
        let one = SchemeSpec {
            prefixes: vec![p()],
            params: SchemeParams::FixedIid { iid_count: 100 },
            count: 100,
        };
        let r = random_baseline_rate(&[one.clone()]);
        assert_eq!(r, 100.0 / 2f64.powi(64));
        let two = SchemeSpec {
            prefixes: documentation_prefixes(2),
            count: 200,
            ..one
        };
        assert_eq!(random_baseline_rate(&[two]), r);
        let structured = SchemeSpec {
            prefixes: vec![p()],
            params: SchemeParams::StructuredSubnet {
                alphabet: (0..16).collect(),
                positions: vec![16, 17],
                random_nybbles: 4,
            },
            count: 256 << 16,
        };
        assert_eq!(structured.iid_space(), 256 << 16);
        assert_eq!(random_baseline_rate(&[structured]), (256.0 * 65536.0) / 2f64.powi(64));
    }

    #[test]
    fn universe_file_roundtrip() {
        let u = synthesize(&default_specs(400, 4).unwrap(), 6).unwrap();
        let back = Universe::from_text(&u.to_text(), Path::new("u.txt")).unwrap();
        assert_eq!(back, u);
        let bad = u.to_text().replacen("\tfixed-iid", "\tbogus", 1);
        assert!(matches!(Universe::from_text(&bad, Path::new("u.txt")), Err(Error::Data { .. })));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn split_is_a_stratified_partition(seed in any::<u64>(), frac in 0.05f64..0.95) {
                let u = synthesize(&default_specs(500, 8).unwrap(), seed).unwrap();
                let (s, h) = split(&u, frac, seed ^ 1).unwrap();
                let mut all: Vec<_> = s.iter().chain(&h).copied().collect();
                all.sort();
                prop_assert_eq!(all, u.addresses());
                for (kind, n) in u.label_counts() {
                    let k = s.iter().filter(|a| u.label(**a) == Some(kind)).count() as f64;
                    prop_assert!((k - n as f64 * frac).abs() <= 1.0);
                }
            }
        }
    }
}
