//! IPv6 text codec and the index-tagged address-word representation.
//!
//! Every address is read as 32 nybbles, most significant first. Nybble `i`
//! with value `v` becomes the two-character word `v` + `i`, where the index
//! uses the 32-symbol alphabet `0-9a-v`. Position 10 holding a 2 renders as
//! `"2a"`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of nybbles (and therefore words) in one address.
pub const WORDS_PER_ADDRESS: usize = 32;
/// Number of distinct nybble values.
pub const NYBBLE_VALUES: usize = 16;
/// Upper bound on the number of distinct address words.
pub const MAX_WORDS: usize = WORDS_PER_ADDRESS * NYBBLE_VALUES;

const INDEX_ALPHABET: &[u8; 32] = b"0123456789abcdefghijklmnopqrstuv";
const HEX_ALPHABET: &[u8; 16] = b"0123456789abcdef";

/// A 128-bit IPv6 address.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Ipv6Addr([u8; 16]);

impl Ipv6Addr {
    pub const UNSPECIFIED: Ipv6Addr = Ipv6Addr([0; 16]);

    pub const fn from_octets(octets: [u8; 16]) -> Self {
        Ipv6Addr(octets)
    }

    pub const fn octets(&self) -> [u8; 16] {
        self.0
    }

    pub const fn from_bits(bits: u128) -> Self {
        Ipv6Addr(bits.to_be_bytes())
    }

    pub const fn to_bits(&self) -> u128 {
        u128::from_be_bytes(self.0)
    }

    /// The high 64 bits.
    pub const fn prefix64(&self) -> u64 {
        (self.to_bits() >> 64) as u64
    }

    /// The low 64 bits: the interface identifier.
    pub const fn iid(&self) -> u64 {
        self.to_bits() as u64
    }

    pub fn segments(&self) -> [u16; 8] {
        let mut out = [0u16; 8];
        for (i, seg) in out.iter_mut().enumerate() {
            *seg = u16::from_be_bytes([self.0[2 * i], self.0[2 * i + 1]]);
        }
        out
    }

    pub fn from_segments(segments: [u16; 8]) -> Self {
        let mut octets = [0u8; 16];
        for (i, seg) in segments.iter().enumerate() {
            octets[2 * i..2 * i + 2].copy_from_slice(&seg.to_be_bytes());
        }
        Ipv6Addr(octets)
    }

    /// Nybble `i` (0 = most significant).
    pub fn nybble(&self, i: usize) -> u8 {
        let byte = self.0[i / 2];
        if i % 2 == 0 {
            byte >> 4
        } else {
            byte & 0x0f
        }
    }
}

impl From<std::net::Ipv6Addr> for Ipv6Addr {
    fn from(a: std::net::Ipv6Addr) -> Self {
        Ipv6Addr(a.octets())
    }
}

impl From<Ipv6Addr> for std::net::Ipv6Addr {
    fn from(a: Ipv6Addr) -> Self {
        std::net::Ipv6Addr::from(a.0)
    }
}

impl fmt::Display for Ipv6Addr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_address(*self))
    }
}

impl fmt::Debug for Ipv6Addr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Ipv6Addr({})", format_address(*self))
    }
}

impl FromStr for Ipv6Addr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_address(s)
    }
}

fn parse_error(input: &str, token: &str) -> Error {
    Error::Parse {
        input: input.to_string(),
        token: token.to_string(),
    }
}

fn parse_group(input: &str, token: &str) -> Result<u16> {
    if token.is_empty() || token.len() > 4 || !token.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(parse_error(input, token));
    }
    u16::from_str_radix(token, 16).map_err(|_| parse_error(input, token))
}

fn parse_groups(input: &str, part: &str) -> Result<Vec<u16>> {
    if part.is_empty() {
        return Ok(Vec::new());
    }
    part.split(':').map(|tok| parse_group(input, tok)).collect()
}

/// Parse the colon-hex textual form, with or without `::` compression.
/// Zone identifiers and embedded dotted-quad forms are rejected.
pub fn parse_address(text: &str) -> Result<Ipv6Addr> {
    if text.is_empty() {
        return Err(parse_error(text, ""));
    }
    if let Some(pos) = text.find(['%', '.']) {
        let start = text[..pos].rfind(':').map_or(0, |i| i + 1);
        let end = text[pos..].find(':').map_or(text.len(), |i| pos + i);
        return Err(parse_error(text, &text[start..end]));
    }

    let segments = match text.find("::") {
        Some(at) => {
            let (head, tail) = (&text[..at], &text[at + 2..]);
            if tail.contains("::") {
                return Err(parse_error(text, "::"));
            }
            let head = parse_groups(text, head)?;
            let tail = parse_groups(text, tail)?;
            if head.len() + tail.len() > 7 {
                return Err(parse_error(text, "::"));
            }
            let mut segs = [0u16; 8];
            segs[..head.len()].copy_from_slice(&head);
            segs[8 - tail.len()..].copy_from_slice(&tail);
            segs
        }
        None => {
            let groups = parse_groups(text, text)?;
            if groups.len() != 8 {
                let token = if groups.len() > 8 { text.rsplit(':').next().unwrap_or(text) } else { text };
                return Err(parse_error(text, token));
            }
            let mut segs = [0u16; 8];
            segs.copy_from_slice(&groups);
            segs
        }
    };
    Ok(Ipv6Addr::from_segments(segments))
}

/// Canonical text form: lower-case hex, leading zeros dropped, the longest
/// run of two or more zero groups replaced by `::` (leftmost on a tie).
pub fn format_address(addr: Ipv6Addr) -> String {
    let segs = addr.segments();

    let (mut best_start, mut best_len) = (0usize, 0usize);
    let mut i = 0;
    while i < 8 {
        if segs[i] == 0 {
            let start = i;
            while i < 8 && segs[i] == 0 {
                i += 1;
            }
            if i - start > best_len {
                best_start = start;
                best_len = i - start;
            }
        } else {
            i += 1;
        }
    }

    let join = |groups: &[u16]| groups.iter().map(|g| format!("{g:x}")).collect::<Vec<_>>().join(":");
    if best_len < 2 {
        return join(&segs);
    }
    format!("{}::{}", join(&segs[..best_start]), join(&segs[best_start + best_len..]))
}

/// One address word: a nybble value tagged with its position.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AddressWord {
    nybble: u8,
    index: u8,
}

impl AddressWord {
    pub fn new(nybble: u8, index: u8) -> Result<Self> {
        if usize::from(nybble) >= NYBBLE_VALUES {
            return Err(Error::Index {
                index: nybble.into(),
                size: NYBBLE_VALUES,
            });
        }
        if usize::from(index) >= WORDS_PER_ADDRESS {
            return Err(Error::Index {
                index: index.into(),
                size: WORDS_PER_ADDRESS,
            });
        }
        Ok(AddressWord { nybble, index })
    }

    pub fn nybble(&self) -> u8 {
        self.nybble
    }

    pub fn index(&self) -> u8 {
        self.index
    }

    /// Dense key in `0..512`, ordered by (index, nybble).
    pub fn key(&self) -> usize {
        usize::from(self.index) * NYBBLE_VALUES + usize::from(self.nybble)
    }

    pub fn from_key(key: usize) -> Result<Self> {
        if key >= MAX_WORDS {
            return Err(Error::Index {
                index: key,
                size: MAX_WORDS,
            });
        }
        Ok(AddressWord {
            nybble: (key % NYBBLE_VALUES) as u8,
            index: (key / NYBBLE_VALUES) as u8,
        })
    }

    pub fn render(&self) -> String {
        let chars = [
            HEX_ALPHABET[usize::from(self.nybble)],
            INDEX_ALPHABET[usize::from(self.index)],
        ];
        String::from_utf8_lossy(&chars).into_owned()
    }
}

impl fmt::Display for AddressWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl fmt::Debug for AddressWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AddressWord({})", self.render())
    }
}

impl FromStr for AddressWord {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bytes = s.as_bytes();
        let bad = || Error::Vocab(vec![s.to_string()]);
        if bytes.len() != 2 {
            return Err(bad());
        }
        let nybble = HEX_ALPHABET.iter().position(|&c| c == bytes[0]).ok_or_else(bad)?;
        let index = INDEX_ALPHABET.iter().position(|&c| c == bytes[1]).ok_or_else(bad)?;
        AddressWord::new(nybble as u8, index as u8)
    }
}

/// The 32 words of one address, in position order.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct WordSequence([AddressWord; WORDS_PER_ADDRESS]);

impl WordSequence {
    /// Validates length and that word `i` carries index `i`.
    pub fn new(words: &[AddressWord]) -> Result<Self> {
        if words.len() != WORDS_PER_ADDRESS {
            return Err(Error::Sequence(format!(
                "expected {WORDS_PER_ADDRESS} words, got {}",
                words.len()
            )));
        }
        for (pos, w) in words.iter().enumerate() {
            if usize::from(w.index()) != pos {
                return Err(Error::Sequence(format!(
                    "word {w} at position {pos} has index {}",
                    w.index()
                )));
            }
        }
        let mut arr = [words[0]; WORDS_PER_ADDRESS];
        arr.copy_from_slice(words);
        Ok(WordSequence(arr))
    }

    pub fn words(&self) -> &[AddressWord; WORDS_PER_ADDRESS] {
        &self.0
    }

    /// Words 0..16: the /64 prefix.
    pub fn prefix(&self) -> &[AddressWord] {
        &self.0[..WORDS_PER_ADDRESS / 2]
    }

    /// Words 16..32: the interface identifier.
    pub fn suffix(&self) -> &[AddressWord] {
        &self.0[WORDS_PER_ADDRESS / 2..]
    }

    pub fn render(&self) -> Vec<String> {
        self.0.iter().map(AddressWord::render).collect()
    }
}

pub fn to_words(addr: Ipv6Addr) -> WordSequence {
    let mut words = [AddressWord { nybble: 0, index: 0 }; WORDS_PER_ADDRESS];
    for (i, w) in words.iter_mut().enumerate() {
        *w = AddressWord {
            nybble: addr.nybble(i),
            index: i as u8,
        };
    }
    WordSequence(words)
}

pub fn from_words(seq: &WordSequence) -> Ipv6Addr {
    let mut octets = [0u8; 16];
    for (i, w) in seq.words().iter().enumerate() {
        let shift = if i % 2 == 0 { 4 } else { 0 };
        octets[i / 2] |= w.nybble() << shift;
    }
    Ipv6Addr(octets)
}

/// Validating variant of [`from_words`] for raw word lists.
pub fn from_word_list(words: &[AddressWord]) -> Result<Ipv6Addr> {
    WordSequence::new(words).map(|s| from_words(&s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn addr(s: &str) -> Ipv6Addr {
        parse_address(s).unwrap()
    }

    #[test]
    fn parse_expands_double_colon() {
        let mut expect = [0u8; 16];
        expect[..4].copy_from_slice(&[0x20, 0x01, 0x0d, 0xb8]);
        expect[15] = 3;
        assert_eq!(addr("2001:db8::3").octets(), expect);
        assert_eq!(addr("::").octets(), [0u8; 16]);
        assert_eq!(addr("2001:0DB8::3"), addr("2001:db8::3"));
        assert_eq!(addr("2001:db8:0:0:0:0:0:3"), addr("2001:db8::3"));
        assert_eq!(addr("1:2:3:4:5:6:7::").segments(), [1, 2, 3, 4, 5, 6, 7, 0]);
        assert_eq!(addr("::1:2:3:4:5:6:7").segments(), [0, 1, 2, 3, 4, 5, 6, 7]);
    }

    #[test]
    fn parse_errors_name_the_token() {
        let token = |s: &str| match parse_address(s) {
            Err(Error::Parse { token, .. }) => token,
            other => panic!("expected parse error for {s:?}, got {other:?}"),
        };
        assert_eq!(token("2001:db8::g1"), "g1");
        assert_eq!(token("2001:db8::12345"), "12345");
        assert_eq!(token("fe80::1%eth0"), "1%eth0");
        assert_eq!(token("::ffff:1.2.3.4"), "1.2.3.4");
        assert_eq!(token("1::2::3"), "::");
        assert_eq!(token("1:2:3:4:5:6:7:8:9"), "9");
        assert_eq!(token(""), "");
        assert!(parse_address("1:2:3:4:5:6:7").is_err());
        assert!(parse_address(":1::").is_err());
        assert!(parse_address("1:2:3:4:5:6:7:8::").is_err());
    }

    #[test]
    fn format_is_canonical() {
        assert_eq!(format_address(Ipv6Addr::UNSPECIFIED), "::");
        assert_eq!(format_address(addr("2001:0db8:0:0:0:0:0:0003")), "2001:db8::3");
        assert_eq!(format_address(addr("1:0:0:1:0:0:1:1")), "1::1:0:0:1:1");
        assert_eq!(format_address(addr("1:0:1:0:0:0:1:1")), "1:0:1::1:1");
        assert_eq!(format_address(addr("2001:db8:0:1:1:1:1:1")), "2001:db8:0:1:1:1:1:1");
        assert_eq!(format_address(addr("ABCD::")), "abcd::");
    }

    #[test]
    fn word_for_position_ten() {
        // 2001:0db8:0020:: puts nybble 2 at index 10
        let seq = to_words(addr("2001:db8:20::"));
        assert_eq!(seq.words()[10].render(), "2a");
    }

    #[test]
    fn zero_address_words() {
        let seq = to_words(Ipv6Addr::UNSPECIFIED);
        let rendered = seq.render();
        assert_eq!(rendered[0], "00");
        assert_eq!(rendered[9], "09");
        assert_eq!(rendered[10], "0a");
        assert_eq!(rendered[31], "0v");
        assert_eq!(from_words(&seq), Ipv6Addr::UNSPECIFIED);
    }

    #[test]
    fn eui64_marker_words() {
        let seq = to_words(addr("2001:db8::211:22ff:fe33:4455"));
        let marker: Vec<_> = seq.words()[22..26].iter().map(|w| w.render()).collect();
        assert_eq!(marker, ["fm", "fn", "fo", "ep"]);
    }

    #[test]
    fn sequence_rejects_gaps() {
        let seq = to_words(addr("2001:db8::1"));
        let mut words: Vec<_> = seq.words().to_vec();
        words.remove(7);
        assert!(matches!(from_word_list(&words), Err(Error::Sequence(_))));
        let mut swapped: Vec<_> = seq.words().to_vec();
        swapped.swap(3, 4);
        assert!(matches!(from_word_list(&swapped), Err(Error::Sequence(_))));
    }

    #[test]
    fn word_text_roundtrip() {
        for key in 0..MAX_WORDS {
            let w = AddressWord::from_key(key).unwrap();
            assert_eq!(w.to_string().parse::<AddressWord>().unwrap(), w);
            assert_eq!(w.key(), key);
        }
        assert!("ZZ".parse::<AddressWord>().is_err());
        assert!("0w".parse::<AddressWord>().is_err());
    }

    proptest! {
        #[test]
        fn words_roundtrip(bits in any::<u128>()) {
            let a = Ipv6Addr::from_bits(bits);
            let seq = to_words(a);
            prop_assert_eq!(from_words(&seq), a);
            for (i, w) in seq.words().iter().enumerate() {
                prop_assert_eq!(usize::from(w.index()), i);
            }
        }

        #[test]
        fn text_roundtrip_matches_std(bits in any::<u128>(), zero_mask in any::<u8>()) {
            // zero out some groups so compression paths are exercised
            let mut segs = Ipv6Addr::from_bits(bits).segments();
            for (i, s) in segs.iter_mut().enumerate() {
                if zero_mask & (1 << i) != 0 {
                    *s = 0;
                }
            }
            let a = Ipv6Addr::from_segments(segs);
            let text = format_address(a);
            prop_assert_eq!(parse_address(&text).unwrap(), a);
            let std_addr = std::net::Ipv6Addr::from(a);
            if std_addr.to_ipv4_mapped().is_none() {
                prop_assert_eq!(text, std_addr.to_string());
            }
        }
    }
}
