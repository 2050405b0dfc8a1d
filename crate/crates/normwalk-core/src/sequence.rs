//! Finite ±1 sequences and patterns.
//!
//! Sequences are bit-packed, one bit per symbol with `1 ↦ +1` and `0 ↦ −1`.
//! Element access is 1-indexed throughout, matching the usual `e_1, …, e_N`
//! convention; the 0-indexed window accessors used by the counting kernels
//! are explicit about it in their names.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Input/output text encodings for sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SequenceFormat {
    /// `'1' ↦ +1`, `'0' ↦ −1`.
    ZeroOne,
    /// `'+' ↦ +1`, `'-' ↦ −1`.
    PlusMinus,
}

/// Seed for the counter-based generator: the random sequence is a pure
/// function of `(base_seed, stream_index, N)`, so Monte Carlo sample `i`
/// can be regenerated independently of scheduling or thread count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedSpec {
    pub base_seed: u64,
    pub stream_index: u64,
}

impl SeedSpec {
    pub fn new(base_seed: u64, stream_index: u64) -> Self {
        SeedSpec {
            base_seed,
            stream_index,
        }
    }

    /// The spec for the `i`-th sample of a run: same base seed, shifted stream.
    pub fn stream(self, offset: u64) -> Self {
        SeedSpec {
            base_seed: self.base_seed,
            stream_index: self.stream_index.wrapping_add(offset),
        }
    }
}

/// A length-`k` ±1 word identified by `(k, code)`.
///
/// Bit `j` of `code` encodes symbol `x_{j+1}` (set bit ↦ +1), so the code
/// of a window read out of a [`BinarySequence`] compares directly against
/// a pattern code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pattern {
    k: u32,
    code: u64,
}

impl Pattern {
    pub fn new(k: u32, code: u64) -> Result<Self> {
        if k == 0 || k > 63 {
            return Err(Error::domain(format!("pattern length {k} out of range 1..=63")));
        }
        if code >= (1u64 << k) {
            return Err(Error::domain(format!(
                "pattern code {code} out of range for length {k}"
            )));
        }
        Ok(Pattern { k, code })
    }

    pub fn from_symbols(symbols: &[i32]) -> Result<Self> {
        if symbols.is_empty() || symbols.len() > 63 {
            return Err(Error::domain("pattern length out of range 1..=63".to_string()));
        }
        let mut code = 0u64;
        for (j, &s) in symbols.iter().enumerate() {
            match s {
                1 => code |= 1 << j,
                -1 => {}
                other => return Err(Error::domain(format!("symbol {other} is not ±1"))),
            }
        }
        Ok(Pattern {
            k: symbols.len() as u32,
            code,
        })
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn code(&self) -> u64 {
        self.code
    }

    /// Symbol `x_j` for `1 ≤ j ≤ k`.
    pub fn symbol(&self, j: usize) -> i32 {
        assert!(j >= 1 && j <= self.k as usize, "pattern index {j} out of 1..={}", self.k);
        if (self.code >> (j - 1)) & 1 == 1 {
            1
        } else {
            -1
        }
    }

    pub fn symbols(&self) -> Vec<i32> {
        (1..=self.k as usize).map(|j| self.symbol(j)).collect()
    }

    /// Renders as a `+`/`-` string, e.g. `++-` for `(+1,+1,−1)`.
    pub fn render(&self) -> String {
        (1..=self.k as usize)
            .map(|j| if self.symbol(j) == 1 { '+' } else { '-' })
            .collect()
    }
}

/// A finite ±1 sequence `E_N = (e_1, …, e_N)`, bit-packed.
///
/// The packed words carry one trailing zeroed padding word so that window
/// extraction never reads out of bounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinarySequence {
    len: usize,
    words: Vec<u64>,
}

impl BinarySequence {
    fn alloc(len: usize) -> Result<Vec<u64>> {
        if len == 0 {
            return Err(Error::InvalidLength("sequence must be nonempty".to_string()));
        }
        // one spare word of padding for branch-free window reads
        Ok(vec![0u64; len.div_ceil(64) + 1])
    }

    pub fn from_bits(bits: &[bool]) -> Result<Self> {
        let mut words = Self::alloc(bits.len())?;
        for (i, &b) in bits.iter().enumerate() {
            if b {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        Ok(BinarySequence { len: bits.len(), words })
    }

    pub fn from_symbols(symbols: &[i32]) -> Result<Self> {
        let mut words = Self::alloc(symbols.len())?;
        for (i, &s) in symbols.iter().enumerate() {
            match s {
                1 => words[i / 64] |= 1 << (i % 64),
                -1 => {}
                other => return Err(Error::domain(format!("symbol {other} is not ±1"))),
            }
        }
        Ok(BinarySequence { len: symbols.len(), words })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false // invariant: length ≥ 1
    }

    /// Symbol `e_n` for `1 ≤ n ≤ N`.
    pub fn symbol(&self, n: usize) -> i32 {
        assert!(n >= 1 && n <= self.len, "index {n} out of 1..={}", self.len);
        if self.bit(n - 1) {
            1
        } else {
            -1
        }
    }

    /// 0-indexed bit access: `bit(i)` is `e_{i+1} = +1`.
    #[inline]
    pub fn bit(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    /// Code of the window `(e_{i+1}, …, e_{i+k})` at 0-indexed offset `i`,
    /// in [`Pattern`] encoding. Requires `i + k ≤ N` and `1 ≤ k ≤ 57`.
    ///
    /// The 57-bit cap keeps the read inside two adjacent words; every
    /// caller in this crate has `k ≤ log2 N` which is far below it.
    #[inline]
    pub fn window_code(&self, i: usize, k: u32) -> u64 {
        debug_assert!(k >= 1 && k <= 57);
        debug_assert!(i + k as usize <= self.len);
        let word = i / 64;
        let off = (i % 64) as u32;
        let raw = if off == 0 {
            self.words[word]
        } else {
            (self.words[word] >> off) | (self.words[word + 1] << (64 - off))
        };
        raw & ((1u64 << k) - 1)
    }

    /// Raw packed words (including the padding word), for word-level kernels.
    pub(crate) fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn symbols(&self) -> impl Iterator<Item = i32> + '_ {
        (0..self.len).map(|i| if self.bit(i) { 1 } else { -1 })
    }

    /// `(−e_1, …, −e_N)`.
    pub fn negate(&self) -> BinarySequence {
        let mut words: Vec<u64> = self.words.iter().map(|w| !w).collect();
        let tail = self.len % 64;
        let last = (self.len - 1) / 64;
        if tail != 0 {
            words[last] &= (1u64 << tail) - 1;
        }
        for w in words.iter_mut().skip(last + 1) {
            *w = 0;
        }
        BinarySequence { len: self.len, words }
    }

    /// Prefix `(e_1, …, e_m)`, `1 ≤ m ≤ N`.
    pub fn prefix(&self, m: usize) -> Result<BinarySequence> {
        if m == 0 || m > self.len {
            return Err(Error::domain(format!("prefix length {m} out of 1..={}", self.len)));
        }
        let mut words = self.words.clone();
        words.truncate(m.div_ceil(64) + 1);
        let tail = m % 64;
        if tail != 0 {
            words[(m - 1) / 64] &= (1u64 << tail) - 1;
        }
        let pad = words.len() - 1;
        words[pad] = if m % 64 == 0 { 0 } else { words[pad] };
        let mut seq = BinarySequence { len: m, words };
        // normalize padding word
        let needed = m.div_ceil(64) + 1;
        seq.words.resize(needed, 0);
        if m % 64 == 0 {
            seq.words[needed - 1] = 0;
        }
        Ok(seq)
    }

    pub fn render(&self, format: SequenceFormat) -> String {
        self.symbols()
            .map(|s| match (format, s) {
                (SequenceFormat::ZeroOne, 1) => '1',
                (SequenceFormat::ZeroOne, _) => '0',
                (SequenceFormat::PlusMinus, 1) => '+',
                (SequenceFormat::PlusMinus, _) => '-',
            })
            .collect()
    }
}

/// Parses a sequence from text. Whitespace is ignored; any other character
/// outside the format's two-symbol alphabet is a parse error carrying the
/// byte offset of the offender. An all-whitespace payload is invalid-length.
pub fn parse_sequence(text: &str, format: SequenceFormat) -> Result<BinarySequence> {
    let (one, zero) = match format {
        SequenceFormat::ZeroOne => ('1', '0'),
        SequenceFormat::PlusMinus => ('+', '-'),
    };
    let mut bits = Vec::with_capacity(text.len());
    for (offset, ch) in text.char_indices() {
        if ch.is_whitespace() {
            continue;
        }
        if ch == one {
            bits.push(true);
        } else if ch == zero {
            bits.push(false);
        } else {
            return Err(Error::Parse {
                offset,
                message: format!("unexpected character {ch:?}; admitted symbols are {zero:?} and {one:?}"),
            });
        }
    }
    BinarySequence::from_bits(&bits)
}

/// Draws a fair ±1 sequence of length `n` from a counter-based stream
/// keyed by `(base_seed, stream_index)`. Identical inputs give identical
/// output on every platform and under any parallel schedule.
pub fn random_sequence(n: usize, seed: SeedSpec) -> Result<BinarySequence> {
    if n == 0 {
        return Err(Error::InvalidLength("requested length 0".to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.base_seed);
    rng.set_stream(seed.stream_index);
    let full = n / 64;
    let mut words = vec![0u64; n.div_ceil(64) + 1];
    for w in words.iter_mut().take(full) {
        *w = rng.next_u64();
    }
    let tail = n % 64;
    if tail != 0 {
        words[full] = rng.next_u64() & ((1u64 << tail) - 1);
    }
    Ok(BinarySequence { len: n, words })
}
