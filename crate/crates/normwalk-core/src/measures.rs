//! The pseudorandomness measures: normality, well-distribution, and
//! correlation, each computed exactly with an argmax witness.
//!
//! All deviations are handled in integer-scaled form. For pattern length
//! `k` the deviation `T(E,M,X) − M/2^k` is carried as the integer
//! `2^k·T − M`; maxima and ties are decided on integers (cross-multiplied
//! in `i128` across different `k`), so results are exact and the witness
//! tie-break — smallest `k`, then smallest pattern code, then smallest
//! `M` — is deterministic.

use num_rational::Ratio;

use crate::error::{Error, Result};
use crate::report::{DeviationReport, LagTuple, Witness};
use crate::sequence::{BinarySequence, Pattern};

/// `floor(log2 n)` for `n ≥ 1`.
pub fn floor_log2(n: usize) -> u32 {
    assert!(n >= 1);
    usize::BITS - 1 - n.leading_zeros()
}

/// Counts overlapping occurrences of `X` among the windows starting at
/// `n = 0, …, M−1`: `#{n < M : (e_{n+1},…,e_{n+k}) = X}`.
pub fn count_pattern(e: &BinarySequence, m: usize, x: Pattern) -> Result<u64> {
    let k = x.k();
    let m_max = window_count(e, k)?;
    if m == 0 || m > m_max {
        return Err(Error::domain(format!(
            "M = {m} out of 1..={m_max} for N = {}, k = {k}",
            e.len()
        )));
    }
    let code = x.code();
    let mut t = 0u64;
    for n in 0..m {
        t += u64::from(e.window_code(n, k) == code);
    }
    Ok(t)
}

/// Number of admissible prefix lengths `M` for pattern length `k`,
/// i.e. `N+1−k`; errors when no window of length `k` fits.
fn window_count(e: &BinarySequence, k: u32) -> Result<usize> {
    if k == 0 || k as usize > e.len() {
        return Err(Error::domain(format!(
            "pattern length {k} does not fit in sequence of length {}",
            e.len()
        )));
    }
    Ok(e.len() + 1 - k as usize)
}

/// Per-pattern scan state for the event-based deviation pass.
///
/// Between occurrences of a pattern the scaled deviation `2^k·T − M`
/// moves by −1 per step of `M`, so its maxima can only occur at `M = n+1`
/// right after an occurrence at `n`, and its minima just before the next
/// occurrence or at `M = N+1−k`.
#[derive(Clone)]
struct PatState {
    cnt: u32,
    max_val: i64,
    max_m: u32,
    min_val: i64,
    min_m: u32,
}

const NO_MAX: i64 = i64::MIN;

impl PatState {
    fn fresh() -> Self {
        PatState {
            cnt: 0,
            max_val: NO_MAX,
            max_m: 0,
            min_val: i64::MAX,
            min_m: 0,
        }
    }
}

struct KBest {
    /// scaled |deviation| numerator over denominator 2^k
    val: i64,
    code: u64,
    m: usize,
}

/// Single left-to-right pass for one pattern length `k`, returning the
/// maximal |2^k·T − M| with its (code, M) witness under the smallest-code,
/// then smallest-M tie-break.
fn best_for_k(e: &BinarySequence, k: u32) -> Option<KBest> {
    let m_max = match window_count(e, k) {
        Ok(m) => m,
        Err(_) => return None,
    };
    let size = 1usize << k;
    let mut state = vec![PatState::fresh(); size];

    let mut code = e.window_code(0, k);
    let top = k - 1;
    for n in 0..m_max {
        let st = &mut state[code as usize];
        if n >= 1 {
            // deviation just before this occurrence is counted
            let v = ((st.cnt as i64) << k) - n as i64;
            if v < st.min_val {
                st.min_val = v;
                st.min_m = n as u32;
            }
        }
        st.cnt += 1;
        let v = ((st.cnt as i64) << k) - (n as i64 + 1);
        if v > st.max_val {
            st.max_val = v;
            st.max_m = n as u32 + 1;
        }
        if n + 1 < m_max {
            code = (code >> 1) | (u64::from(e.bit(n + k as usize)) << top);
        }
    }

    let mut best: Option<KBest> = None;
    for (c, st) in state.iter().enumerate() {
        // final segment ends at M = m_max
        let flush = ((st.cnt as i64) << k) - m_max as i64;
        let (min_val, min_m) = if flush < st.min_val {
            (flush, m_max as u32)
        } else {
            (st.min_val, st.min_m)
        };
        let neg = -min_val;
        let (val, m) = if st.max_val == NO_MAX || neg > st.max_val {
            (neg, min_m)
        } else if st.max_val > neg {
            (st.max_val, st.max_m)
        } else {
            (st.max_val, st.max_m.min(min_m))
        };
        match best {
            Some(ref b) if b.val >= val => {}
            _ => {
                best = Some(KBest {
                    val,
                    code: c as u64,
                    m: m as usize,
                })
            }
        }
    }
    best
}

/// Maximum of `|T(E,M,X) − M/2^k|` over `k_lo ≤ k ≤ k_hi`, all patterns
/// `X` of length `k`, and all `1 ≤ M ≤ N+1−k`.
///
/// Returns `Ok(None)` when the `k`-range is empty or no window fits (the
/// empty maximum convention: such a maximum contributes 0).
pub fn pattern_deviation_max(
    e: &BinarySequence,
    k_lo: u32,
    k_hi: u32,
) -> Result<Option<DeviationReport>> {
    if k_lo == 0 {
        return Err(Error::domain("pattern length range must start at k ≥ 1".to_string()));
    }
    if k_hi > 30 {
        return Err(Error::Resource(format!(
            "pattern deviation scan with k up to {k_hi} exceeds the supported table size"
        )));
    }
    let mut best: Option<(KBest, u32)> = None;
    for k in k_lo..=k_hi.min(e.len() as u32) {
        let Some(cand) = best_for_k(e, k) else { continue };
        best = match best {
            None => Some((cand, k)),
            Some((b, bk)) => {
                // cand/2^k > b/2^bk, cross-multiplied exactly
                if (cand.val as i128) << bk > (b.val as i128) << k {
                    Some((cand, k))
                } else {
                    Some((b, bk))
                }
            }
        };
    }
    Ok(best.map(|(b, k)| {
        DeviationReport::new(
            Ratio::new(b.val, 1i64 << k),
            Witness::Normality {
                k,
                pattern: Pattern::new(k, b.code).expect("scan produces valid codes"),
                m: b.m,
            },
        )
    }))
}

/// The normality measure: the maximal deviation of overlapping pattern
/// counts from `M/2^k` over all `k ≤ log2 N`, patterns and prefixes.
pub fn normality_measure(e: &BinarySequence) -> Result<DeviationReport> {
    if e.len() < 2 {
        return Err(Error::domain(format!(
            "normality measure needs N ≥ 2, got N = {}",
            e.len()
        )));
    }
    let report = pattern_deviation_max(e, 1, floor_log2(e.len()))?;
    Ok(report.expect("k-range nonempty for N ≥ 2"))
}

/// Reference implementation of [`normality_measure`]: an explicit triple
/// loop over `(k, X, M)` that re-derives every deviation, sharing nothing
/// with the event-based fast path. Intended for `N ≤ 4096`.
pub fn normality_measure_oracle(e: &BinarySequence) -> Result<DeviationReport> {
    let n = e.len();
    if n < 2 {
        return Err(Error::domain(format!("normality measure needs N ≥ 2, got N = {n}")));
    }
    let mut best: Option<(i64, u32, u64, usize)> = None; // (scaled val, k, code, m)
    for k in 1..=floor_log2(n) {
        let m_max = n + 1 - k as usize;
        let codes: Vec<u64> = (0..m_max).map(|i| e.window_code(i, k)).collect();
        for code in 0..(1u64 << k) {
            let mut t = 0i64;
            let mut cand: Option<(i64, usize)> = None;
            for (i, &c) in codes.iter().enumerate() {
                t += i64::from(c == code);
                let dev = (t << k) - (i as i64 + 1);
                let a = dev.abs();
                match cand {
                    Some((v, _)) if v >= a => {}
                    _ => cand = Some((a, i + 1)),
                }
            }
            let (val, m) = cand.expect("m_max ≥ 1");
            let better = match best {
                None => true,
                Some((bv, bk, _, _)) => (val as i128) << bk > (bv as i128) << k,
            };
            if better {
                best = Some((val, k, code, m));
            }
        }
    }
    let (val, k, code, m) = best.expect("N ≥ 2 admits k = 1");
    Ok(DeviationReport::new(
        Ratio::new(val, 1i64 << k),
        Witness::Normality {
            k,
            pattern: Pattern::new(k, code).expect("enumerated codes are valid"),
            m,
        },
    ))
}

/// The well-distribution measure: `max |Σ_{j=1..M} e_{a+jb}|` over all
/// progressions with `b ≥ 1`, `1 ≤ a+b` and `a+Mb ≤ N`.
///
/// For fixed `b`, every admissible progression is a contiguous run of one
/// residue chain, so the maximum over `(a, M)` is the spread between the
/// running extremes of the chain's prefix sums.
pub fn well_distribution_measure(e: &BinarySequence) -> Result<DeviationReport> {
    let n = e.len();
    let mut best: Option<(i64, usize, i64, usize)> = None; // (value, b, a, m)
    for b in 1..=n {
        for r in 1..=b.min(n) {
            let mut s = 0i64;
            let mut max_v = 0i64;
            let mut max_at = 0usize;
            let mut min_v = 0i64;
            let mut min_at = 0usize;
            let mut j = 0usize;
            let mut idx = r;
            while idx <= n {
                j += 1;
                s += if e.bit(idx - 1) { 1 } else { -1 };
                if s > max_v {
                    max_v = s;
                    max_at = j;
                } else if s < min_v {
                    min_v = s;
                    min_at = j;
                }
                idx += b;
            }
            let value = max_v - min_v;
            let (u, v) = if max_at < min_at {
                (max_at.min(min_at), max_at.max(min_at))
            } else {
                (min_at.min(max_at), min_at.max(max_at))
            };
            let a = r as i64 + (u as i64 - 1) * b as i64;
            let m = v - u;
            let better = match best {
                None => true,
                Some((bv, bb, ba, bm)) => {
                    value > bv || (value == bv && b == bb && (a, m) < (ba, bm))
                }
            };
            if better {
                best = Some((value, b, a, m));
            }
        }
    }
    let (value, b, a, m) = best.ok_or_else(|| Error::InvalidLength("empty sequence".to_string()))?;
    Ok(DeviationReport::new(
        Ratio::from_integer(value),
        Witness::WellDistribution { m, a, b },
    ))
}

/// Running prefix-sum extrema (with earliest index of attainment) of a
/// ±1 stream packed as bits, processed bytewise through a lookup table.
struct PrefixExtrema {
    sum: i64,
    max_v: i64,
    max_at: usize,
    min_v: i64,
    min_at: usize,
    pos: usize,
}

#[derive(Clone, Copy)]
struct ByteExt {
    tot: i8,
    pmax: i8,
    pmax_at: u8,
    pmin: i8,
    pmin_at: u8,
}

const fn byte_table() -> [ByteExt; 256] {
    let mut table = [ByteExt {
        tot: 0,
        pmax: 0,
        pmax_at: 0,
        pmin: 0,
        pmin_at: 0,
    }; 256];
    let mut b = 0usize;
    while b < 256 {
        let mut s = 0i8;
        let mut pmax = i8::MIN;
        let mut pmax_at = 0u8;
        let mut pmin = i8::MAX;
        let mut pmin_at = 0u8;
        let mut j = 0u8;
        while j < 8 {
            s += if (b >> j) & 1 == 1 { 1 } else { -1 };
            if s > pmax {
                pmax = s;
                pmax_at = j + 1;
            }
            if s < pmin {
                pmin = s;
                pmin_at = j + 1;
            }
            j += 1;
        }
        table[b] = ByteExt {
            tot: s,
            pmax,
            pmax_at,
            pmin,
            pmin_at,
        };
        b += 1;
    }
    table
}

static BYTE_EXT: [ByteExt; 256] = byte_table();

impl PrefixExtrema {
    fn new() -> Self {
        PrefixExtrema {
            sum: 0,
            max_v: 0,
            max_at: 0,
            min_v: 0,
            min_at: 0,
            pos: 0,
        }
    }

    #[inline]
    fn push_byte(&mut self, byte: u8) {
        let ext = BYTE_EXT[byte as usize];
        let cand = self.sum + ext.pmax as i64;
        if cand > self.max_v {
            self.max_v = cand;
            self.max_at = self.pos + ext.pmax_at as usize;
        }
        let cand = self.sum + ext.pmin as i64;
        if cand < self.min_v {
            self.min_v = cand;
            self.min_at = self.pos + ext.pmin_at as usize;
        }
        self.sum += ext.tot as i64;
        self.pos += 8;
    }

    #[inline]
    fn push_bit(&mut self, bit: bool) {
        self.sum += if bit { 1 } else { -1 };
        self.pos += 1;
        if self.sum > self.max_v {
            self.max_v = self.sum;
            self.max_at = self.pos;
        } else if self.sum < self.min_v {
            self.min_v = self.sum;
            self.min_at = self.pos;
        }
    }
}

/// Word `w` of the sequence's bit array shifted right by `g` positions.
#[inline]
fn shifted_word(words: &[u64], w: usize, g: usize) -> u64 {
    let s = g / 64;
    let r = g % 64;
    if r == 0 {
        words[w + s]
    } else {
        (words[w + s] >> r) | (words.get(w + s + 1).copied().unwrap_or(0) << (64 - r))
    }
}

/// The correlation measure of order `k`: `max |V(E,M,D)|` over lag tuples
/// `D = (d_1 < … < d_k)` and `1 ≤ M ≤ N − d_k`.
///
/// `V(E,M,D)` depends on `D` only through the gaps `d_i − d_1` and a shift
/// of the summation window, so the maximum is taken per gap tuple over all
/// sub-runs of one product stream — the spread of its prefix-sum extremes —
/// rather than per lag tuple. The witness tie-break is value, then `D`
/// lexicographically, then `M`.
pub fn correlation_measure(e: &BinarySequence, k: usize) -> Result<DeviationReport> {
    let n = e.len();
    if k < 2 || k + 1 > n {
        return Err(Error::domain(format!(
            "correlation order k = {k} out of 2..={} for N = {n}",
            n.saturating_sub(1)
        )));
    }
    let words = e.words();
    // gap tuples 1 ≤ g_1 < … < g_{k−1} ≤ N−1, lexicographic
    let mut gaps: Vec<usize> = (1..k).collect();
    let mut best: Option<(i64, Vec<usize>, usize)> = None; // (value, lags, m)
    let mut stream = Vec::new();
    loop {
        let len = n - gaps[k - 2];
        // product stream: q_i = e_{i+1}·e_{i+1+g_1}···e_{i+1+g_{k-1}} as bits
        stream.clear();
        stream.resize(len.div_ceil(64), 0u64);
        for (w, q) in stream.iter_mut().enumerate() {
            let mut acc = words[w];
            for &g in &gaps {
                acc ^= shifted_word(words, w, g);
            }
            // product is +1 iff the bit parity matches k's parity
            *q = if k % 2 == 0 { !acc } else { acc };
        }
        let mut ext = PrefixExtrema::new();
        let full_bytes = len / 8;
        for byte_idx in 0..full_bytes {
            let byte = (stream[byte_idx / 8] >> (8 * (byte_idx % 8))) as u8;
            ext.push_byte(byte);
        }
        for i in (full_bytes * 8)..len {
            ext.push_bit(stream[i / 64] >> (i % 64) & 1 == 1);
        }
        let value = ext.max_v - ext.min_v;
        let (u, v) = if value == 0 {
            (0, 1)
        } else {
            (ext.max_at.min(ext.min_at), ext.max_at.max(ext.min_at))
        };
        let better = match &best {
            None => true,
            Some((bv, blags, bm)) => {
                value > *bv
                    || (value == *bv && {
                        let cand: Vec<usize> =
                            std::iter::once(u).chain(gaps.iter().map(|&g| u + g)).collect();
                        cand < *blags || (cand == *blags && v - u < *bm)
                    })
            }
        };
        if better {
            let lags: Vec<usize> =
                std::iter::once(u).chain(gaps.iter().map(|&g| u + g)).collect();
            best = Some((value, lags, v - u));
        }
        if !next_combination(&mut gaps, n - 1) {
            break;
        }
    }
    let (value, lags, m) = best.expect("at least one gap tuple for k ≤ N−1");
    Ok(DeviationReport::new(
        Ratio::from_integer(value),
        Witness::Correlation {
            m,
            lags: LagTuple::new(lags).expect("strictly increasing by construction"),
        },
    ))
}

/// Advances a strictly increasing combination over `{lo, …, max_val}`
/// (`lo` implied by the current contents) to its lexicographic successor;
/// returns false when exhausted.
fn next_combination(slots: &mut [usize], max_val: usize) -> bool {
    let len = slots.len();
    for i in (0..len).rev() {
        if slots[i] < max_val - (len - 1 - i) {
            slots[i] += 1;
            for j in i + 1..len {
                slots[j] = slots[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Exhaustive minimum of the normality measure over all `E ∈ {−1,1}^N`,
/// enumerating one representative per negation pair (the measure is
/// negation-invariant). Supported for `2 ≤ N ≤ 24`.
pub fn min_normality_exhaustive(n: usize) -> Result<(Ratio<i64>, BinarySequence)> {
    if !(2..=24).contains(&n) {
        return Err(Error::domain(format!("exhaustive search supports 2 ≤ N ≤ 24, got {n}")));
    }
    let mut best: Option<(Ratio<i64>, u64)> = None;
    // representatives: e_1 = +1, i.e. bit 0 set
    for half in 0u64..(1u64 << (n - 1)) {
        let code = (half << 1) | 1;
        let seq = sequence_from_code(n, code);
        let value = normality_measure(&seq)?.value();
        match best {
            Some((bv, _)) if bv <= value => {}
            _ => best = Some((value, code)),
        }
    }
    let (value, code) = best.expect("nonempty enumeration");
    Ok((value, sequence_from_code(n, code)))
}

/// Sequence of length `n ≤ 64` whose bit `i` (pattern encoding) is bit `i`
/// of `code`.
pub fn sequence_from_code(n: usize, code: u64) -> BinarySequence {
    assert!(n >= 1 && n <= 64);
    let bits: Vec<bool> = (0..n).map(|i| (code >> i) & 1 == 1).collect();
    BinarySequence::from_bits(&bits).expect("n ≥ 1")
}

/// Recomputes the deviation named by a witness directly from the defining
/// formula. Used by witness-soundness checks.
pub fn recompute_at_witness(e: &BinarySequence, witness: &Witness) -> Result<Ratio<i64>> {
    match witness {
        Witness::Normality { k, pattern, m } => {
            let t = count_pattern(e, *m, *pattern)? as i64;
            let dev = (t << k) - *m as i64;
            Ok(Ratio::new(dev.abs(), 1i64 << k))
        }
        Witness::WellDistribution { m, a, b } => {
            let mut u = 0i64;
            for j in 1..=*m as i64 {
                let idx = a + j * *b as i64;
                if idx < 1 || idx > e.len() as i64 {
                    return Err(Error::domain(format!("index {idx} outside 1..={}", e.len())));
                }
                u += e.symbol(idx as usize) as i64;
            }
            Ok(Ratio::from_integer(u.abs()))
        }
        Witness::Correlation { m, lags } => {
            if *m + lags.max_lag() > e.len() {
                return Err(Error::domain("correlation witness exceeds sequence".to_string()));
            }
            let mut v = 0i64;
            for i in 1..=*m {
                let mut prod = 1i64;
                for &d in lags.lags() {
                    prod *= e.symbol(i + d) as i64;
                }
                v += prod;
            }
            Ok(Ratio::from_integer(v.abs()))
        }
    }
}
