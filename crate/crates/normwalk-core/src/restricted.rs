//! Block-restricted counting and the restricted normality measure.
//!
//! A [`BlockScheme`] cuts the index set into consecutive blocks
//! `Δ_m = {md+1, …, (m+1)d}`. Pattern occurrences either lie wholly inside
//! one block (`n mod d ≤ d−k`) or overstep a block boundary; the two
//! counts partition the unrestricted count exactly. The restricted
//! normality measure evaluates deviations only at block-aligned prefixes
//! `M + k − 1 ≡ 0 (mod d)`, which is what ties it to the lattice walk.

use num_rational::Ratio;

use crate::error::{Error, Result};
use crate::measures::{floor_log2, normality_measure, pattern_deviation_max};
use crate::report::{DeviationReport, Witness};
use crate::sequence::{BinarySequence, Pattern};

/// Block length `d ≥ 2` and the induced window structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockScheme {
    d: u32,
}

impl BlockScheme {
    pub fn new(d: u32) -> Result<Self> {
        if d < 2 {
            return Err(Error::domain(format!("block length d = {d} must be ≥ 2")));
        }
        Ok(BlockScheme { d })
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    /// Index of the block containing 0-indexed position `n`.
    pub fn block_of(&self, n: usize) -> usize {
        n / self.d as usize
    }

    fn require_aligned(&self, e: &BinarySequence) -> Result<usize> {
        let d = self.d as usize;
        if e.len() % d != 0 || e.len() < d {
            return Err(Error::domain(format!(
                "sequence length {} is not a positive multiple of d = {d}",
                e.len()
            )));
        }
        Ok(e.len() / d)
    }
}

fn check_window_args(e: &BinarySequence, m: usize, k: u32) -> Result<()> {
    if k == 0 || k as usize > e.len() {
        return Err(Error::domain(format!(
            "pattern length {k} does not fit in sequence of length {}",
            e.len()
        )));
    }
    let m_max = e.len() + 1 - k as usize;
    if m == 0 || m > m_max {
        return Err(Error::domain(format!("M = {m} out of 1..={m_max}")));
    }
    Ok(())
}

/// Occurrences of `X` at `n < M` lying wholly inside one block:
/// `(n mod d) ∈ {0, …, d−k}`.
pub fn count_pattern_restricted(
    e: &BinarySequence,
    m: usize,
    x: Pattern,
    scheme: BlockScheme,
) -> Result<u64> {
    let k = x.k();
    if k > scheme.d {
        return Err(Error::domain(format!("k = {k} exceeds block length d = {}", scheme.d)));
    }
    check_window_args(e, m, k)?;
    let d = scheme.d as usize;
    let code = x.code();
    let mut t = 0u64;
    for n in 0..m {
        if n % d <= d - k as usize && e.window_code(n, k) == code {
            t += 1;
        }
    }
    Ok(t)
}

/// Occurrences of `X` at `n < M` overstepping a block boundary:
/// `(n mod d) ∈ {d−k+1, …, d−1}`. Satisfies
/// `count_pattern = count_pattern_restricted + count_pattern_overstep`.
pub fn count_pattern_overstep(
    e: &BinarySequence,
    m: usize,
    x: Pattern,
    scheme: BlockScheme,
) -> Result<u64> {
    let k = x.k();
    if k > scheme.d {
        return Err(Error::domain(format!("k = {k} exceeds block length d = {}", scheme.d)));
    }
    check_window_args(e, m, k)?;
    let d = scheme.d as usize;
    let code = x.code();
    let mut t = 0u64;
    for n in 0..m {
        if n % d > d - k as usize && e.window_code(n, k) == code {
            t += 1;
        }
    }
    Ok(t)
}

/// Occurrences of `X` at `n < M` with `n ≡ residue (mod stride)`.
pub fn stride_pattern_count(
    e: &BinarySequence,
    m: usize,
    x: Pattern,
    stride: usize,
    residue: usize,
) -> Result<u64> {
    if stride == 0 || residue >= stride {
        return Err(Error::domain(format!(
            "residue {residue} out of range for stride {stride}"
        )));
    }
    let k = x.k();
    check_window_args(e, m, k)?;
    let code = x.code();
    let mut t = 0u64;
    let mut n = residue;
    while n < m {
        t += u64::from(e.window_code(n, k) == code);
        n += stride;
    }
    Ok(t)
}

/// Counts of admissible window offsets for an aligned prefix:
/// `(inside, overstep) = ((M+k−1)(d−k+1)/d, ((M+k−1)/d − 1)(k−1))`;
/// the two always sum to `M`.
pub fn admissible_window_counts(m: usize, k: u32, scheme: BlockScheme) -> Result<(u64, u64)> {
    let d = scheme.d as usize;
    if k == 0 || k as usize > d {
        return Err(Error::domain(format!("k = {k} out of 1..={d}")));
    }
    if m == 0 || (m + k as usize - 1) % d != 0 {
        return Err(Error::domain(format!(
            "M = {m} violates M+k−1 ≡ 0 (mod {d}) for k = {k}"
        )));
    }
    let span = m + k as usize - 1;
    let j = span / d;
    let inside = (j * (d - k as usize + 1)) as u64;
    let overstep = ((j - 1) * (k as usize - 1)) as u64;
    debug_assert_eq!(inside + overstep, m as u64);
    Ok((inside, overstep))
}

/// Per-pattern state of the checkpoint scan. Deviations are evaluated only
/// at block-aligned checkpoints `j = (M+k−1)/d`; between blocks that
/// contain occurrences the scaled deviation drops linearly, so extrema can
/// only appear immediately after an occurrence block (maxima) or just
/// before the next one / at the final checkpoint (minima).
#[derive(Clone)]
struct CkptState {
    cnt: u32,
    max_val: i64,
    max_j: u32,
    min_val: i64,
    min_j: u32,
}

const NO_MAX: i64 = i64::MIN;

struct CkptBest {
    val: i64, // |scaled deviation|, denominator 2^k
    code: u64,
    j: usize,
}

/// One checkpoint scan for pattern length `k`. `overstep = false` scans
/// within-block occurrences against centering `j(d−k+1)/2^k`;
/// `overstep = true` scans boundary-crossing occurrences against
/// `(j−1)(k−1)/2^k`.
fn checkpoint_scan(e: &BinarySequence, d: usize, k: u32, overstep: bool) -> Option<CkptBest> {
    let n = e.len();
    let r_final = n / d;
    debug_assert!(n % d == 0 && r_final >= 1);
    let kk = k as usize;
    if kk > d {
        return None;
    }
    let slope = if overstep { kk - 1 } else { d - kk + 1 } as i64;
    // occurrences in (or starting in) block m take effect at checkpoint j0
    let j_off = usize::from(overstep); // j0 = m + 1 + j_off
    let mut state = vec![
        CkptState {
            cnt: 0,
            max_val: NO_MAX,
            max_j: 0,
            min_val: i64::MAX,
            min_j: 0,
        };
        1usize << k
    ];
    let offsets: std::ops::RangeInclusive<usize> = if overstep {
        (d - kk + 1)..=(d - 1)
    } else {
        0..=(d - kk)
    };
    for m in 0..r_final {
        for r in offsets.clone() {
            let pos = m * d + r;
            if pos + kk > n {
                break;
            }
            let code = e.window_code(pos, k) as usize;
            let st = &mut state[code];
            let j_before = m + j_off;
            if j_before >= 1 {
                let v = ((st.cnt as i64) << k) - (j_before as i64 - j_off as i64) * slope;
                if v < st.min_val {
                    st.min_val = v;
                    st.min_j = j_before as u32;
                }
            }
            st.cnt += 1;
            let j_after = m + 1 + j_off;
            let v = ((st.cnt as i64) << k) - (j_after as i64 - j_off as i64) * slope;
            if v > st.max_val {
                st.max_val = v;
                st.max_j = j_after as u32;
            }
        }
    }
    let mut best: Option<CkptBest> = None;
    for (c, st) in state.iter().enumerate() {
        let flush = ((st.cnt as i64) << k) - (r_final as i64 - j_off as i64) * slope;
        let (min_val, min_j) = if flush < st.min_val {
            (flush, r_final as u32)
        } else {
            (st.min_val, st.min_j)
        };
        let neg = -min_val;
        let (val, j) = if st.max_val == NO_MAX || neg > st.max_val {
            (neg, min_j)
        } else if st.max_val > neg {
            (st.max_val, st.max_j)
        } else {
            (st.max_val, st.max_j.min(min_j))
        };
        match best {
            Some(ref b) if b.val >= val => {}
            _ => {
                best = Some(CkptBest {
                    val,
                    code: c as u64,
                    j: j as usize,
                })
            }
        }
    }
    best
}

fn best_over_k(e: &BinarySequence, scheme: BlockScheme, overstep: bool) -> Result<DeviationReport> {
    scheme.require_aligned(e)?;
    if scheme.d > 20 {
        return Err(Error::Resource(format!(
            "restricted scan with d = {} exceeds the supported table size",
            scheme.d
        )));
    }
    let d = scheme.d as usize;
    let mut best: Option<(CkptBest, u32)> = None;
    for k in 1..=scheme.d {
        let Some(cand) = checkpoint_scan(e, d, k, overstep) else { continue };
        best = match best {
            None => Some((cand, k)),
            Some((b, bk)) => {
                if (cand.val as i128) << bk > (b.val as i128) << k {
                    Some((cand, k))
                } else {
                    Some((b, bk))
                }
            }
        };
    }
    let (b, k) = best.expect("k = 1 always scans");
    let m = b.j * d + 1 - k as usize;
    Ok(DeviationReport::new(
        Ratio::new(b.val, 1i64 << k),
        Witness::Normality {
            k,
            pattern: Pattern::new(k, b.code).expect("scan produces valid codes"),
            m,
        },
    ))
}

/// The restricted normality measure: maximal deviation of within-block
/// pattern counts from `((M+k−1)/d)·(d−k+1)/2^k` over `k ≤ d`, all
/// patterns, and block-aligned prefixes. Requires `d | N`.
pub fn restricted_normality_measure(
    e: &BinarySequence,
    scheme: BlockScheme,
) -> Result<DeviationReport> {
    best_over_k(e, scheme, false)
}

/// The boundary-crossing companion: maximal deviation of the overstep
/// counts from `((M+k−1)/d − 1)·(k−1)/2^k` over the same index set. This
/// is the inner maximum of the sandwich's correction term.
pub fn overstep_deviation_max(e: &BinarySequence, scheme: BlockScheme) -> Result<DeviationReport> {
    best_over_k(e, scheme, true)
}

/// The two-sided enclosure of the full normality measure computed from
/// block-restricted quantities.
#[derive(Debug, Clone)]
pub struct SandwichBounds {
    pub lower: Ratio<i64>,
    pub upper: Ratio<i64>,
    /// the restricted measure N^(d)
    pub restricted: DeviationReport,
    /// max deviation of overstepping counts (the correction term)
    pub overstep_max: DeviationReport,
    /// max deviation over pattern lengths d < k ≤ log2 N, or None when
    /// that range is empty (contributes 0)
    pub long_pattern_max: Option<DeviationReport>,
}

impl SandwichBounds {
    pub fn long_pattern_value(&self) -> Ratio<i64> {
        self.long_pattern_max
            .as_ref()
            .map_or_else(|| Ratio::from_integer(0), |r| r.value())
    }
}

/// Computes `lower = N^(d) − overstepMax` and
/// `upper = max(N^(d) + d + overstepMax, longPatternMax)`, which enclose
/// the full normality measure. Requires `d | N` and `d ≤ log2 N`: the
/// lower bound rests on every `k ≤ d` being admitted by the full measure,
/// which fails for block lengths beyond `log2 N`.
pub fn sandwich_bounds(e: &BinarySequence, scheme: BlockScheme) -> Result<SandwichBounds> {
    if e.len() < 2 || scheme.d > floor_log2(e.len()) {
        return Err(Error::domain(format!(
            "sandwich bounds need d ≤ log2 N, got d = {} at N = {}",
            scheme.d,
            e.len()
        )));
    }
    let restricted = restricted_normality_measure(e, scheme)?;
    let overstep_max = overstep_deviation_max(e, scheme)?;
    let long_pattern_max = pattern_deviation_max(e, scheme.d + 1, floor_log2(e.len()))?;
    let lower = restricted.value() - overstep_max.value();
    let upper_a = restricted.value() + Ratio::from_integer(scheme.d as i64) + overstep_max.value();
    let upper_b = long_pattern_max
        .as_ref()
        .map_or_else(|| Ratio::from_integer(0), |r| r.value());
    let upper = upper_a.max(upper_b);
    let bounds = SandwichBounds {
        lower,
        upper,
        restricted,
        overstep_max,
        long_pattern_max,
    };
    debug_assert!(
        {
            let full = normality_measure(e)?.value();
            bounds.lower <= full && full <= bounds.upper
        },
        "sandwich violated"
    );
    Ok(bounds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{count_pattern, sequence_from_code};
    use crate::sequence::{parse_sequence, random_sequence, SeedSpec, SequenceFormat};

    fn seq(text: &str) -> BinarySequence {
        parse_sequence(text, SequenceFormat::PlusMinus).unwrap()
    }

    fn d(v: u32) -> BlockScheme {
        BlockScheme::new(v).unwrap()
    }

    #[test]
    fn restricted_count_skips_overstepping_windows() {
        let e = seq("++++");
        let x = Pattern::from_symbols(&[1, 1]).unwrap();
        assert_eq!(count_pattern_restricted(&e, 3, x, d(2)).unwrap(), 2);
        assert_eq!(count_pattern_overstep(&e, 3, x, d(2)).unwrap(), 1);
    }

    #[test]
    fn k_equals_d_admits_only_block_starts() {
        let e = seq("+-+--+");
        let x = Pattern::from_symbols(&[1, -1]).unwrap();
        // d = 2, k = 2: admissible offsets n ≡ 0 (mod 2)
        let direct: u64 = (0..5)
            .filter(|&n| n % 2 == 0 && e.window_code(n, 2) == x.code())
            .count() as u64;
        assert_eq!(count_pattern_restricted(&e, 5, x, d(2)).unwrap(), direct);
    }

    #[test]
    fn single_symbols_never_overstep() {
        let e = random_sequence(64, SeedSpec::new(5, 0)).unwrap();
        let x = Pattern::from_symbols(&[1]).unwrap();
        for dd in [2u32, 3, 4] {
            assert_eq!(count_pattern_overstep(&e, 60, x, d(dd)).unwrap(), 0);
        }
    }

    #[test]
    fn decomposition_holds_on_random_inputs() {
        for stream in 0..30 {
            let e = random_sequence(96, SeedSpec::new(17, stream)).unwrap();
            for dd in [2u32, 3, 5] {
                for k in 1..=dd {
                    for code in 0..(1u64 << k) {
                        let x = Pattern::new(k, code).unwrap();
                        let m = 96 + 1 - k as usize;
                        let total = count_pattern(&e, m, x).unwrap();
                        let inside = count_pattern_restricted(&e, m, x, d(dd)).unwrap();
                        let over = count_pattern_overstep(&e, m, x, d(dd)).unwrap();
                        assert_eq!(total, inside + over);
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_k_longer_than_block() {
        let e = seq("++++");
        let x = Pattern::from_symbols(&[1, 1, 1]).unwrap();
        assert!(count_pattern_restricted(&e, 2, x, d(2)).is_err());
        assert!(count_pattern_overstep(&e, 2, x, d(2)).is_err());
    }

    #[test]
    fn stride_count_partitions() {
        let e = random_sequence(80, SeedSpec::new(21, 4)).unwrap();
        let dd = 4usize;
        let x = Pattern::new(3, 5).unwrap();
        let k = 3usize;
        let m = 70;
        // residues d−k+1..d−1 sum to the overstep count
        let over: u64 = ((dd - k + 1)..dd)
            .map(|r| stride_pattern_count(&e, m, x, dd, r).unwrap())
            .sum();
        assert_eq!(over, count_pattern_overstep(&e, m, x, d(dd as u32)).unwrap());
        // residues 0..k−1 with stride k sum to the full count
        let total: u64 = (0..k)
            .map(|r| stride_pattern_count(&e, m, x, k, r).unwrap())
            .sum();
        assert_eq!(total, count_pattern(&e, m, x).unwrap());
        // stride 1, residue 0 reduces to count_pattern
        assert_eq!(
            stride_pattern_count(&e, m, x, 1, 0).unwrap(),
            count_pattern(&e, m, x).unwrap()
        );
    }

    #[test]
    fn stride_count_rejects_bad_residue() {
        let e = seq("++++");
        let x = Pattern::from_symbols(&[1]).unwrap();
        assert!(stride_pattern_count(&e, 2, x, 3, 3).is_err());
    }

    #[test]
    fn window_counts_example() {
        let (inside, over) = admissible_window_counts(6, 3, d(4)).unwrap();
        assert_eq!((inside, over), (4, 2));
    }

    #[test]
    fn window_counts_k1_and_kd() {
        let (inside, over) = admissible_window_counts(8, 1, d(4)).unwrap();
        assert_eq!((inside, over), (8, 0));
        let (inside, over) = admissible_window_counts(9, 4, d(4)).unwrap();
        assert_eq!(inside, 3);
        assert_eq!(over, (3 - 1) * 3);
    }

    #[test]
    fn window_counts_sum_to_m_exhaustively() {
        for dd in 2..=16u32 {
            for k in 1..=dd {
                for j in 1..=12usize {
                    let m = j * dd as usize + 1 - k as usize;
                    if m == 0 {
                        continue;
                    }
                    let (inside, over) = admissible_window_counts(m, k, d(dd)).unwrap();
                    assert_eq!(inside + over, m as u64);
                }
            }
        }
    }

    #[test]
    fn window_counts_reject_misaligned() {
        assert!(admissible_window_counts(5, 3, d(4)).is_err());
    }

    /// Brute force straight from the definition.
    fn restricted_brute(e: &BinarySequence, scheme: BlockScheme) -> Ratio<i64> {
        let n = e.len();
        let dd = scheme.d() as usize;
        let mut best = Ratio::from_integer(-1i64);
        for k in 1..=scheme.d() {
            for code in 0..(1u64 << k) {
                let x = Pattern::new(k, code).unwrap();
                for m in 1..=(n + 1 - k as usize) {
                    if (m + k as usize - 1) % dd != 0 {
                        continue;
                    }
                    let t = count_pattern_restricted(e, m, x, scheme).unwrap() as i64;
                    let j = ((m + k as usize - 1) / dd) as i64;
                    let dev = Ratio::new((t << k) - j * (dd as i64 - k as i64 + 1), 1i64 << k);
                    let dev = if dev < Ratio::from_integer(0) { -dev } else { dev };
                    best = best.max(dev);
                }
            }
        }
        best
    }

    fn overstep_brute(e: &BinarySequence, scheme: BlockScheme) -> Ratio<i64> {
        let n = e.len();
        let dd = scheme.d() as usize;
        let mut best = Ratio::from_integer(-1i64);
        for k in 1..=scheme.d() {
            for code in 0..(1u64 << k) {
                let x = Pattern::new(k, code).unwrap();
                for m in 1..=(n + 1 - k as usize) {
                    if (m + k as usize - 1) % dd != 0 {
                        continue;
                    }
                    let t = count_pattern_overstep(e, m, x, scheme).unwrap() as i64;
                    let j = ((m + k as usize - 1) / dd) as i64;
                    let dev = Ratio::new((t << k) - (j - 1) * (k as i64 - 1), 1i64 << k);
                    let dev = if dev < Ratio::from_integer(0) { -dev } else { dev };
                    best = best.max(dev);
                }
            }
        }
        best
    }

    #[test]
    fn restricted_measure_all_ones_d2() {
        // brute force gives 2, attained at k = 1, X = (+1), M = 4
        let r = restricted_normality_measure(&seq("++++"), d(2)).unwrap();
        assert_eq!(r.value(), Ratio::from_integer(2));
        assert_eq!(restricted_brute(&seq("++++"), d(2)), Ratio::from_integer(2));
        // the (k = 2, X = ++, M = 3) cell contributes |2 − 2/4| = 3/2
        let x = Pattern::from_symbols(&[1, 1]).unwrap();
        let t = count_pattern_restricted(&seq("++++"), 3, x, d(2)).unwrap() as i64;
        assert_eq!(Ratio::new((t << 2) - 2, 4), Ratio::new(3, 2));
    }

    #[test]
    fn restricted_measure_matches_brute_force_exhaustively_n8() {
        for code in 0..(1u64 << 8) {
            let e = sequence_from_code(8, code);
            for dd in [2u32, 4] {
                let fast = restricted_normality_measure(&e, d(dd)).unwrap();
                assert_eq!(fast.value(), restricted_brute(&e, d(dd)), "code {code}, d {dd}");
                // witness soundness
                if let Witness::Normality { k, pattern, m } = fast.witness() {
                    let t = count_pattern_restricted(&e, *m, *pattern, d(dd)).unwrap() as i64;
                    let j = ((m + *k as usize - 1) / dd as usize) as i64;
                    let dev = (t << k) - j * (dd as i64 - *k as i64 + 1);
                    assert_eq!(Ratio::new(dev.abs(), 1i64 << k), fast.value());
                } else {
                    panic!("wrong witness shape");
                }
            }
        }
    }

    #[test]
    fn overstep_max_matches_brute_force() {
        for stream in 0..40 {
            let e = random_sequence(24, SeedSpec::new(31, stream)).unwrap();
            for dd in [2u32, 3, 4] {
                let fast = overstep_deviation_max(&e, d(dd)).unwrap();
                assert_eq!(fast.value(), overstep_brute(&e, d(dd)), "stream {stream} d {dd}");
            }
        }
    }

    #[test]
    fn restricted_measure_rejects_misaligned_length() {
        let e = seq("+++");
        assert!(restricted_normality_measure(&e, d(2)).is_err());
    }

    #[test]
    fn centering_at_k_equals_d() {
        // at k = d the centering term is (M+d−1)/(d·2^d) per admitted M
        let dd = 3u32;
        let e = random_sequence(12, SeedSpec::new(77, 0)).unwrap();
        let x = Pattern::new(dd, 0).unwrap();
        for j in 1..=4usize {
            let m = j * dd as usize + 1 - dd as usize;
            let t = count_pattern_restricted(&e, m, x, d(dd)).unwrap() as i64;
            let expected_center = Ratio::new((m as i64 + dd as i64 - 1), dd as i64 * (1i64 << dd));
            let dev = Ratio::new(t << dd, 1i64 << dd) - Ratio::new(j as i64, 1i64 << dd);
            // same thing written the two ways
            assert_eq!(
                Ratio::from_integer(t) - expected_center,
                dev
            );
        }
    }

    #[test]
    fn sandwich_encloses_normality_exhaustively_n12() {
        for code in 0..(1u64 << 12) {
            let e = sequence_from_code(12, code);
            for dd in [2u32, 3] {
                let b = sandwich_bounds(&e, d(dd)).unwrap();
                let full = normality_measure(&e).unwrap().value();
                assert!(b.lower <= full && full <= b.upper, "code {code} d {dd}");
                assert!(b.upper >= b.lower);
            }
        }
    }

    #[test]
    fn sandwich_long_pattern_term_empty_at_d_log2n() {
        // d = floor(log2 16) = 4: the k-range (d, log2 N] is empty
        let e = random_sequence(16, SeedSpec::new(2, 9)).unwrap();
        let b = sandwich_bounds(&e, d(4)).unwrap();
        assert!(b.long_pattern_max.is_none());
        assert_eq!(b.long_pattern_value(), Ratio::from_integer(0));
    }

    #[test]
    fn sandwich_rejects_d_beyond_log2n() {
        // the lower bound is not valid there: N^(d) may range over pattern
        // lengths the full measure does not admit
        let e = random_sequence(16, SeedSpec::new(2, 10)).unwrap();
        assert!(sandwich_bounds(&e, d(8)).is_err());
    }
}
