//! Block embedding, pattern weight tables, polytope membership, and
//! exit-probability estimation.
//!
//! Each length-`d` block of a sequence is one of `2^d` symbols; its
//! occurrence moves a lattice walk in `R^{2^d}` one centered unit step in
//! the matching coordinate direction. A pattern `X` of length `k ≤ d`
//! induces a weight row `w_X` counting its occurrences inside every block,
//! and the block-restricted deviation of `X` at an aligned prefix equals
//! the scalar product of the walk position with `w_X`. The restricted
//! normality measure exceeding `t√N` is therefore the same event as the
//! normalized walk leaving the polytope `P^(t) = ∩_X {|w_X · y| ≤ t}`,
//! and the limit of the exit probability is that of a Wiener process with
//! the block-indicator covariance.

use num_rational::Ratio;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measures::count_pattern;
use crate::restricted::count_pattern_restricted;
use crate::restricted::BlockScheme;
use crate::sequence::{random_sequence, BinarySequence, Pattern, SeedSpec};

/// Largest supported block length; tables are `(2^{d+1}−2) × 2^d`.
pub const MAX_TABLE_D: u32 = 12;

/// The matrix `w_{X,B}`: occurrences of every pattern of length `k ≤ d`
/// inside every block `B ∈ {−1,1}^d`. Rows are ordered by `(k, code)`,
/// columns by block code.
pub struct WeightTable {
    d: u32,
    dim: usize,
    rows: usize,
    row_major: Vec<u8>,
    col_major: Vec<u8>,
    row_sums: Vec<u32>,
    patterns: Vec<Pattern>,
}

impl WeightTable {
    /// Builds the table for block length `d`, `2 ≤ d ≤ 12`, computing each
    /// entry as `T(B, d−k+1, X)` and asserting the row-sum identity
    /// `Σ_u w_{X,b_u} = 2^{d−k}(d−k+1)` for every row.
    pub fn build(d: u32) -> Result<Self> {
        if !(2..=MAX_TABLE_D).contains(&d) {
            return Err(Error::Resource(format!(
                "weight table supports 2 ≤ d ≤ {MAX_TABLE_D}, got {d}"
            )));
        }
        let dim = 1usize << d;
        let rows = (1usize << (d + 1)) - 2;
        let mut row_major = vec![0u8; rows * dim];
        let mut patterns = Vec::with_capacity(rows);
        for k in 1..=d {
            for code in 0..(1u64 << k) {
                patterns.push(Pattern::new(k, code).expect("valid by construction"));
            }
        }
        let blocks: Vec<BinarySequence> = (0..dim as u64)
            .map(|u| crate::measures::sequence_from_code(d as usize, u))
            .collect();
        for (row, &x) in patterns.iter().enumerate() {
            let k = x.k();
            let windows = d - k + 1;
            for (u, block) in blocks.iter().enumerate() {
                let w = count_pattern(block, windows as usize, x)?;
                row_major[row * dim + u] = w as u8;
            }
        }
        let mut row_sums = Vec::with_capacity(rows);
        for (row, &x) in patterns.iter().enumerate() {
            let k = x.k();
            let sum: u32 = row_major[row * dim..(row + 1) * dim]
                .iter()
                .map(|&w| w as u32)
                .sum();
            let expected = (1u32 << (d - k)) * (d - k + 1);
            assert_eq!(sum, expected, "row-sum identity failed for pattern {}", x.render());
            row_sums.push(sum);
        }
        let mut col_major = vec![0u8; rows * dim];
        for row in 0..rows {
            for u in 0..dim {
                col_major[u * rows + row] = row_major[row * dim + u];
            }
        }
        Ok(WeightTable {
            d,
            dim,
            rows,
            row_major,
            col_major,
            row_sums,
            patterns,
        })
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    /// Number of pattern rows, `2^{d+1} − 2`.
    pub fn row_count(&self) -> usize {
        self.rows
    }

    /// Dimension of the embedding space, `2^d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row index of a pattern: rows are ordered by `(k, code)`.
    pub fn row_of(&self, x: Pattern) -> Result<usize> {
        if x.k() > self.d {
            return Err(Error::domain(format!(
                "pattern length {} exceeds block length {}",
                x.k(),
                self.d
            )));
        }
        Ok(((1usize << x.k()) - 2) + x.code() as usize)
    }

    pub fn pattern_of_row(&self, row: usize) -> Pattern {
        self.patterns[row]
    }

    pub fn entry(&self, x: Pattern, block_code: u64) -> Result<u8> {
        let row = self.row_of(x)?;
        if block_code >= self.dim as u64 {
            return Err(Error::domain(format!("block code {block_code} out of range")));
        }
        Ok(self.row_major[row * self.dim + block_code as usize])
    }

    pub fn row(&self, row: usize) -> &[u8] {
        &self.row_major[row * self.dim..(row + 1) * self.dim]
    }

    fn column(&self, u: usize) -> &[u8] {
        &self.col_major[u * self.rows..(u + 1) * self.rows]
    }

    pub fn row_sum(&self, row: usize) -> u32 {
        self.row_sums[row]
    }
}

/// One step of the block walk: `X_m = β_u − 2^{−d}·𝟏` for block code `u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WalkIncrement {
    d: u32,
    block_code: u64,
}

impl WalkIncrement {
    pub fn block_code(&self) -> u64 {
        self.block_code
    }

    /// Coordinate `i` of the increment: `(1 − 2^{−d})` on the block's own
    /// axis, `−2^{−d}` elsewhere.
    pub fn coord(&self, i: usize) -> Ratio<i64> {
        let scale = 1i64 << self.d;
        if i as u64 == self.block_code {
            Ratio::new(scale - 1, scale)
        } else {
            Ratio::new(-1, scale)
        }
    }

    /// All coordinates scaled by `2^d` (integers summing to 0).
    pub fn coords_scaled(&self) -> Vec<i64> {
        let dim = 1usize << self.d;
        let mut v = vec![-1i64; dim];
        v[self.block_code as usize] += 1 << self.d;
        v
    }
}

/// Walk position after `m` steps, stored as integers scaled by `2^d`.
#[derive(Debug, Clone)]
pub struct WalkState {
    d: u32,
    scaled: Vec<i64>,
    steps: usize,
}

impl WalkState {
    pub fn origin(d: u32) -> Self {
        WalkState {
            d,
            scaled: vec![0; 1usize << d],
            steps: 0,
        }
    }

    pub fn advance(&mut self, incr: &WalkIncrement) {
        assert_eq!(incr.d, self.d);
        for c in self.scaled.iter_mut() {
            *c -= 1;
        }
        self.scaled[incr.block_code as usize] += 1 << self.d;
        self.steps += 1;
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn coord(&self, i: usize) -> Ratio<i64> {
        Ratio::new(self.scaled[i], 1i64 << self.d)
    }

    /// Coordinates scaled by `2^d`.
    pub fn coords_scaled(&self) -> &[i64] {
        &self.scaled
    }
}

/// Splits the sequence into `N/d` blocks and emits their centered
/// indicator increments. Requires `d | N`.
pub fn embed_blocks(e: &BinarySequence, d: u32) -> Result<Vec<WalkIncrement>> {
    let dl = d as usize;
    if d < 1 || e.len() % dl != 0 || e.len() < dl {
        return Err(Error::domain(format!(
            "sequence length {} is not a positive multiple of d = {d}",
            e.len()
        )));
    }
    Ok((0..e.len() / dl)
        .map(|m| WalkIncrement {
            d,
            block_code: e.window_code(m * dl, d),
        })
        .collect())
}

/// `P^(t)`: the intersection of the slabs `|w_X · y| ≤ t` over all
/// pattern rows of a weight table.
pub struct Polytope<'a> {
    table: &'a WeightTable,
    t: f64,
}

impl<'a> Polytope<'a> {
    pub fn new(table: &'a WeightTable, t: f64) -> Result<Self> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::domain(format!("threshold t = {t} must be finite and ≥ 0")));
        }
        Ok(Polytope { table, t })
    }

    pub fn threshold(&self) -> f64 {
        self.t
    }

    /// Membership of a real point: `|w_X · y| ≤ t` for every row.
    pub fn contains(&self, y: &[f64]) -> bool {
        assert_eq!(y.len(), self.table.dim());
        for row in 0..self.table.row_count() {
            let dot: f64 = self
                .table
                .row(row)
                .iter()
                .zip(y)
                .map(|(&w, &c)| w as f64 * c)
                .sum();
            if dot.abs() > self.t {
                return false;
            }
        }
        true
    }
}

/// Decides `a > t·√n·2^pow2` exactly for integer `a ≥ 0`, dyadic-rational
/// `t ≥ 0` (every finite f64 is one) and `n ≤ 2^20`. Ties are "not
/// exceeding", matching the strict inequality of the exit event.
pub fn exceeds_t_sqrt_n(a: u64, pow2: u32, t: f64, n: u64) -> Result<bool> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::domain(format!("threshold t = {t} must be finite and ≥ 0")));
    }
    if n == 0 || n > (1 << 20) {
        return Err(Error::Resource(format!(
            "exact threshold comparison supports 1 ≤ n ≤ 2^20, got {n}"
        )));
    }
    if t == 0.0 {
        return Ok(a > 0);
    }
    if a == 0 {
        return Ok(false);
    }
    // t = m·2^e with m odd
    let bits = t.to_bits();
    let exp_raw = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mut m, mut e) = if exp_raw == 0 {
        (frac, -1074i64)
    } else {
        (frac | (1u64 << 52), exp_raw - 1075)
    };
    let tz = m.trailing_zeros();
    m >>= tz;
    e += tz as i64;
    // compare a² against m²·n · 2^{2e + 2·pow2}
    let x = (a as u128) * (a as u128);
    let y = (m as u128) * (m as u128) * (n as u128); // < 2^126 for n ≤ 2^20
    let s = 2 * e + 2 * pow2 as i64;
    Ok(if s >= 0 {
        if s >= 128 || (y.leading_zeros() as i64) < s {
            false // rhs ≥ 2^128 > x
        } else {
            x > (y << s)
        }
    } else {
        let sh = -s;
        if sh >= 128 {
            true // x ≥ 1, so x·2^sh ≥ 2^128 > y
        } else if (x.leading_zeros() as i64) < sh {
            true
        } else {
            (x << sh) > y
        }
    })
}

/// Decides `value > t·√n` exactly for a nonnegative rational whose
/// denominator is a power of two (every deviation in this crate is one).
pub fn ratio_exceeds_t_sqrt_n(value: Ratio<i64>, t: f64, n: u64) -> Result<bool> {
    let num = *value.numer();
    let den = *value.denom();
    if num < 0 || den <= 0 || den.count_ones() != 1 {
        return Err(Error::domain(format!(
            "expected nonnegative dyadic rational, got {num}/{den}"
        )));
    }
    exceeds_t_sqrt_n(num as u64, den.trailing_zeros(), t, n)
}

/// Runs the block walk of a sequence and reports whether the normalized
/// partial sums leave `P^(t)`, i.e. whether `|w_X · S_R| > t√N` for some
/// pattern row and some step `R ≤ N/d`. Exact integer arithmetic per row.
pub fn walk_exits(e: &BinarySequence, d: u32, t: f64) -> Result<(bool, Option<usize>)> {
    let table = WeightTable::build(d)?;
    walk_exits_with_table(&table, e, t)
}

/// As [`walk_exits`], reusing a prebuilt table.
pub fn walk_exits_with_table(
    table: &WeightTable,
    e: &BinarySequence,
    t: f64,
) -> Result<(bool, Option<usize>)> {
    let d = table.d();
    let increments = embed_blocks(e, d)?;
    let n = e.len() as u64;
    let rows = table.row_count();
    // q[row] = w_X · (2^d · S_m), updated per step from the block column
    let mut q = vec![0i64; rows];
    let scale = 1i64 << d;
    for (step, incr) in increments.iter().enumerate() {
        let col = table.column(incr.block_code() as usize);
        for (row, qv) in q.iter_mut().enumerate() {
            *qv += scale * col[row] as i64 - table.row_sum(row) as i64;
        }
        for &qv in q.iter() {
            if exceeds_t_sqrt_n(qv.unsigned_abs(), d, t, n)? {
                return Ok((true, Some(step + 1)));
            }
        }
    }
    Ok((false, None))
}

/// Both sides of the per-prefix deviation identity: the restricted
/// deviation of `(X, M)` and the walk scalar product `(Σ_{m≤j} X_m)·w_X`.
/// They agree exactly for every admissible input.
pub fn scalar_deviation_identity_check(
    e: &BinarySequence,
    d: u32,
    x: Pattern,
    m: usize,
) -> Result<(Ratio<i64>, Ratio<i64>)> {
    let k = x.k();
    if k > d {
        return Err(Error::domain(format!("k = {} exceeds d = {d}", k)));
    }
    let span = m + k as usize - 1;
    if m == 0 || span % d as usize != 0 {
        return Err(Error::domain(format!("M = {m} violates M+k−1 ≡ 0 (mod {d})")));
    }
    if m > e.len() + 1 - k as usize {
        return Err(Error::domain(format!("M = {m} exceeds N+1−k")));
    }
    let scheme = BlockScheme::new(d)?;
    let j = span / d as usize;
    let t_inside = count_pattern_restricted(e, m, x, scheme)? as i64;
    let lhs = Ratio::new((t_inside << k) - (j as i64) * (d as i64 - k as i64 + 1), 1i64 << k);

    let table = WeightTable::build(d)?;
    let row = table.row_of(x)?;
    let prefix = e.prefix(j * d as usize)?;
    let mut state = WalkState::origin(d);
    for incr in embed_blocks(&prefix, d)? {
        state.advance(&incr);
    }
    let dot: i64 = table
        .row(row)
        .iter()
        .zip(state.coords_scaled())
        .map(|(&w, &c)| w as i64 * c)
        .sum();
    let rhs = Ratio::new(dot, 1i64 << d);
    Ok((lhs, rhs))
}

/// Closed-form covariance of the block increments together with its
/// symmetric square root: `Σ` has diagonal `2^{−d}(1−2^{−d})` and
/// off-diagonal `−2^{−2d}`; `C = 2^{−d/2}(I − J/2^d)` satisfies
/// `C^T C = Σ` and `Σ·𝟏 = 0`.
pub struct CovarianceModel {
    d: u32,
    dim: usize,
}

/// Builds the model for `1 ≤ d ≤ 12`, verifying `Σ·𝟏 = 0` exactly and the
/// factorization residual on representative entries (all diagonal entries
/// are equal by symmetry, likewise all off-diagonal ones).
pub fn covariance_model(d: u32) -> Result<CovarianceModel> {
    if !(1..=MAX_TABLE_D).contains(&d) {
        return Err(Error::Resource(format!(
            "covariance model supports 1 ≤ d ≤ {MAX_TABLE_D}, got {d}"
        )));
    }
    let model = CovarianceModel {
        d,
        dim: 1usize << d,
    };
    let row_sum = model.sigma_entry(0, 0) + (model.dim as f64 - 1.0) * model.sigma_entry(0, 1);
    assert_eq!(row_sum, 0.0, "Σ·𝟏 must vanish exactly");
    let diag = model.factor_product_entry(0, 0);
    let off = model.factor_product_entry(0, 1.min(model.dim - 1));
    assert!(
        (diag - model.sigma_entry(0, 0)).abs() <= 1e-12
            && (off - model.sigma_entry(0, 1.min(model.dim - 1))).abs() <= 1e-12,
        "factorization residual exceeds 1e-12"
    );
    Ok(model)
}

impl CovarianceModel {
    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sigma_entry(&self, i: usize, j: usize) -> f64 {
        let p = (self.dim as f64).recip();
        if i == j {
            p * (1.0 - p)
        } else {
            -p * p
        }
    }

    /// `C_{ij}` for `C = 2^{−d/2}(I − J/2^d)`.
    pub fn factor_entry(&self, i: usize, j: usize) -> f64 {
        let p = (self.dim as f64).recip();
        let scale = (self.dim as f64).sqrt().recip();
        scale * (f64::from(i == j) - p)
    }

    /// Entry `(i, j)` of `C^T C` by explicit summation.
    pub fn factor_product_entry(&self, i: usize, j: usize) -> f64 {
        (0..self.dim)
            .map(|l| self.factor_entry(l, i) * self.factor_entry(l, j))
            .sum()
    }

    /// `max_{ij} |(C^T C − Σ)_{ij}|` over the full matrix; dense, so
    /// restricted to `d ≤ 8`.
    pub fn max_factorization_residual(&self) -> Result<f64> {
        if self.d > 8 {
            return Err(Error::Resource(format!(
                "dense residual check supports d ≤ 8, got {}",
                self.d
            )));
        }
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in 0..self.dim {
                let r = (self.factor_product_entry(i, j) - self.sigma_entry(i, j)).abs();
                worst = worst.max(r);
            }
        }
        Ok(worst)
    }

    pub fn sigma_dense(&self) -> Result<Vec<Vec<f64>>> {
        if self.d > 8 {
            return Err(Error::Resource("dense Σ supports d ≤ 8".to_string()));
        }
        Ok((0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.sigma_entry(i, j)).collect())
            .collect())
    }

    /// `C·g = 2^{−d/2}(g − ḡ𝟏)`, written into `out`.
    pub fn apply_factor(&self, g: &[f64], out: &mut [f64]) {
        debug_assert_eq!(g.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        let mean = g.iter().sum::<f64>() / self.dim as f64;
        let scale = (self.dim as f64).sqrt().recip();
        for (o, &x) in out.iter_mut().zip(g) {
            *o = scale * (x - mean);
        }
    }
}

/// A Monte Carlo exit-probability estimate with its binomial standard
/// error.
#[derive(Debug, Clone, Copy)]
pub struct ExitEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub exits: u64,
    pub samples: u64,
    pub steps: u64,
}

fn binomial_estimate(exits: u64, samples: u64, steps: u64) -> ExitEstimate {
    let p = exits as f64 / samples as f64;
    ExitEstimate {
        estimate: p,
        stderr: (p * (1.0 - p) / samples as f64).sqrt(),
        exits,
        samples,
        steps,
    }
}

/// Estimates the exit probability of the limiting process: simulates `S`
/// Gaussian paths `Z` on the grid `s_j = j/R` via increments `C·g·√(1/R)`
/// and counts a path as exited when `Z(s_j)/√d ∉ P^(t)` for some `j`.
///
/// The polytope is monitored only at grid points; excursions between grid
/// points are missed, so the estimate is biased low, vanishing as `R`
/// grows. Convergence in `R` is part of the acceptance checks.
pub fn simulate_wiener_exit(
    table: &WeightTable,
    t: f64,
    steps: usize,
    samples: usize,
    seed: SeedSpec,
) -> Result<ExitEstimate> {
    if steps < 100 || samples < 100 {
        return Err(Error::domain(format!(
            "need steps ≥ 100 and samples ≥ 100, got {steps} and {samples}"
        )));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::domain(format!("threshold t = {t} must be finite and ≥ 0")));
    }
    let model = covariance_model(table.d())?;
    let dim = table.dim();
    let rows = table.row_count();
    let weights: Vec<f64> = table.row_major.iter().map(|&w| w as f64).collect();
    // exit when |w_X · Z| > t·√d at a grid point
    let bound = t * (table.d() as f64).sqrt();
    let step_scale = (steps as f64).recip().sqrt();
    let exits: u64 = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.base_seed);
            rng.set_stream(seed.stream_index.wrapping_add(i));
            let mut g = vec![0.0f64; dim];
            let mut v = vec![0.0f64; dim];
            let mut q = vec![0.0f64; rows];
            for _ in 0..steps {
                for x in g.iter_mut() {
                    *x = StandardNormal.sample(&mut rng);
                }
                model.apply_factor(&g, &mut v);
                let mut exited = false;
                for (row, qv) in q.iter_mut().enumerate() {
                    let dot: f64 = weights[row * dim..(row + 1) * dim]
                        .iter()
                        .zip(&v)
                        .map(|(&w, &c)| w * c)
                        .sum();
                    *qv += dot * step_scale;
                    exited |= qv.abs() > bound;
                }
                if exited {
                    return 1u64;
                }
            }
            0u64
        })
        .sum();
    Ok(binomial_estimate(exits, samples as u64, steps as u64))
}

/// Estimates the same exit probability from the lattice route: draws `S`
/// random sequences of length `n` and counts how often their block walk
/// leaves `P^(t)` — equivalently, how often `N^(d)(E) > t√n`.
pub fn simulate_lattice_exit(
    table: &WeightTable,
    t: f64,
    n: usize,
    samples: usize,
    seed: SeedSpec,
) -> Result<ExitEstimate> {
    let d = table.d() as usize;
    if n == 0 || n % d != 0 {
        return Err(Error::domain(format!(
            "n = {n} is not a positive multiple of d = {d}"
        )));
    }
    if samples == 0 {
        return Err(Error::domain("need samples ≥ 1".to_string()));
    }
    let exits: Result<u64> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let e = random_sequence(n, seed.stream(i))?;
            let (exited, _) = walk_exits_with_table(table, &e, t)?;
            Ok(u64::from(exited))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b));
    Ok(binomial_estimate(exits?, samples as u64, (n / d) as u64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::restricted::restricted_normality_measure;
    use crate::sequence::parse_sequence;
    use crate::sequence::SequenceFormat;

    fn seq(text: &str) -> BinarySequence {
        parse_sequence(text, SequenceFormat::PlusMinus).unwrap()
    }

    #[test]
    fn weight_table_paper_block_example() {
        // ++ appears twice inside +++
        let table = WeightTable::build(3).unwrap();
        let x = Pattern::from_symbols(&[1, 1]).unwrap();
        assert_eq!(table.entry(x, 0b111).unwrap(), 2);
    }

    #[test]
    fn weight_table_d2_rows() {
        let table = WeightTable::build(2).unwrap();
        let plus = Pattern::from_symbols(&[1]).unwrap();
        let row = table.row(table.row_of(plus).unwrap());
        // blocks by code: (−−), (+−), (−+), (++)
        assert_eq!(row, &[0, 1, 1, 2]);
        assert_eq!(table.row_sum(table.row_of(plus).unwrap()), 4);
        let pp = Pattern::from_symbols(&[1, 1]).unwrap();
        assert_eq!(table.row(table.row_of(pp).unwrap()), &[0, 0, 0, 1]);
    }

    #[test]
    fn weight_table_basis_rows_at_k_equals_d() {
        for d in 2..=5u32 {
            let table = WeightTable::build(d).unwrap();
            for code in 0..(1u64 << d) {
                let x = Pattern::new(d, code).unwrap();
                let row = table.row(table.row_of(x).unwrap());
                for (u, &w) in row.iter().enumerate() {
                    assert_eq!(w, u8::from(u as u64 == code));
                }
            }
        }
    }

    #[test]
    fn weight_table_rejects_out_of_range() {
        assert!(WeightTable::build(1).is_err());
        assert!(WeightTable::build(13).is_err());
    }

    #[test]
    fn increments_are_centered_indicators() {
        let e = seq("++-+");
        let incs = embed_blocks(&e, 2).unwrap();
        assert_eq!(incs.len(), 2);
        assert_eq!(incs[0].block_code(), 0b11);
        assert_eq!(incs[1].block_code(), 0b10);
        for inc in &incs {
            let coords = inc.coords_scaled();
            assert_eq!(coords.iter().sum::<i64>(), 0);
            let big = coords.iter().filter(|&&c| c == 3).count();
            let small = coords.iter().filter(|&&c| c == -1).count();
            assert_eq!((big, small), (1, 3));
            assert_eq!(inc.coord(inc.block_code() as usize), Ratio::new(3, 4));
        }
    }

    #[test]
    fn embed_rejects_misaligned() {
        assert!(embed_blocks(&seq("+++"), 2).is_err());
    }

    #[test]
    fn walk_state_coordinates_sum_to_zero() {
        let e = crate::sequence::random_sequence(40, SeedSpec::new(4, 2)).unwrap();
        let mut state = WalkState::origin(2);
        for inc in embed_blocks(&e, 2).unwrap() {
            state.advance(&inc);
            assert_eq!(state.coords_scaled().iter().sum::<i64>(), 0);
            let m = state.steps() as i64;
            for i in 0..4 {
                let c = state.coords_scaled()[i];
                assert!(c >= -m && c <= m * 3);
            }
        }
    }

    #[test]
    fn exceeds_comparator_agrees_with_rationals() {
        // a > t·√n·2^p with √n rational when n is a perfect square
        for (a, p, t, n, expect) in [
            (5u64, 0u32, 1.0f64, 16u64, true),   // 5 > 4
            (4, 0, 1.0, 16, false),              // tie counts as inside
            (3, 0, 0.75, 16, false),             // 3 = 3
            (7, 1, 0.75, 16, true),              // 7 > 6
            (0, 0, 0.0, 4, false),
            (1, 0, 0.0, 4, true),
            (1000, 0, 250.0, 16, false),         // 1000 = 250·4
            (1001, 0, 250.0, 16, true),
        ] {
            assert_eq!(
                exceeds_t_sqrt_n(a, p, t, n).unwrap(),
                expect,
                "a={a} p={p} t={t} n={n}"
            );
        }
    }

    #[test]
    fn exceeds_comparator_matches_float_on_safe_cases() {
        // far from ties, f64 evaluation is trustworthy
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        use rand::Rng;
        for _ in 0..2000 {
            let a: u64 = rng.gen_range(0..1 << 30);
            let p: u32 = rng.gen_range(0..8);
            let t: f64 = rng.gen_range(0.0..4.0);
            let n: u64 = rng.gen_range(1..1 << 18);
            let rhs = t * (n as f64).sqrt() * (1u64 << p) as f64;
            let lhs = a as f64;
            if (lhs - rhs).abs() > 1e-6 * rhs.max(1.0) {
                assert_eq!(
                    exceeds_t_sqrt_n(a, p, t, n).unwrap(),
                    lhs > rhs,
                    "a={a} p={p} t={t} n={n}"
                );
            }
        }
    }

    #[test]
    fn walk_exit_equals_restricted_exceedance() {
        let table = WeightTable::build(2).unwrap();
        for stream in 0..50 {
            let e = crate::sequence::random_sequence(32, SeedSpec::new(88, stream)).unwrap();
            let measure = restricted_normality_measure(&e, BlockScheme::new(2).unwrap()).unwrap();
            for t in [0.0, 0.25, 0.5, 1.0, 2.0] {
                let (exited, step) = walk_exits_with_table(&table, &e, t).unwrap();
                let exceed = ratio_exceeds_t_sqrt_n(measure.value(), t, 32).unwrap();
                assert_eq!(exited, exceed, "stream {stream}, t {t}");
                assert_eq!(exited, step.is_some());
            }
        }
    }

    #[test]
    fn walk_never_exits_for_huge_t() {
        let e = crate::sequence::random_sequence(64, SeedSpec::new(13, 0)).unwrap();
        let t = 64.0 * 2.0; // deviations are bounded by N ≤ t√N here
        assert_eq!(walk_exits(&e, 2, t).unwrap(), (false, None));
    }

    #[test]
    fn walk_exits_at_step_one_for_t_zero() {
        // first block ++ deviates immediately, e.g. for pattern (+)
        let e = seq("++--");
        let (exited, step) = walk_exits(&e, 2, 0.0).unwrap();
        assert!(exited);
        assert_eq!(step, Some(1));
    }

    #[test]
    fn scalar_identity_exhaustive_n8_d2() {
        for code in 0..(1u64 << 8) {
            let e = crate::measures::sequence_from_code(8, code);
            for k in 1..=2u32 {
                for pcode in 0..(1u64 << k) {
                    let x = Pattern::new(k, pcode).unwrap();
                    let mut m = 1;
                    while m <= 8 + 1 - k as usize {
                        if (m + k as usize - 1) % 2 == 0 {
                            let (lhs, rhs) =
                                scalar_deviation_identity_check(&e, 2, x, m).unwrap();
                            assert_eq!(lhs, rhs, "code {code} k {k} pcode {pcode} m {m}");
                        }
                        m += 1;
                    }
                }
            }
        }
    }

    #[test]
    fn scalar_identity_basis_row_reads_walk_coordinate() {
        let e = crate::sequence::random_sequence(24, SeedSpec::new(91, 7)).unwrap();
        let d = 3u32;
        let code = 0b101;
        let x = Pattern::new(d, code).unwrap();
        let m = 2 * 3 + 1 - 3; // j = 2
        let (_, rhs) = scalar_deviation_identity_check(&e, d, x, m).unwrap();
        let mut state = WalkState::origin(d);
        for inc in embed_blocks(&e.prefix(6).unwrap(), d).unwrap() {
            state.advance(&inc);
        }
        assert_eq!(rhs, state.coord(code as usize));
    }

    #[test]
    fn covariance_model_d1_by_hand() {
        let model = covariance_model(1).unwrap();
        assert_eq!(model.sigma_entry(0, 0), 0.25);
        assert_eq!(model.sigma_entry(0, 1), -0.25);
        assert_eq!(model.sigma_entry(1, 1), 0.25);
    }

    #[test]
    fn covariance_rows_sum_to_zero() {
        for d in 1..=4u32 {
            let model = covariance_model(d).unwrap();
            for i in 0..model.dim() {
                let sum: f64 = (0..model.dim()).map(|j| model.sigma_entry(i, j)).sum();
                assert!(sum.abs() < 1e-15, "d={d} row {i}: {sum}");
            }
        }
    }

    #[test]
    fn factorization_residual_small() {
        for d in 1..=8u32 {
            let model = covariance_model(d).unwrap();
            assert!(model.max_factorization_residual().unwrap() <= 1e-12, "d = {d}");
        }
    }

    #[test]
    fn sample_covariance_matches_model() {
        // empirical covariance of block increments vs Σ, d = 2
        let d = 2u32;
        let model = covariance_model(d).unwrap();
        let samples = 200_000usize;
        let e = crate::sequence::random_sequence(samples * d as usize, SeedSpec::new(5150, 0))
            .unwrap();
        let incs = embed_blocks(&e, d).unwrap();
        let dim = model.dim();
        let mut acc = vec![vec![0.0f64; dim]; dim];
        for inc in &incs {
            let v: Vec<f64> = (0..dim)
                .map(|i| {
                    let r = inc.coord(i);
                    *r.numer() as f64 / *r.denom() as f64
                })
                .collect();
            for i in 0..dim {
                for j in 0..dim {
                    acc[i][j] += v[i] * v[j];
                }
            }
        }
        let se = |i: usize, j: usize| {
            // crude bound on the standard error of the (i,j) moment
            let var = if i == j { 0.25 } else { 0.0625 };
            5.0 * (var / samples as f64).sqrt()
        };
        for i in 0..dim {
            for j in 0..dim {
                let est = acc[i][j] / samples as f64;
                assert!(
                    (est - model.sigma_entry(i, j)).abs() <= se(i, j),
                    "entry ({i},{j}): {est} vs {}",
                    model.sigma_entry(i, j)
                );
            }
        }
    }

    #[test]
    fn empirical_increment_mean_is_centered() {
        let d = 3u32;
        let samples = 100_000usize;
        let e = crate::sequence::random_sequence(samples * d as usize, SeedSpec::new(6, 0)).unwrap();
        let incs = embed_blocks(&e, d).unwrap();
        let dim = 1usize << d;
        let mut mean = vec![0.0f64; dim];
        for inc in &incs {
            mean[inc.block_code() as usize] += 1.0;
        }
        let bound = 5.0 * ((1.0 / dim as f64) / samples as f64).sqrt();
        for m in mean.iter_mut() {
            *m = *m / samples as f64 - 1.0 / dim as f64;
            assert!(m.abs() <= bound, "coordinate mean {m} beyond {bound}");
        }
    }

    #[test]
    fn gaussian_exit_certain_at_t_zero() {
        let table = WeightTable::build(2).unwrap();
        let est = simulate_wiener_exit(&table, 0.0, 128, 200, SeedSpec::new(3, 0)).unwrap();
        assert_eq!(est.estimate, 1.0);
    }

    #[test]
    fn gaussian_exit_monotone_in_t_with_common_paths() {
        let table = WeightTable::build(2).unwrap();
        let seed = SeedSpec::new(17, 0);
        let a = simulate_wiener_exit(&table, 0.5, 128, 400, seed).unwrap();
        let b = simulate_wiener_exit(&table, 1.0, 128, 400, seed).unwrap();
        assert!(a.estimate >= b.estimate);
    }

    #[test]
    fn lattice_exit_monotone_in_t_with_common_sequences() {
        let table = WeightTable::build(2).unwrap();
        let seed = SeedSpec::new(18, 0);
        let a = simulate_lattice_exit(&table, 0.5, 256, 400, seed).unwrap();
        let b = simulate_lattice_exit(&table, 1.0, 256, 400, seed).unwrap();
        assert!(a.estimate >= b.estimate);
    }

    #[test]
    fn polytope_contains_origin_and_respects_cube() {
        let table = WeightTable::build(3).unwrap();
        let poly = Polytope::new(&table, 0.75).unwrap();
        let origin = vec![0.0; table.dim()];
        assert!(poly.contains(&origin));
        // membership implies every coordinate is within [−t, t] (basis rows)
        let mut y = vec![0.0; table.dim()];
        y[5] = 0.76;
        assert!(!poly.contains(&y));
        y[5] = 0.74;
        // may or may not be in P (other rows), but the basis row alone passes
        let row = table.row_of(Pattern::new(3, 5).unwrap()).unwrap();
        let dot: f64 = table.row(row).iter().zip(&y).map(|(&w, &c)| w as f64 * c).sum();
        assert!(dot.abs() <= 0.75);
    }

    #[test]
    fn estimates_are_deterministic() {
        let table = WeightTable::build(2).unwrap();
        let a = simulate_lattice_exit(&table, 1.0, 128, 300, SeedSpec::new(9, 4)).unwrap();
        let b = simulate_lattice_exit(&table, 1.0, 128, 300, SeedSpec::new(9, 4)).unwrap();
        assert_eq!(a.exits, b.exits);
        let c = simulate_wiener_exit(&table, 1.0, 128, 300, SeedSpec::new(9, 4)).unwrap();
        let d = simulate_wiener_exit(&table, 1.0, 128, 300, SeedSpec::new(9, 4)).unwrap();
        assert_eq!(c.exits, d.exits);
    }
}
