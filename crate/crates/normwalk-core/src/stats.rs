//! Monte Carlo estimation of measure distributions and empirical checks
//! of the tail bounds.
//!
//! Sampling is embarrassingly parallel over stream indices and fully
//! deterministic: sample `i` always uses stream `seed.stream_index + i`,
//! results are collected in index order and sorted once at the end, so
//! the output is identical for any worker count.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{correlation_measure, floor_log2, normality_measure, pattern_deviation_max, well_distribution_measure};
use crate::restricted::{overstep_deviation_max, restricted_normality_measure, BlockScheme};
use crate::sequence::{random_sequence, SeedSpec};

/// Which measure a distribution sample draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureKind {
    Normality,
    Restricted,
    WellDistribution,
}

impl MeasureKind {
    pub fn name(&self) -> &'static str {
        match self {
            MeasureKind::Normality => "normality",
            MeasureKind::Restricted => "restricted",
            MeasureKind::WellDistribution => "welldist",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "normality" => Ok(MeasureKind::Normality),
            "restricted" => Ok(MeasureKind::Restricted),
            "welldist" | "well-distribution" => Ok(MeasureKind::WellDistribution),
            other => Err(Error::domain(format!("unknown measure kind {other:?}"))),
        }
    }
}

/// Provenance of an empirical CDF: enough to regenerate it exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EcdfMeta {
    pub kind: MeasureKind,
    pub n: usize,
    pub d: Option<u32>,
    pub samples: usize,
    pub base_seed: u64,
    pub stream_index: u64,
}

/// Empirical distribution of normalized measure values (`measure/√N`),
/// kept sorted; `F̂(t) = #{values ≤ t}/count`.
#[derive(Debug, Clone)]
pub struct Ecdf {
    values: Vec<f64>,
    meta: EcdfMeta,
}

impl Ecdf {
    pub fn from_values(mut values: Vec<f64>, meta: EcdfMeta) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidLength("empty sample set".to_string()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite sample value".to_string()));
        }
        values.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite"));
        Ok(Ecdf { values, meta })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn meta(&self) -> &EcdfMeta {
        &self.meta
    }

    /// Right-continuous CDF query: fraction of samples `≤ t`.
    pub fn cdf(&self, t: f64) -> f64 {
        self.values.partition_point(|&v| v <= t) as f64 / self.values.len() as f64
    }

    /// Lower empirical quantile: smallest value `v` with `F̂(v) ≥ p`.
    pub fn quantile(&self, p: f64) -> f64 {
        assert!((0.0..=1.0).contains(&p));
        let n = self.values.len();
        let idx = ((p * n as f64).ceil() as usize).clamp(1, n);
        self.values[idx - 1]
    }

    /// CSV persistence: `#`-prefixed metadata header, one value per line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# measure: {}", self.meta.kind.name())?;
        writeln!(w, "# n: {}", self.meta.n)?;
        if let Some(d) = self.meta.d {
            writeln!(w, "# d: {d}")?;
        }
        writeln!(w, "# samples: {}", self.meta.samples)?;
        writeln!(w, "# base_seed: {}", self.meta.base_seed)?;
        writeln!(w, "# stream_index: {}", self.meta.stream_index)?;
        writeln!(w, "value")?;
        for v in &self.values {
            writeln!(w, "{v}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut kind = None;
        let mut n = None;
        let mut d = None;
        let mut samples = None;
        let mut base_seed = 0u64;
        let mut stream_index = 0u64;
        let mut values = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line == "value" {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some((key, val)) = rest.split_once(':') {
                    let val = val.trim();
                    match key.trim() {
                        "measure" => kind = Some(MeasureKind::parse(val)?),
                        "n" => n = val.parse().ok(),
                        "d" => d = val.parse().ok(),
                        "samples" => samples = val.parse().ok(),
                        "base_seed" => base_seed = val.parse().unwrap_or(0),
                        "stream_index" => stream_index = val.parse().unwrap_or(0),
                        _ => {}
                    }
                }
                continue;
            }
            let v: f64 = line.parse().map_err(|_| Error::Parse {
                offset: lineno,
                message: format!("bad sample value {line:?} on line {}", lineno + 1),
            })?;
            values.push(v);
        }
        let meta = EcdfMeta {
            kind: kind.unwrap_or(MeasureKind::Normality),
            n: n.unwrap_or(0),
            d,
            samples: samples.unwrap_or(values.len()),
            base_seed,
            stream_index,
        };
        Ecdf::from_values(values, meta)
    }
}

/// Draws `samples` independent sequences (streams `seed.stream_index + i`),
/// computes the chosen measure, and returns the ECDF of `measure/√N`.
/// Bit-reproducible for a fixed seed regardless of thread count.
pub fn sample_distribution(
    kind: MeasureKind,
    n: usize,
    d: Option<u32>,
    samples: usize,
    seed: SeedSpec,
) -> Result<Ecdf> {
    if samples == 0 {
        return Err(Error::domain("need samples ≥ 1".to_string()));
    }
    if n < 2 {
        return Err(Error::domain(format!("need N ≥ 2, got {n}")));
    }
    let scheme = match (kind, d) {
        (MeasureKind::Restricted, Some(d)) => {
            let s = BlockScheme::new(d)?;
            if n % d as usize != 0 {
                return Err(Error::domain(format!("d = {d} does not divide N = {n}")));
            }
            Some(s)
        }
        (MeasureKind::Restricted, None) => {
            return Err(Error::domain("restricted sampling needs d".to_string()))
        }
        (_, other_d) => {
            if other_d.is_some() {
                return Err(Error::domain("d is only meaningful for the restricted measure".to_string()));
            }
            None
        }
    };
    let root = (n as f64).sqrt();
    let values: Result<Vec<f64>> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let e = random_sequence(n, seed.stream(i))?;
            let v = match kind {
                MeasureKind::Normality => normality_measure(&e)?.value_f64(),
                MeasureKind::Restricted => {
                    restricted_normality_measure(&e, scheme.expect("checked"))?.value_f64()
                }
                MeasureKind::WellDistribution => well_distribution_measure(&e)?.value_f64(),
            };
            Ok(v / root)
        })
        .collect();
    Ecdf::from_values(
        values?,
        EcdfMeta {
            kind,
            n,
            d,
            samples,
            base_seed: seed.base_seed,
            stream_index: seed.stream_index,
        },
    )
}

/// Exact two-sample Kolmogorov–Smirnov distance `sup_t |F̂_a(t) − F̂_b(t)|`
/// by a merge scan; the supremum is carried as an integer numerator over
/// `len(a)·len(b)`, so the result is the exactly representable value.
pub fn ks_distance(a: &Ecdf, b: &Ecdf) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidLength("empty ECDF".to_string()));
    }
    let (xs, ys) = (a.values(), b.values());
    let (na, nb) = (xs.len() as i64, ys.len() as i64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut best = 0i64;
    while i < xs.len() || j < ys.len() {
        let v = match (xs.get(i), ys.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => break,
        };
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        best = best.max((i as i64 * nb - j as i64 * na).abs());
    }
    Ok(best as f64 / (na as f64 * nb as f64))
}

/// Asymptotic two-sample KS critical value at level `alpha` for sample
/// sizes `n` and `m`: `√(−ln(α/2)/2) · √((n+m)/(n·m))`.
pub fn ks_two_sample_critical(alpha: f64, n: usize, m: usize) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c * (((n + m) as f64) / (n as f64 * m as f64)).sqrt()
}

/// The maximal-Bernstein tail bound `2·exp(−t²/(2Nσ² + 2t/3))` for the
/// running maximum of partial sums of centered i.i.d. variables in [−1,1].
pub fn bernstein_bound(t: f64, n: u64, sigma2: f64) -> Result<f64> {
    if t < 0.0 || sigma2 < 0.0 || n == 0 {
        return Err(Error::domain(format!(
            "need t ≥ 0, σ² ≥ 0, N ≥ 1; got t = {t}, σ² = {sigma2}, N = {n}"
        )));
    }
    if t == 0.0 {
        return Ok(2.0);
    }
    Ok(2.0 * (-t * t / (2.0 * n as f64 * sigma2 + 2.0 * t / 3.0)).exp())
}

/// Outcome of an empirical tail check: the observed violation frequency
/// against a theoretical bound, with Monte Carlo slack.
#[derive(Debug, Clone, Serialize)]
pub struct TailCheckReport {
    pub lemma: String,
    pub params: TailCheckParams,
    /// observed frequency of the monitored event
    pub frequency: f64,
    /// theoretical bound on that frequency
    pub bound: f64,
    /// binomial standard error `√(f(1−f)/S)`
    pub stderr: f64,
    /// allowed slack in standard errors
    pub slack_sigmas: f64,
    /// `frequency ≤ bound + slack_sigmas·stderr`
    pub verdict: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TailCheckParams {
    pub n: usize,
    pub d: Option<u32>,
    pub k: Option<usize>,
    pub samples: usize,
    pub threshold: f64,
    pub base_seed: u64,
    pub stream_index: u64,
}

fn tail_report(
    lemma: &str,
    params: TailCheckParams,
    violations: usize,
    bound: f64,
    slack_sigmas: f64,
) -> TailCheckReport {
    let s = params.samples as f64;
    let frequency = violations as f64 / s;
    let stderr = (frequency * (1.0 - frequency) / s).sqrt();
    TailCheckReport {
        lemma: lemma.to_string(),
        params,
        frequency,
        bound,
        stderr,
        slack_sigmas,
        verdict: frequency <= bound + slack_sigmas * stderr,
    }
}

/// Empirical check of the overstep tail bound: estimates the probability
/// that the boundary-crossing deviation maximum reaches
/// `6√N·√(ln d)/√d` and compares it against `1/(d²−1)` with 3σ slack.
pub fn overstep_tail_check(d: u32, n: usize, samples: usize, seed: SeedSpec) -> Result<TailCheckReport> {
    if d < 4 {
        return Err(Error::domain(format!("overstep tail check needs d ≥ 4, got {d}")));
    }
    if n % d as usize != 0 || n == 0 {
        return Err(Error::domain(format!("d = {d} does not divide N = {n}")));
    }
    if samples < 1000 {
        return Err(Error::domain(format!("need samples ≥ 1000, got {samples}")));
    }
    let scheme = BlockScheme::new(d)?;
    let threshold = 6.0 * (n as f64).sqrt() * (f64::from(d)).ln().sqrt() / f64::from(d).sqrt();
    let violations: Result<u64> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let e = random_sequence(n, seed.stream(i))?;
            let v = overstep_deviation_max(&e, scheme)?.value_f64();
            Ok(u64::from(v >= threshold))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b));
    let bound = 1.0 / (f64::from(d) * f64::from(d) - 1.0);
    Ok(tail_report(
        "overstep",
        TailCheckParams {
            n,
            d: Some(d),
            k: None,
            samples,
            threshold,
            base_seed: seed.base_seed,
            stream_index: seed.stream_index,
        },
        violations? as usize,
        bound,
        3.0,
    ))
}

/// Empirical check of the long-pattern tail bound: estimates the
/// probability that the deviation maximum over pattern lengths
/// `d < k ≤ log2 N` reaches `16√N/d` and compares it against `1/d^{2d}`.
pub fn long_pattern_tail_check(
    d: u32,
    n: usize,
    samples: usize,
    seed: SeedSpec,
) -> Result<TailCheckReport> {
    if d < 4 {
        return Err(Error::domain(format!("long-pattern tail check needs d ≥ 4, got {d}")));
    }
    if samples < 1000 {
        return Err(Error::domain(format!("need samples ≥ 1000, got {samples}")));
    }
    if n < 2 || floor_log2(n) <= d {
        return Err(Error::domain(format!(
            "k-range (d, log2 N] is empty for d = {d}, N = {n}"
        )));
    }
    let k_hi = floor_log2(n);
    let threshold = 16.0 * (n as f64).sqrt() / f64::from(d);
    let violations: Result<u64> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let e = random_sequence(n, seed.stream(i))?;
            let v = pattern_deviation_max(&e, d + 1, k_hi)?
                .map_or(0.0, |r| r.value_f64());
            Ok(u64::from(v >= threshold))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b));
    let bound = f64::from(d).powi(-2 * d as i32);
    Ok(tail_report(
        "long-pattern",
        TailCheckParams {
            n,
            d: Some(d),
            k: None,
            samples,
            threshold,
            base_seed: seed.base_seed,
            stream_index: seed.stream_index,
        },
        violations? as usize,
        bound,
        3.0,
    ))
}

/// Natural log of `binomial(n, k)` via the log-gamma function.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Lanczos approximation of `ln Γ(x)` for `x > 0` (g = 7, 9 terms),
/// accurate to well below 1e−10 over the range used here.
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    assert!(x > 0.0, "ln_gamma needs x > 0");
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Empirical check of the correlation band: the fraction of sampled
/// `C_k` values falling outside
/// `[(2/5)√(N ln binom(N,k)), (7/4)√(N ln binom(N,k))]`
/// must not exceed 5%.
pub fn correlation_band_check(
    n: usize,
    k: usize,
    samples: usize,
    seed: SeedSpec,
) -> Result<TailCheckReport> {
    let supported = (k == 2 && n <= 1024) || (k == 3 && n <= 256);
    if !supported {
        return Err(Error::domain(format!(
            "correlation band check supports k = 2 with N ≤ 1024 or k = 3 with N ≤ 256, got k = {k}, N = {n}"
        )));
    }
    if samples == 0 {
        return Err(Error::domain("need samples ≥ 1".to_string()));
    }
    let scale = (n as f64 * ln_binomial(n as u64, k as u64)).sqrt();
    let (lo, hi) = (0.4 * scale, 1.75 * scale);
    debug_assert!(lo > 0.0 && lo < hi);
    let outside: Result<u64> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let e = random_sequence(n, seed.stream(i))?;
            let v = correlation_measure(&e, k)?.value_f64();
            Ok(u64::from(!(lo..=hi).contains(&v)))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b));
    Ok(tail_report(
        "correlation-band",
        TailCheckParams {
            n,
            d: None,
            k: Some(k),
            samples,
            threshold: lo,
            base_seed: seed.base_seed,
            stream_index: seed.stream_index,
        },
        outside? as usize,
        0.05,
        0.0,
    ))
}
