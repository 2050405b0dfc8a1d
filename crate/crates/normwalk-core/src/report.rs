//! Measure results: an exact deviation value together with the argmax
//! witness that attains it.

use num_rational::Ratio;

use crate::error::{Error, Result};
use crate::sequence::Pattern;

/// Strictly increasing lag tuple `D = (d_1, …, d_k)` with `d_1 ≥ 0`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct LagTuple {
    lags: Vec<usize>,
}

impl LagTuple {
    pub fn new(lags: Vec<usize>) -> Result<Self> {
        if lags.is_empty() {
            return Err(Error::domain("lag tuple must be nonempty".to_string()));
        }
        if !lags.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::domain(format!("lags {lags:?} are not strictly increasing")));
        }
        Ok(LagTuple { lags })
    }

    pub fn order(&self) -> usize {
        self.lags.len()
    }

    pub fn lags(&self) -> &[usize] {
        &self.lags
    }

    pub fn max_lag(&self) -> usize {
        *self.lags.last().unwrap()
    }
}

/// The maximizing argument of a measure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Witness {
    /// `(k, X, M)` for the normality measures (full and block-restricted).
    Normality { k: u32, pattern: Pattern, m: usize },
    /// `(M, a, b)` for the well-distribution measure.
    WellDistribution { m: usize, a: i64, b: usize },
    /// `(M, D)` for the correlation measure.
    Correlation { m: usize, lags: LagTuple },
}

/// A measure value (exact nonnegative rational) plus its witness.
///
/// The value always equals the deviation recomputed from the witness via
/// the defining formula; the witness-soundness tests enforce this.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviationReport {
    value: Ratio<i64>,
    witness: Witness,
}

impl DeviationReport {
    pub fn new(value: Ratio<i64>, witness: Witness) -> Self {
        debug_assert!(value >= Ratio::from_integer(0));
        DeviationReport { value, witness }
    }

    pub fn value(&self) -> Ratio<i64> {
        self.value
    }

    pub fn value_num(&self) -> i64 {
        *self.value.numer()
    }

    pub fn value_den(&self) -> i64 {
        *self.value.denom()
    }

    pub fn value_f64(&self) -> f64 {
        *self.value.numer() as f64 / *self.value.denom() as f64
    }

    pub fn witness(&self) -> &Witness {
        &self.witness
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lag_tuple_requires_strict_increase() {
        assert!(LagTuple::new(vec![0, 1, 3]).is_ok());
        assert!(LagTuple::new(vec![0, 0]).is_err());
        assert!(LagTuple::new(vec![2, 1]).is_err());
        assert!(LagTuple::new(vec![]).is_err());
    }

    #[test]
    fn report_exposes_exact_and_float_value() {
        let r = DeviationReport::new(
            Ratio::new(9, 4),
            Witness::Normality {
                k: 2,
                pattern: Pattern::new(2, 3).unwrap(),
                m: 3,
            },
        );
        assert_eq!(r.value_num(), 9);
        assert_eq!(r.value_den(), 4);
        assert!((r.value_f64() - 2.25).abs() < 1e-15);
    }
}
