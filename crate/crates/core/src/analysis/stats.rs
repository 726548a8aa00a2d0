use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::Scalar;

/// Box-plot statistics. Quartiles are medians of the lower and upper
/// halves of the sorted data; for odd counts the median belongs to both
/// halves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary<S> {
    pub count: usize,
    pub min: S,
    pub q1: S,
    pub median: S,
    pub q3: S,
    pub max: S,
    pub iqr: S,
    pub whisker_low: S,
    pub whisker_high: S,
    pub fliers: Vec<S>,
}

fn median_sorted<S: Scalar>(v: &[S]) -> S {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / S::lit(2.0)
    }
}

pub fn summarize<S: Scalar>(values: &[S]) -> Result<DistributionSummary<S>, AnalysisError> {
    if values.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("values are not NaN"));
    let n = v.len();
    let q1 = median_sorted(&v[..n.div_ceil(2)]);
    let q3 = median_sorted(&v[n / 2..]);
    let iqr = q3 - q1;
    let reach = S::lit(1.5) * iqr;
    let (min, max) = (v[0], v[n - 1]);
    let whisker_low = (q1 - reach).max(min);
    let whisker_high = (q3 + reach).min(max);
    let fliers = v.iter().copied().filter(|&x| x < whisker_low || x > whisker_high).collect();
    Ok(DistributionSummary { count: n, min, q1, median: median_sorted(&v), q3, max, iqr, whisker_low, whisker_high, fliers })
}

pub fn mean<S: Scalar>(values: &[S]) -> Option<S> {
    if values.is_empty() {
        return None;
    }
    let sum = values.iter().fold(S::zero(), |a, &b| a + b);
    Some(sum / S::from_count(values.len() as u64))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DifferenceConvention {
    /// `(b − a) / b`
    RelativeToSecond,
    /// `(b − a) / a`
    RelativeToFirst,
}

/// Relative difference of one pair, as a fraction.
pub fn pair_difference<S: Scalar>(a: S, b: S, convention: DifferenceConvention) -> Result<S, AnalysisError> {
    for x in [a, b] {
        if !(x > S::zero()) {
            return Err(AnalysisError::NonPositive(x.to_f64_lossy()));
        }
    }
    Ok(match convention {
        DifferenceConvention::RelativeToSecond => (b - a) / b,
        DifferenceConvention::RelativeToFirst => (b - a) / a,
    })
}

/// Geometric mean of the per-pair relative differences, in percent.
pub fn geomean_difference<S: Scalar>(pairs: &[(S, S)], convention: DifferenceConvention) -> Result<S, AnalysisError> {
    if pairs.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let mut log_sum = S::zero();
    for &(a, b) in pairs {
        let d = pair_difference(a, b, convention)?;
        if d < S::zero() {
            return Err(AnalysisError::NegativeDifference(d.to_f64_lossy()));
        }
        if d == S::zero() {
            return Ok(S::zero());
        }
        log_sum = log_sum + d.ln();
    }
    Ok((log_sum / S::from_count(pairs.len() as u64)).exp() * S::lit(100.0))
}
