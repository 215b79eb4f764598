//! Five-number summaries for box plots.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// Quantile method used throughout: linear interpolation between order statistics
/// (position `(n - 1) q`, Hyndman and Fan type 7).
pub const QUANTILE_METHOD: &str = "linear";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BoxStats<T = f64> {
    pub n: usize,
    pub min: T,
    pub q1: T,
    pub median: T,
    pub q3: T,
    pub max: T,
    /// `q1 - 1.5 IQR` and `q3 + 1.5 IQR`
    pub lower_fence: T,
    pub upper_fence: T,
    /// most extreme observations inside the fences
    pub whisker_low: T,
    pub whisker_high: T,
    pub outliers: Vec<T>,
    pub quantile_method: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BoxStatsError {
    #[error("no values to summarize")]
    Empty,
    #[error("values must not be NaN")]
    NaN,
}

/// Quantile of already sorted values, `q` in [0, 1].
pub fn quantile_sorted<T: Real>(sorted: &[T], q: f64) -> T {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = T::of(h - lo as f64);
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn compute_box_stats<T: Real>(values: &[T]) -> Result<BoxStats<T>, BoxStatsError> {
    if values.is_empty() {
        return Err(BoxStatsError::Empty);
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(BoxStatsError::NaN);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN filtered above"));
    let q1 = quantile_sorted(&sorted, 0.25);
    let median = quantile_sorted(&sorted, 0.5);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let k = T::of(1.5);
    let lower_fence = q1 - k * iqr;
    let upper_fence = q3 + k * iqr;
    let inside = |v: &&T| **v >= lower_fence && **v <= upper_fence;
    let whisker_low = *sorted.iter().find(inside).unwrap_or(&q1);
    let whisker_high = *sorted.iter().rev().find(inside).unwrap_or(&q3);
    let outliers = sorted
        .iter()
        .copied()
        .filter(|v| *v < lower_fence || *v > upper_fence)
        .collect();
    Ok(BoxStats {
        n: sorted.len(),
        min: sorted[0],
        q1,
        median,
        q3,
        max: sorted[sorted.len() - 1],
        lower_fence,
        upper_fence,
        whisker_low,
        whisker_high,
        outliers,
        quantile_method: QUANTILE_METHOD.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn three_values() {
        let b = compute_box_stats(&[0.9f64, 0.1, 0.5]).unwrap();
        assert_eq!(b.median, 0.5);
        assert!((b.q1 - 0.3).abs() < 1e-15);
        assert!((b.q3 - 0.7).abs() < 1e-15);
        assert_eq!((b.min, b.max), (0.1, 0.9));
        assert!(b.outliers.is_empty());
    }

    #[test]
    fn constant_and_singleton() {
        let b = compute_box_stats(&[0.4f32; 5]).unwrap();
        assert!([b.min, b.q1, b.median, b.q3, b.max]
            .iter()
            .all(|&v| v == 0.4));
        let b = compute_box_stats(&[0.8]).unwrap();
        assert!([
            b.min,
            b.q1,
            b.median,
            b.q3,
            b.max,
            b.whisker_low,
            b.whisker_high
        ]
        .iter()
        .all(|&v| v == 0.8));
    }

    #[test]
    fn fences_and_outliers() {
        // q1 = 2, q3 = 4, IQR = 2, fences -1 and 7
        let b = compute_box_stats(&[1.0, 2.0, 3.0, 4.0, 5.0, 20.0, -5.0, 2.0, 4.0]).unwrap();
        assert_eq!((b.q1, b.q3), (2.0, 4.0));
        assert_eq!((b.lower_fence, b.upper_fence), (-1.0, 7.0));
        assert_eq!(b.outliers, vec![-5.0, 20.0]);
        assert_eq!((b.whisker_low, b.whisker_high), (1.0, 5.0));
    }

    #[test]
    fn errors() {
        assert_eq!(compute_box_stats::<f64>(&[]), Err(BoxStatsError::Empty));
        assert_eq!(compute_box_stats(&[f64::NAN]), Err(BoxStatsError::NaN));
    }

    proptest! {
        #[test]
        fn ordered(values in prop::collection::vec(-1e6f64..1e6, 1..50)) {
            let b = compute_box_stats(&values).unwrap();
            prop_assert!(b.min <= b.q1 && b.q1 <= b.median && b.median <= b.q3 && b.q3 <= b.max);
            prop_assert!(b.whisker_low >= b.min && b.whisker_high <= b.max);
        }
    }
}
