//! Flow-magnitude keyframing: segment a sequence at motion peaks.

use rayon::prelude::*;
use thiserror::Error;

use crate::motion::FlowField;
use crate::scalar::Real;

/// Default minimum separation between selected peaks, in frames.
pub const DEFAULT_THETA: usize = 30;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KeyframeError {
    #[error("flow series values must be finite and non-negative")]
    InvalidSeries,
}

/// Per-frame scalar motion magnitude `M(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSeries<S> {
    pub values: Vec<S>,
}

impl<S: Real> FlowSeries<S> {
    pub fn new(values: Vec<S>) -> Result<Self, KeyframeError> {
        if values
            .iter()
            .any(|v| !v.as_f64().is_finite() || *v < S::zero())
        {
            return Err(KeyframeError::InvalidSeries);
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Mean per-pixel flow magnitude per frame.
///
/// `flows[i]` is the flow into frame `i + 1`, so the series is one longer
/// than the input and `M(0) = 0` (the first frame has no predecessor).
pub fn flow_magnitude_series<S: Real>(flows: &[FlowField<S>]) -> FlowSeries<S> {
    let mut values = vec![S::zero()];
    values.extend(flows.par_iter().map(|flow| {
        let mut sum = S::zero();
        for y in 0..flow.height {
            for x in 0..flow.width {
                sum += flow.magnitude_at(x, y);
            }
        }
        sum / S::from_usize_lossy((flow.width as usize) * (flow.height as usize))
    }).collect::<Vec<S>>());
    FlowSeries { values }
}

/// Greedy peak selection: strict local maxima of `M`, taken in descending
/// magnitude, skipping any candidate closer than `theta` frames to an
/// already selected peak, until `m - 1` peaks are chosen or candidates run
/// out. Frame 0 is always a keyframe; the result is sorted.
pub fn select_keyframes<S: Real>(series: &FlowSeries<S>, m: usize, theta: usize) -> Vec<usize> {
    assert!(m >= 1, "segment count must be >= 1");
    assert!(theta >= 1, "separation must be >= 1");
    let values = &series.values;
    let mut peaks: Vec<usize> = (1..values.len().saturating_sub(1))
        .filter(|&t| values[t] > values[t - 1] && values[t] > values[t + 1])
        .collect();
    peaks.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .unwrap()
            .then(a.cmp(&b))
    });

    let mut selected: Vec<usize> = Vec::new();
    for t in peaks {
        if selected.len() + 1 >= m {
            break;
        }
        if selected.iter().all(|&s| s.abs_diff(t) >= theta) {
            selected.push(t);
        }
    }
    selected.push(0);
    selected.sort_unstable();
    selected.dedup();
    selected
}

/// Frames whose score exceeds the given percentile of the score
/// distribution; used to promote high-drift or disocclusion frames to
/// keyframes on top of the peak selection.
///
/// The threshold is the nearest-rank percentile value; promotion uses a
/// strict comparison, so a constant series promotes nothing.
pub fn promote_by_percentile<S: Real>(scores: &[S], percentile: f64) -> Vec<usize> {
    if scores.is_empty() {
        return Vec::new();
    }
    let mut sorted: Vec<S> = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // Nearest-rank percentile.
    let rank = ((percentile / 100.0) * sorted.len() as f64).ceil() as usize;
    let threshold = sorted[rank.clamp(1, sorted.len()) - 1];
    scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > threshold)
        .map(|(t, _)| t)
        .collect()
}

/// Contiguous `[start, end)` ranges covering `[0, T)`, each starting at a
/// keyframe. Keyframe 0 is implied if missing; indices beyond `T` are
/// ignored.
pub fn segment(total_frames: usize, keyframes: &[usize]) -> Vec<(usize, usize)> {
    let mut starts: Vec<usize> = keyframes.iter().copied().filter(|&k| k < total_frames).collect();
    starts.push(0);
    starts.sort_unstable();
    starts.dedup();
    starts
        .iter()
        .enumerate()
        .map(|(i, &start)| {
            let end = starts.get(i + 1).copied().unwrap_or(total_frames);
            (start, end)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_flow_gives_zero_series() {
        let flows: Vec<FlowField<f64>> = (0..3)
            .map(|_| FlowField::new(4, 4, vec![[0.0, 0.0]; 16]).unwrap())
            .collect();
        let series = flow_magnitude_series(&flows);
        assert_eq!(series.values, vec![0.0; 4]);
    }

    #[test]
    fn uniform_flow_gives_pythagorean_magnitude() {
        let flows: Vec<FlowField<f64>> = vec![FlowField::new(4, 4, vec![[3.0, 4.0]; 16]).unwrap()];
        let series = flow_magnitude_series(&flows);
        assert_eq!(series.values.len(), 2);
        assert_eq!(series.values[0], 0.0);
        assert!((series.values[1] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn series_matches_naive_accumulation() {
        let vectors: Vec<[f64; 2]> = (0..16)
            .map(|i| [i as f64 * 0.1, (16 - i) as f64 * 0.05])
            .collect();
        let flow = FlowField::new(4, 4, vectors.clone()).unwrap();
        let series = flow_magnitude_series(std::slice::from_ref(&flow));
        let naive: f64 = vectors
            .iter()
            .map(|[dx, dy]| (dx * dx + dy * dy).sqrt())
            .sum::<f64>()
            / 16.0;
        assert!((series.values[1] - naive).abs() < 1e-12);
    }

    #[test]
    fn series_rejects_negative_or_nan() {
        assert_eq!(
            FlowSeries::new(vec![1.0, -0.5]).unwrap_err(),
            KeyframeError::InvalidSeries
        );
        assert_eq!(
            FlowSeries::new(vec![f64::NAN]).unwrap_err(),
            KeyframeError::InvalidSeries
        );
    }

    fn series_with_peaks(len: usize, peaks: &[(usize, f64)]) -> FlowSeries<f64> {
        let mut values = vec![0.0; len];
        for &(t, v) in peaks {
            values[t] = v;
        }
        FlowSeries::new(values).unwrap()
    }

    #[test]
    fn worked_selection_example() {
        let series = series_with_peaks(120, &[(10, 5.0), (20, 4.0), (50, 6.0), (100, 3.0)]);
        assert_eq!(select_keyframes(&series, 3, 30), vec![0, 10, 50]);
    }

    #[test]
    fn constant_series_has_no_peaks() {
        let series = FlowSeries::new(vec![2.0; 50]).unwrap();
        assert_eq!(select_keyframes(&series, 5, 10), vec![0]);
    }

    #[test]
    fn single_segment_requested() {
        let series = series_with_peaks(50, &[(10, 5.0), (30, 6.0)]);
        assert_eq!(select_keyframes(&series, 1, 10), vec![0]);
    }

    #[test]
    fn separation_is_respected() {
        let series = series_with_peaks(40, &[(10, 5.0), (12, 4.9), (30, 4.0)]);
        // 12 is within theta of 10, so the third segment comes from 30.
        assert_eq!(select_keyframes(&series, 3, 5), vec![0, 10, 30]);
    }

    #[test]
    fn segments_from_worked_example() {
        assert_eq!(
            segment(120, &[0, 10, 50]),
            vec![(0, 10), (10, 50), (50, 120)]
        );
        assert_eq!(segment(5, &[0]), vec![(0, 5)]);
    }

    #[test]
    fn promotion_above_percentile() {
        let scores: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(promote_by_percentile(&scores, 99.0), vec![99]);
        assert_eq!(promote_by_percentile(&scores, 90.0), (90..100).collect::<Vec<_>>());
        // A constant series promotes nothing.
        assert!(promote_by_percentile(&[1.0f64; 10], 99.0).is_empty());
        assert!(promote_by_percentile(&[] as &[f64], 99.0).is_empty());
    }

    proptest! {
        #[test]
        fn selected_peaks_are_separated(
            values in proptest::collection::vec(0u8..10, 1..40),
            m in 1usize..6, theta in 1usize..10,
        ) {
            let series = FlowSeries::new(values.iter().map(|&v| v as f64).collect()).unwrap();
            let keys = select_keyframes(&series, m, theta);
            prop_assert!(keys[0] == 0);
            prop_assert!(keys.len() <= m.max(1));
            let peaks: Vec<usize> = keys.iter().copied().filter(|&k| k != 0).collect();
            for (i, &a) in peaks.iter().enumerate() {
                for &b in &peaks[i + 1..] {
                    prop_assert!(a.abs_diff(b) >= theta);
                }
            }
        }

        #[test]
        fn segments_partition_range(
            total in 1usize..200,
            keys in proptest::collection::vec(0usize..220, 0..8),
        ) {
            let segs = segment(total, &keys);
            prop_assert_eq!(segs[0].0, 0);
            prop_assert_eq!(segs.last().unwrap().1, total);
            for pair in segs.windows(2) {
                prop_assert_eq!(pair[0].1, pair[1].0);
            }
            for (s, e) in segs {
                prop_assert!(s < e);
            }
        }
    }
}
