use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::haptics::ForceTrace;

pub const DEFAULT_MIN_PROMINENCE_N: f64 = 0.1;
pub const DEFAULT_MIN_SEPARATION_S: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Peak {
    /// s
    pub t: f64,
    /// N
    pub magnitude: f64,
    /// mm
    pub position: Vec3,
    /// N
    pub prominence: f64,
}

/// Force peaks of a trace, sorted by time.
pub fn detect_peaks(trace: &ForceTrace, min_prominence: f64, min_separation: f64) -> Vec<Peak> {
    let t = trace.times();
    let v = trace.magnitudes();
    peak_indices(&t, &v, min_prominence, min_separation)
        .into_iter()
        .map(|(i, prominence)| Peak {
            t: t[i],
            magnitude: v[i],
            position: trace.samples[i].position,
            prominence,
        })
        .collect()
}

/// Indices and prominences of the peaks of `v` sampled at ascending times
/// `t`.
///
/// A peak is the first sample of a plateau that has lower neighbours on both
/// sides (so never an endpoint), is strictly above every earlier sample and
/// not below any later sample within `min_separation` seconds, and has
/// topographic prominence of at least `min_prominence`.
pub fn peak_indices(t: &[f64], v: &[f64], min_prominence: f64, min_separation: f64) -> Vec<(usize, f64)> {
    let n = v.len();
    assert_eq!(t.len(), n, "times and values differ in length");
    if n < 3 {
        return Vec::new();
    }
    let maxima = RangeTable::new(v, f64::max);
    let minima = RangeTable::new(v, f64::min);
    let prev_higher = nearest_higher(v.iter().copied().enumerate());
    let next_higher = nearest_higher(v.iter().copied().enumerate().rev());

    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        let mut end = i;
        while end + 1 < n && v[end + 1] == v[i] {
            end += 1;
        }
        let candidate = v[i - 1] < v[i] && end + 1 < n && v[end + 1] < v[i];
        if candidate {
            let lo = t.partition_point(|&x| t[i] - x >= min_separation);
            let hi = t.partition_point(|&x| x - t[i] < min_separation);
            let earlier_ok = lo >= i || maxima.query(lo, i - 1) < v[i];
            let later_ok = hi <= i + 1 || maxima.query(i + 1, hi - 1) <= v[i];
            if earlier_ok && later_ok {
                let left = minima.query(prev_higher[i].map_or(0, |j| j + 1), i);
                let right = minima.query(i, next_higher[i].map_or(n - 1, |j| j - 1));
                let prominence = v[i] - left.max(right);
                if prominence >= min_prominence {
                    out.push((i, prominence));
                }
            }
        }
        i = end + 1;
    }
    out
}

/// For each index, the nearest index in iteration order whose value is
/// strictly greater.
fn nearest_higher(values: impl Iterator<Item = (usize, f64)>) -> Vec<Option<usize>> {
    let mut stack: Vec<(usize, f64)> = Vec::new();
    let mut out = Vec::new();
    for (i, x) in values {
        while matches!(stack.last(), Some(&(_, top)) if top <= x) {
            stack.pop();
        }
        out.push((i, stack.last().map(|&(j, _)| j)));
        stack.push((i, x));
    }
    out.sort_unstable_by_key(|&(i, _)| i);
    out.into_iter().map(|(_, j)| j).collect()
}

/// Sparse table answering idempotent range queries in O(1).
struct RangeTable {
    levels: Vec<Vec<f64>>,
    op: fn(f64, f64) -> f64,
}

impl RangeTable {
    fn new(v: &[f64], op: fn(f64, f64) -> f64) -> Self {
        let mut levels = vec![v.to_vec()];
        let mut width = 1;
        while 2 * width <= v.len() {
            let prev = levels.last().unwrap();
            let next = (0..=v.len() - 2 * width)
                .map(|i| op(prev[i], prev[i + width]))
                .collect();
            levels.push(next);
            width *= 2;
        }
        RangeTable { levels, op }
    }

    /// Inclusive range `[a, b]`.
    fn query(&self, a: usize, b: usize) -> f64 {
        debug_assert!(a <= b);
        let level = (usize::BITS - 1 - (b - a + 1).leading_zeros()) as usize;
        let row = &self.levels[level];
        (self.op)(row[a], row[b + 1 - (1 << level)])
    }
}
