//! Order statistics used by the reports.

use serde::{Deserialize, Serialize};

/// Quantile `q ∈ [0, 1]` of `xs` with the midpoint convention: at rank
/// position `q·(n−1)`, a whole rank returns that order statistic and a
/// fractional one returns the mean of its two neighbours. NaN for empty
/// input.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut s = xs.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    quantile_sorted(&s, q)
}

fn quantile_sorted(s: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (s.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    if lo == hi {
        s[lo]
    } else {
        0.5 * (s[lo] + s[hi])
    }
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Median, quartiles and range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return Self { count: 0, median: f64::NAN, q1: f64::NAN, q3: f64::NAN, min: f64::NAN, max: f64::NAN };
        }
        let mut s = xs.to_vec();
        s.sort_by(|a, b| a.total_cmp(b));
        Self {
            count: s.len(),
            median: quantile_sorted(&s, 0.5),
            q1: quantile_sorted(&s, 0.25),
            q3: quantile_sorted(&s, 0.75),
            min: s[0],
            max: s[s.len() - 1],
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            count: self.count,
            median: self.median * k,
            q1: self.q1 * k,
            q3: self.q3 * k,
            min: self.min * k,
            max: self.max * k,
        }
    }
}
