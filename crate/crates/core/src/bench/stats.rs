//! Small descriptive statistics used by the experiment reports.

use serde::{Deserialize, Serialize};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1); zero for fewer than two values.
pub fn sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// σ/μ of the sample.
pub fn cv(xs: &[f64]) -> f64 {
    let m = mean(xs);
    if m == 0.0 {
        0.0
    } else {
        sd(xs) / m.abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub cv: f64,
}

impl Moments {
    pub fn of(xs: &[f64]) -> Self {
        Self { n: xs.len(), mean: mean(xs), sd: sd(xs), cv: cv(xs) }
    }
}

/// Sorted values paired with their empirical CDF rank (i + 1)/n.
pub fn ecdf(xs: &[f64]) -> Vec<(f64, f64)> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.into_iter().enumerate().map(|(i, x)| (x, (i + 1) as f64 / n)).collect()
}

/// Least-squares slope and intercept of y on x.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return None;
    }
    let (mx, my) = (mean(xs), mean(ys));
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Largest number of closed intervals that can be picked pairwise
/// disjoint (greedy by right end).
pub fn disjoint_chain(bands: &[(f64, f64)]) -> usize {
    let mut b = bands.to_vec();
    b.sort_by(|x, y| x.1.total_cmp(&y.1));
    let mut count = 0;
    let mut last = f64::NEG_INFINITY;
    for (lo, hi) in b {
        if lo > last {
            count += 1;
            last = hi;
        }
    }
    count
}
