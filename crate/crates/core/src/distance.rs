//! Distance kernels between load profiles.
//!
//! Two measures are supported: plain Euclidean distance and dynamic time
//! warping restricted to a Sakoe-Chiba band. Both use squared point
//! differences with a final square root, so a band of radius zero reduces
//! exactly to the Euclidean distance.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest admissible Sakoe-Chiba radius (exclusive).
pub const MAX_RADIUS: usize = 24;

#[derive(Debug, Error, PartialEq)]
pub enum DistanceError {
    #[error("series length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("Sakoe-Chiba radius {0} out of range [0, {MAX_RADIUS})")]
    InvalidRadius(usize),
    #[error("cannot build a distance matrix from an empty profile list")]
    Empty,
}

/// Dissimilarity used for clustering and evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistanceMeasure {
    Euclidean,
    DtwConstrained { sakoe_chiba_radius: usize },
}

impl DistanceMeasure {
    pub fn dtw(radius: usize) -> Result<Self, DistanceError> {
        if radius >= MAX_RADIUS {
            return Err(DistanceError::InvalidRadius(radius));
        }
        Ok(DistanceMeasure::DtwConstrained {
            sakoe_chiba_radius: radius,
        })
    }

    pub fn is_dtw(&self) -> bool {
        matches!(self, DistanceMeasure::DtwConstrained { .. })
    }

    /// Short label used in run ids and logs, e.g. `euclidean` or `dtw1`.
    pub fn label(&self) -> String {
        match self {
            DistanceMeasure::Euclidean => "euclidean".to_string(),
            DistanceMeasure::DtwConstrained { sakoe_chiba_radius } => {
                format!("dtw{sakoe_chiba_radius}")
            }
        }
    }

    pub fn parse_label(s: &str) -> Option<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "euclidean" {
            return Some(DistanceMeasure::Euclidean);
        }
        let radius = s.strip_prefix("dtw")?;
        if radius.is_empty() {
            return DistanceMeasure::dtw(1).ok();
        }
        DistanceMeasure::dtw(radius.parse().ok()?).ok()
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64, DistanceError> {
        check_lengths(a, b)?;
        Ok(self.distance_unchecked(a, b))
    }

    /// Distance for series already known to have equal length.
    pub(crate) fn distance_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        self.squared_unchecked(a, b).sqrt()
    }

    /// Squared distance (the accumulated cost for DTW).
    pub(crate) fn squared_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            DistanceMeasure::Euclidean => squared_euclidean(a, b),
            DistanceMeasure::DtwConstrained { sakoe_chiba_radius } => {
                dtw_cost(a, b, sakoe_chiba_radius, f64::INFINITY)
            }
        }
    }

    /// Squared distance, allowed to return any value `>= cutoff` once the
    /// true squared distance is known to exceed `cutoff`.
    pub(crate) fn squared_bounded(&self, a: &[f64], b: &[f64], cutoff: f64) -> f64 {
        match *self {
            DistanceMeasure::Euclidean => squared_euclidean(a, b),
            DistanceMeasure::DtwConstrained { sakoe_chiba_radius } => {
                dtw_cost(a, b, sakoe_chiba_radius, cutoff)
            }
        }
    }
}

impl fmt::Display for DistanceMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<(), DistanceError> {
    if a.len() != b.len() {
        return Err(DistanceError::LengthMismatch(a.len(), b.len()));
    }
    Ok(())
}

#[inline]
pub(crate) fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn euclidean(a: &[f64], b: &[f64]) -> Result<f64, DistanceError> {
    check_lengths(a, b)?;
    Ok(squared_euclidean(a, b).sqrt())
}

/// DTW distance restricted to alignments with `|i - j| <= radius`.
///
/// Local cost is the squared difference; diagonal, horizontal and vertical
/// steps are unweighted; the result is the square root of the accumulated
/// cost along the cheapest admissible path.
pub fn dtw_constrained(a: &[f64], b: &[f64], radius: usize) -> Result<f64, DistanceError> {
    check_lengths(a, b)?;
    Ok(dtw_cost(a, b, radius, f64::INFINITY).sqrt())
}

/// Banded DTW accumulated cost with early abandoning: once every cell of a
/// row exceeds `cutoff` the (partial) row minimum is returned.
pub(crate) fn dtw_cost(a: &[f64], b: &[f64], radius: usize, cutoff: f64) -> f64 {
    let n = a.len();
    if n == 0 {
        return 0.0;
    }
    if radius == 0 {
        return squared_euclidean(a, b);
    }
    // Rolling band rows indexed by t = j - i + r, padded with an infinite
    // cell on each side. Diagonal predecessor is prev[t], vertical prev[t+1],
    // horizontal curr[t-1].
    let r = radius.min(n - 1);
    let w = 2 * r + 1;
    const STACK: usize = 64;
    let mut buf = [f64::INFINITY; 2 * STACK];
    let mut heap;
    let rows: &mut [f64] = if w + 2 <= STACK {
        &mut buf[..2 * (w + 2)]
    } else {
        heap = vec![f64::INFINITY; 2 * (w + 2)];
        &mut heap[..]
    };
    let (mut prev, mut curr) = rows.split_at_mut(w + 2);
    for i in 0..n {
        let ai = a[i];
        let mut row_min = f64::INFINITY;
        for t in 0..w {
            let v = match (i + t).checked_sub(r) {
                Some(j) if j < n => {
                    let d = ai - b[j];
                    let best = if i == 0 && j == 0 {
                        0.0
                    } else {
                        min3(prev[t + 1], prev[t + 2], curr[t])
                    };
                    d * d + best
                }
                _ => f64::INFINITY,
            };
            curr[t + 1] = v;
            if v < row_min {
                row_min = v;
            }
        }
        if row_min > cutoff {
            return row_min;
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[r + 1]
}

#[inline(always)]
fn min3(x: f64, y: f64, z: f64) -> f64 {
    let m = if y < x { y } else { x };
    if z < m {
        z
    } else {
        m
    }
}

/// Running min/max of `c` over a window of `radius` on each side.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Envelope {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Envelope {
    pub(crate) fn new(c: &[f64], radius: usize) -> Self {
        let n = c.len();
        let mut lower = Vec::with_capacity(n);
        let mut upper = Vec::with_capacity(n);
        for i in 0..n {
            let w = &c[i.saturating_sub(radius)..(i + radius + 1).min(n)];
            lower.push(w.iter().copied().fold(f64::INFINITY, f64::min));
            upper.push(w.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        }
        Envelope { lower, upper }
    }

    /// LB_Keogh: a lower bound on the banded DTW cost between `x` and the
    /// enveloped series. Stops summing once `cutoff` is exceeded.
    pub(crate) fn lower_bound(&self, x: &[f64], cutoff: f64) -> f64 {
        let mut sum = 0.0;
        for ((&v, &lo), &hi) in x.iter().zip(&self.lower).zip(&self.upper) {
            let d = if v > hi {
                v - hi
            } else if v < lo {
                lo - v
            } else {
                continue;
            };
            sum += d * d;
            if sum > cutoff {
                break;
            }
        }
        sum
    }
}

/// Cheapest banded warping path between `a` and `b` as `(i, j)` index pairs
/// from `(0, 0)` to `(n-1, n-1)`, together with its accumulated cost.
pub fn dtw_path(a: &[f64], b: &[f64], radius: usize) -> Result<(Vec<(usize, usize)>, f64), DistanceError> {
    check_lengths(a, b)?;
    Ok(dtw_path_unchecked(a, b, radius))
}

fn dtw_path_unchecked(a: &[f64], b: &[f64], radius: usize) -> (Vec<(usize, usize)>, f64) {
    let n = a.len();
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    let width = n;
    let mut acc = vec![f64::INFINITY; n * width];
    for i in 0..n {
        let lo = i.saturating_sub(radius);
        let hi = (i + radius).min(n - 1);
        for j in lo..=hi {
            let d = a[i] - b[j];
            let cost = d * d;
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let diag = if i > 0 && j > 0 { acc[(i - 1) * width + j - 1] } else { f64::INFINITY };
                let up = if i > 0 { acc[(i - 1) * width + j] } else { f64::INFINITY };
                let left = if j > 0 { acc[i * width + j - 1] } else { f64::INFINITY };
                diag.min(up).min(left)
            };
            acc[i * width + j] = cost + best;
        }
    }
    let total = acc[n * width - 1];
    let mut path = Vec::with_capacity(2 * n);
    let (mut i, mut j) = (n - 1, n - 1);
    path.push((i, j));
    while i > 0 || j > 0 {
        // Prefer the diagonal on ties, then vertical, then horizontal.
        let (ni, nj) = if i == 0 {
            (0, j - 1)
        } else if j == 0 {
            (i - 1, 0)
        } else {
            let diag = acc[(i - 1) * width + j - 1];
            let up = acc[(i - 1) * width + j];
            let left = acc[i * width + j - 1];
            if diag <= up && diag <= left {
                (i - 1, j - 1)
            } else if up <= left {
                (i - 1, j)
            } else {
                (i, j - 1)
            }
        };
        i = ni;
        j = nj;
        path.push((i, j));
    }
    path.reverse();
    (path, total)
}

/// Aligns `b` to `a` along the cheapest banded path and adds, for every path
/// cell `(i, j)`, `b[j]` to `sums[i]` and one to `counts[i]`. Returns the
/// accumulated cost. Same path choice as [`dtw_path`].
pub(crate) fn dtw_align_into(a: &[f64], b: &[f64], radius: usize, sums: &mut [f64], counts: &mut [usize]) -> f64 {
    let n = a.len();
    if n == 0 {
        return 0.0;
    }
    // Band rows indexed by t = j - i + r with an infinite border: one extra
    // row above and one padding cell on each side of every row.
    let r = radius.min(n - 1);
    let w = 2 * r + 1;
    let stride = w + 2;
    let len = (n + 1) * stride;
    const STACK: usize = 512;
    let mut stack = [f64::INFINITY; STACK];
    let mut heap;
    let acc: &mut [f64] = if len <= STACK {
        &mut stack[..len]
    } else {
        heap = vec![f64::INFINITY; len];
        &mut heap[..]
    };
    let at = |i: usize, t: usize| (i + 1) * stride + t + 1;
    for i in 0..n {
        let ai = a[i];
        for t in 0..w {
            let Some(j) = (i + t).checked_sub(r).filter(|&j| j < n) else {
                continue;
            };
            let c = at(i, t);
            let d = ai - b[j];
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                min3(acc[c - stride], acc[c - stride + 1], acc[c - 1])
            };
            acc[c] = d * d + best;
        }
    }
    // Prefer the diagonal on ties, then vertical, then horizontal, as in
    // `dtw_path`.
    let (mut i, mut t) = (n - 1, r);
    loop {
        let j = i + t - r;
        sums[i] += b[j];
        counts[i] += 1;
        if i == 0 && j == 0 {
            break;
        }
        let c = at(i, t);
        let diag = acc[c - stride];
        let up = acc[c - stride + 1];
        let left = acc[c - 1];
        if diag <= up && diag <= left {
            i -= 1;
        } else if up <= left {
            i -= 1;
            t += 1;
        } else {
            t -= 1;
        }
    }
    acc[at(n - 1, r)]
}

/// Symmetric pairwise distance matrix with zero diagonal, stored condensed.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    upper: Vec<f64>,
}

impl DistanceMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j);
        i * (2 * self.n - i - 1) / 2 + (j - i - 1)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => 0.0,
            std::cmp::Ordering::Less => self.upper[self.offset(i, j)],
            std::cmp::Ordering::Greater => self.upper[self.offset(j, i)],
        }
    }

    /// Build a matrix from a full square table. Rejects non-square input.
    pub fn from_square(rows: &[Vec<f64>]) -> Option<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return None;
        }
        let mut upper = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                upper.push(rows[i][j]);
            }
        }
        Some(DistanceMatrix { n, upper })
    }

    pub fn to_square(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j)).collect())
            .collect()
    }
}

/// Exact pairwise distances under `measure`. Rows are computed in parallel.
pub fn distance_matrix(
    profiles: &[Vec<f64>],
    measure: DistanceMeasure,
) -> Result<DistanceMatrix, DistanceError> {
    let n = profiles.len();
    if n == 0 {
        return Err(DistanceError::Empty);
    }
    let len = profiles[0].len();
    if let Some(p) = profiles.iter().find(|p| p.len() != len) {
        return Err(DistanceError::LengthMismatch(len, p.len()));
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| measure.distance_unchecked(&profiles[i], &profiles[j]))
                .collect()
        })
        .collect();
    let upper = rows.into_iter().flatten().collect();
    Ok(DistanceMatrix { n, upper })
}
