use serde::{Deserialize, Serialize};

/// Default prominence threshold for normalized daily profiles.
pub const DEFAULT_PROMINENCE: f64 = 0.2;

/// Hour-indexed peak indicators.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PeakVector {
    pub bits: Vec<bool>,
}

impl PeakVector {
    pub fn from_bits(bits: &[u8]) -> Self {
        PeakVector {
            bits: bits.iter().map(|&b| b != 0).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn has_peaks(&self) -> bool {
        self.bits.iter().any(|&b| b)
    }

    pub fn hours(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(h, &b)| b.then_some(h))
            .collect()
    }

    pub fn dot(&self, other: &PeakVector) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(&a, &b)| a && b)
            .count()
    }

    /// `out[k] = max(self[k - r..=k + r])`, clipped at the edges.
    pub fn dilate(&self, radius: usize) -> PeakVector {
        let n = self.bits.len();
        let bits = (0..n)
            .map(|k| {
                let lo = k.saturating_sub(radius);
                let hi = (k + radius).min(n.saturating_sub(1));
                self.bits[lo..=hi].iter().any(|&b| b)
            })
            .collect();
        PeakVector { bits }
    }
}

/// Local maxima whose prominence exceeds `threshold`.
///
/// A candidate is the leftmost hour of a maximal plateau that is strictly
/// higher than both neighbouring hours (one neighbour at the edges).
/// Prominence is the height above the lower of the two flanking local minima,
/// found by descending from the plateau on each side; a descent that runs
/// into the series edge stops there. Edge candidates only have one side.
pub fn detect_peaks(values: &[f64], threshold: f64) -> PeakVector {
    let n = values.len();
    let mut bits = vec![false; n];
    let mut i = 0;
    while i < n {
        let v = values[i];
        let mut j = i + 1;
        while j < n && values[j] == v {
            j += 1;
        }
        let left_lower = i == 0 || values[i - 1] < v;
        let right_lower = j == n || values[j] < v;
        if left_lower && right_lower && (i > 0 || j < n) {
            let left_min = (i > 0).then(|| {
                let mut k = i;
                while k > 0 && values[k - 1] <= values[k] {
                    k -= 1;
                }
                values[k]
            });
            let right_min = (j < n).then(|| {
                let mut k = j - 1;
                while k + 1 < n && values[k + 1] <= values[k] {
                    k += 1;
                }
                values[k]
            });
            let base = match (left_min, right_min) {
                (Some(l), Some(r)) => l.min(r),
                (Some(l), None) => l,
                (None, Some(r)) => r,
                (None, None) => v,
            };
            if v - base > threshold {
                bits[i] = true;
            }
        }
        i = j;
    }
    PeakVector { bits }
}
