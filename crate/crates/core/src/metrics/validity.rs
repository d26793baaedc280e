use std::collections::HashMap;

use crate::clustering::ClusterModel;
use crate::distance::DistanceMatrix;

use super::MetricError;

fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = HashMap::new();
    let out = labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect();
    (out, map.len())
}

/// Mean silhouette width over the supplied matrix. Samples in singleton
/// clusters score 0, as do samples with `a = b = 0`.
pub fn silhouette(matrix: &DistanceMatrix, labels: &[usize]) -> Result<f64, MetricError> {
    let n = matrix.n();
    if labels.len() != n {
        return Err(MetricError::LengthMismatch {
            expected: n,
            found: labels.len(),
        });
    }
    let (labels, k) = compact(labels);
    if k < 2 {
        return Err(MetricError::SingleCluster);
    }
    let mut sizes = vec![0usize; k];
    for &l in &labels {
        sizes[l] += 1;
    }
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if j != i {
                sums[labels[j]] += matrix.get(i, j);
            }
        }
        let own = labels[i];
        if sizes[own] <= 1 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

/// Davies-Bouldin index with scatter = mean member-to-centroid distance and
/// separation = centroid-to-centroid distance, both under the model's measure.
pub fn davies_bouldin(profiles: &[Vec<f64>], model: &ClusterModel) -> Result<f64, MetricError> {
    let k = model.k;
    if k < 2 {
        return Err(MetricError::SingleCluster);
    }
    if profiles.len() != model.labels.len() {
        return Err(MetricError::LengthMismatch {
            expected: model.labels.len(),
            found: profiles.len(),
        });
    }
    let mut scatter = vec![0.0; k];
    let mut sizes = vec![0usize; k];
    for (p, &l) in profiles.iter().zip(&model.labels) {
        scatter[l] += model.measure.distance(p, &model.centroids[l])?;
        sizes[l] += 1;
    }
    for (s, &n) in scatter.iter_mut().zip(&sizes) {
        if n > 0 {
            *s /= n as f64;
        }
    }
    let mut total = 0.0;
    for i in 0..k {
        let mut worst: f64 = 0.0;
        for j in 0..k {
            if i == j {
                continue;
            }
            let sep = model.measure.distance(&model.centroids[i], &model.centroids[j])?;
            let spread = scatter[i] + scatter[j];
            let r = if sep > 0.0 {
                spread / sep
            } else if spread == 0.0 {
                0.0
            } else {
                return Err(MetricError::CoincidentCentroids(i.min(j), i.max(j)));
            };
            worst = worst.max(r);
        }
        total += worst;
    }
    Ok(total / k as f64)
}

/// Adjusted Rand index between two labelings.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    let n = a.len();
    let (a, ka) = compact(a);
    let (b, kb) = compact(b);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(&b) {
        table[x][y] += 1;
    }
    let c2 = |x: u64| (x * x.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.iter().flatten().map(|&v| c2(v)).sum();
    let rows: f64 = table.iter().map(|r| c2(r.iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| c2(table.iter().map(|r| r[j]).sum())).sum();
    let total = c2(n as u64);
    if total == 0.0 {
        return 1.0;
    }
    let expected = rows * cols / total;
    let max = (rows + cols) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}
