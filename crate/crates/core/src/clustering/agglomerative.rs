use crate::distance::{DistanceMatrix, DistanceMeasure};

use super::{check_inputs, mean_of, relabel_by_appearance, Algorithm, ClusterError, ClusterModel, Linkage};

/// One merge step. Clusters are identified by their smallest member index;
/// `a < b` and the merged cluster keeps id `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    /// Linkage distance at the merge (square root of the Lance-Williams
    /// value for ward, which runs on squared distances).
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    pub n: usize,
    pub linkage: Linkage,
    pub merges: Vec<Merge>,
}

/// Condensed, mutable working copy of the matrix.
struct Working {
    n: usize,
    d: Vec<f64>,
}

impl Working {
    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        i * (2 * self.n - i - 1) / 2 + (j - i - 1)
    }
    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.d[self.idx(i, j)]
    }
    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.d[k] = v;
    }
}

/// Bottom-up merging with Lance-Williams updates until one cluster remains.
///
/// At every step the globally closest pair is merged; ties go to the lowest
/// `(a, b)` pair. A nearest-neighbour cache per row keeps this O(n^2) in
/// practice for the (reducible) ward, average and complete linkages.
pub fn linkage(matrix: &DistanceMatrix, method: Linkage) -> Dendrogram {
    let n = matrix.n();
    let mut w = Working {
        n,
        d: Vec::with_capacity(n * n.saturating_sub(1) / 2),
    };
    for i in 0..n {
        for j in i + 1..n {
            let v = matrix.get(i, j);
            w.d.push(if method == Linkage::Ward { v * v } else { v });
        }
    }
    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    let mut nn = vec![usize::MAX; n];
    let mut nnd = vec![f64::INFINITY; n];

    let recompute = |i: usize, w: &Working, active: &[bool], nn: &mut [usize], nnd: &mut [f64]| {
        let mut best = (usize::MAX, f64::INFINITY);
        for j in i + 1..w.n {
            if active[j] {
                let v = w.get(i, j);
                if v < best.1 || best.0 == usize::MAX {
                    best = (j, v);
                }
            }
        }
        nn[i] = best.0;
        nnd[i] = best.1;
    };
    for i in 0..n {
        recompute(i, &w, &active, &mut nn, &mut nnd);
    }

    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for _ in 1..n {
        let mut a = usize::MAX;
        for i in 0..n {
            if active[i] && nn[i] != usize::MAX && (a == usize::MAX || nnd[i] < nnd[a]) {
                a = i;
            }
        }
        let b = nn[a];
        let dab = nnd[a];
        let (na, nb) = (size[a], size[b]);
        for k in 0..n {
            if !active[k] || k == a || k == b {
                continue;
            }
            let (dak, dbk) = (w.get(a, k), w.get(b, k));
            let nk = size[k] as f64;
            let v = match method {
                Linkage::Complete => dak.max(dbk),
                Linkage::Average => (na as f64 * dak + nb as f64 * dbk) / (na + nb) as f64,
                Linkage::Ward => {
                    ((na as f64 + nk) * dak + (nb as f64 + nk) * dbk - nk * dab)
                        / (na as f64 + nb as f64 + nk)
                }
            };
            w.set(a, k, v);
        }
        active[b] = false;
        size[a] = na + nb;
        merges.push(Merge {
            a,
            b,
            height: if method == Linkage::Ward { dab.max(0.0).sqrt() } else { dab },
            size: na + nb,
        });

        for i in 0..n {
            if !active[i] {
                continue;
            }
            if i < a {
                if nn[i] == a || nn[i] == b {
                    recompute(i, &w, &active, &mut nn, &mut nnd);
                } else {
                    let v = w.get(i, a);
                    if v < nnd[i] || (v == nnd[i] && a < nn[i]) {
                        nn[i] = a;
                        nnd[i] = v;
                    }
                }
            } else if i == a || (i < b && nn[i] == b) {
                recompute(i, &w, &active, &mut nn, &mut nnd);
            } else if i > b {
                break;
            }
        }
    }
    Dendrogram {
        n,
        linkage: method,
        merges,
    }
}

/// Flat labels after applying the first `n - k` merges, numbered by first
/// appearance.
pub fn cut_dendrogram(dendrogram: &Dendrogram, k: usize) -> Vec<usize> {
    let n = dendrogram.n;
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for m in dendrogram.merges.iter().take(n.saturating_sub(k)) {
        let ra = find(&mut parent, m.a);
        let rb = find(&mut parent, m.b);
        parent[rb] = ra;
    }
    let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    relabel_by_appearance(&roots).0
}

pub(crate) fn model_from_labels(
    profiles: &[Vec<f64>],
    labels: Vec<usize>,
    k: usize,
    measure: DistanceMeasure,
    method: Linkage,
) -> ClusterModel {
    let len = profiles[0].len();
    let centroids: Vec<Vec<f64>> = (0..k)
        .map(|j| mean_of(labels.iter().zip(profiles).filter(|(&l, _)| l == j).map(|(_, p)| p), len))
        .collect();
    let inertia = labels
        .iter()
        .zip(profiles)
        .map(|(&l, p)| measure.squared_unchecked(p, &centroids[l]))
        .sum();
    ClusterModel {
        algorithm: Algorithm::Agglomerative,
        measure,
        k,
        centroids,
        labels,
        inertia,
        seed: 0,
        linkage: Some(method),
        inertia_history: Vec::new(),
        medoid_indices: Vec::new(),
        warnings: ward_warning(measure, method).into_iter().collect(),
    }
}

pub(crate) fn ward_warning(measure: DistanceMeasure, method: Linkage) -> Option<String> {
    (method == Linkage::Ward && measure.is_dtw()).then(|| {
        "ward linkage on DTW dissimilarities is heuristic: its variance interpretation assumes Euclidean geometry"
            .to_string()
    })
}

/// Agglomerative clustering of `profiles` cut at `k` clusters. Centroids are
/// member means, reported for evaluation only.
pub fn agglomerative_fit(
    profiles: &[Vec<f64>],
    matrix: &DistanceMatrix,
    k: usize,
    measure: DistanceMeasure,
    method: Linkage,
) -> Result<ClusterModel, ClusterError> {
    check_inputs(profiles, k)?;
    if matrix.n() != profiles.len() {
        return Err(ClusterError::MatrixSize {
            matrix: matrix.n(),
            expected: profiles.len(),
        });
    }
    let dendrogram = linkage(matrix, method);
    let labels = cut_dendrogram(&dendrogram, k);
    Ok(model_from_labels(profiles, labels, k, measure, method))
}
