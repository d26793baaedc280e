use crate::distance::{DistanceMatrix, DistanceMeasure};

use super::{check_inputs, kmeanspp_indices, rng_for, Algorithm, ClusterError, ClusterModel};

/// Result of k-medoids on a distance matrix: medoid row indices and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MedoidFit {
    pub medoids: Vec<usize>,
    pub labels: Vec<usize>,
    pub total_distance: f64,
    pub iterations: usize,
}

/// Alternating (Voronoi iteration) k-medoids on a precomputed matrix.
///
/// Each point goes to its nearest medoid (ties to the lowest cluster index;
/// a medoid always keeps itself), then each medoid moves to the member with
/// the smallest total distance to its cluster. The incumbent medoid wins
/// ties, then the lowest row index.
pub fn kmedoids_on_matrix(matrix: &DistanceMatrix, k: usize, seed: u64, max_iter: usize) -> MedoidFit {
    let n = matrix.n();
    let mut rng = rng_for(seed, 0);
    let mut medoids = kmeanspp_indices(n, k, &mut rng, |i, j| {
        let d = matrix.get(i, j);
        d * d
    });
    let mut labels = assign(matrix, &medoids);
    let mut iterations = 0;
    for _ in 0..max_iter.max(1) {
        iterations += 1;
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
        for (i, &l) in labels.iter().enumerate() {
            members[l].push(i);
        }
        let mut changed = false;
        for (j, group) in members.iter().enumerate() {
            let cost = |c: usize| group.iter().map(|&i| matrix.get(c, i)).sum::<f64>();
            let mut best = medoids[j];
            let mut best_cost = cost(best);
            for &c in group {
                let cc = cost(c);
                if cc < best_cost {
                    best = c;
                    best_cost = cc;
                }
            }
            if best != medoids[j] {
                medoids[j] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        labels = assign(matrix, &medoids);
    }
    let total_distance = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| matrix.get(i, medoids[l]))
        .sum();
    MedoidFit {
        medoids,
        labels,
        total_distance,
        iterations,
    }
}

fn assign(matrix: &DistanceMatrix, medoids: &[usize]) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..matrix.n())
        .map(|i| {
            let mut best = (0, f64::INFINITY);
            for (j, &m) in medoids.iter().enumerate() {
                let d = matrix.get(i, m);
                if d < best.1 {
                    best = (j, d);
                }
            }
            best.0
        })
        .collect();
    for (j, &m) in medoids.iter().enumerate() {
        labels[m] = j;
    }
    labels
}

/// k-medoids over all `profiles` using their precomputed distance matrix.
pub fn kmedoids_fit(
    profiles: &[Vec<f64>],
    matrix: &DistanceMatrix,
    k: usize,
    measure: DistanceMeasure,
    seed: u64,
    max_iter: usize,
) -> Result<ClusterModel, ClusterError> {
    check_inputs(profiles, k)?;
    if matrix.n() != profiles.len() {
        return Err(ClusterError::MatrixSize {
            matrix: matrix.n(),
            expected: profiles.len(),
        });
    }
    let fit = kmedoids_on_matrix(matrix, k, seed, max_iter);
    Ok(ClusterModel {
        algorithm: Algorithm::Kmedoids,
        measure,
        k,
        centroids: fit.medoids.iter().map(|&m| profiles[m].clone()).collect(),
        labels: fit.labels,
        inertia: fit.total_distance,
        seed,
        linkage: None,
        inertia_history: Vec::new(),
        medoid_indices: fit.medoids,
        warnings: Vec::new(),
    })
}
