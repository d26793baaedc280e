use rayon::prelude::*;

use crate::distance::DistanceMeasure;

use super::dba::refine;
use super::{assign_all, check_inputs, kmeanspp_indices, mean_of, rng_for, Algorithm, ClusterError, ClusterModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansOptions {
    pub k: usize,
    pub measure: DistanceMeasure,
    pub seed: u64,
    pub max_iter: usize,
    pub n_init: usize,
    pub dba_iters: usize,
}

impl KMeansOptions {
    pub fn new(k: usize, measure: DistanceMeasure, seed: u64) -> Self {
        KMeansOptions {
            k,
            measure,
            seed,
            max_iter: 100,
            n_init: 5,
            dba_iters: 10,
        }
    }
}

struct Run {
    centroids: Vec<Vec<f64>>,
    labels: Vec<usize>,
    inertia: f64,
    history: Vec<f64>,
}

/// Lloyd iteration under `measure`, best of `n_init` k-means++ starts.
///
/// Centroids are arithmetic means under Euclidean distance and DBA
/// barycenters under banded DTW. Iteration stops at a label fixpoint or after
/// `max_iter` updates.
pub fn kmeans_fit(profiles: &[Vec<f64>], opts: &KMeansOptions) -> Result<ClusterModel, ClusterError> {
    check_inputs(profiles, opts.k)?;
    let mut best: Option<Run> = None;
    for init in 0..opts.n_init.max(1) {
        let run = single_run(profiles, opts, init as u64);
        if best.as_ref().map_or(true, |b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one init");
    Ok(ClusterModel {
        algorithm: Algorithm::Kmeans,
        measure: opts.measure,
        k: opts.k,
        centroids: best.centroids,
        labels: best.labels,
        inertia: best.inertia,
        seed: opts.seed,
        linkage: None,
        inertia_history: best.history,
        medoid_indices: Vec::new(),
        warnings: Vec::new(),
    })
}

fn single_run(profiles: &[Vec<f64>], opts: &KMeansOptions, stream: u64) -> Run {
    let measure = opts.measure;
    let k = opts.k;
    let len = profiles[0].len();
    let mut rng = rng_for(opts.seed, stream);
    let seeds = kmeanspp_indices(profiles.len(), k, &mut rng, |i, j| {
        measure.squared_unchecked(&profiles[i], &profiles[j])
    });
    let mut centroids: Vec<Vec<f64>> = seeds.iter().map(|&i| profiles[i].clone()).collect();
    let (mut labels, mut dists) = assign_all(measure, &centroids, profiles);
    repair_empty(k, &mut labels, &mut dists, &mut centroids, profiles);

    let mut history = Vec::new();
    for _ in 0..opts.max_iter.max(1) {
        let (updated, cost) = update_centroids(profiles, &labels, &centroids, opts, len);
        centroids = updated;
        history.push(cost.unwrap_or_else(|| inertia(measure, &centroids, profiles, &labels)));
        let (mut new_labels, mut new_dists) = assign_all(measure, &centroids, profiles);
        let repaired = repair_empty(k, &mut new_labels, &mut new_dists, &mut centroids, profiles);
        let converged = !repaired && new_labels == labels;
        labels = new_labels;
        if converged {
            break;
        }
    }
    let inertia = inertia(measure, &centroids, profiles, &labels);
    Run {
        centroids,
        labels,
        inertia,
        history,
    }
}

fn update_centroids(
    profiles: &[Vec<f64>],
    labels: &[usize],
    current: &[Vec<f64>],
    opts: &KMeansOptions,
    len: usize,
) -> (Vec<Vec<f64>>, Option<f64>) {
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); opts.k];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    // Under DTW the barycenter search already yields each cluster's cost.
    let updated: Vec<(Vec<f64>, f64)> = members
        .par_iter()
        .enumerate()
        .map(|(j, idx)| {
            if idx.is_empty() {
                return (current[j].clone(), 0.0);
            }
            match opts.measure {
                DistanceMeasure::Euclidean => (mean_of(idx.iter().map(|&i| &profiles[i]), len), 0.0),
                DistanceMeasure::DtwConstrained { sakoe_chiba_radius } => {
                    let iter = idx.iter().map(|&i| profiles[i].as_slice());
                    refine(iter, sakoe_chiba_radius, opts.dba_iters, &current[j])
                }
            }
        })
        .collect();
    let cost = opts.measure.is_dtw().then(|| updated.iter().map(|u| u.1).sum());
    (updated.into_iter().map(|u| u.0).collect(), cost)
}

/// Reseed each empty cluster with the profile farthest from its centroid.
fn repair_empty(
    k: usize,
    labels: &mut [usize],
    dists: &mut [f64],
    centroids: &mut [Vec<f64>],
    profiles: &[Vec<f64>],
) -> bool {
    let mut sizes = vec![0usize; k];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    let mut repaired = false;
    for j in 0..k {
        if sizes[j] > 0 {
            continue;
        }
        let far = (0..labels.len())
            .filter(|&i| sizes[labels[i]] > 1)
            .fold(None::<(usize, f64)>, |acc, i| match acc {
                Some((_, d)) if d >= dists[i] => acc,
                _ => Some((i, dists[i])),
            });
        let Some((i, _)) = far else { continue };
        sizes[labels[i]] -= 1;
        sizes[j] = 1;
        labels[i] = j;
        dists[i] = 0.0;
        centroids[j] = profiles[i].clone();
        repaired = true;
    }
    repaired
}

fn inertia(measure: DistanceMeasure, centroids: &[Vec<f64>], profiles: &[Vec<f64>], labels: &[usize]) -> f64 {
    let parts: Vec<f64> = profiles
        .par_iter()
        .zip(labels)
        .map(|(x, &l)| measure.squared_unchecked(x, &centroids[l]))
        .collect();
    parts.iter().sum()
}
