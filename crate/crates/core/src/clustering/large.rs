//! Model fitting over a shared set of distance matrices.
//!
//! Matrix-based algorithms (k-medoids, agglomerative) and the silhouette
//! scores need an n x n matrix. Above `matrix_limit` profiles the matrix is
//! built on a seeded uniform sample; the matrix-based fit runs on the sample
//! and the remaining profiles join their nearest centroid.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distance::{distance_matrix, DistanceMatrix, DistanceMeasure};

use super::agglomerative::{cut_dendrogram, linkage, model_from_labels, ward_warning, Dendrogram};
use super::kmedoids::kmedoids_on_matrix;
use super::{check_inputs, kmeans_fit, mean_of, CentroidIndex, rng_for, Algorithm, ClusterError, ClusterModel, KMeansOptions, Linkage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    pub algorithm: Algorithm,
    pub measure: DistanceMeasure,
    pub k: usize,
    pub linkage: Linkage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    pub seed: u64,
    pub n_init: usize,
    pub max_iter: usize,
    pub dba_iters: usize,
    pub matrix_limit: usize,
}

impl Default for FitSettings {
    fn default() -> Self {
        FitSettings {
            seed: 0,
            n_init: 5,
            max_iter: 100,
            dba_iters: 10,
            matrix_limit: 3000,
        }
    }
}

/// Distance matrices and dendrograms computed at most once per measure.
pub struct MatrixCache<'a> {
    profiles: &'a [Vec<f64>],
    sample: Vec<usize>,
    sample_profiles: Vec<Vec<f64>>,
    matrices: Mutex<HashMap<DistanceMeasure, Arc<DistanceMatrix>>>,
    computations: Mutex<HashMap<DistanceMeasure, usize>>,
    dendrograms: Mutex<HashMap<(DistanceMeasure, Linkage), Arc<Dendrogram>>>,
}

impl<'a> MatrixCache<'a> {
    pub fn new(profiles: &'a [Vec<f64>], matrix_limit: usize, seed: u64) -> Self {
        let n = profiles.len();
        let sample: Vec<usize> = if n <= matrix_limit.max(2) {
            (0..n).collect()
        } else {
            let mut idx: Vec<usize> = (0..n).collect();
            let mut rng = rng_for(seed, u64::MAX);
            idx.shuffle(&mut rng);
            idx.truncate(matrix_limit.max(2));
            idx.sort_unstable();
            idx
        };
        let sample_profiles = sample.iter().map(|&i| profiles[i].clone()).collect();
        MatrixCache {
            profiles,
            sample,
            sample_profiles,
            matrices: Mutex::new(HashMap::new()),
            computations: Mutex::new(HashMap::new()),
            dendrograms: Mutex::new(HashMap::new()),
        }
    }

    pub fn profiles(&self) -> &'a [Vec<f64>] {
        self.profiles
    }

    /// Profile indices covered by the matrices, ascending.
    pub fn sample(&self) -> &[usize] {
        &self.sample
    }

    pub fn is_sampled(&self) -> bool {
        self.sample.len() < self.profiles.len()
    }

    pub fn matrix(&self, measure: DistanceMeasure) -> Result<Arc<DistanceMatrix>, ClusterError> {
        let mut guard = self.matrices.lock().expect("matrix cache poisoned");
        if let Some(m) = guard.get(&measure) {
            return Ok(Arc::clone(m));
        }
        let m = Arc::new(distance_matrix(&self.sample_profiles, measure)?);
        *self
            .computations
            .lock()
            .expect("matrix cache poisoned")
            .entry(measure)
            .or_insert(0) += 1;
        guard.insert(measure, Arc::clone(&m));
        Ok(m)
    }

    /// Number of times the matrix for `measure` has been built.
    pub fn computations(&self, measure: DistanceMeasure) -> usize {
        self.computations
            .lock()
            .expect("matrix cache poisoned")
            .get(&measure)
            .copied()
            .unwrap_or(0)
    }

    pub fn dendrogram(&self, measure: DistanceMeasure, method: Linkage) -> Result<Arc<Dendrogram>, ClusterError> {
        let matrix = self.matrix(measure)?;
        let mut guard = self.dendrograms.lock().expect("dendrogram cache poisoned");
        Ok(Arc::clone(
            guard
                .entry((measure, method))
                .or_insert_with(|| Arc::new(linkage(&matrix, method))),
        ))
    }
}

/// Fit one configuration, reusing the cache's matrices.
pub fn fit_model(cache: &MatrixCache<'_>, spec: &ModelSpec, settings: &FitSettings) -> Result<ClusterModel, ClusterError> {
    let profiles = cache.profiles();
    check_inputs(profiles, spec.k)?;
    let sampled = cache.is_sampled();
    let m = cache.sample().len();
    if spec.algorithm != Algorithm::Kmeans && spec.k > m {
        return Err(ClusterError::InvalidK { k: spec.k, n: m });
    }
    let note = sampled.then(|| format!("matrix-based fit on a seeded sample of {m} of {} profiles", profiles.len()));
    let mut model = match spec.algorithm {
        Algorithm::Kmeans => kmeans_fit(
            profiles,
            &KMeansOptions {
                k: spec.k,
                measure: spec.measure,
                seed: settings.seed,
                max_iter: settings.max_iter,
                n_init: settings.n_init,
                dba_iters: settings.dba_iters,
            },
        )?,
        Algorithm::Kmedoids => {
            let matrix = cache.matrix(spec.measure)?;
            let fit = kmedoids_on_matrix(&matrix, spec.k, settings.seed, settings.max_iter);
            let medoids: Vec<usize> = fit.medoids.iter().map(|&s| cache.sample()[s]).collect();
            let centroids: Vec<Vec<f64>> = medoids.iter().map(|&i| profiles[i].clone()).collect();
            let labels = extend_labels(cache, &fit.labels, &centroids, spec.measure);
            let inertia = labels
                .par_iter()
                .zip(profiles)
                .map(|(&l, p)| spec.measure.distance_unchecked(p, &centroids[l]))
                .collect::<Vec<f64>>()
                .iter()
                .sum();
            ClusterModel {
                algorithm: Algorithm::Kmedoids,
                measure: spec.measure,
                k: spec.k,
                centroids,
                labels,
                inertia,
                seed: settings.seed,
                linkage: None,
                inertia_history: Vec::new(),
                medoid_indices: medoids,
                warnings: Vec::new(),
            }
        }
        Algorithm::Agglomerative => {
            let dendrogram = cache.dendrogram(spec.measure, spec.linkage)?;
            let sample_labels = cut_dendrogram(&dendrogram, spec.k);
            if !sampled {
                model_from_labels(profiles, sample_labels, spec.k, spec.measure, spec.linkage)
            } else {
                let len = profiles[0].len();
                let centroids: Vec<Vec<f64>> = (0..spec.k)
                    .map(|j| {
                        mean_of(
                            cache
                                .sample()
                                .iter()
                                .zip(&sample_labels)
                                .filter(|(_, &l)| l == j)
                                .map(|(&i, _)| &profiles[i]),
                            len,
                        )
                    })
                    .collect();
                let labels = extend_labels(cache, &sample_labels, &centroids, spec.measure);
                let inertia = labels
                    .par_iter()
                    .zip(profiles)
                    .map(|(&l, p)| spec.measure.squared_unchecked(p, &centroids[l]))
                    .collect::<Vec<f64>>()
                    .iter()
                    .sum();
                ClusterModel {
                    algorithm: Algorithm::Agglomerative,
                    measure: spec.measure,
                    k: spec.k,
                    centroids,
                    labels,
                    inertia,
                    seed: settings.seed,
                    linkage: Some(spec.linkage),
                    inertia_history: Vec::new(),
                    medoid_indices: Vec::new(),
                    warnings: ward_warning(spec.measure, spec.linkage).into_iter().collect(),
                }
            }
        }
    };
    if spec.algorithm != Algorithm::Kmeans {
        model.warnings.extend(note);
    }
    model.seed = settings.seed;
    Ok(model)
}

/// Sample members keep their fitted labels; everything else goes to the
/// nearest centroid.
fn extend_labels(
    cache: &MatrixCache<'_>,
    sample_labels: &[usize],
    centroids: &[Vec<f64>],
    measure: DistanceMeasure,
) -> Vec<usize> {
    let profiles = cache.profiles();
    let sample = cache.sample();
    let mut labels: Vec<usize> = if cache.is_sampled() {
        let index = CentroidIndex::new(measure, centroids);
        profiles.par_iter().map(|p| index.nearest(p).0).collect()
    } else {
        vec![0; profiles.len()]
    };
    for (&i, &l) in sample.iter().zip(sample_labels) {
        labels[i] = l;
    }
    labels
}
