//! Load-profile clustering: k-means (DBA centroids under DTW), k-medoids and
//! agglomerative clustering over a pairwise distance matrix.

mod agglomerative;
mod dba;
mod kmeans;
mod kmedoids;
mod large;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distance::{DistanceError, DistanceMeasure, Envelope};
use crate::preprocess::ProfileKey;

pub use agglomerative::{agglomerative_fit, cut_dendrogram, linkage, Dendrogram, Merge};
pub use dba::dba_barycenter;
pub use kmeans::{kmeans_fit, KMeansOptions};
pub use kmedoids::{kmedoids_fit, kmedoids_on_matrix, MedoidFit};
pub use large::{fit_model, FitSettings, MatrixCache, ModelSpec};

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("k must be in [1, {n}], got {k}")]
    InvalidK { k: usize, n: usize },
    #[error("no profiles to cluster")]
    NoProfiles,
    #[error("profiles have inconsistent lengths")]
    RaggedProfiles,
    #[error("distance matrix covers {matrix} profiles, expected {expected}")]
    MatrixSize { matrix: usize, expected: usize },
    #[error(transparent)]
    Distance(#[from] DistanceError),
    #[error("unsupported model document version {0}")]
    UnsupportedVersion(u32),
    #[error("model document is inconsistent: {0}")]
    InvalidDocument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Kmeans,
    Kmedoids,
    Agglomerative,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Kmeans, Algorithm::Kmedoids, Algorithm::Agglomerative];

    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Kmeans => "kmeans",
            Algorithm::Kmedoids => "kmedoids",
            Algorithm::Agglomerative => "agglomerative",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "").as_str() {
            "kmeans" => Ok(Algorithm::Kmeans),
            "kmedoids" => Ok(Algorithm::Kmedoids),
            "agglomerative" | "hierarchical" => Ok(Algorithm::Agglomerative),
            other => Err(format!("unknown algorithm `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linkage {
    Ward,
    Average,
    Complete,
}

impl Linkage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Linkage::Ward => "ward",
            Linkage::Average => "average",
            Linkage::Complete => "complete",
        }
    }
}

impl FromStr for Linkage {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ward" => Ok(Linkage::Ward),
            "average" => Ok(Linkage::Average),
            "complete" => Ok(Linkage::Complete),
            other => Err(format!("unknown linkage `{other}`")),
        }
    }
}

/// A fitted clustering of daily profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub algorithm: Algorithm,
    pub measure: DistanceMeasure,
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    /// Total within-cluster dissimilarity: squared distances for k-means and
    /// agglomerative, plain distances for k-medoids.
    pub inertia: f64,
    pub seed: u64,
    #[serde(default)]
    pub linkage: Option<Linkage>,
    /// Inertia after every Lloyd iteration of the winning k-means run.
    #[serde(default)]
    pub inertia_history: Vec<f64>,
    /// Profile indices of the medoids (k-medoids only).
    #[serde(default)]
    pub medoid_indices: Vec<usize>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl ClusterModel {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Index of the nearest centroid; ties go to the lowest index.
    pub fn predict(&self, profile: &[f64]) -> Result<usize, ClusterError> {
        if let Some(c) = self.centroids.first() {
            if c.len() != profile.len() {
                return Err(DistanceError::LengthMismatch(c.len(), profile.len()).into());
            }
        }
        Ok(nearest(self.measure, &self.centroids, profile).0)
    }
}

pub fn predict(model: &ClusterModel, profile: &[f64]) -> Result<usize, ClusterError> {
    model.predict(profile)
}

/// Nearest centroid and its squared distance, ties to the lowest index.
pub(crate) fn nearest(measure: DistanceMeasure, centroids: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = measure.squared_bounded(x, c, best.1);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Nearest-centroid search that skips DTW candidates whose LB_Keogh bound
/// already rules them out. Results match [`nearest`] exactly.
pub(crate) struct CentroidIndex<'a> {
    measure: DistanceMeasure,
    centroids: &'a [Vec<f64>],
    envelopes: Vec<Envelope>,
}

impl<'a> CentroidIndex<'a> {
    pub(crate) fn new(measure: DistanceMeasure, centroids: &'a [Vec<f64>]) -> Self {
        let envelopes = match measure {
            DistanceMeasure::DtwConstrained { sakoe_chiba_radius } if sakoe_chiba_radius > 0 => {
                centroids.iter().map(|c| Envelope::new(c, sakoe_chiba_radius)).collect()
            }
            _ => Vec::new(),
        };
        CentroidIndex {
            measure,
            centroids,
            envelopes,
        }
    }

    pub(crate) fn nearest(&self, x: &[f64]) -> (usize, f64) {
        if self.envelopes.is_empty() {
            return nearest(self.measure, self.centroids, x);
        }
        let mut order: Vec<(f64, usize)> = self
            .envelopes
            .iter()
            .enumerate()
            .map(|(j, e)| (e.lower_bound(x, f64::INFINITY), j))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut best = (usize::MAX, f64::INFINITY);
        for (lb, j) in order {
            // Small slack so rounding in the bound can never hide a tie.
            if lb > best.1 * (1.0 + 1e-9) + 1e-300 {
                break;
            }
            let d = self.measure.squared_bounded(x, &self.centroids[j], best.1);
            if d < best.1 || (d == best.1 && j < best.0) {
                best = (j, d);
            }
        }
        if best.0 == usize::MAX {
            best.0 = 0;
        }
        best
    }
}

pub(crate) fn assign_all(
    measure: DistanceMeasure,
    centroids: &[Vec<f64>],
    profiles: &[Vec<f64>],
) -> (Vec<usize>, Vec<f64>) {
    let index = CentroidIndex::new(measure, centroids);
    profiles.par_iter().map(|x| index.nearest(x)).unzip()
}

pub(crate) fn check_inputs(profiles: &[Vec<f64>], k: usize) -> Result<(), ClusterError> {
    if profiles.is_empty() {
        return Err(ClusterError::NoProfiles);
    }
    let len = profiles[0].len();
    if profiles.iter().any(|p| p.len() != len) {
        return Err(ClusterError::RaggedProfiles);
    }
    if k < 1 || k > profiles.len() {
        return Err(ClusterError::InvalidK { k, n: profiles.len() });
    }
    Ok(())
}

pub(crate) fn mean_of<'a>(members: impl IntoIterator<Item = &'a Vec<f64>>, len: usize) -> Vec<f64> {
    let mut sum = vec![0.0; len];
    let mut count = 0usize;
    for m in members {
        for (s, v) in sum.iter_mut().zip(m) {
            *s += v;
        }
        count += 1;
    }
    if count > 0 {
        for s in &mut sum {
            *s /= count as f64;
        }
    }
    sum
}

pub(crate) fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// k-means++ seeding: the first index uniformly, then proportionally to the
/// squared distance to the nearest already chosen index. Indices are distinct.
pub(crate) fn kmeanspp_indices(
    n: usize,
    k: usize,
    rng: &mut ChaCha8Rng,
    sq_dist: impl Fn(usize, usize) -> f64 + Sync,
) -> Vec<usize> {
    let mut chosen = Vec::with_capacity(k);
    let mut taken = vec![false; n];
    let first = rng.gen_range(0..n);
    chosen.push(first);
    taken[first] = true;
    let mut closest: Vec<f64> = (0..n).into_par_iter().map(|i| sq_dist(i, first)).collect();
    while chosen.len() < k {
        let weights: Vec<f64> = (0..n)
            .map(|i| if taken[i] { 0.0 } else { closest[i] })
            .collect();
        let total: f64 = weights.iter().sum();
        let next = if total > 0.0 && total.is_finite() {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = None;
            for (i, w) in weights.iter().enumerate() {
                if *w <= 0.0 {
                    continue;
                }
                if target < *w {
                    pick = Some(i);
                    break;
                }
                target -= w;
                pick = Some(i);
            }
            pick.expect("positive total weight")
        } else {
            let free: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
            *free.choose(rng).expect("k <= n")
        };
        chosen.push(next);
        taken[next] = true;
        let updated: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| closest[i].min(sq_dist(i, next)))
            .collect();
        closest = updated;
    }
    chosen
}

/// Renumber labels in order of first appearance.
pub(crate) fn relabel_by_appearance(labels: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut map: BTreeMap<usize, usize> = BTreeMap::new();
    let mut order = Vec::new();
    let relabeled = labels
        .iter()
        .map(|&l| {
            *map.entry(l).or_insert_with(|| {
                order.push(l);
                order.len() - 1
            })
        })
        .collect();
    (relabeled, order)
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub n_init: usize,
    pub max_iter: usize,
    pub dba_iters: usize,
    pub linkage: Option<Linkage>,
    pub matrix_limit: usize,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        let s = FitSettings::default();
        Hyperparameters {
            n_init: s.n_init,
            max_iter: s.max_iter,
            dba_iters: s.dba_iters,
            linkage: None,
            matrix_limit: s.matrix_limit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledProfile {
    pub meter_id: String,
    pub date: chrono::NaiveDate,
    pub cluster: usize,
}

/// Versioned JSON form of a fitted model with labels keyed by meter-day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub algorithm: Algorithm,
    pub measure: DistanceMeasure,
    pub k: usize,
    pub seed: u64,
    pub hyperparameters: Hyperparameters,
    pub inertia: f64,
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<LabeledProfile>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl ModelDocument {
    pub fn new(model: &ClusterModel, keys: &[ProfileKey], hyperparameters: Hyperparameters) -> Self {
        ModelDocument {
            format_version: MODEL_FORMAT_VERSION,
            algorithm: model.algorithm,
            measure: model.measure,
            k: model.k,
            seed: model.seed,
            hyperparameters: Hyperparameters {
                linkage: model.linkage,
                ..hyperparameters
            },
            inertia: model.inertia,
            centroids: model.centroids.clone(),
            labels: keys
                .iter()
                .zip(&model.labels)
                .map(|(key, &cluster)| LabeledProfile {
                    meter_id: key.meter_id.clone(),
                    date: key.date,
                    cluster,
                })
                .collect(),
            warnings: model.warnings.clone(),
        }
    }

    pub fn keys(&self) -> Vec<ProfileKey> {
        self.labels
            .iter()
            .map(|l| ProfileKey {
                meter_id: l.meter_id.clone(),
                date: l.date,
            })
            .collect()
    }

    pub fn to_model(&self) -> Result<ClusterModel, ClusterError> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(ClusterError::UnsupportedVersion(self.format_version));
        }
        if self.centroids.len() != self.k {
            return Err(ClusterError::InvalidDocument(format!(
                "{} centroids for k = {}",
                self.centroids.len(),
                self.k
            )));
        }
        if let Some(bad) = self.labels.iter().find(|l| l.cluster >= self.k) {
            return Err(ClusterError::InvalidDocument(format!(
                "label {} out of range for {} / {}",
                bad.cluster, bad.meter_id, bad.date
            )));
        }
        Ok(ClusterModel {
            algorithm: self.algorithm,
            measure: self.measure,
            k: self.k,
            centroids: self.centroids.clone(),
            labels: self.labels.iter().map(|l| l.cluster).collect(),
            inertia: self.inertia,
            seed: self.seed,
            linkage: self.hyperparameters.linkage,
            inertia_history: Vec::new(),
            medoid_indices: Vec::new(),
            warnings: self.warnings.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> ClusterModel {
        let mut c0 = vec![0.0; 24];
        c0[3] = 1.0;
        let mut c1 = vec![0.0; 24];
        c1[10] = 1.0;
        let mut c2 = vec![0.0; 24];
        c2[12] = 1.0;
        let mut c3 = vec![0.0; 24];
        c3[20] = 1.0;
        ClusterModel {
            algorithm: Algorithm::Kmeans,
            measure: DistanceMeasure::Euclidean,
            k: 4,
            centroids: vec![c0, c1, c2, c3.clone()],
            labels: vec![0, 1, 2, 3],
            inertia: 0.0,
            seed: 0,
            linkage: None,
            inertia_history: vec![],
            medoid_indices: vec![],
            warnings: vec![],
        }
    }

    #[test]
    fn predict_exact_and_ties() {
        let m = model();
        assert_eq!(m.predict(&m.centroids[3]).unwrap(), 3);
        // Half-way between centroids 1 and 2.
        let mut mid = vec![0.0; 24];
        mid[10] = 0.5;
        mid[12] = 0.5;
        assert_eq!(m.predict(&mid).unwrap(), 1);
        assert!(m.predict(&[0.0; 3]).is_err());
    }

    #[test]
    fn document_round_trip() {
        let m = model();
        let keys: Vec<ProfileKey> = (0..4)
            .map(|d| ProfileKey {
                meter_id: "A".into(),
                date: chrono::NaiveDate::from_ymd_opt(2020, 1, 1 + d).unwrap(),
            })
            .collect();
        let doc = ModelDocument::new(&m, &keys, Hyperparameters::default());
        let json = serde_json::to_string(&doc).unwrap();
        let back: ModelDocument = serde_json::from_str(&json).unwrap();
        assert_eq!(back, doc);
        let restored = back.to_model().unwrap();
        assert_eq!(restored.labels, m.labels);
        assert_eq!(restored.centroids, m.centroids);

        let mut bad = doc.clone();
        bad.format_version = 99;
        assert_eq!(bad.to_model(), Err(ClusterError::UnsupportedVersion(99)));
    }

    #[test]
    fn parse_names() {
        assert_eq!("k-means".parse::<Algorithm>().unwrap(), Algorithm::Kmeans);
        assert_eq!("KMedoids".parse::<Algorithm>().unwrap(), Algorithm::Kmedoids);
        assert!("som".parse::<Algorithm>().is_err());
        assert_eq!("ward".parse::<Linkage>().unwrap(), Linkage::Ward);
    }

    #[test]
    fn kmeanspp_distinct_with_duplicates() {
        let mut rng = rng_for(1, 0);
        let idx = kmeanspp_indices(5, 5, &mut rng, |_, _| 0.0);
        let mut sorted = idx.clone();
        sorted.sort();
        assert_eq!(sorted, vec![0, 1, 2, 3, 4]);
    }
}
