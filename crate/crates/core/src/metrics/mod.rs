//! Peak-based scores and cluster validity indices.

mod peaks;
mod validity;

pub use peaks::{detect_peaks, PeakVector, DEFAULT_PROMINENCE};
pub use validity::{adjusted_rand_index, davies_bouldin, silhouette};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{Algorithm, ClusterError, ClusterModel, MatrixCache};
use crate::distance::{DistanceError, DistanceMeasure};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("at least two clusters are required")]
    SingleCluster,
    #[error("expected {expected} labels, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("centroids {0} and {1} coincide while their clusters have nonzero scatter")]
    CoincidentCentroids(usize, usize),
    #[error(transparent)]
    Distance(#[from] DistanceError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

/// Per-sample peak match score.
pub fn pms_sample(sample: &PeakVector, centroid: &PeakVector) -> f64 {
    let ls = sample.count();
    match (ls, centroid.has_peaks()) {
        (0, false) => 1.0,
        (0, true) => 0.0,
        _ => sample.dot(centroid) as f64 / ls as f64,
    }
}

/// Per-sample peak performance score. With `relaxation > 0` a sample peak
/// also matches a centroid peak up to `relaxation` hours away; the
/// denominator always uses the undilated counts.
pub fn pps_sample(sample: &PeakVector, centroid: &PeakVector, relaxation: usize) -> f64 {
    let (ls, cs) = (sample.count(), centroid.count());
    if ls == 0 && cs == 0 {
        return 1.0;
    }
    let hits = if relaxation == 0 {
        sample.dot(centroid)
    } else {
        sample.dot(&centroid.dilate(relaxation))
    };
    hits as f64 / ls.max(cs) as f64
}

fn peaks_of(rows: &[Vec<f64>], threshold: f64) -> Vec<PeakVector> {
    rows.par_iter().map(|r| detect_peaks(r, threshold)).collect()
}

fn mean_score(
    labels: &[usize],
    sample_peaks: &[PeakVector],
    centroid_peaks: &[PeakVector],
    score: impl Fn(&PeakVector, &PeakVector) -> f64,
) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let total: f64 = labels
        .iter()
        .zip(sample_peaks)
        .map(|(&l, p)| score(p, &centroid_peaks[l]))
        .sum();
    total / labels.len() as f64
}

fn check_len(model: &ClusterModel, profiles: &[Vec<f64>]) -> Result<(), MetricError> {
    if model.labels.len() != profiles.len() {
        return Err(MetricError::LengthMismatch {
            expected: model.labels.len(),
            found: profiles.len(),
        });
    }
    Ok(())
}

/// Mean PMS of `profiles` against their assigned centroids.
pub fn pms(model: &ClusterModel, profiles: &[Vec<f64>], threshold: f64) -> Result<f64, MetricError> {
    check_len(model, profiles)?;
    let c = peaks_of(&model.centroids, threshold);
    Ok(mean_score(&model.labels, &peaks_of(profiles, threshold), &c, pms_sample))
}

/// Mean PPS of `profiles` against their assigned centroids.
pub fn pps(model: &ClusterModel, profiles: &[Vec<f64>], threshold: f64, relaxation: usize) -> Result<f64, MetricError> {
    check_len(model, profiles)?;
    let c = peaks_of(&model.centroids, threshold);
    Ok(mean_score(&model.labels, &peaks_of(profiles, threshold), &c, |l, c| {
        pps_sample(l, c, relaxation)
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub algorithm: Algorithm,
    pub measure: DistanceMeasure,
    pub k: usize,
    pub pms: f64,
    pub pps: f64,
    pub pps_relaxed: f64,
    pub silhouette: f64,
    pub silhouette_dtw: f64,
    pub davies_bouldin: f64,
}

/// Evaluates many models over one profile set, sharing the distance
/// matrices of a [`MatrixCache`] and the profile peak vectors.
pub struct Evaluator<'c, 'a> {
    cache: &'c MatrixCache<'a>,
    profile_peaks: Vec<PeakVector>,
    threshold: f64,
    dtw: DistanceMeasure,
}

impl<'c, 'a> Evaluator<'c, 'a> {
    pub fn new(cache: &'c MatrixCache<'a>, threshold: f64, dtw: DistanceMeasure) -> Self {
        Evaluator {
            cache,
            profile_peaks: peaks_of(cache.profiles(), threshold),
            threshold,
            dtw,
        }
    }

    pub fn profile_peaks(&self) -> &[PeakVector] {
        &self.profile_peaks
    }

    /// All metrics for `model`. Silhouettes are computed over the cache's
    /// matrix rows, which are a seeded sample for large profile sets.
    pub fn evaluate(&self, model: &ClusterModel) -> Result<EvaluationReport, MetricError> {
        let profiles = self.cache.profiles();
        check_len(model, profiles)?;
        let c = peaks_of(&model.centroids, self.threshold);
        let pms = mean_score(&model.labels, &self.profile_peaks, &c, pms_sample);
        let pps = mean_score(&model.labels, &self.profile_peaks, &c, |l, c| pps_sample(l, c, 0));
        let pps_relaxed = mean_score(&model.labels, &self.profile_peaks, &c, |l, c| pps_sample(l, c, 1));
        let sample_labels: Vec<usize> = self.cache.sample().iter().map(|&i| model.labels[i]).collect();
        let euclid = self.cache.matrix(DistanceMeasure::Euclidean)?;
        let sil = silhouette(&euclid, &sample_labels)?;
        let dtw = self.cache.matrix(self.dtw)?;
        let sil_dtw = silhouette(&dtw, &sample_labels)?;
        let davies_bouldin = davies_bouldin(profiles, model)?;
        Ok(EvaluationReport {
            algorithm: model.algorithm,
            measure: model.measure,
            k: model.k,
            pms,
            pps,
            pps_relaxed,
            silhouette: sil,
            silhouette_dtw: sil_dtw,
            davies_bouldin,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(bits: &[u8]) -> PeakVector {
        PeakVector::from_bits(bits)
    }

    #[test]
    fn worked_example() {
        let l = pv(&[0, 0, 0, 1, 0]);
        let c = pv(&[0, 1, 0, 1, 0]);
        assert_eq!(pms_sample(&l, &c), 1.0);
        assert_eq!(pps_sample(&l, &c, 0), 0.5);
    }

    #[test]
    fn empty_vectors() {
        let z = pv(&[0, 0, 0]);
        let one = pv(&[0, 1, 0]);
        assert_eq!(pms_sample(&z, &z), 1.0);
        assert_eq!(pps_sample(&z, &z, 1), 1.0);
        assert_eq!(pms_sample(&z, &one), 0.0);
        assert_eq!(pps_sample(&z, &one, 0), 0.0);
        assert_eq!(pps_sample(&one, &z, 1), 0.0);
    }

    #[test]
    fn partial_match() {
        assert_eq!(pms_sample(&pv(&[1, 0, 1, 0, 0]), &pv(&[1, 0, 0, 0, 0])), 0.5);
    }

    #[test]
    fn relaxation_by_one_hour() {
        let mut l = [0u8; 24];
        let mut c = [0u8; 24];
        l[13] = 1;
        c[14] = 1;
        assert_eq!(pps_sample(&pv(&l), &pv(&c), 1), 1.0);
        assert_eq!(pps_sample(&pv(&l), &pv(&c), 0), 0.0);
    }

    #[test]
    fn identical_vectors_score_one() {
        let l = pv(&[0, 1, 0, 0, 1, 0]);
        assert_eq!(pps_sample(&l, &l, 0), 1.0);
    }
}
