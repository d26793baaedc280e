use std::cmp::Ordering;

use log::warn;
use serde::{Deserialize, Serialize};

use super::{ExperimentError, ExperimentLog, ExperimentRow};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionCriteria {
    pub min_k: usize,
    /// Rows within this fraction of the top of both metric ranges are kept
    /// alongside the Pareto front.
    pub top_fraction: f64,
}

impl Default for SelectionCriteria {
    fn default() -> Self {
        SelectionCriteria {
            min_k: 10,
            top_fraction: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub run_id: String,
    /// Run ids considered, sorted.
    pub candidates: Vec<String>,
    pub warnings: Vec<String>,
}

fn point(row: &ExperimentRow) -> Option<(f64, f64)> {
    let r = row.report.as_ref()?;
    (r.pps_relaxed.is_finite() && r.silhouette_dtw.is_finite()).then_some((r.pps_relaxed, r.silhouette_dtw))
}

/// Indices of rows not dominated on (relaxed PPS, silhouette-DTW).
pub fn pareto_front(points: &[(f64, f64)]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| {
            let (a, b) = points[i];
            !points.iter().any(|&(x, y)| x >= a && y >= b && (x > a || y > b))
        })
        .collect()
}

/// Picks the run with the highest relaxed PPS among the Pareto front and the
/// rows near the top of both metrics, restricted to `k >= min_k`. Ties go to
/// the higher silhouette-DTW, then the smaller k, then the run id.
pub fn select_best(log: &ExperimentLog, criteria: &SelectionCriteria) -> Result<Selection, ExperimentError> {
    let rows: Vec<(&ExperimentRow, (f64, f64))> = log.rows.iter().filter_map(|r| point(r).map(|p| (r, p))).collect();
    if rows.is_empty() {
        return Err(ExperimentError::EmptyLog);
    }
    let points: Vec<(f64, f64)> = rows.iter().map(|r| r.1).collect();
    let mut keep = vec![false; rows.len()];
    for i in pareto_front(&points) {
        keep[i] = true;
    }
    let range = |f: fn(&(f64, f64)) -> f64| {
        let lo = points.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    };
    let (p_lo, p_hi) = range(|p| p.0);
    let (s_lo, s_hi) = range(|p| p.1);
    let frac = criteria.top_fraction;
    for (i, &(p, s)) in points.iter().enumerate() {
        if p >= p_hi - frac * (p_hi - p_lo) && s >= s_hi - frac * (s_hi - s_lo) {
            keep[i] = true;
        }
    }
    let mut candidates: Vec<&(&ExperimentRow, (f64, f64))> = rows.iter().zip(&keep).filter(|(_, &k)| k).map(|(r, _)| r).collect();
    let mut warnings = Vec::new();
    if candidates.iter().all(|(r, _)| r.k < criteria.min_k) {
        let msg = format!("no candidate has k >= {}; ignoring the minimum", criteria.min_k);
        warn!("{msg}");
        warnings.push(msg);
    } else {
        candidates.retain(|(r, _)| r.k >= criteria.min_k);
    }
    let better = |a: &(&ExperimentRow, (f64, f64)), b: &(&ExperimentRow, (f64, f64))| -> Ordering {
        b.1 .0
            .total_cmp(&a.1 .0)
            .then(b.1 .1.total_cmp(&a.1 .1))
            .then(a.0.k.cmp(&b.0.k))
            .then(a.0.run_id.cmp(&b.0.run_id))
    };
    candidates.sort_by(|a, b| better(a, b));
    let mut ids: Vec<String> = candidates.iter().map(|(r, _)| r.run_id.clone()).collect();
    let run_id = ids[0].clone();
    ids.sort();
    Ok(Selection {
        run_id,
        candidates: ids,
        warnings,
    })
}
