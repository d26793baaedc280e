use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::clustering::ClusterModel;
use crate::dr_engine::DrRecommendation;
use crate::entropy::{
    discretize_entropy, membership_distributions, meter_entropy, profile_cluster_entropy, prosumer_cluster_entropy,
    write_assignments, ProsumerAssignment,
};
use crate::ingest::{LoadType, MeterMetadata};
use crate::preprocess::ProfileKey;

use super::{io_err, ExperimentError};

pub struct ReportInputs<'a> {
    pub model: &'a ClusterModel,
    pub keys: &'a [ProfileKey],
    /// Profile values aligned with `keys`; member quantiles are omitted
    /// without them.
    pub profiles: Option<&'a [Vec<f64>]>,
    pub metadata: &'a [MeterMetadata],
    pub assignments: &'a [ProsumerAssignment],
    pub recommendations: &'a [DrRecommendation],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
}

const QUANTILES: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 0.9];

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

struct Out {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Out {
    fn csv(&mut self, name: &str, header: &[String], rows: Vec<Vec<String>>) -> Result<(), ExperimentError> {
        let path = self.dir.join(name);
        let f = File::create(&path).map_err(io_err(&path))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(f));
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush().map_err(io_err(&path))?;
        self.files.push(path);
        Ok(())
    }
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// Writes the centroid curves and summary tables for a fitted model.
pub fn emit_report(inputs: &ReportInputs<'_>, out_dir: &Path) -> Result<ReportBundle, ExperimentError> {
    let model = inputs.model;
    let k = model.k;
    let hours = model.centroids.first().map_or(0, Vec::len);
    fs::create_dir_all(out_dir.join("centroids")).map_err(io_err(out_dir))?;
    let mut out = Out {
        dir: out_dir.to_path_buf(),
        files: Vec::new(),
    };
    let sizes = {
        let mut s = vec![0usize; k];
        for &l in &model.labels {
            s[l] += 1;
        }
        s
    };

    let mut header = vec!["hour".to_string(), "centroid".to_string()];
    header.extend(QUANTILES.iter().map(|q| format!("q{:02}", (q * 100.0).round() as u32)));
    for j in 0..k {
        let members: Vec<&Vec<f64>> = match inputs.profiles {
            Some(p) => model.labels.iter().zip(p).filter(|(&l, _)| l == j).map(|(_, v)| v).collect(),
            None => Vec::new(),
        };
        let rows = (0..hours)
            .map(|h| {
                let mut row = vec![h.to_string(), model.centroids[j][h].to_string()];
                let mut col: Vec<f64> = members.iter().map(|m| m[h]).collect();
                col.sort_by(f64::total_cmp);
                row.extend(QUANTILES.iter().map(|&q| {
                    if col.is_empty() {
                        String::new()
                    } else {
                        quantile(&col, q).to_string()
                    }
                }));
                row
            })
            .collect();
        out.csv(&format!("centroids/cluster_{j:02}.csv"), &header, rows)?;
    }

    let mut header = vec!["cluster".to_string()];
    header.extend((0..hours).map(|h| format!("h{h:02}")));
    let rows = (0..k)
        .map(|j| {
            let mut r = vec![j.to_string()];
            r.extend(model.centroids[j].iter().map(|v| v.to_string()));
            r
        })
        .collect();
    out.csv("centroids.csv", &header, rows)?;

    let total = model.labels.len().max(1) as f64;
    let rows = (0..k)
        .map(|j| vec![j.to_string(), sizes[j].to_string(), (sizes[j] as f64 / total).to_string()])
        .collect();
    out.csv("cluster_shares.csv", &strings(&["cluster", "profiles", "share"]), rows)?;

    let types: BTreeMap<&str, LoadType> = inputs
        .metadata
        .iter()
        .map(|m| (m.meter_id.as_str(), m.load_type))
        .collect();
    let mut by_type: Vec<BTreeMap<&'static str, usize>> = vec![BTreeMap::new(); k];
    for (key, &l) in inputs.keys.iter().zip(&model.labels) {
        let t = types.get(key.meter_id.as_str()).copied().unwrap_or(LoadType::Unknown);
        *by_type[l].entry(t.as_str()).or_default() += 1;
    }
    let mut rows = Vec::new();
    for (j, counts) in by_type.iter().enumerate() {
        for (t, &c) in counts {
            rows.push(vec![
                j.to_string(),
                t.to_string(),
                c.to_string(),
                (c as f64 / sizes[j].max(1) as f64).to_string(),
            ]);
        }
    }
    out.csv("load_types.csv", &strings(&["cluster", "load_type", "profiles", "share"]), rows)?;

    let dists = membership_distributions(inputs.keys, &model.labels, k)
        .map_err(|e| ExperimentError::Format {
            path: out_dir.to_path_buf(),
            message: e.to_string(),
        })?;
    let mut header = vec!["meter_id".to_string()];
    header.extend((0..k).map(|j| format!("c{j:02}")));
    let rows = dists
        .iter()
        .map(|d| {
            let mut r = vec![d.meter_id.clone()];
            r.extend(d.counts.iter().map(|c| c.to_string()));
            r
        })
        .collect();
    out.csv("membership_matrix.csv", &header, rows)?;

    let rows = dists
        .iter()
        .map(|d| {
            let e = meter_entropy(d);
            let label = discretize_entropy(e).map(|l| l.label.to_string()).unwrap_or_default();
            vec![d.meter_id.clone(), e.to_string(), label]
        })
        .collect();
    out.csv("entropy_per_meter.csv", &strings(&["meter_id", "entropy", "label"]), rows)?;

    let profile_e = profile_cluster_entropy(&dists);
    let prosumer_e = prosumer_cluster_entropy(inputs.assignments);
    let cell = |m: &BTreeMap<usize, f64>, j: usize| m.get(&j).map(|v| v.to_string()).unwrap_or_default();
    let rows = (0..k)
        .map(|j| vec![j.to_string(), cell(&profile_e, j), cell(&prosumer_e, j)])
        .collect();
    out.csv(
        "entropy_per_cluster.csv",
        &strings(&["cluster", "profile_cluster_entropy", "prosumer_cluster_entropy"]),
        rows,
    )?;

    let path = out_dir.join("prosumer_assignments.csv");
    write_assignments(File::create(&path).map_err(io_err(&path))?, inputs.assignments).map_err(|e| {
        ExperimentError::Format {
            path: path.clone(),
            message: e.to_string(),
        }
    })?;
    out.files.push(path);

    let path = out_dir.join("recommendations.json");
    let f = File::create(&path).map_err(io_err(&path))?;
    serde_json::to_writer_pretty(BufWriter::new(f), inputs.recommendations)?;
    out.files.push(path);

    Ok(ReportBundle {
        dir: out.dir,
        files: out.files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_eq!(quantile(&v, 0.25), 2.0);
        assert!((quantile(&v, 0.1) - 1.4).abs() < 1e-12);
        assert_eq!(quantile(&[7.0], 0.9), 7.0);
    }
}
