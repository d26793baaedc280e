//! Membership entropy of meters across profile clusters.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{ClusterError, ClusterModel};
use crate::ingest::IngestError;
use crate::preprocess::ProfileKey;

#[derive(Debug, Error, PartialEq)]
pub enum EntropyError {
    #[error("entropy must be a finite non-negative number, got {0}")]
    InvalidValue(f64),
    #[error("{keys} profile keys for {labels} labels")]
    LengthMismatch { keys: usize, labels: usize },
    #[error("label {label} is outside 0..{k}")]
    LabelOutOfRange { label: usize, k: usize },
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

/// Per-cluster counts of one meter's daily profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipDistribution {
    pub meter_id: String,
    pub counts: Vec<usize>,
    pub probabilities: Vec<f64>,
}

impl MembershipDistribution {
    pub fn from_counts(meter_id: impl Into<String>, counts: Vec<usize>) -> Self {
        let total: usize = counts.iter().sum();
        let probabilities = counts
            .iter()
            .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
            .collect();
        MembershipDistribution {
            meter_id: meter_id.into(),
            counts,
            probabilities,
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// One distribution per meter, ordered by meter id.
pub fn membership_distributions(
    keys: &[ProfileKey],
    labels: &[usize],
    k: usize,
) -> Result<Vec<MembershipDistribution>, EntropyError> {
    if keys.len() != labels.len() {
        return Err(EntropyError::LengthMismatch {
            keys: keys.len(),
            labels: labels.len(),
        });
    }
    let mut counts: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (key, &l) in keys.iter().zip(labels) {
        if l >= k {
            return Err(EntropyError::LabelOutOfRange { label: l, k });
        }
        counts.entry(&key.meter_id).or_insert_with(|| vec![0; k])[l] += 1;
    }
    Ok(counts
        .into_iter()
        .map(|(id, c)| MembershipDistribution::from_counts(id, c))
        .collect())
}

/// `-sum p ln p`, with `0 ln 0 = 0`.
pub fn meter_entropy(dist: &MembershipDistribution) -> f64 {
    let s: f64 = dist
        .probabilities
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum();
    if s == 0.0 {
        0.0
    } else {
        -s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyLevel {
    VeryLow,
    Low,
    Average,
    High,
    VeryHigh,
}

impl EntropyLevel {
    pub const ALL: [EntropyLevel; 5] = [
        EntropyLevel::VeryLow,
        EntropyLevel::Low,
        EntropyLevel::Average,
        EntropyLevel::High,
        EntropyLevel::VeryHigh,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EntropyLevel::VeryLow => "very_low",
            EntropyLevel::Low => "low",
            EntropyLevel::Average => "average",
            EntropyLevel::High => "high",
            EntropyLevel::VeryHigh => "very_high",
        }
    }

    pub fn is_high(&self) -> bool {
        *self >= EntropyLevel::High
    }
}

impl fmt::Display for EntropyLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntropyLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        EntropyLevel::ALL
            .into_iter()
            .find(|l| l.as_str() == norm)
            .ok_or_else(|| format!("unknown entropy level '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyLabel {
    pub value: f64,
    pub label: EntropyLevel,
}

/// Width of each qualitative entropy bin.
pub const BIN_WIDTH: f64 = 0.5;

/// Maps a value onto five bins of width 0.5; the last bin is open-ended and
/// boundaries belong to the upper bin.
pub fn discretize_entropy(value: f64) -> Result<EntropyLabel, EntropyError> {
    if !value.is_finite() || value < 0.0 {
        return Err(EntropyError::InvalidValue(value));
    }
    let bin = ((value / BIN_WIDTH).floor() as usize).min(EntropyLevel::ALL.len() - 1);
    Ok(EntropyLabel {
        value,
        label: EntropyLevel::ALL[bin],
    })
}

/// Cluster entropy as the mean of member-meter entropies, each weighted by
/// the meter's share of the cluster's profiles. Clusters with no profiles are
/// absent.
pub fn profile_cluster_entropy(distributions: &[MembershipDistribution]) -> BTreeMap<usize, f64> {
    let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for d in distributions {
        let s = meter_entropy(d);
        for (j, &c) in d.counts.iter().enumerate() {
            if c > 0 {
                let e = acc.entry(j).or_insert((0.0, 0));
                e.0 += s * c as f64;
                e.1 += c;
            }
        }
    }
    acc.into_iter().map(|(j, (num, den))| (j, num / den as f64)).collect()
}

/// One meter's prosumer cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProsumerAssignment {
    pub meter_id: String,
    pub cluster: usize,
    pub entropy: f64,
    pub entropy_label: EntropyLevel,
}

/// Majority cluster per meter. Count ties go to the cluster with the smallest
/// `mean_distance(meter, cluster)`, then the lowest index.
pub fn assign_prosumers(
    distributions: &[MembershipDistribution],
    mut mean_distance: impl FnMut(&MembershipDistribution, usize) -> f64,
) -> Vec<ProsumerAssignment> {
    distributions
        .iter()
        .map(|d| {
            let top = d.counts.iter().copied().max().unwrap_or(0);
            let tied: Vec<usize> = (0..d.counts.len()).filter(|&j| d.counts[j] == top).collect();
            let cluster = if tied.len() == 1 {
                tied[0]
            } else {
                let mut best = (tied[0], f64::INFINITY);
                for &j in &tied {
                    let dist = mean_distance(d, j);
                    if dist < best.1 {
                        best = (j, dist);
                    }
                }
                best.0
            };
            let entropy = meter_entropy(d);
            let entropy_label = discretize_entropy(entropy)
                .map(|l| l.label)
                .unwrap_or(EntropyLevel::VeryLow);
            ProsumerAssignment {
                meter_id: d.meter_id.clone(),
                cluster,
                entropy,
                entropy_label,
            }
        })
        .collect()
}

/// Prosumer assignment for a fitted model, breaking ties by the mean
/// distance of the meter's profiles to each tied centroid.
pub fn assign_from_model(
    model: &ClusterModel,
    profiles: &[Vec<f64>],
    keys: &[ProfileKey],
) -> Result<Vec<ProsumerAssignment>, EntropyError> {
    let dists = membership_distributions(keys, &model.labels, model.k)?;
    let mut by_meter: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, key) in keys.iter().enumerate() {
        by_meter.entry(&key.meter_id).or_default().push(i);
    }
    let mut failure = None;
    let out = assign_prosumers(&dists, |d, j| {
        let rows = &by_meter[d.meter_id.as_str()];
        let mut total = 0.0;
        for &i in rows {
            match model.measure.distance(&profiles[i], &model.centroids[j]) {
                Ok(v) => total += v,
                Err(e) => {
                    failure.get_or_insert(e);
                }
            }
        }
        total / rows.len() as f64
    });
    if let Some(e) = failure {
        return Err(ClusterError::from(e).into());
    }
    Ok(out)
}

/// Unweighted mean entropy of the meters assigned to each cluster; clusters
/// with no assigned meter are absent.
pub fn prosumer_cluster_entropy(assignments: &[ProsumerAssignment]) -> BTreeMap<usize, f64> {
    let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for a in assignments {
        let e = acc.entry(a.cluster).or_insert((0.0, 0));
        e.0 += a.entropy;
        e.1 += 1;
    }
    acc.into_iter().map(|(j, (s, n))| (j, s / n as f64)).collect()
}

pub const ASSIGNMENT_HEADER: [&str; 4] = ["meter_id", "cluster", "entropy", "entropy_label"];

pub fn write_assignments<W: Write>(writer: W, assignments: &[ProsumerAssignment]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(ASSIGNMENT_HEADER)?;
    for a in assignments {
        w.write_record([
            a.meter_id.clone(),
            a.cluster.to_string(),
            a.entropy.to_string(),
            a.entropy_label.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_assignments<R: Read>(reader: R, path: &Path) -> Result<Vec<ProsumerAssignment>, IngestError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let found: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if found != ASSIGNMENT_HEADER {
        return Err(IngestError::MalformedHeader {
            path: path.to_path_buf(),
            expected: ASSIGNMENT_HEADER.join(","),
            found: found.join(","),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let meter_id = rec[0].to_string();
        let invalid = |field: &'static str, value: &str| IngestError::InvalidValue {
            meter_id: meter_id.clone(),
            field,
            value: value.to_string(),
        };
        let cluster = rec[1].trim().parse().map_err(|_| invalid("cluster", &rec[1]))?;
        let entropy = rec[2].trim().parse().map_err(|_| invalid("entropy", &rec[2]))?;
        let entropy_label = rec[3].parse().map_err(|_| invalid("entropy_label", &rec[3]))?;
        out.push(ProsumerAssignment {
            meter_id,
            cluster,
            entropy,
            entropy_label,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn dist(counts: &[usize]) -> MembershipDistribution {
        MembershipDistribution::from_counts("m", counts.to_vec())
    }

    #[test]
    fn entropy_values() {
        assert_eq!(meter_entropy(&dist(&[0, 7, 0])), 0.0);
        assert!((meter_entropy(&dist(&[3, 3])) - 2f64.ln()).abs() < 1e-12);
        assert!((meter_entropy(&dist(&[2, 1, 1])) - 1.0397207708399179).abs() < 1e-12);
    }

    #[test]
    fn discretization() {
        let label = |v| discretize_entropy(v).unwrap().label;
        assert_eq!(label(0.3), EntropyLevel::VeryLow);
        assert_eq!(label(1.2), EntropyLevel::Average);
        assert_eq!(label(2.0), EntropyLevel::VeryHigh);
        assert_eq!(label(0.5), EntropyLevel::Low);
        assert_eq!(label(1.5), EntropyLevel::High);
        assert_eq!(label(9.0), EntropyLevel::VeryHigh);
        assert!(discretize_entropy(-0.1).is_err());
        assert!(discretize_entropy(f64::NAN).is_err());
    }

    #[test]
    fn profile_cluster_weights() {
        // a: entropy 0, all 4 profiles in cluster 3.
        // b: entropy ln 2, 4 profiles in cluster 3 and 4 in cluster 4.
        let a = MembershipDistribution::from_counts("a", vec![0, 0, 0, 4, 0]);
        let b = MembershipDistribution::from_counts("b", vec![0, 0, 0, 4, 4]);
        let e = profile_cluster_entropy(&[a, b.clone()]);
        assert!((e[&3] - 2f64.ln() / 2.0).abs() < 1e-12);
        assert!((e[&4] - 2f64.ln()).abs() < 1e-12);
        assert!(!e.contains_key(&0));

        let single = profile_cluster_entropy(&[b]);
        assert!((single[&3] - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn shares_weight_by_profile_count() {
        let a = MembershipDistribution::from_counts("a", vec![3, 0]);
        let b = MembershipDistribution::from_counts("b", vec![1, 1]);
        let e = profile_cluster_entropy(&[a, b]);
        assert!((e[&0] - 2f64.ln() / 4.0).abs() < 1e-12);
    }

    #[test]
    fn majority_and_ties() {
        let d = vec![
            MembershipDistribution::from_counts("x", vec![0, 0, 6, 0, 0, 4]),
            MembershipDistribution::from_counts("y", vec![0, 0, 0, 0, 0, 0, 0, 0, 0, 5]),
            MembershipDistribution::from_counts("z", vec![0, 3, 0, 0, 3]),
        ];
        let a = assign_prosumers(&d, |_, j| if j == 4 { 0.1 } else { 0.9 });
        let clusters: Vec<usize> = a.iter().map(|a| a.cluster).collect();
        assert_eq!(clusters, vec![2, 9, 4]);
        // Equal distances fall back to the lowest index.
        let a = assign_prosumers(&d[2..], |_, _| 1.0);
        assert_eq!(a[0].cluster, 1);
    }

    #[test]
    fn prosumer_means() {
        let mk = |id: &str, cluster, entropy| ProsumerAssignment {
            meter_id: id.into(),
            cluster,
            entropy,
            entropy_label: discretize_entropy(entropy).unwrap().label,
        };
        let e = prosumer_cluster_entropy(&[mk("a", 1, 1.0), mk("b", 1, 2.0), mk("c", 3, 0.4)]);
        assert_eq!(e[&1], 1.5);
        assert_eq!(e[&3], 0.4);
        assert!(!e.contains_key(&2));
    }

    #[test]
    fn distributions_from_labels() {
        let day = |d| NaiveDate::from_ymd_opt(2021, 1, d).unwrap();
        let keys = vec![
            ProfileKey { meter_id: "b".into(), date: day(1) },
            ProfileKey { meter_id: "a".into(), date: day(1) },
            ProfileKey { meter_id: "a".into(), date: day(2) },
        ];
        let d = membership_distributions(&keys, &[1, 0, 1], 2).unwrap();
        assert_eq!(d[0].meter_id, "a");
        assert_eq!(d[0].counts, vec![1, 1]);
        assert_eq!(d[1].probabilities, vec![0.0, 1.0]);
        assert!(membership_distributions(&keys, &[0, 2, 0], 2).is_err());
    }

    #[test]
    fn assignments_round_trip() {
        let a = vec![ProsumerAssignment {
            meter_id: "m1".into(),
            cluster: 4,
            entropy: 1.25,
            entropy_label: EntropyLevel::Average,
        }];
        let mut buf = Vec::new();
        write_assignments(&mut buf, &a).unwrap();
        assert_eq!(read_assignments(buf.as_slice(), Path::new("x")).unwrap(), a);
    }
}
