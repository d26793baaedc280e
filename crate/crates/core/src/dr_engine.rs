//! Cluster characterization and demand-response scheme rules.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::ClusterModel;
use crate::entropy::{discretize_entropy, EntropyError, EntropyLabel, ProsumerAssignment};
use crate::ingest::{LoadType, MeterMetadata};
use crate::metrics::{detect_peaks, DEFAULT_PROMINENCE};

#[derive(Debug, Error, PartialEq)]
pub enum DrError {
    #[error("price change must be nonzero")]
    ZeroPriceDelta,
    #[error("invalid time window '{0}'")]
    InvalidWindow(String),
    #[error("cluster {cluster} is outside 0..{k}")]
    UnknownCluster { cluster: usize, k: usize },
    #[error(transparent)]
    Entropy(#[from] EntropyError),
}

pub const MINUTES_PER_DAY: u32 = 24 * 60;

/// A time-of-day interval in minutes with explicit bound closedness, written
/// as `[08:00,11:00)` or `(14:00,17:00]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: u32,
    pub end: u32,
    pub start_inclusive: bool,
    pub end_inclusive: bool,
}

impl TimeWindow {
    pub fn closed(start: u32, end: u32) -> Self {
        TimeWindow {
            start,
            end,
            start_inclusive: true,
            end_inclusive: true,
        }
    }

    pub fn half_open(start: u32, end: u32) -> Self {
        TimeWindow {
            start,
            end,
            start_inclusive: true,
            end_inclusive: false,
        }
    }

    pub fn contains(&self, minute: u32) -> bool {
        let lo = if self.start_inclusive { minute >= self.start } else { minute > self.start };
        let hi = if self.end_inclusive { minute <= self.end } else { minute < self.end };
        lo && hi
    }

    /// Whether the hour slot starting at `hour:00` falls in the window.
    pub fn contains_hour(&self, hour: usize) -> bool {
        self.contains(hour as u32 * 60)
    }
}

fn parse_clock(s: &str) -> Option<u32> {
    let (h, m) = s.trim().split_once(':')?;
    let (h, m): (u32, u32) = (h.parse().ok()?, m.parse().ok()?);
    (m < 60 && h * 60 + m <= MINUTES_PER_DAY).then_some(h * 60 + m)
}

pub fn format_clock(minute: u32) -> String {
    format!("{:02}:{:02}", minute / 60, minute % 60)
}

impl FromStr for TimeWindow {
    type Err = DrError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DrError::InvalidWindow(s.to_string());
        let t = s.trim();
        let start_inclusive = match t.chars().next() {
            Some('[') => true,
            Some('(') => false,
            _ => return Err(bad()),
        };
        let end_inclusive = match t.chars().last() {
            Some(']') => true,
            Some(')') => false,
            _ => return Err(bad()),
        };
        let inner = &t[1..t.len() - 1];
        let (a, b) = inner.split_once(',').ok_or_else(bad)?;
        let (start, end) = (parse_clock(a).ok_or_else(bad)?, parse_clock(b).ok_or_else(bad)?);
        if start > end {
            return Err(bad());
        }
        Ok(TimeWindow {
            start,
            end,
            start_inclusive,
            end_inclusive,
        })
    }
}

impl fmt::Display for TimeWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{},{}{}",
            if self.start_inclusive { '[' } else { '(' },
            format_clock(self.start),
            format_clock(self.end),
            if self.end_inclusive { ']' } else { ')' }
        )
    }
}

/// Parses a `;`-separated list of windows.
pub fn parse_windows(s: &str) -> Result<Vec<TimeWindow>, DrError> {
    s.split(';').filter(|p| !p.trim().is_empty()).map(str::parse).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrConfig {
    /// Windows from which a peak could shift into the midday generation hours.
    pub rpf_windows: Vec<TimeWindow>,
    pub peak_window: TimeWindow,
    /// Hours `[start, end)` treated as working hours.
    pub working_hours: (usize, usize),
    pub working_hours_ratio: f64,
    pub dominant_type_threshold: f64,
    pub prominence: f64,
    /// Centroid variance below which a peakless centroid is inactive.
    pub inactive_variance: f64,
}

impl Default for DrConfig {
    fn default() -> Self {
        DrConfig {
            rpf_windows: vec![TimeWindow::half_open(8 * 60, 11 * 60), TimeWindow {
                start: 14 * 60,
                end: 17 * 60,
                start_inclusive: false,
                end_inclusive: true,
            }],
            peak_window: TimeWindow::closed(17 * 60, 19 * 60 + 30),
            working_hours: (7, 19),
            working_hours_ratio: 1.5,
            dominant_type_threshold: 0.6,
            prominence: DEFAULT_PROMINENCE,
            inactive_variance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DominantLoadType {
    Residential,
    Commercial,
    Mixed,
    Generation,
    Inactive,
}

impl DominantLoadType {
    pub fn as_str(&self) -> &'static str {
        match self {
            DominantLoadType::Residential => "residential",
            DominantLoadType::Commercial => "commercial",
            DominantLoadType::Mixed => "mixed",
            DominantLoadType::Generation => "generation",
            DominantLoadType::Inactive => "inactive",
        }
    }
}

impl fmt::Display for DominantLoadType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Households are residential; every other known type is commercial.
pub fn is_residential(t: LoadType) -> Option<bool> {
    match t {
        LoadType::Household => Some(true),
        LoadType::Unknown => None,
        _ => Some(false),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterCharacter {
    pub cluster: usize,
    pub rpf_contributor: bool,
    pub peak_hours_demand: bool,
    pub dominant_load_type: DominantLoadType,
    pub entropy_label: EntropyLabel,
    pub centroid_peak_hours: Vec<usize>,
    /// Fractions of member meters that are residential and commercial.
    pub residential_share: f64,
    pub commercial_share: f64,
}

/// Shape flags and load-type mix of one cluster centroid.
pub fn characterize_cluster(
    cluster: usize,
    centroid: &[f64],
    members: &[&MeterMetadata],
    entropy: f64,
    config: &DrConfig,
) -> Result<ClusterCharacter, DrError> {
    let entropy_label = discretize_entropy(entropy)?;
    let peaks = detect_peaks(centroid, config.prominence).hours();
    let in_rpf = peaks
        .iter()
        .any(|&h| config.rpf_windows.iter().any(|w| w.contains_hour(h)));
    let rpf_contributor = in_rpf || sustained_working_hours(centroid, &peaks, config);
    let peak_hours_demand = peaks.iter().any(|&h| config.peak_window.contains_hour(h));

    let n = members.len().max(1) as f64;
    let residential = members
        .iter()
        .filter(|m| is_residential(m.load_type) == Some(true))
        .count() as f64
        / n;
    let commercial = members
        .iter()
        .filter(|m| is_residential(m.load_type) == Some(false))
        .count() as f64
        / n;
    let mean = centroid.iter().sum::<f64>() / centroid.len().max(1) as f64;
    let variance = centroid.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / centroid.len().max(1) as f64;
    let negative: f64 = centroid.iter().filter(|&&v| v < 0.0).map(|v| -v).sum();
    let positive: f64 = centroid.iter().filter(|&&v| v > 0.0).sum();
    let dominant_load_type = if peaks.is_empty() && variance < config.inactive_variance {
        DominantLoadType::Inactive
    } else if negative > positive {
        DominantLoadType::Generation
    } else if residential > config.dominant_type_threshold {
        DominantLoadType::Residential
    } else if commercial > config.dominant_type_threshold {
        DominantLoadType::Commercial
    } else {
        DominantLoadType::Mixed
    };
    Ok(ClusterCharacter {
        cluster,
        rpf_contributor,
        peak_hours_demand,
        dominant_load_type,
        entropy_label,
        centroid_peak_hours: peaks,
        residential_share: residential,
        commercial_share: commercial,
    })
}

/// Working-hours mean above `ratio` times the off-hours mean. Hours within
/// one hour of a detected peak are left out of both means, so a single sharp
/// peak does not count as sustained consumption.
fn sustained_working_hours(centroid: &[f64], peaks: &[usize], config: &DrConfig) -> bool {
    let (start, end) = config.working_hours;
    let near_peak = |h: usize| peaks.iter().any(|&p| p.abs_diff(h) <= 1);
    let (mut work, mut nw, mut rest, mut nr) = (0.0, 0usize, 0.0, 0usize);
    for (h, &v) in centroid.iter().enumerate() {
        if near_peak(h) {
            continue;
        }
        if (start..end).contains(&h) {
            work += v;
            nw += 1;
        } else {
            rest += v;
            nr += 1;
        }
    }
    if nw == 0 || nr == 0 {
        return false;
    }
    let (work, rest) = (work / nw as f64, rest / nr as f64);
    work > 0.0 && work > config.working_hours_ratio * rest
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "TOU")]
    Tou,
    #[serde(rename = "CPP")]
    Cpp,
    #[serde(rename = "RTP")]
    Rtp,
}

impl Scheme {
    pub fn number(&self) -> u8 {
        match self {
            Scheme::Tou => 1,
            Scheme::Cpp => 2,
            Scheme::Rtp => 3,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Tou => "TOU",
            Scheme::Cpp => "CPP",
            Scheme::Rtp => "RTP",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceLevel {
    Low,
    Moderate,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TouWindow {
    /// Minutes after midnight, `[start, end)`.
    pub start: u32,
    pub end: u32,
    pub level: PriceLevel,
}

/// The fixed daily TOU price levels.
pub fn tou_schedule() -> Vec<TouWindow> {
    let w = |sh: u32, sm: u32, eh: u32, em: u32, level| TouWindow {
        start: sh * 60 + sm,
        end: eh * 60 + em,
        level,
    };
    vec![
        w(0, 0, 7, 0, PriceLevel::Low),
        w(7, 0, 11, 0, PriceLevel::Moderate),
        w(11, 0, 14, 0, PriceLevel::Low),
        w(14, 0, 17, 0, PriceLevel::Moderate),
        w(17, 0, 19, 30, PriceLevel::High),
        w(19, 30, 24, 0, PriceLevel::Moderate),
    ]
}

pub fn price_at(schedule: &[TouWindow], minute: u32) -> Option<PriceLevel> {
    schedule
        .iter()
        .find(|w| (w.start..w.end).contains(&minute))
        .map(|w| w.level)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrRecommendation {
    pub cluster: usize,
    pub character: ClusterCharacter,
    pub schemes: Vec<Scheme>,
    pub rationale: Vec<String>,
    pub tou_schedule: Vec<TouWindow>,
}

fn residential_leaning(c: &ClusterCharacter) -> bool {
    match c.dominant_load_type {
        DominantLoadType::Residential => true,
        DominantLoadType::Mixed => c.residential_share > c.commercial_share,
        _ => false,
    }
}

/// Rule-based scheme selection.
///
/// R0: a cluster that neither contributes to reverse power flow nor demands
/// at peak hours gets nothing. R1: every other cluster gets TOU. R2: CPP for
/// residential-leaning clusters with high entropy. R3: RTP for high entropy.
pub fn recommend_schemes(character: &ClusterCharacter) -> DrRecommendation {
    let mut schemes = Vec::new();
    let mut rationale = Vec::new();
    let level = character.entropy_label.label;
    if !(character.rpf_contributor || character.peak_hours_demand) {
        rationale.push("R0: no reverse-power-flow or peak-hour potential; excluded from DR".to_string());
    } else {
        let why = match (character.rpf_contributor, character.peak_hours_demand) {
            (true, true) => "shiftable into generation hours and high demand at peak hours",
            (true, false) => "shiftable into generation hours",
            _ => "high demand at peak hours",
        };
        schemes.push(Scheme::Tou);
        rationale.push(format!("R1: TOU, {why}"));
        if residential_leaning(character) && level.is_high() {
            schemes.push(Scheme::Cpp);
            rationale.push(format!(
                "R2: CPP, {} load with {} entropy",
                character.dominant_load_type, level
            ));
        }
        if level.is_high() {
            schemes.push(Scheme::Rtp);
            rationale.push(format!("R3: RTP, {level} entropy; requires EMC equipment"));
        }
    }
    DrRecommendation {
        cluster: character.cluster,
        character: character.clone(),
        schemes,
        rationale,
        tou_schedule: tou_schedule(),
    }
}

/// Recommendations for every prosumer cluster that has at least one assigned
/// meter, using the prosumer-cluster mean entropy.
pub fn recommend_for_model(
    model: &ClusterModel,
    assignments: &[ProsumerAssignment],
    metadata: &[MeterMetadata],
    config: &DrConfig,
) -> Result<Vec<DrRecommendation>, DrError> {
    let by_id: BTreeMap<&str, &MeterMetadata> = metadata.iter().map(|m| (m.meter_id.as_str(), m)).collect();
    let unknown = |id: &str| MeterMetadata {
        meter_id: id.to_string(),
        contractual_power_kw: None,
        production_power_kw: None,
        load_type: LoadType::Unknown,
    };
    let mut groups: BTreeMap<usize, (Vec<MeterMetadata>, f64)> = BTreeMap::new();
    for a in assignments {
        if a.cluster >= model.k {
            return Err(DrError::UnknownCluster {
                cluster: a.cluster,
                k: model.k,
            });
        }
        let meta = by_id
            .get(a.meter_id.as_str())
            .map(|m| (*m).clone())
            .unwrap_or_else(|| unknown(&a.meter_id));
        let g = groups.entry(a.cluster).or_default();
        g.0.push(meta);
        g.1 += a.entropy;
    }
    groups
        .into_iter()
        .map(|(j, (members, total))| {
            let refs: Vec<&MeterMetadata> = members.iter().collect();
            let entropy = total / members.len() as f64;
            let c = characterize_cluster(j, &model.centroids[j], &refs, entropy, config)?;
            Ok(recommend_schemes(&c))
        })
        .collect()
}

/// `-(dE% / dp%)`.
pub fn flexibility_index(delta_energy_pct: f64, delta_price_pct: f64) -> Result<f64, DrError> {
    if delta_price_pct == 0.0 {
        return Err(DrError::ZeroPriceDelta);
    }
    let v = -(delta_energy_pct / delta_price_pct);
    Ok(if v == 0.0 { 0.0 } else { v })
}
