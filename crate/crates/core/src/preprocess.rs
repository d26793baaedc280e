//! Cleaning and slicing of meter series into daily load profiles.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveDateTime, Timelike};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::{IngestError, MeterMetadata, MeterSeries, MetadataSet, Sample};

pub const HOURS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub outlier_enabled: bool,
    /// Gaps up to this many hours are imputed anywhere in the day.
    pub max_gap_hours: usize,
    /// Gaps lying entirely in `[night_start_hour, night_end_hour)` are imputed
    /// regardless of length. The window may wrap past midnight.
    pub night_start_hour: u32,
    pub night_end_hour: u32,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            outlier_enabled: true,
            max_gap_hours: 2,
            night_start_hour: 0,
            night_end_hour: 6,
        }
    }
}

impl PreprocessConfig {
    fn in_night(&self, hour: u32) -> bool {
        let (s, e) = (self.night_start_hour, self.night_end_hour);
        if s <= e {
            (s..e).contains(&hour)
        } else {
            hour >= s || hour < e
        }
    }
}

/// Identity of one meter-day.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProfileKey {
    pub meter_id: String,
    pub date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyProfile {
    pub meter_id: String,
    pub date: NaiveDate,
    pub values: [f64; HOURS],
    pub normalized: bool,
}

impl DailyProfile {
    pub fn key(&self) -> ProfileKey {
        ProfileKey {
            meter_id: self.meter_id.clone(),
            date: self.date,
        }
    }

    pub fn abs_sum(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutlierOutcome {
    pub series: MeterSeries,
    pub removed: usize,
    pub warning: Option<String>,
}

/// Delete every active-power reading whose magnitude exceeds the meter's
/// nominal limit (the larger of contractual and production power).
pub fn remove_outliers(series: &MeterSeries, metadata: &MeterMetadata) -> OutlierOutcome {
    let Some(limit) = metadata.nominal_limit_kw() else {
        return OutlierOutcome {
            series: series.clone(),
            removed: 0,
            warning: Some(format!(
                "meter {}: no contractual or production power, outlier filter skipped",
                series.meter_id
            )),
        };
    };
    let mut removed = 0;
    let samples = series
        .samples
        .iter()
        .map(|s| {
            let mut s = *s;
            if matches!(s.active_power_kw, Some(p) if p.abs() > limit) {
                s.active_power_kw = None;
                removed += 1;
            }
            s
        })
        .collect();
    OutlierOutcome {
        series: MeterSeries {
            meter_id: series.meter_id.clone(),
            samples,
        },
        removed,
        warning: None,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImputeStats {
    pub energy_filled_gaps: usize,
    pub interpolated_gaps: usize,
    pub imputed_hours: usize,
    pub unfilled_gaps: usize,
}

/// Return `series` on a dense hourly grid from its first to its last sample,
/// inserting empty samples for absent hours.
pub fn densify(series: &MeterSeries) -> MeterSeries {
    let (Some(first), Some(last)) = (series.samples.first(), series.samples.last()) else {
        return series.clone();
    };
    let hours = (last.timestamp - first.timestamp).num_hours() as usize + 1;
    let mut samples: Vec<Sample> = (0..hours)
        .map(|h| Sample {
            timestamp: first.timestamp + Duration::hours(h as i64),
            active_power_kw: None,
            cumulative_energy_kwh: None,
        })
        .collect();
    for s in &series.samples {
        let idx = (s.timestamp - first.timestamp).num_hours() as usize;
        samples[idx] = *s;
    }
    MeterSeries {
        meter_id: series.meter_id.clone(),
        samples,
    }
}

/// Fill short daytime gaps and night-window gaps.
///
/// With cumulative energy on both bracketing observations, the energy delta
/// is spread evenly over the missing hours plus the first observed hour after
/// the gap. Otherwise active power is interpolated linearly. Gaps that are
/// neither short nor nocturnal, and gaps at the series edges, stay missing.
pub fn impute_gaps(series: &MeterSeries, config: &PreprocessConfig) -> (MeterSeries, ImputeStats) {
    let mut dense = densify(series);
    let mut stats = ImputeStats::default();
    let samples = &mut dense.samples;
    let n = samples.len();
    let mut i = 0;
    while i < n {
        if samples[i].active_power_kw.is_some() {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && samples[i].active_power_kw.is_none() {
            i += 1;
        }
        let end = i; // exclusive
        let len = end - start;
        let nocturnal = samples[start..end]
            .iter()
            .all(|s| config.in_night(s.timestamp.hour()));
        let bracketed = start > 0 && end < n;
        if !bracketed || !(len <= config.max_gap_hours || nocturnal) {
            stats.unfilled_gaps += 1;
            continue;
        }
        let before = samples[start - 1];
        let after = samples[end];
        match (before.cumulative_energy_kwh, after.cumulative_energy_kwh) {
            (Some(e0), Some(e1)) => {
                let per_hour = (e1 - e0) / (len + 1) as f64;
                for s in &mut samples[start..=end] {
                    s.active_power_kw = Some(per_hour);
                }
                stats.energy_filled_gaps += 1;
            }
            _ => {
                let p0 = before.active_power_kw.expect("observed");
                let p1 = after.active_power_kw.expect("observed");
                let steps = (len + 1) as f64;
                for (k, s) in samples[start..end].iter_mut().enumerate() {
                    let t = (k + 1) as f64 / steps;
                    s.active_power_kw = Some(p0 + (p1 - p0) * t);
                }
                stats.interpolated_gaps += 1;
            }
        }
        stats.imputed_hours += len;
    }
    (dense, stats)
}

/// One raw profile per calendar day with all 24 hours present. Returns the
/// profiles and the number of days dropped for holes.
pub fn extract_daily_profiles(series: &MeterSeries) -> (Vec<DailyProfile>, usize) {
    let mut days: BTreeMap<NaiveDate, [Option<f64>; HOURS]> = BTreeMap::new();
    for s in &series.samples {
        let day = days.entry(s.timestamp.date()).or_insert([None; HOURS]);
        day[s.timestamp.hour() as usize] = s.active_power_kw.filter(|v| v.is_finite());
    }
    let mut dropped = 0;
    let mut profiles = Vec::new();
    for (date, hours) in days {
        if hours.iter().all(Option::is_some) {
            let mut values = [0.0; HOURS];
            for (v, h) in values.iter_mut().zip(hours) {
                *v = h.expect("checked");
            }
            profiles.push(DailyProfile {
                meter_id: series.meter_id.clone(),
                date,
                values,
                normalized: false,
            });
        } else {
            dropped += 1;
        }
    }
    (profiles, dropped)
}

/// Divide by the sum of absolute values. All-zero days pass through.
pub fn normalize_profile(profile: &DailyProfile) -> DailyProfile {
    if profile.normalized {
        return profile.clone();
    }
    let total = profile.abs_sum();
    let mut out = profile.clone();
    if total > 0.0 {
        for v in out.values.iter_mut() {
            *v /= total;
        }
    }
    out.normalized = true;
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeterOutcome {
    pub meter_id: String,
    pub profiles: Vec<DailyProfile>,
    pub outliers_removed: usize,
    pub impute: ImputeStats,
    pub dropped_days: usize,
    pub warnings: Vec<String>,
}

/// Outlier removal, imputation and daily slicing for one meter. Profiles are raw.
pub fn preprocess_meter(
    series: &MeterSeries,
    metadata: &MeterMetadata,
    config: &PreprocessConfig,
) -> MeterOutcome {
    let mut warnings = Vec::new();
    let (cleaned, outliers_removed) = if config.outlier_enabled {
        let out = remove_outliers(series, metadata);
        warnings.extend(out.warning);
        (out.series, out.removed)
    } else {
        (series.clone(), 0)
    };
    let (imputed, impute) = impute_gaps(&cleaned, config);
    let (profiles, dropped_days) = extract_daily_profiles(&imputed);
    MeterOutcome {
        meter_id: series.meter_id.clone(),
        profiles,
        outliers_removed,
        impute,
        dropped_days,
        warnings,
    }
}

/// Preprocess every meter that has metadata, in input order. Returns the
/// per-meter outcomes and all normalized profiles.
pub fn preprocess_dataset(
    series: &[MeterSeries],
    metadata: &MetadataSet,
    config: &PreprocessConfig,
) -> (Vec<MeterOutcome>, Vec<DailyProfile>) {
    let lookup = metadata.by_id();
    let outcomes: Vec<MeterOutcome> = series
        .par_iter()
        .filter_map(|s| lookup.get(s.meter_id.as_str()).map(|m| preprocess_meter(s, m, config)))
        .collect();
    let profiles = outcomes
        .iter()
        .flat_map(|o| o.profiles.iter().map(normalize_profile))
        .collect();
    (outcomes, profiles)
}

/// Profiles in matrix form for the clustering layer.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProfileSet {
    pub keys: Vec<ProfileKey>,
    pub values: Vec<Vec<f64>>,
}

impl ProfileSet {
    pub fn from_profiles(profiles: &[DailyProfile]) -> Self {
        ProfileSet {
            keys: profiles.iter().map(DailyProfile::key).collect(),
            values: profiles.iter().map(|p| p.values.to_vec()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn profile_header() -> Vec<String> {
    let mut h = vec!["meter_id".to_string(), "date".to_string(), "normalized".to_string()];
    h.extend((0..HOURS).map(|i| format!("h{i:02}")));
    h
}

pub fn write_profiles<W: Write>(writer: W, profiles: &[DailyProfile]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(profile_header())?;
    for p in profiles {
        let mut row = vec![
            p.meter_id.clone(),
            p.date.to_string(),
            p.normalized.to_string(),
        ];
        row.extend(p.values.iter().map(|v| format!("{v:e}")));
        w.write_record(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_profiles<R: Read>(reader: R, path: &Path) -> Result<Vec<DailyProfile>, IngestError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let expected = profile_header();
    let expected: Vec<&str> = expected.iter().map(String::as_str).collect();
    let found: Vec<&str> = rdr.headers()?.iter().collect();
    if found != expected {
        return Err(IngestError::MalformedHeader {
            path: path.to_path_buf(),
            expected: expected.join(","),
            found: found.join(","),
        });
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let meter_id = record[0].to_string();
        let bad = |field: &'static str, value: &str| IngestError::InvalidValue {
            meter_id: meter_id.clone(),
            field,
            value: value.to_string(),
        };
        let date = NaiveDate::parse_from_str(&record[1], "%Y-%m-%d").map_err(|_| bad("date", &record[1]))?;
        let normalized = record[2].parse().map_err(|_| bad("normalized", &record[2]))?;
        let mut values = [0.0; HOURS];
        for (h, v) in values.iter_mut().enumerate() {
            let cell = &record[3 + h];
            *v = cell
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| bad("hourly value", cell))?;
        }
        out.push(DailyProfile {
            meter_id,
            date,
            values,
            normalized,
        });
    }
    if out.is_empty() {
        return Err(IngestError::ZeroParseableRows(path.to_path_buf()));
    }
    Ok(out)
}

pub fn timestamp(date: NaiveDate, hour: u32) -> NaiveDateTime {
    date.and_hms_opt(hour, 0, 0).expect("valid hour")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::LoadType;

    fn day() -> NaiveDate {
        NaiveDate::from_ymd_opt(2021, 6, 1).unwrap()
    }

    fn meta(contractual: Option<f64>, production: Option<f64>) -> MeterMetadata {
        MeterMetadata {
            meter_id: "M".into(),
            contractual_power_kw: contractual,
            production_power_kw: production,
            load_type: LoadType::Household,
        }
    }

    fn series(powers: &[Option<f64>], energy: &[Option<f64>]) -> MeterSeries {
        MeterSeries {
            meter_id: "M".into(),
            samples: powers
                .iter()
                .zip(energy)
                .enumerate()
                .map(|(h, (&p, &e))| Sample {
                    timestamp: timestamp(day(), 0) + Duration::hours(h as i64),
                    active_power_kw: p,
                    cumulative_energy_kwh: e,
                })
                .collect(),
        }
    }

    #[test]
    fn outlier_thresholds() {
        let s = series(&[Some(40.0), Some(2.9), Some(-15.0)], &[None; 3]);
        let out = remove_outliers(&s, &meta(Some(3.0), Some(0.0)));
        let p: Vec<_> = out.series.samples.iter().map(|s| s.active_power_kw).collect();
        assert_eq!(p, vec![None, Some(2.9), None]);
        assert_eq!(out.removed, 2);

        // Generation within the production limit survives.
        let out = remove_outliers(&s, &meta(Some(7.7), Some(19.3)));
        assert_eq!(out.series.samples[2].active_power_kw, Some(-15.0));
        assert_eq!(out.series.samples[0].active_power_kw, None);

        let out = remove_outliers(&s, &meta(None, None));
        assert_eq!(out.removed, 0);
        assert!(out.warning.is_some());
    }

    #[test]
    fn energy_spread_over_gap_and_next_hour() {
        let mut p = vec![Some(1.0); 24];
        let mut e: Vec<Option<f64>> = (0..24).map(|h| Some(90.0 + h as f64)).collect();
        e[9] = Some(100.0);
        e[12] = Some(106.0);
        p[10] = None;
        p[11] = None;
        e[10] = None;
        e[11] = None;
        for h in 13..24 {
            e[h] = Some(106.0 + (h - 12) as f64);
        }
        let (out, stats) = impute_gaps(&series(&p, &e), &PreprocessConfig::default());
        for h in 10..=12 {
            assert_eq!(out.samples[h].active_power_kw, Some(2.0));
        }
        assert_eq!(stats.energy_filled_gaps, 1);
        assert_eq!(stats.imputed_hours, 2);
    }

    #[test]
    fn night_gap_imputed_day_gap_left() {
        let mut p = vec![Some(1.0); 24];
        for h in 1..=5 {
            p[h] = None;
        }
        for h in 13..=15 {
            p[h] = None;
        }
        let (out, stats) = impute_gaps(&series(&p, &[None; 24]), &PreprocessConfig::default());
        assert!(out.samples[1..=5].iter().all(|s| s.active_power_kw.is_some()));
        assert!(out.samples[13..=15].iter().all(|s| s.active_power_kw.is_none()));
        assert_eq!(stats.interpolated_gaps, 1);
        assert_eq!(stats.unfilled_gaps, 1);
        let (profiles, dropped) = extract_daily_profiles(&out);
        assert!(profiles.is_empty());
        assert_eq!(dropped, 1);
    }

    #[test]
    fn linear_interpolation_fallback() {
        let mut p = vec![Some(0.0); 24];
        p[9] = Some(1.0);
        p[10] = None;
        p[11] = None;
        p[12] = Some(4.0);
        let (out, _) = impute_gaps(&series(&p, &[None; 24]), &PreprocessConfig::default());
        assert_eq!(out.samples[10].active_power_kw, Some(2.0));
        assert_eq!(out.samples[11].active_power_kw, Some(3.0));
        assert_eq!(out.samples[12].active_power_kw, Some(4.0));
    }

    #[test]
    fn edge_gaps_not_imputed() {
        let mut p = vec![Some(1.0); 24];
        p[0] = None;
        p[23] = None;
        let (out, stats) = impute_gaps(&series(&p, &[None; 24]), &PreprocessConfig::default());
        assert_eq!(stats.unfilled_gaps, 2);
        assert!(out.samples[0].active_power_kw.is_none());
    }

    #[test]
    fn absent_rows_become_gaps() {
        let mut s = series(&[Some(1.0); 24], &[None; 24]);
        s.samples.remove(14);
        let (out, stats) = impute_gaps(&s, &PreprocessConfig::default());
        assert_eq!(out.samples.len(), 24);
        assert_eq!(stats.imputed_hours, 1);
        assert_eq!(extract_daily_profiles(&out).0.len(), 1);
    }

    #[test]
    fn normalization_cases() {
        let p = DailyProfile {
            meter_id: "M".into(),
            date: day(),
            values: [2.0; 24],
            normalized: false,
        };
        let n = normalize_profile(&p);
        assert!(n.values.iter().all(|&v| (v - 1.0 / 24.0).abs() < 1e-15));

        let zero = DailyProfile { values: [0.0; 24], ..p.clone() };
        let n = normalize_profile(&zero);
        assert!(n.normalized);
        assert!(n.values.iter().all(|&v| v == 0.0));

        let mut mixed = [0.0; 24];
        mixed[0] = -1.0;
        mixed[1] = 3.0;
        let n = normalize_profile(&DailyProfile { values: mixed, ..p });
        assert_eq!(n.values[0], -0.25);
        assert_eq!(n.values[1], 0.75);
        assert_eq!(normalize_profile(&n), n);
    }

    #[test]
    fn profile_csv_round_trip() {
        let p = DailyProfile {
            meter_id: "M".into(),
            date: day(),
            values: std::array::from_fn(|h| (h as f64 + 1.0) / 300.0),
            normalized: true,
        };
        let mut buf = Vec::new();
        write_profiles(&mut buf, std::slice::from_ref(&p)).unwrap();
        let back = read_profiles(buf.as_slice(), Path::new("p.csv")).unwrap();
        assert_eq!(back, vec![p]);
    }
}
