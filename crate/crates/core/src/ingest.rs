//! Measurement and metadata ingestion.
//!
//! Measurement CSV: `meter_id,timestamp,active_power_kw,cumulative_energy_kwh`
//! with hour-aligned `YYYY-MM-DDTHH:00:00` timestamps and empty cells for
//! missing values. Metadata CSV: `meter_id,contractual_power_kw,production_kw,type`
//! with `-` marking an absent value.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preprocess::{self, PreprocessConfig};

pub const MEASUREMENT_HEADER: [&str; 4] = [
    "meter_id",
    "timestamp",
    "active_power_kw",
    "cumulative_energy_kwh",
];
pub const METADATA_HEADER: [&str; 4] = ["meter_id", "contractual_power_kw", "production_kw", "type"];
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header in {path}: expected `{expected}`, found `{found}`")]
    MalformedHeader {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("zero parseable rows in {0}")]
    ZeroParseableRows(PathBuf),
    #[error("duplicate meter_id `{0}` in metadata")]
    DuplicateMeter(String),
    #[error("invalid value `{value}` for {field} of meter `{meter_id}`")]
    InvalidValue {
        meter_id: String,
        field: &'static str,
        value: String,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadType {
    Household,
    Company,
    University,
    Pool,
    Pump,
    EvCharger,
    Substation,
    Unknown,
}

impl LoadType {
    pub const ALL: [LoadType; 8] = [
        LoadType::Household,
        LoadType::Company,
        LoadType::University,
        LoadType::Pool,
        LoadType::Pump,
        LoadType::EvCharger,
        LoadType::Substation,
        LoadType::Unknown,
    ];

    /// Parse a metadata type cell. `None` means the string was not recognised.
    pub fn parse(s: &str) -> Option<LoadType> {
        let s = s.trim().to_ascii_lowercase();
        Some(match s.as_str() {
            "household" => LoadType::Household,
            "company" => LoadType::Company,
            "university" => LoadType::University,
            "pool" => LoadType::Pool,
            "pump" => LoadType::Pump,
            "ev_charger" | "ev charger" | "electric vehicle charging station" => LoadType::EvCharger,
            "substation" => LoadType::Substation,
            "unknown" | "-" | "" => LoadType::Unknown,
            _ => return None,
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            LoadType::Household => "household",
            LoadType::Company => "company",
            LoadType::University => "university",
            LoadType::Pool => "pool",
            LoadType::Pump => "pump",
            LoadType::EvCharger => "ev_charger",
            LoadType::Substation => "substation",
            LoadType::Unknown => "unknown",
        }
    }
}

impl fmt::Display for LoadType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeterMetadata {
    pub meter_id: String,
    pub contractual_power_kw: Option<f64>,
    pub production_power_kw: Option<f64>,
    pub load_type: LoadType,
}

impl MeterMetadata {
    /// Nominal power limit used for outlier removal, if any is known.
    pub fn nominal_limit_kw(&self) -> Option<f64> {
        match (self.contractual_power_kw, self.production_power_kw) {
            (Some(c), Some(p)) => Some(c.max(p)),
            (Some(c), None) => Some(c),
            (None, Some(p)) => Some(p),
            (None, None) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub timestamp: NaiveDateTime,
    pub active_power_kw: Option<f64>,
    pub cumulative_energy_kwh: Option<f64>,
}

/// One meter's hourly samples, strictly increasing in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeterSeries {
    pub meter_id: String,
    pub samples: Vec<Sample>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadStats {
    pub parsed_rows: usize,
    pub skipped_rows: usize,
    pub duplicate_rows: usize,
    /// Cumulative-energy readings dropped because they decreased.
    pub energy_regressions: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Measurements {
    pub series: Vec<MeterSeries>,
    pub stats: LoadStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetadataSet {
    pub meters: Vec<MeterMetadata>,
    pub warnings: Vec<String>,
}

impl MetadataSet {
    pub fn get(&self, meter_id: &str) -> Option<&MeterMetadata> {
        self.meters.iter().find(|m| m.meter_id == meter_id)
    }

    pub fn by_id(&self) -> BTreeMap<&str, &MeterMetadata> {
        self.meters.iter().map(|m| (m.meter_id.as_str(), m)).collect()
    }
}

fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn check_header(
    path: &Path,
    headers: &csv::StringRecord,
    expected: &[&str],
) -> Result<(), IngestError> {
    let found: Vec<&str> = headers.iter().map(str::trim).collect();
    if found != expected {
        return Err(IngestError::MalformedHeader {
            path: path.to_path_buf(),
            expected: expected.join(","),
            found: found.join(","),
        });
    }
    Ok(())
}

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let ts = NaiveDateTime::parse_from_str(s.trim(), TIMESTAMP_FORMAT).ok()?;
    (ts.minute() == 0 && ts.second() == 0).then_some(ts)
}

/// `Ok(None)` for an empty cell, `Err(())` for garbage.
fn parse_optional_number(s: &str) -> Result<Option<f64>, ()> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(()),
    }
}

pub fn load_measurements(path: &Path) -> Result<Measurements, IngestError> {
    read_measurements(open(path)?, path)
}

pub fn read_measurements<R: Read>(reader: R, path: &Path) -> Result<Measurements, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_reader(reader);
    check_header(path, rdr.headers()?, &MEASUREMENT_HEADER)?;

    let mut stats = LoadStats::default();
    let mut by_meter: BTreeMap<String, BTreeMap<NaiveDateTime, Sample>> = BTreeMap::new();
    for record in rdr.records() {
        let record = match record {
            Ok(r) => r,
            Err(_) => {
                stats.skipped_rows += 1;
                continue;
            }
        };
        if record.len() < 3 || record.len() > 4 {
            stats.skipped_rows += 1;
            continue;
        }
        let meter_id = record[0].trim();
        let Some(timestamp) = parse_timestamp(&record[1]) else {
            stats.skipped_rows += 1;
            continue;
        };
        let Ok(active_power_kw) = parse_optional_number(&record[2]) else {
            stats.skipped_rows += 1;
            continue;
        };
        // A garbled energy cell only loses the energy channel.
        let cumulative_energy_kwh = record
            .get(3)
            .and_then(|s| parse_optional_number(s).ok())
            .flatten();
        if meter_id.is_empty() {
            stats.skipped_rows += 1;
            continue;
        }
        stats.parsed_rows += 1;
        let sample = Sample {
            timestamp,
            active_power_kw,
            cumulative_energy_kwh,
        };
        if by_meter
            .entry(meter_id.to_string())
            .or_default()
            .insert(timestamp, sample)
            .is_some()
        {
            stats.duplicate_rows += 1;
        }
    }
    if stats.parsed_rows == 0 {
        return Err(IngestError::ZeroParseableRows(path.to_path_buf()));
    }

    let series = by_meter
        .into_iter()
        .map(|(meter_id, samples)| {
            let mut samples: Vec<Sample> = samples.into_values().collect();
            stats.energy_regressions += enforce_monotone_energy(&mut samples);
            MeterSeries { meter_id, samples }
        })
        .collect();
    Ok(Measurements { series, stats })
}

/// Drop cumulative-energy readings that fall below the running maximum.
fn enforce_monotone_energy(samples: &mut [Sample]) -> usize {
    let mut dropped = 0;
    let mut high = f64::NEG_INFINITY;
    for s in samples.iter_mut() {
        if let Some(e) = s.cumulative_energy_kwh {
            if e < high {
                s.cumulative_energy_kwh = None;
                dropped += 1;
            } else {
                high = e;
            }
        }
    }
    dropped
}

pub fn load_metadata(path: &Path) -> Result<MetadataSet, IngestError> {
    read_metadata(open(path)?, path)
}

pub fn read_metadata<R: Read>(reader: R, path: &Path) -> Result<MetadataSet, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    check_header(path, rdr.headers()?, &METADATA_HEADER)?;

    let mut meters = Vec::new();
    let mut warnings = Vec::new();
    let mut seen = HashSet::new();
    for record in rdr.records() {
        let record = record?;
        let meter_id = record[0].trim().to_string();
        if !seen.insert(meter_id.clone()) {
            return Err(IngestError::DuplicateMeter(meter_id));
        }
        let power = |idx: usize, field: &'static str| -> Result<Option<f64>, IngestError> {
            let raw = record[idx].trim();
            if raw == "-" || raw.is_empty() {
                return Ok(None);
            }
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() && v >= 0.0 => Ok(Some(v)),
                _ => Err(IngestError::InvalidValue {
                    meter_id: meter_id.clone(),
                    field,
                    value: raw.to_string(),
                }),
            }
        };
        let contractual_power_kw = power(1, "contractual_power_kw")?;
        let production_power_kw = power(2, "production_kw")?;
        let load_type = LoadType::parse(&record[3]).unwrap_or_else(|| {
            let msg = format!(
                "meter {meter_id}: unknown load type `{}`, using unknown",
                record[3].trim()
            );
            log::warn!("{msg}");
            warnings.push(msg);
            LoadType::Unknown
        });
        meters.push(MeterMetadata {
            meter_id,
            contractual_power_kw,
            production_power_kw,
            load_type,
        });
    }
    Ok(MetadataSet { meters, warnings })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_measurements<W: Write>(writer: W, series: &[MeterSeries]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(MEASUREMENT_HEADER)?;
    for s in series {
        for sample in &s.samples {
            w.write_record([
                s.meter_id.clone(),
                sample.timestamp.format(TIMESTAMP_FORMAT).to_string(),
                fmt_opt(sample.active_power_kw),
                fmt_opt(sample.cumulative_energy_kwh),
            ])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_metadata<W: Write>(writer: W, meters: &[MeterMetadata]) -> Result<(), IngestError> {
    let dash = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_else(|| "-".to_string());
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(METADATA_HEADER)?;
    for m in meters {
        w.write_record([
            m.meter_id.clone(),
            dash(m.contractual_power_kw),
            dash(m.production_power_kw),
            m.load_type.as_str().to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedMeter {
    pub meter_id: String,
    pub reason: String,
}

/// Sample counts for one meter, by calendar month and by weekday x hour.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleCounts {
    pub meter_id: String,
    /// Keyed by `YYYY-MM`.
    pub by_month: BTreeMap<String, usize>,
    /// `by_weekday_hour[weekday][hour]`, Monday = 0.
    pub by_weekday_hour: Vec<[usize; 24]>,
    pub complete_days: usize,
}

impl SampleCounts {
    pub fn total(&self) -> usize {
        self.by_month.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub accepted_meters: Vec<String>,
    pub rejected_meters: Vec<RejectedMeter>,
    pub sample_counts: Vec<SampleCounts>,
}

pub const REASON_NO_METADATA: &str = "no metadata";
pub const REASON_INSUFFICIENT_DAYS: &str = "insufficient days";

/// Accept or reject every meter. A meter is rejected when it has no metadata
/// row or would yield fewer than `min_days` complete days after outlier
/// removal and imputation.
pub fn validate_dataset(
    series: &[MeterSeries],
    metadata: &MetadataSet,
    min_days: usize,
    config: &PreprocessConfig,
) -> ValidationReport {
    let min_days = min_days.max(1);
    let lookup = metadata.by_id();
    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    let mut counts = Vec::new();
    for s in series {
        let meta = lookup.get(s.meter_id.as_str());
        let complete_days = meta
            .map(|m| preprocess::preprocess_meter(s, m, config).profiles.len())
            .unwrap_or(0);
        counts.push(sample_counts(s, complete_days));
        match meta {
            None => rejected.push(RejectedMeter {
                meter_id: s.meter_id.clone(),
                reason: REASON_NO_METADATA.to_string(),
            }),
            Some(_) if complete_days < min_days => rejected.push(RejectedMeter {
                meter_id: s.meter_id.clone(),
                reason: format!("{REASON_INSUFFICIENT_DAYS} ({complete_days} < {min_days})"),
            }),
            Some(_) => accepted.push(s.meter_id.clone()),
        }
    }
    ValidationReport {
        accepted_meters: accepted,
        rejected_meters: rejected,
        sample_counts: counts,
    }
}

fn sample_counts(series: &MeterSeries, complete_days: usize) -> SampleCounts {
    let mut by_month = BTreeMap::new();
    let mut by_weekday_hour = vec![[0usize; 24]; 7];
    for s in &series.samples {
        let ts = s.timestamp;
        *by_month
            .entry(format!("{:04}-{:02}", ts.year(), ts.month()))
            .or_insert(0) += 1;
        by_weekday_hour[ts.weekday().num_days_from_monday() as usize][ts.hour() as usize] += 1;
    }
    SampleCounts {
        meter_id: series.meter_id.clone(),
        by_month,
        by_weekday_hour,
        complete_days,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn measurements(text: &str) -> Result<Measurements, IngestError> {
        read_measurements(text.as_bytes(), Path::new("test.csv"))
    }

    fn metadata(text: &str) -> Result<MetadataSet, IngestError> {
        read_metadata(text.as_bytes(), Path::new("meta.csv"))
    }

    const HEADER: &str = "meter_id,timestamp,active_power_kw,cumulative_energy_kwh\n";

    #[test]
    fn two_meters_full_day() {
        let mut text = HEADER.to_string();
        for m in ["A", "B"] {
            for h in 0..24 {
                text += &format!("{m},2021-03-01T{h:02}:00:00,1.5,\n");
            }
        }
        let out = measurements(&text).unwrap();
        assert_eq!(out.series.len(), 2);
        assert!(out.series.iter().all(|s| s.samples.len() == 24));
        assert_eq!(out.stats.duplicate_rows, 0);
    }

    #[test]
    fn duplicate_keeps_last() {
        let text = format!(
            "{HEADER}A,2021-03-01T00:00:00,1.0,10\nA,2021-03-01T01:00:00,2.0,12\nA,2021-03-01T00:00:00,3.0,10\n"
        );
        let out = measurements(&text).unwrap();
        assert_eq!(out.stats.duplicate_rows, 1);
        assert_eq!(out.series[0].samples.len(), 2);
        assert_eq!(out.series[0].samples[0].active_power_kw, Some(3.0));
    }

    #[test]
    fn bad_rows_are_skipped() {
        let text = format!(
            "{HEADER}A,2021-03-01T00:30:00,1.0,\nA,garbage,1.0,\nA,2021-03-01T01:00:00,abc,\nA,2021-03-01T02:00:00,,5\n"
        );
        let out = measurements(&text).unwrap();
        assert_eq!(out.stats.skipped_rows, 3);
        assert_eq!(out.stats.parsed_rows, 1);
        assert_eq!(out.series[0].samples[0].active_power_kw, None);
        assert_eq!(out.series[0].samples[0].cumulative_energy_kwh, Some(5.0));
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(matches!(measurements(HEADER), Err(IngestError::ZeroParseableRows(_))));
        assert!(matches!(
            measurements("id,ts,p,e\n"),
            Err(IngestError::MalformedHeader { .. })
        ));
    }

    #[test]
    fn missing_file_is_an_error() {
        let err = load_measurements(Path::new("/nonexistent/measurements.csv")).unwrap_err();
        assert!(matches!(err, IngestError::Io { .. }));
    }

    #[test]
    fn decreasing_energy_is_dropped() {
        let text = format!(
            "{HEADER}A,2021-03-01T00:00:00,1,10\nA,2021-03-01T01:00:00,1,9\nA,2021-03-01T02:00:00,1,11\n"
        );
        let out = measurements(&text).unwrap();
        assert_eq!(out.stats.energy_regressions, 1);
        let e: Vec<_> = out.series[0].samples.iter().map(|s| s.cumulative_energy_kwh).collect();
        assert_eq!(e, vec![Some(10.0), None, Some(11.0)]);
    }

    #[test]
    fn metadata_rows() {
        let meta = metadata(
            "meter_id,contractual_power_kw,production_kw,type\nBBB6168,3,0,household\nBBB6007,-,-,pump\nX1,5,-,factory\nBBB6103,22,0,electric vehicle charging station\nBBB6032,165,0,Pump\n",
        )
        .unwrap();
        let a = meta.get("BBB6168").unwrap();
        assert_eq!(a.contractual_power_kw, Some(3.0));
        assert_eq!(a.production_power_kw, Some(0.0));
        assert_eq!(a.load_type, LoadType::Household);
        let b = meta.get("BBB6007").unwrap();
        assert_eq!((b.contractual_power_kw, b.production_power_kw), (None, None));
        assert_eq!(b.load_type, LoadType::Pump);
        assert_eq!(meta.get("X1").unwrap().load_type, LoadType::Unknown);
        assert_eq!(meta.warnings.len(), 1);
        assert_eq!(meta.get("BBB6103").unwrap().load_type, LoadType::EvCharger);
        assert_eq!(meta.get("BBB6032").unwrap().load_type, LoadType::Pump);
    }

    #[test]
    fn metadata_duplicates_rejected() {
        let err = metadata("meter_id,contractual_power_kw,production_kw,type\nA,1,1,pool\nA,2,2,pool\n")
            .unwrap_err();
        assert!(matches!(err, IngestError::DuplicateMeter(id) if id == "A"));
    }

    fn full_days(meter: &str, days: u32) -> MeterSeries {
        let start = NaiveDateTime::parse_from_str("2020-01-01T00:00:00", TIMESTAMP_FORMAT).unwrap();
        let samples = (0..days as i64 * 24)
            .map(|h| Sample {
                timestamp: start + chrono::Duration::hours(h),
                active_power_kw: Some(1.0),
                cumulative_energy_kwh: None,
            })
            .collect();
        MeterSeries {
            meter_id: meter.to_string(),
            samples,
        }
    }

    #[test]
    fn validation_thresholds() {
        let meta = MetadataSet {
            meters: ["A", "B"]
                .iter()
                .map(|id| MeterMetadata {
                    meter_id: id.to_string(),
                    contractual_power_kw: Some(3.0),
                    production_power_kw: Some(0.0),
                    load_type: LoadType::Household,
                })
                .collect(),
            warnings: vec![],
        };
        let series = vec![full_days("A", 400), full_days("B", 10), full_days("C", 40)];
        let report = validate_dataset(&series, &meta, 30, &PreprocessConfig::default());
        assert_eq!(report.accepted_meters, vec!["A"]);
        assert_eq!(report.rejected_meters.len(), 2);
        assert!(report.rejected_meters[0].reason.starts_with(REASON_INSUFFICIENT_DAYS));
        assert_eq!(report.rejected_meters[1].reason, REASON_NO_METADATA);
        let total: usize = report.sample_counts.iter().map(SampleCounts::total).sum();
        assert_eq!(total, (400 + 10 + 40) * 24);
        let wh: usize = report.sample_counts[0].by_weekday_hour.iter().flatten().sum();
        assert_eq!(wh, 400 * 24);
    }
}
