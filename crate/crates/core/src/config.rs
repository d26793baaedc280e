//! Line-oriented `key = value` configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are an
//! error so typos do not pass silently.

use std::path::Path;

use thiserror::Error;

use crate::clustering::{Algorithm, FitSettings, Linkage};
use crate::distance::DistanceMeasure;
use crate::dr_engine::{parse_windows, DrConfig};
use crate::experiments::SelectionCriteria;
use crate::metrics::DEFAULT_PROMINENCE;
use crate::preprocess::PreprocessConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: invalid value for `{key}`: {message}")]
    InvalidValue { line: usize, key: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub preprocess: PreprocessConfig,
    pub measure: DistanceMeasure,
    pub algorithm: Algorithm,
    pub k: Option<usize>,
    pub linkage: Linkage,
    pub fit: FitSettings,
    pub prominence: f64,
    pub selection: SelectionCriteria,
    pub dr: DrConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            preprocess: PreprocessConfig::default(),
            measure: DistanceMeasure::DtwConstrained { sakoe_chiba_radius: 1 },
            algorithm: Algorithm::Kmeans,
            k: None,
            linkage: Linkage::Ward,
            fit: FitSettings::default(),
            prominence: DEFAULT_PROMINENCE,
            selection: SelectionCriteria::default(),
            dr: DrConfig::default(),
        }
    }
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(format!("`{s}` is not a boolean")),
    }
}

fn parse_num<T: std::str::FromStr>(s: &str) -> Result<T, String> {
    s.parse().map_err(|_| format!("`{s}` is not a valid number"))
}

fn parse_hour(s: &str) -> Result<u32, String> {
    let (h, m) = s.trim().split_once(':').ok_or_else(|| format!("`{s}` is not HH:MM"))?;
    let h: u32 = parse_num(h)?;
    if m != "00" || h > 24 {
        return Err(format!("`{s}` must be a whole hour"));
    }
    Ok(h % 24)
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Config::default();
        let mut kind: Option<String> = None;
        let mut radius = 1usize;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let t = raw.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let (key, value) = t.split_once('=').ok_or(ConfigError::Syntax { line })?;
            let (key, value) = (key.trim(), value.trim());
            let invalid = |message: String| ConfigError::InvalidValue {
                line,
                key: key.to_string(),
                message,
            };
            match key {
                "outlier.enabled" => cfg.preprocess.outlier_enabled = parse_bool(value).map_err(invalid)?,
                "impute.max_gap_hours" => cfg.preprocess.max_gap_hours = parse_num(value).map_err(invalid)?,
                "impute.night_window" => {
                    let (a, b) = value
                        .split_once('-')
                        .ok_or_else(|| invalid("expected HH:MM-HH:MM".into()))?;
                    cfg.preprocess.night_start_hour = parse_hour(a).map_err(invalid)?;
                    cfg.preprocess.night_end_hour = parse_hour(b).map_err(invalid)?;
                }
                "distance.kind" => kind = Some(value.to_ascii_lowercase()),
                "distance.radius" => radius = parse_num(value).map_err(invalid)?,
                "cluster.algorithm" => cfg.algorithm = value.parse().map_err(invalid)?,
                "cluster.k" => cfg.k = Some(parse_num(value).map_err(invalid)?),
                "cluster.seed" => cfg.fit.seed = parse_num(value).map_err(invalid)?,
                "cluster.n_init" => cfg.fit.n_init = parse_num(value).map_err(invalid)?,
                "cluster.max_iter" => cfg.fit.max_iter = parse_num(value).map_err(invalid)?,
                "cluster.dba_iters" => cfg.fit.dba_iters = parse_num(value).map_err(invalid)?,
                "cluster.matrix_limit" => cfg.fit.matrix_limit = parse_num(value).map_err(invalid)?,
                "cluster.linkage" => cfg.linkage = value.parse().map_err(invalid)?,
                "metrics.prominence" => cfg.prominence = parse_num(value).map_err(invalid)?,
                "select.min_k" => cfg.selection.min_k = parse_num(value).map_err(invalid)?,
                "select.top_fraction" => cfg.selection.top_fraction = parse_num(value).map_err(invalid)?,
                "dr.rpf_windows" => cfg.dr.rpf_windows = parse_windows(value).map_err(|e| invalid(e.to_string()))?,
                "dr.peak_window" => cfg.dr.peak_window = value.parse().map_err(|e: crate::dr_engine::DrError| invalid(e.to_string()))?,
                "dr.working_hours_ratio" => cfg.dr.working_hours_ratio = parse_num(value).map_err(invalid)?,
                "dr.dominant_type_threshold" => cfg.dr.dominant_type_threshold = parse_num(value).map_err(invalid)?,
                _ => {
                    return Err(ConfigError::UnknownKey {
                        line,
                        key: key.to_string(),
                    })
                }
            }
            if key.starts_with("distance.") {
                cfg.measure = match kind.as_deref() {
                    Some("euclidean") => DistanceMeasure::Euclidean,
                    Some("dtw") | Some("dtw_constrained") | None => {
                        DistanceMeasure::dtw(radius).map_err(|e| invalid(e.to_string()))?
                    }
                    Some(other) => return Err(invalid(format!("unknown distance `{other}`"))),
                };
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }
}
