//! Grid search over clustering configurations and its on-disk log.

mod report;
mod select;

pub use report::{emit_report, ReportBundle, ReportInputs};
pub use select::{pareto_front, select_best, Selection, SelectionCriteria};

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{fit_model, Algorithm, ClusterError, FitSettings, Linkage, MatrixCache, ModelSpec};
use crate::distance::DistanceMeasure;
use crate::metrics::{EvaluationReport, Evaluator, DEFAULT_PROMINENCE};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{n} profiles cannot support k = {k}; k must be at most n - 1")]
    InsufficientProfiles { n: usize, k: usize },
    #[error("invalid k range [{0}, {1}]")]
    InvalidRange(usize, usize),
    #[error("experiment log is empty")]
    EmptyLog,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub algorithms: Vec<Algorithm>,
    pub measures: Vec<DistanceMeasure>,
    pub k_min: usize,
    pub k_max: usize,
    pub linkage: Linkage,
    pub settings: FitSettings,
    pub prominence: f64,
    /// Measure behind the silhouette-DTW score.
    pub silhouette_dtw: DistanceMeasure,
}

impl GridSpec {
    /// All three algorithms under Euclidean and DTW (radius 1).
    pub fn full(k_min: usize, k_max: usize, seed: u64) -> Self {
        let dtw = DistanceMeasure::DtwConstrained { sakoe_chiba_radius: 1 };
        GridSpec {
            algorithms: Algorithm::ALL.to_vec(),
            measures: vec![DistanceMeasure::Euclidean, dtw],
            k_min,
            k_max,
            linkage: Linkage::Ward,
            settings: FitSettings {
                seed,
                ..FitSettings::default()
            },
            prominence: DEFAULT_PROMINENCE,
            silhouette_dtw: dtw,
        }
    }

    /// Configurations in log order: algorithm, then measure, then k.
    pub fn configurations(&self) -> Vec<ModelSpec> {
        let mut out = Vec::new();
        for &algorithm in &self.algorithms {
            for &measure in &self.measures {
                for k in self.k_min..=self.k_max {
                    out.push(ModelSpec {
                        algorithm,
                        measure,
                        k,
                        linkage: self.linkage,
                    });
                }
            }
        }
        out
    }
}

pub fn run_id(spec: &ModelSpec) -> String {
    format!("{}-{}-k{}", spec.algorithm.as_str(), spec.measure.label(), spec.k)
}

/// One logged configuration. Metric fields are `None` when the fit or the
/// evaluation failed, in which case `error` says why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub run_id: String,
    pub algorithm: Algorithm,
    pub measure: DistanceMeasure,
    pub k: usize,
    pub seed: u64,
    pub report: Option<EvaluationReport>,
    pub wall_time_s: f64,
    pub error: Option<String>,
}

impl ExperimentRow {
    /// Metric columns only, for comparing runs.
    pub fn metrics(&self) -> Option<[f64; 6]> {
        self.report.as_ref().map(|r| {
            [
                r.pms,
                r.pps,
                r.pps_relaxed,
                r.silhouette,
                r.silhouette_dtw,
                r.davies_bouldin,
            ]
        })
    }
}

pub const LOG_HEADER: [&str; 13] = [
    "run_id",
    "algorithm",
    "measure",
    "k",
    "seed",
    "pms",
    "pps",
    "pps_relaxed",
    "silhouette",
    "silhouette_dtw",
    "davies_bouldin",
    "wall_time_s",
    "error",
];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentLog {
    pub rows: Vec<ExperimentRow>,
}

fn row_record(row: &ExperimentRow) -> Vec<String> {
    let mut rec = vec![
        row.run_id.clone(),
        row.algorithm.as_str().to_string(),
        row.measure.label(),
        row.k.to_string(),
        row.seed.to_string(),
    ];
    match row.metrics() {
        Some(m) => rec.extend(m.iter().map(|v| v.to_string())),
        None => rec.extend(std::iter::repeat(String::new()).take(6)),
    }
    rec.push(format!("{:.3}", row.wall_time_s));
    rec.push(row.error.clone().unwrap_or_default());
    rec
}

impl ExperimentLog {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), ExperimentError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(LOG_HEADER)?;
        for row in &self.rows {
            w.write_record(row_record(row))?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, path: &Path) -> Result<Self, ExperimentError> {
        let fmt = |message: String| ExperimentError::Format {
            path: path.to_path_buf(),
            message,
        };
        let mut rdr = csv::Reader::from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header != LOG_HEADER {
            return Err(fmt(format!("expected header {}", LOG_HEADER.join(","))));
        }
        let mut rows = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let at = |msg: &str| fmt(format!("row {}: {msg}", line + 1));
            let algorithm: Algorithm = rec[1].parse().map_err(|_| at("bad algorithm"))?;
            let measure = DistanceMeasure::parse_label(&rec[2]).ok_or_else(|| at("bad measure"))?;
            let k: usize = rec[3].parse().map_err(|_| at("bad k"))?;
            let seed: u64 = rec[4].parse().map_err(|_| at("bad seed"))?;
            let error = (!rec[12].is_empty()).then(|| rec[12].to_string());
            let report = if rec[5].is_empty() {
                None
            } else {
                let mut m = [0.0; 6];
                for (i, v) in m.iter_mut().enumerate() {
                    *v = rec[5 + i].parse().map_err(|_| at("bad metric"))?;
                }
                Some(EvaluationReport {
                    algorithm,
                    measure,
                    k,
                    pms: m[0],
                    pps: m[1],
                    pps_relaxed: m[2],
                    silhouette: m[3],
                    silhouette_dtw: m[4],
                    davies_bouldin: m[5],
                })
            };
            rows.push(ExperimentRow {
                run_id: rec[0].to_string(),
                algorithm,
                measure,
                k,
                seed,
                report,
                wall_time_s: rec[11].parse().unwrap_or(0.0),
                error,
            });
        }
        Ok(ExperimentLog { rows })
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let f = File::open(path).map_err(io_err(path))?;
        Self::read_csv(f, path)
    }
}

/// Appends rows to `<log>.csv` and one JSON object per row to the sibling
/// `.jsonl` file, flushing after each row.
pub struct LogWriter {
    csv: csv::Writer<BufWriter<File>>,
    jsonl: BufWriter<File>,
    path: PathBuf,
}

impl LogWriter {
    pub fn create(path: &Path) -> Result<Self, ExperimentError> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        let f = File::create(path).map_err(io_err(path))?;
        let mut csv = csv::Writer::from_writer(BufWriter::new(f));
        csv.write_record(LOG_HEADER)?;
        csv.flush().map_err(io_err(path))?;
        let jpath = path.with_extension("jsonl");
        let j = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(&jpath)
            .map_err(io_err(&jpath))?;
        Ok(LogWriter {
            csv,
            jsonl: BufWriter::new(j),
            path: path.to_path_buf(),
        })
    }

    pub fn append(&mut self, row: &ExperimentRow) -> Result<(), ExperimentError> {
        self.csv.write_record(row_record(row))?;
        self.csv.flush().map_err(io_err(&self.path))?;
        serde_json::to_writer(&mut self.jsonl, row)?;
        self.jsonl.write_all(b"\n").map_err(io_err(&self.path))?;
        self.jsonl.flush().map_err(io_err(&self.path))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    pub log: ExperimentLog,
    /// Distance-matrix builds per measure during the run.
    pub matrix_computations: BTreeMap<String, usize>,
    pub sampled: bool,
}

/// Fit and evaluate every configuration of `spec`. Rows reach `writer` in
/// configuration order as soon as each is available.
pub fn grid_search(
    profiles: &[Vec<f64>],
    spec: &GridSpec,
    mut writer: Option<&mut LogWriter>,
) -> Result<GridOutcome, ExperimentError> {
    if spec.k_min < 2 || spec.k_min > spec.k_max {
        return Err(ExperimentError::InvalidRange(spec.k_min, spec.k_max));
    }
    let n = profiles.len();
    if spec.k_max + 1 > n {
        return Err(ExperimentError::InsufficientProfiles { n, k: spec.k_max });
    }
    let cache = MatrixCache::new(profiles, spec.settings.matrix_limit, spec.settings.seed);
    if cache.is_sampled() {
        info!(
            "distance matrices use a seeded sample of {} of {} profiles",
            cache.sample().len(),
            n
        );
    }
    let evaluator = Evaluator::new(&cache, spec.prominence, spec.silhouette_dtw);
    let configs = spec.configurations();
    let total = configs.len();

    let run = |cfg: &ModelSpec| -> ExperimentRow {
        let started = Instant::now();
        let result = fit_model(&cache, cfg, &spec.settings)
            .map_err(|e| e.to_string())
            .and_then(|model| evaluator.evaluate(&model).map_err(|e| e.to_string()));
        let wall_time_s = started.elapsed().as_secs_f64();
        let (report, error) = match result {
            Ok(r) => (Some(r), None),
            Err(e) => {
                warn!("{}: {e}", run_id(cfg));
                (None, Some(e))
            }
        };
        ExperimentRow {
            run_id: run_id(cfg),
            algorithm: cfg.algorithm,
            measure: cfg.measure,
            k: cfg.k,
            seed: spec.settings.seed,
            report,
            wall_time_s,
            error,
        }
    };

    let mut rows: Vec<Option<ExperimentRow>> = vec![None; total];
    let mut write_error = None;
    let (tx, rx) = mpsc::channel::<(usize, ExperimentRow)>();
    std::thread::scope(|scope| {
        let configs = &configs;
        let run = &run;
        scope.spawn(move || {
            configs.par_iter().enumerate().for_each_with(tx, |tx, (i, cfg)| {
                let _ = tx.send((i, run(cfg)));
            });
        });
        let mut next = 0;
        for (i, row) in rx {
            rows[i] = Some(row);
            while next < total {
                let Some(row) = rows[next].as_ref() else { break };
                info!("[{}/{}] {} done in {:.1}s", next + 1, total, row.run_id, row.wall_time_s);
                if let Some(w) = writer.as_deref_mut() {
                    if write_error.is_none() {
                        write_error = w.append(row).err();
                    }
                }
                next += 1;
            }
        }
    });
    if let Some(e) = write_error {
        return Err(e);
    }
    let mut matrix_computations = BTreeMap::new();
    for &m in spec.measures.iter().chain([&DistanceMeasure::Euclidean, &spec.silhouette_dtw]) {
        matrix_computations.insert(m.label(), cache.computations(m));
    }
    Ok(GridOutcome {
        log: ExperimentLog {
            rows: rows.into_iter().map(|r| r.expect("every configuration ran")).collect(),
        },
        matrix_computations,
        sampled: cache.is_sampled(),
    })
}
