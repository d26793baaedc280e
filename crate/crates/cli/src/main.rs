use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use flexseg::clustering::{fit_model, Algorithm, ClusterModel, Hyperparameters, MatrixCache, ModelDocument, ModelSpec};
use flexseg::config::Config;
use flexseg::distance::DistanceMeasure;
use flexseg::dr_engine::recommend_for_model;
use flexseg::entropy::{assign_from_model, assign_prosumers, membership_distributions, read_assignments, write_assignments};
use flexseg::experiments::{emit_report, grid_search, select_best, ExperimentLog, GridSpec, LogWriter, ReportInputs};
use flexseg::ingest::{load_measurements, load_metadata, validate_dataset, write_measurements, write_metadata, MetadataSet};
use flexseg::metrics::Evaluator;
use flexseg::preprocess::{preprocess_dataset, read_profiles, write_profiles, DailyProfile, ProfileKey, ProfileSet};

const SERIES_FILE: &str = "series.csv";
const METADATA_FILE: &str = "metadata.csv";
const PROFILES_FILE: &str = "profiles.csv";

/// Bad invocation rather than bad data; exits with status 1.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Parser)]
#[command(name = "flexseg", version, about = "Load-profile segmentation and demand-response recommendation")]
struct Cli {
    /// Key-value configuration file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate raw measurements and metadata.
    Ingest {
        #[arg(long)]
        measurements: PathBuf,
        #[arg(long)]
        metadata: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Minimum number of complete days for a meter to be accepted.
        #[arg(long, default_value_t = 1)]
        min_days: usize,
    },
    /// Clean, impute, slice into days and normalize.
    Preprocess {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        max_gap_hours: Option<usize>,
        /// Skip outlier removal.
        #[arg(long)]
        no_outliers: bool,
    },
    /// Fit one clustering model.
    Cluster {
        #[arg(long)]
        profiles: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit and evaluate every algorithm x distance x k configuration.
    Gridsearch {
        #[arg(long)]
        profiles: PathBuf,
        #[arg(long, default_value_t = 3)]
        k_min: usize,
        #[arg(long, default_value_t = 20)]
        k_max: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        log: PathBuf,
    },
    /// Choose a run from an experiment log.
    Select {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        min_k: Option<usize>,
        #[arg(long)]
        top_fraction: Option<f64>,
    },
    /// Compute validity metrics for a fitted model.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        profiles: PathBuf,
    },
    /// Assign each meter to one cluster with its membership entropy.
    Assign {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        profiles: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recommend demand-response schemes per prosumer cluster.
    Recommend {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        assignments: PathBuf,
        #[arg(long)]
        metadata: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write centroid curves and summary tables.
    Report {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Profile directory used for member quantiles and prosumer tie-breaks.
        #[arg(long)]
        profiles: Option<PathBuf>,
        /// Defaults to the metadata next to the profiles.
        #[arg(long)]
        metadata: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    algorithm: Option<String>,
    /// `euclidean`, `dtw` or `dtwN` for a band radius of N hours.
    #[arg(long)]
    distance: Option<String>,
    #[arg(long)]
    radius: Option<usize>,
    #[arg(long)]
    linkage: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_init: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => Config::load(path).map_err(|e| usage(e.to_string()))?,
        None => Config::default(),
    };
    match cli.command {
        Command::Ingest {
            measurements,
            metadata,
            out,
            min_days,
        } => ingest(&config, &measurements, &metadata, &out, min_days),
        Command::Preprocess {
            input,
            out,
            max_gap_hours,
            no_outliers,
        } => {
            let mut config = config;
            if let Some(h) = max_gap_hours {
                config.preprocess.max_gap_hours = h;
            }
            if no_outliers {
                config.preprocess.outlier_enabled = false;
            }
            preprocess(&config, &input, &out)
        }
        Command::Cluster { profiles, model, k, out } => cluster(config, &profiles, &model, k, &out),
        Command::Gridsearch {
            profiles,
            k_min,
            k_max,
            seed,
            log,
        } => gridsearch(&config, &profiles, k_min, k_max, seed, &log),
        Command::Select {
            log,
            min_k,
            top_fraction,
        } => {
            let mut criteria = config.selection;
            if let Some(m) = min_k {
                criteria.min_k = m;
            }
            if let Some(f) = top_fraction {
                criteria.top_fraction = f;
            }
            if criteria.min_k < 2 || !(criteria.top_fraction > 0.0 && criteria.top_fraction <= 1.0) {
                return Err(usage("--min-k must be at least 2 and --top-fraction in (0, 1]"));
            }
            let log = ExperimentLog::load(&log)?;
            let selection = select_best(&log, &criteria)?;
            print_json(&selection)
        }
        Command::Evaluate { model, profiles } => evaluate(&config, &model, &profiles),
        Command::Assign { model, profiles, out } => {
            let (doc, model) = load_model(&model)?;
            let values = aligned_profiles(&doc, &profiles)?;
            let assignments = assign_from_model(&model, &values, &doc.keys())?;
            write_assignments(create(&out)?, &assignments)?;
            info!("{} meters assigned", assignments.len());
            Ok(())
        }
        Command::Recommend {
            model,
            assignments,
            metadata,
            out,
        } => {
            let (_, model) = load_model(&model)?;
            let assignments = read_assignments(open(&assignments)?, &assignments)?;
            let metadata = load_metadata(&metadata)?;
            let recs = recommend_for_model(&model, &assignments, &metadata.meters, &config.dr)?;
            serde_json::to_writer_pretty(BufWriter::new(create(&out)?), &recs)?;
            Ok(())
        }
        Command::Report {
            model,
            out,
            profiles,
            metadata,
        } => report(&config, &model, &out, profiles.as_deref(), metadata.as_deref()),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("cannot open {}", path.display()))?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn ingest(config: &Config, measurements: &Path, metadata: &Path, out: &Path, min_days: usize) -> Result<()> {
    let data = load_measurements(measurements)?;
    let meta = load_metadata(metadata)?;
    for w in &meta.warnings {
        warn!("{w}");
    }
    let report = validate_dataset(&data.series, &meta, min_days, &config.preprocess);
    for r in &report.rejected_meters {
        warn!("rejected {}: {}", r.meter_id, r.reason);
    }
    let accepted: Vec<_> = data
        .series
        .iter()
        .filter(|s| report.accepted_meters.contains(&s.meter_id))
        .cloned()
        .collect();
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    write_measurements(create(&out.join(SERIES_FILE))?, &accepted)?;
    write_metadata(create(&out.join(METADATA_FILE))?, &meta.meters)?;
    let summary = serde_json::json!({
        "load_stats": data.stats,
        "validation": report,
    });
    serde_json::to_writer_pretty(create(&out.join("validation.json"))?, &summary)?;
    info!("{} meters accepted", accepted.len());
    Ok(())
}

fn preprocess(config: &Config, input: &Path, out: &Path) -> Result<()> {
    let data = load_measurements(&input.join(SERIES_FILE))?;
    let meta = load_metadata(&input.join(METADATA_FILE))?;
    let (outcomes, profiles) = preprocess_dataset(&data.series, &meta, &config.preprocess);
    for o in &outcomes {
        for w in &o.warnings {
            warn!("{}: {w}", o.meter_id);
        }
    }
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    write_profiles(create(&out.join(PROFILES_FILE))?, &profiles)?;
    write_metadata(create(&out.join(METADATA_FILE))?, &meta.meters)?;
    let summary: Vec<_> = outcomes
        .iter()
        .map(|o| {
            serde_json::json!({
                "meter_id": o.meter_id,
                "profiles": o.profiles.len(),
                "outliers_removed": o.outliers_removed,
                "imputed": o.impute,
                "dropped_days": o.dropped_days,
            })
        })
        .collect();
    serde_json::to_writer_pretty(create(&out.join("preprocess.json"))?, &summary)?;
    info!("{} profiles from {} meters", profiles.len(), outcomes.len());
    Ok(())
}

fn load_profiles(dir: &Path) -> Result<Vec<DailyProfile>> {
    let path = dir.join(PROFILES_FILE);
    let profiles = read_profiles(open(&path)?, &path)?;
    if profiles.is_empty() {
        bail!("{} contains no profiles", path.display());
    }
    Ok(profiles)
}

fn resolve_measure(config: &Config, args: &ModelArgs) -> Result<DistanceMeasure> {
    let configured_radius = match config.measure {
        DistanceMeasure::DtwConstrained { sakoe_chiba_radius } => sakoe_chiba_radius,
        DistanceMeasure::Euclidean => 1,
    };
    let dtw = |r: usize| DistanceMeasure::dtw(r).map_err(|e| usage(e.to_string()));
    match (args.distance.as_deref(), args.radius) {
        (Some(d), r) if d.eq_ignore_ascii_case("dtw") => dtw(r.unwrap_or(configured_radius)),
        (Some(d), _) => DistanceMeasure::parse_label(d).ok_or_else(|| usage(format!("unknown distance `{d}`"))),
        (None, Some(r)) => dtw(r),
        (None, None) => Ok(config.measure),
    }
}

fn cluster(mut config: Config, dir: &Path, args: &ModelArgs, k: Option<usize>, out: &Path) -> Result<()> {
    let algorithm = match &args.algorithm {
        Some(a) => a.parse::<Algorithm>().map_err(usage)?,
        None => config.algorithm,
    };
    let measure = resolve_measure(&config, args)?;
    let linkage = match &args.linkage {
        Some(l) => l.parse().map_err(usage)?,
        None => config.linkage,
    };
    let k = k.or(config.k).ok_or_else(|| usage("--k is required (or set cluster.k)"))?;
    if let Some(s) = args.seed {
        config.fit.seed = s;
    }
    if let Some(n) = args.n_init {
        config.fit.n_init = n;
    }
    if let Some(m) = args.max_iter {
        config.fit.max_iter = m;
    }
    let profiles = load_profiles(dir)?;
    let set = ProfileSet::from_profiles(&profiles);
    let cache = MatrixCache::new(&set.values, config.fit.matrix_limit, config.fit.seed);
    let spec = ModelSpec {
        algorithm,
        measure,
        k,
        linkage,
    };
    let model = fit_model(&cache, &spec, &config.fit)?;
    for w in &model.warnings {
        warn!("{w}");
    }
    let hyper = Hyperparameters {
        n_init: config.fit.n_init,
        max_iter: config.fit.max_iter,
        dba_iters: config.fit.dba_iters,
        linkage: None,
        matrix_limit: config.fit.matrix_limit,
    };
    let doc = ModelDocument::new(&model, &set.keys, hyper);
    serde_json::to_writer_pretty(create(out)?, &doc)?;
    info!("fitted {} with inertia {}", flexseg::experiments::run_id(&spec), model.inertia);
    Ok(())
}

fn gridsearch(config: &Config, dir: &Path, k_min: usize, k_max: usize, seed: Option<u64>, log: &Path) -> Result<()> {
    if k_min < 2 || k_min > k_max {
        return Err(usage(format!("invalid k range [{k_min}, {k_max}]")));
    }
    let profiles = load_profiles(dir)?;
    let set = ProfileSet::from_profiles(&profiles);
    let mut spec = GridSpec::full(k_min, k_max, seed.unwrap_or(config.fit.seed));
    spec.settings = flexseg::clustering::FitSettings {
        seed: spec.settings.seed,
        ..config.fit
    };
    spec.linkage = config.linkage;
    spec.prominence = config.prominence;
    if let Some(parent) = log.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
    }
    let mut writer = LogWriter::create(log)?;
    let outcome = grid_search(&set.values, &spec, Some(&mut writer))?;
    let failed = outcome.log.rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        warn!("{failed} configurations failed; see the error column");
    }
    info!("{} rows written to {}", outcome.log.rows.len(), log.display());
    Ok(())
}

fn load_model(path: &Path) -> Result<(ModelDocument, ClusterModel)> {
    let doc: ModelDocument =
        serde_json::from_reader(open(path)?).with_context(|| format!("{} is not a model document", path.display()))?;
    let model = doc.to_model()?;
    Ok((doc, model))
}

/// Profile values in the order of the model's labels.
fn aligned_profiles(doc: &ModelDocument, dir: &Path) -> Result<Vec<Vec<f64>>> {
    let profiles = load_profiles(dir)?;
    let by_key: std::collections::HashMap<ProfileKey, &DailyProfile> = profiles.iter().map(|p| (p.key(), p)).collect();
    doc.keys()
        .iter()
        .map(|key| {
            by_key
                .get(key)
                .map(|p| p.values.to_vec())
                .with_context(|| format!("profile {} {} is missing from {}", key.meter_id, key.date, dir.display()))
        })
        .collect()
}

fn evaluate(config: &Config, model_path: &Path, dir: &Path) -> Result<()> {
    let (doc, model) = load_model(model_path)?;
    let values = aligned_profiles(&doc, dir)?;
    let cache = MatrixCache::new(&values, doc.hyperparameters.matrix_limit, model.seed);
    let dtw = match model.measure {
        m @ DistanceMeasure::DtwConstrained { .. } => m,
        DistanceMeasure::Euclidean => match config.measure {
            m @ DistanceMeasure::DtwConstrained { .. } => m,
            DistanceMeasure::Euclidean => DistanceMeasure::DtwConstrained { sakoe_chiba_radius: 1 },
        },
    };
    let report = Evaluator::new(&cache, config.prominence, dtw).evaluate(&model)?;
    print_json(&report)
}

fn report(config: &Config, model_path: &Path, out: &Path, profiles: Option<&Path>, metadata: Option<&Path>) -> Result<()> {
    let (doc, model) = load_model(model_path)?;
    let keys = doc.keys();
    let values = profiles.map(|dir| aligned_profiles(&doc, dir)).transpose()?;
    let meta_path = metadata
        .map(Path::to_path_buf)
        .or_else(|| profiles.map(|d| d.join(METADATA_FILE)).filter(|p| p.exists()));
    let meta = match meta_path {
        Some(p) => load_metadata(&p)?,
        None => {
            warn!("no metadata given; load types are reported as unknown");
            MetadataSet {
                meters: Vec::new(),
                warnings: Vec::new(),
            }
        }
    };
    let assignments = match &values {
        Some(v) => assign_from_model(&model, v, &keys)?,
        None => {
            warn!("no profiles given; prosumer ties go to the lowest cluster index");
            assign_prosumers(&membership_distributions(&keys, &model.labels, model.k)?, |_, _| 0.0)
        }
    };
    let recommendations = recommend_for_model(&model, &assignments, &meta.meters, &config.dr)?;
    let inputs = ReportInputs {
        model: &model,
        keys: &keys,
        profiles: values.as_deref(),
        metadata: &meta.meters,
        assignments: &assignments,
        recommendations: &recommendations,
    };
    let bundle = emit_report(&inputs, out)?;
    info!("{} files written to {}", bundle.files.len(), bundle.dir.display());
    Ok(())
}
