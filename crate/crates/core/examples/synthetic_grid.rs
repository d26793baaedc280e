//! Full grid search over a synthetic fleet.
//!
//! cargo run --release -p flexseg --example synthetic_grid -- [meters] [days]

use std::time::Instant;

use flexseg::experiments::{grid_search, select_best, GridSpec, SelectionCriteria};
use flexseg::ingest::MetadataSet;
use flexseg::preprocess::{preprocess_dataset, PreprocessConfig, ProfileSet};
use flexseg::synthetic::{fleet, FleetSpec};

fn main() {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let spec = FleetSpec {
        meters: args.first().copied().unwrap_or(50),
        days: args.get(1).copied().unwrap_or(3 * 365),
        ..FleetSpec::default()
    };
    let t = Instant::now();
    let f = fleet(&spec);
    let meta = MetadataSet {
        meters: f.metadata,
        warnings: Vec::new(),
    };
    let (_, profiles) = preprocess_dataset(&f.series, &meta, &PreprocessConfig::default());
    let set = ProfileSet::from_profiles(&profiles);
    println!("{} profiles prepared in {:.1?}", set.len(), t.elapsed());
    let t = Instant::now();
    let out = grid_search(&set.values, &GridSpec::full(3, 20, 42), None).expect("grid search");
    println!("{} configurations in {:.1?}", out.log.rows.len(), t.elapsed());
    for r in &out.log.rows {
        println!("{:28} {:6.2}s {:?}", r.run_id, r.wall_time_s, r.metrics().map(|m| m[2]));
    }
    let best = select_best(&out.log, &SelectionCriteria::default()).expect("selection");
    println!("selected {}", best.run_id);
}
