//! Seeded synthetic load data for tests, demos and benchmarks.

use chrono::{Duration, NaiveDate};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::ingest::{LoadType, MeterMetadata, MeterSeries, Sample};
use crate::preprocess::HOURS;

/// Daily shape families: morning, midday and evening peaks, and flat.
pub const ARCHETYPES: usize = 4;

/// Archetype `class` as a normalized 24-vector.
pub fn archetype(class: usize) -> [f64; HOURS] {
    let mut v = [0.0; HOURS];
    let centre = match class % ARCHETYPES {
        0 => Some(8.0),
        1 => Some(13.0),
        2 => Some(19.0),
        _ => None,
    };
    for (h, x) in v.iter_mut().enumerate() {
        *x = match centre {
            Some(c) => 0.01 + 0.45 * (-((h as f64 - c).powi(2)) / (2.0 * 0.8f64.powi(2))).exp(),
            None => 1.0,
        };
    }
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

fn normalize(v: &mut [f64]) {
    let s: f64 = v.iter().map(|x| x.abs()).sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
}

/// `per_class` noisy normalized profiles of each archetype, interleaved, with
/// their generating class.
pub fn archetype_profiles(per_class: usize, sigma: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).expect("sigma must be finite and non-negative");
    let mut profiles = Vec::with_capacity(per_class * ARCHETYPES);
    let mut labels = Vec::with_capacity(per_class * ARCHETYPES);
    for _ in 0..per_class {
        for class in 0..ARCHETYPES {
            let mut v: Vec<f64> = archetype(class).iter().map(|x| x + noise.sample(&mut rng)).collect();
            normalize(&mut v);
            profiles.push(v);
            labels.push(class);
        }
    }
    (profiles, labels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FleetSpec {
    pub meters: usize,
    pub days: usize,
    pub start: NaiveDate,
    pub seed: u64,
    /// Probability that a meter-day follows the meter's own archetype.
    pub loyalty: f64,
    /// Per-hour probability of a missing reading.
    pub missing_rate: f64,
    /// Per-day probability of a multi-hour daytime outage.
    pub outage_rate: f64,
    /// Per-hour probability of an out-of-range spike.
    pub spike_rate: f64,
}

impl Default for FleetSpec {
    fn default() -> Self {
        FleetSpec {
            meters: 10,
            days: 30,
            start: NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date"),
            seed: 0,
            loyalty: 0.75,
            missing_rate: 0.01,
            outage_rate: 0.01,
            spike_rate: 0.0005,
        }
    }
}

pub struct Fleet {
    pub series: Vec<MeterSeries>,
    pub metadata: Vec<MeterMetadata>,
    /// Each meter's own archetype, or `None` for generating meters.
    pub archetypes: Vec<Option<usize>>,
}

/// Hourly measurements for a mixed fleet of consumers and a few PV producers.
/// Consumer meters also report cumulative energy.
pub fn fleet(spec: &FleetSpec) -> Fleet {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, 0.05).expect("valid normal");
    let mut out = Fleet {
        series: Vec::with_capacity(spec.meters),
        metadata: Vec::with_capacity(spec.meters),
        archetypes: Vec::with_capacity(spec.meters),
    };
    for m in 0..spec.meters {
        let meter_id = format!("M{m:03}");
        let generator = m % 10 == 9;
        let load_type = if generator {
            LoadType::Substation
        } else {
            match m % 5 {
                0 | 1 | 2 => LoadType::Household,
                3 => LoadType::Company,
                _ => [LoadType::University, LoadType::Pool, LoadType::Pump][m % 3],
            }
        };
        let own = (!generator).then_some(m % ARCHETYPES);
        let scale: f64 = rng.gen_range(2.0..8.0);
        let limit = scale * 2.0;
        out.metadata.push(MeterMetadata {
            meter_id: meter_id.clone(),
            contractual_power_kw: (!generator).then_some(limit),
            production_power_kw: generator.then_some(limit),
            load_type,
        });
        out.archetypes.push(own);

        let mut samples = Vec::with_capacity(spec.days * HOURS);
        let mut energy = rng.gen_range(100.0..1000.0);
        for d in 0..spec.days {
            let date = spec.start + Duration::days(d as i64);
            let shape: [f64; HOURS] = match own {
                Some(a) => {
                    let class = if rng.gen_bool(spec.loyalty) {
                        a
                    } else {
                        rng.gen_range(0..ARCHETYPES)
                    };
                    archetype(class)
                }
                None => {
                    let mut v = [0.02; HOURS];
                    let bell = |h: usize| (-((h as f64 - 12.5) / 3.0).powi(2)).exp();
                    let mass: f64 = (7..19).map(bell).sum();
                    for h in 7..19 {
                        v[h] = -bell(h) / mass;
                    }
                    v
                }
            };
            let outage = rng.gen_bool(spec.outage_rate).then(|| {
                let start = rng.gen_range(8..15);
                (start, start + rng.gen_range(3..6))
            });
            for (h, &base) in shape.iter().enumerate() {
                let mut kw = scale * HOURS as f64 * base * 0.3 * (1.0 + noise.sample(&mut rng));
                if !generator {
                    kw = kw.max(0.0);
                }
                energy += kw.max(0.0);
                let missing = rng.gen_bool(spec.missing_rate) || outage.is_some_and(|(a, b)| (a..b).contains(&h));
                if missing {
                    continue;
                }
                if rng.gen_bool(spec.spike_rate) {
                    kw = limit * 3.0;
                }
                samples.push(Sample {
                    timestamp: date.and_hms_opt(h as u32, 0, 0).expect("valid hour"),
                    active_power_kw: Some(kw),
                    cumulative_energy_kwh: (!generator).then_some(energy),
                });
            }
        }
        out.series.push(MeterSeries { meter_id, samples });
    }
    out
}
