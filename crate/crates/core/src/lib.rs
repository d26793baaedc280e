//! Daily load-profile segmentation of smart-meter data and demand-response
//! scheme recommendation.

pub mod clustering;
pub mod config;
pub mod distance;
pub mod dr_engine;
pub mod entropy;
pub mod experiments;
pub mod ingest;
pub mod metrics;
pub mod preprocess;
pub mod synthetic;
