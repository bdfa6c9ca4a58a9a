//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use aoi_core::{dbw_to_watt, ChannelModel, Exponential, StateSpace, SystemConfig};

/// 128 levels, four rounds, ages up to 100, a -3 dBw budget.
pub fn reference_instance() -> (ChannelModel, SystemConfig, StateSpace) {
    let model = ChannelModel::quantize(Arc::new(Exponential::unit_mean()), 128, 1.0).expect("valid channel");
    let cfg = SystemConfig::new(4, 100, dbw_to_watt(-3.0));
    let space = StateSpace::for_config(&cfg).expect("valid config");
    (model, cfg, space)
}
