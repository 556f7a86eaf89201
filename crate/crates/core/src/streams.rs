//! Deterministic allocation of RNG streams to units of work.
//!
//! Every randomized stage of the pipeline draws from a [`RngStream`]
//! derived here from the run's base seed, so results depend only on
//! `(base_seed, unit identity)` — never on execution order or thread
//! scheduling. Member fits, forecast-noise draws, the Gibbs chain, the
//! tuner, and the simulators all get disjoint stream families.

use crate::numerics::RngStream;

const TAG_QEESN_MEMBER: u64 = 0x01;
const TAG_QEESN_NOISE: u64 = 0x02;
const TAG_DEESN_LAYER: u64 = 0x03;
const TAG_DEESN_CHAIN: u64 = 0x04;
const TAG_DEESN_NOISE: u64 = 0x05;
const TAG_GA: u64 = 0x06;
const TAG_GA_FITNESS: u64 = 0x07;
const TAG_SIMULATOR: u64 = 0x08;

/// Reservoir draw for shallow-ensemble member `member_id`.
pub fn qeesn_member(base_seed: u64, member_id: u64) -> RngStream {
    RngStream::root(base_seed)
        .derive(TAG_QEESN_MEMBER)
        .derive(member_id)
}

/// Forecast observation-noise draws for shallow-ensemble member `member_id`.
pub fn qeesn_forecast_noise(base_seed: u64, member_id: u64) -> RngStream {
    RngStream::root(base_seed)
        .derive(TAG_QEESN_NOISE)
        .derive(member_id)
}

/// Stream family for deep-ensemble member `ensemble`; layer draws derive
/// from it.
pub fn deesn_pipeline(base_seed: u64, ensemble: u64) -> RngStream {
    RngStream::root(base_seed)
        .derive(TAG_DEESN_LAYER)
        .derive(ensemble)
}

/// Reservoir draw for layer `layer` (1-based, output-adjacent first) of deep
/// ensemble `ensemble`.
pub fn deesn_layer(base_seed: u64, ensemble: u64, layer: u64) -> RngStream {
    deesn_pipeline(base_seed, ensemble).derive(layer)
}

/// Gibbs sampler stream for the deep model's output stage.
pub fn deesn_chain(base_seed: u64) -> RngStream {
    RngStream::root(base_seed).derive(TAG_DEESN_CHAIN)
}

/// Posterior-predictive noise draws for deep-model forecasts.
pub fn deesn_forecast_noise(base_seed: u64) -> RngStream {
    RngStream::root(base_seed).derive(TAG_DEESN_NOISE)
}

/// Genetic-tuner evolution stream (selection, crossover, mutation).
pub fn ga(base_seed: u64) -> RngStream {
    RngStream::root(base_seed).derive(TAG_GA)
}

/// Common-random-numbers stream shared by all tuner fitness evaluations.
pub fn ga_fitness(base_seed: u64) -> RngStream {
    RngStream::root(base_seed).derive(TAG_GA_FITNESS)
}

/// Synthetic-data generator stream.
pub fn simulator(base_seed: u64) -> RngStream {
    RngStream::root(base_seed).derive(TAG_SIMULATOR)
}
