//! Ground-truth generation: road-network vehicle trajectories, satellite
//! positions from almanac propagation, mask-angle visibility, per-epoch
//! communication graphs, and the noisy measurement sets drawn on top.
//!
//! This layer works in the workbench's concrete `f64` types; the math it
//! feeds (noise, filter, bounds) stays generic underneath.

mod config;
mod road;
mod sample;
mod sat;

pub use config::{ComponentConfig, Modality, NoiseConfig, ScenarioConfig};
pub use road::{generate_road_scenario, VehicleTrack};
pub use sample::{
    build_connectivity, sample_measurements, ConnectivityGraph, Endpoint, Measurement,
    MeasurementSet,
};
pub use sat::{
    propagate_satellites, visible_satellites, AlmanacEntry, SatelliteAlmanac,
};

use crate::geom::PlaneMetric;
use crate::{LosChain, MixtureNoise, Position, SatPosition};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
    #[error("almanac parse error at line {line}: {msg}")]
    AlmanacParse { line: usize, msg: String },
    #[error("noise model: {0}")]
    Noise(#[from] crate::noise::NoiseError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Fully generated ground truth for one scenario realization.
#[derive(Debug, Clone)]
pub struct ScenarioTruth {
    pub config: ScenarioConfig,
    pub tracks: Vec<VehicleTrack>,
    /// Satellite positions per epoch, ECEF-like meters: `sats[epoch][sat]`.
    pub sats: Vec<Vec<SatPosition>>,
    pub graphs: Vec<ConnectivityGraph>,
    pub measurements: MeasurementSet,
    /// Metric of the vehicle plane (the road wraps in x).
    pub metric: PlaneMetric<f64>,
}

impl ScenarioTruth {
    /// Generate the full truth for `config`: tracks, satellite ephemeris,
    /// connectivity, and measurements, all from the config's seed.
    pub fn generate(config: &ScenarioConfig) -> Result<Self, ScenarioError> {
        config.validate()?;
        let metric = PlaneMetric::WrapX { period: config.lane_length_m };
        let tracks = generate_road_scenario(config)?;
        let almanac = config.load_almanac()?;
        let sats = propagate_satellites(
            &almanac,
            config.gps_time_s,
            config.epochs,
            config.epoch_period_s,
        )?;
        let graphs = build_connectivity(config, &tracks, &sats, metric);
        let vehicle_noise = config.noise.vehicle_mixture()?;
        let sat_noise = config.noise.satellite_mixture()?;
        let chain = config.noise.los_chain()?;
        let measurements = sample_measurements(
            config,
            &tracks,
            &sats,
            &graphs,
            &vehicle_noise,
            &sat_noise,
            &chain,
            metric,
        );
        Ok(Self { config: config.clone(), tracks, sats, graphs, measurements, metric })
    }

    pub fn n_vehicles(&self) -> usize {
        self.tracks.len()
    }

    pub fn vehicle_position(&self, vehicle: usize, epoch: usize) -> Position {
        self.tracks[vehicle].positions[epoch]
    }

    pub fn vehicle_noise(&self) -> Result<MixtureNoise, ScenarioError> {
        self.config.noise.vehicle_mixture()
    }

    pub fn satellite_noise(&self) -> Result<MixtureNoise, ScenarioError> {
        self.config.noise.satellite_mixture()
    }

    pub fn los_chain(&self) -> Result<LosChain, ScenarioError> {
        self.config.noise.los_chain()
    }
}
