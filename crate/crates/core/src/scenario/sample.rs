//! Per-epoch communication graphs and the noisy measurements drawn on
//! them. Each edge carries its own hidden LOS Markov chain for as long
//! as the edge persists; a chain that lapses is re-seeded from the
//! stationary distribution when the edge reappears.

use super::{Modality, ScenarioConfig, VehicleTrack};
use crate::geom::{ground_range, look_angles, PlaneMetric};
use crate::rng::{stream, Purpose};
use crate::scalar::Real;
use crate::{LosChain, MixtureNoise, Position, SatPosition};
use std::collections::HashMap;

/// Measurement endpoints: the observing vehicle ranges either to a peer
/// vehicle or to a satellite anchor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Endpoint {
    Vehicle(usize),
    Satellite(usize),
}

impl std::fmt::Display for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Endpoint::Vehicle(v) => write!(f, "v{v}"),
            Endpoint::Satellite(s) => write!(f, "s{s}"),
        }
    }
}

/// Connectivity at one epoch: undirected vehicle pairs within the
/// communication radius and vehicle -> satellite visibility edges.
#[derive(Debug, Clone)]
pub struct ConnectivityGraph {
    pub epoch: usize,
    /// Vehicle pairs `(k, m)` with `k < m`.
    pub vehicle_edges: Vec<(usize, usize)>,
    /// `(vehicle, satellite)` pairs above the vehicle's mask angle.
    pub satellite_edges: Vec<(usize, usize)>,
}

impl ConnectivityGraph {
    pub fn has_vehicle_edge(&self, a: usize, b: usize) -> bool {
        let key = (a.min(b), a.max(b));
        self.vehicle_edges.binary_search(&key).is_ok()
    }
}

/// One timestamped observation. `z_true` records which mixture component
/// produced the noise; it exists for diagnostics only and is stripped
/// before anything estimator-facing sees the measurement.
#[derive(Debug, Clone)]
pub struct Measurement {
    pub epoch: usize,
    pub from: usize,
    pub to: Endpoint,
    pub modality: Modality,
    pub value: f64,
    pub z_true: bool,
}

#[derive(Debug, Clone, Default)]
pub struct MeasurementSet {
    pub per_epoch: Vec<Vec<Measurement>>,
}

impl MeasurementSet {
    pub fn total(&self) -> usize {
        self.per_epoch.iter().map(Vec::len).sum()
    }
}

/// Per-epoch connectivity: symmetric vehicle edges by (wrapped)
/// Euclidean distance, satellite edges by per-vehicle per-epoch mask
/// angles resampled uniformly from the configured range.
pub fn build_connectivity(
    config: &ScenarioConfig,
    tracks: &[VehicleTrack],
    sats: &[Vec<SatPosition>],
    metric: PlaneMetric<f64>,
) -> Vec<ConnectivityGraph> {
    let n = tracks.len();
    let (mask_lo, mask_hi) = config.mask_range_rad();
    (0..config.epochs)
        .map(|epoch| {
            let mut vehicle_edges = Vec::new();
            for k in 0..n {
                for m in (k + 1)..n {
                    let d = metric.distance(tracks[k].positions[epoch], tracks[m].positions[epoch]);
                    if d <= config.comm_radius_m {
                        vehicle_edges.push((k, m));
                    }
                }
            }
            let mut satellite_edges = Vec::new();
            for (k, track) in tracks.iter().enumerate() {
                let mut rng = stream(config.seed, Purpose::MaskAngle, k as u64, epoch as u64);
                let mask = mask_lo + (mask_hi - mask_lo) * f64::uniform_01(&mut rng);
                for s in super::visible_satellites(track.positions[epoch], &sats[epoch], mask) {
                    satellite_edges.push((k, s));
                }
            }
            ConnectivityGraph { epoch, vehicle_edges, satellite_edges }
        })
        .collect()
}

/// Noise-free measurement functional for each modality.
fn true_value(
    modality: Modality,
    rss_exponent: f64,
    from: Position,
    to: Endpoint,
    peer: Option<Position>,
    sat: Option<SatPosition>,
    metric: PlaneMetric<f64>,
) -> f64 {
    let distance = match to {
        Endpoint::Vehicle(_) => metric.distance(from, peer.expect("peer position")),
        Endpoint::Satellite(_) => ground_range(from, sat.expect("satellite position")),
    };
    match modality {
        Modality::Distance => distance,
        Modality::Rss => -10.0 * rss_exponent * distance.max(1e-9).log10(),
        Modality::Aoa => match to {
            Endpoint::Vehicle(_) => {
                let d = metric.displacement(from, peer.expect("peer position"));
                d.y.atan2(d.x)
            }
            Endpoint::Satellite(_) => {
                let la = look_angles(from, sat.expect("satellite position"));
                la.horizontal_dir.map_or(0.0, |d| d.y.atan2(d.x))
            }
        },
    }
}

fn edge_key(from: usize, to: Endpoint) -> u64 {
    match to {
        Endpoint::Vehicle(m) => {
            let (a, b) = (from.min(m) as u64, from.max(m) as u64);
            (a << 32) | b
        }
        Endpoint::Satellite(s) => (1 << 63) | ((from as u64) << 32) | s as u64,
    }
}

struct ChainState {
    z: bool,
    last_epoch: usize,
}

/// Draw the full measurement set over all epochs. Each edge at each
/// epoch: advance that edge's hidden-flag chain (restarting from the
/// stationary distribution after any absence), draw the component noise,
/// and record the modality value plus noise.
#[allow(clippy::too_many_arguments)]
pub fn sample_measurements(
    config: &ScenarioConfig,
    tracks: &[VehicleTrack],
    sats: &[Vec<SatPosition>],
    graphs: &[ConnectivityGraph],
    vehicle_noise: &MixtureNoise,
    sat_noise: &MixtureNoise,
    chain: &LosChain,
    metric: PlaneMetric<f64>,
) -> MeasurementSet {
    let mut chains: HashMap<u64, ChainState> = HashMap::new();
    let mut per_epoch = Vec::with_capacity(graphs.len());
    for graph in graphs {
        let epoch = graph.epoch;
        let mut out = Vec::with_capacity(graph.vehicle_edges.len() + graph.satellite_edges.len());
        let mut edges: Vec<(usize, Endpoint)> = graph
            .vehicle_edges
            .iter()
            .map(|&(k, m)| (k, Endpoint::Vehicle(m)))
            .chain(graph.satellite_edges.iter().map(|&(k, s)| (k, Endpoint::Satellite(s))))
            .collect();
        edges.sort_unstable_by_key(|&(k, to)| (k, to));
        for (from, to) in edges {
            let key = edge_key(from, to);
            let mut rng = stream(config.seed, Purpose::Measurement, key, epoch as u64);
            let z = match chains.get(&key) {
                Some(state) if state.last_epoch + 1 == epoch => chain.step(state.z, &mut rng),
                _ => chain.sample_stationary(&mut rng),
            };
            chains.insert(key, ChainState { z, last_epoch: epoch });
            let (noise_model, peer, sat) = match to {
                Endpoint::Vehicle(m) => {
                    (vehicle_noise, Some(tracks[m].positions[epoch]), None)
                }
                Endpoint::Satellite(s) => (sat_noise, None, Some(sats[epoch][s])),
            };
            let clean = true_value(
                config.modality,
                config.rss_exponent,
                tracks[from].positions[epoch],
                to,
                peer,
                sat,
                metric,
            );
            let value = clean + noise_model.sample(z, &mut rng);
            out.push(Measurement { epoch, from, to, modality: config.modality, value, z_true: z });
        }
        per_epoch.push(out);
    }
    MeasurementSet { per_epoch }
}
