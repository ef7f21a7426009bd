//! Road traffic ground truth: constant-speed vehicles on fixed lanes,
//! wrapping around the lane length so the population stays constant.

use super::{ScenarioConfig, ScenarioError};
use crate::geom::wrap_coord;
use crate::rng::{stream, Purpose};
use crate::scalar::Real;
use crate::Position;

/// One vehicle's ground truth across all epochs.
#[derive(Debug, Clone)]
pub struct VehicleTrack {
    pub id: usize,
    pub lane: usize,
    /// Wrapped positions per epoch.
    pub positions: Vec<Position>,
    /// True velocity per epoch (constant per vehicle, no lane changes).
    pub velocities: Vec<Position>,
    /// INS velocity reading per epoch: true velocity plus per-axis
    /// Gaussian noise. Reading `t` covers the step from `t-1` to `t`.
    pub ins_readings: Vec<Position>,
}

impl VehicleTrack {
    pub fn velocity(&self) -> Position {
        self.velocities[0]
    }
}

/// Lanes come in adjacent same-direction pairs: lanes 0..1 head +x,
/// lanes 2..3 head -x, and so on.
fn lane_direction(lane: usize) -> f64 {
    if (lane / 2) % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Generate one track per vehicle: lane-center placement, even initial
/// spacing with jitter, one speed draw per vehicle, exact constant-speed
/// kinematics with wraparound, and INS readings.
pub fn generate_road_scenario(
    config: &ScenarioConfig,
) -> Result<Vec<VehicleTrack>, ScenarioError> {
    config.validate()?;
    let vpl = config.vehicles_per_lane;
    let length = config.lane_length_m;
    let dt = config.epoch_period_s;
    let spacing = length / vpl as f64;
    let mut tracks = Vec::with_capacity(config.n_vehicles());
    for id in 0..config.n_vehicles() {
        let lane = id / vpl;
        let slot = id % vpl;
        let mut layout_rng = stream(config.seed, Purpose::RoadLayout, id as u64, 0);
        let y = (lane as f64 + 0.5) * config.lane_width_m;
        let jitter = (f64::uniform_01(&mut layout_rng) - 0.5) * 0.5 * spacing;
        let x0 = wrap_coord(slot as f64 * spacing + jitter, length);
        let speed_draw =
            config.mean_speed() + config.speed_jitter_mps * f64::standard_normal(&mut layout_rng);
        // Keep the draw physical: nobody stops or reverses.
        let speed = speed_draw.max(0.2 * config.mean_speed());
        let velocity = Position::new(lane_direction(lane) * speed, 0.0);
        let step = velocity * dt;

        let mut positions = Vec::with_capacity(config.epochs);
        let mut x = x0;
        for _ in 0..config.epochs {
            positions.push(Position::new(x, y));
            x = wrap_coord(x + step.x, length);
        }
        let velocities = vec![velocity; config.epochs];
        let ins_readings = (0..config.epochs)
            .map(|epoch| {
                let mut rng = stream(config.seed, Purpose::InsNoise, id as u64, epoch as u64);
                velocity
                    + Position::new(
                        config.sigma_ins_mps * f64::standard_normal(&mut rng),
                        config.sigma_ins_mps * f64::standard_normal(&mut rng),
                    )
            })
            .collect();
        tracks.push(VehicleTrack { id, lane, positions, velocities, ins_readings });
    }
    Ok(tracks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::wrap_delta;

    #[test]
    fn four_lanes_eight_vehicles_land_on_lane_centers() {
        let cfg = ScenarioConfig { epochs: 5, ..ScenarioConfig::default() };
        let tracks = generate_road_scenario(&cfg).unwrap();
        assert_eq!(tracks.len(), 32);
        let mut lane_ys: Vec<f64> = tracks.iter().map(|t| t.positions[0].y).collect();
        lane_ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
        lane_ys.dedup();
        assert_eq!(lane_ys, vec![2.0, 6.0, 10.0, 14.0]);
        // Direction pairing: lanes 0-1 forward, 2-3 backward.
        for t in &tracks {
            let want = if t.lane < 2 { 1.0 } else { -1.0 };
            assert_eq!(t.velocity().x.signum(), want, "lane {}", t.lane);
            assert_eq!(t.velocity().y, 0.0);
        }
    }

    #[test]
    fn static_single_vehicle() {
        let cfg = ScenarioConfig {
            lane_count: 1,
            vehicles_per_lane: 1,
            mean_speed_mps: 0.0,
            speed_jitter_mps: 0.0,
            epochs: 10,
            ..ScenarioConfig::default()
        };
        let tracks = generate_road_scenario(&cfg).unwrap();
        let t = &tracks[0];
        for e in 1..10 {
            assert_eq!(t.positions[e], t.positions[0]);
        }
        // INS readings reduce to pure N(0, sigma^2) noise.
        let sum_sq: f64 = t.ins_readings.iter().map(|r| r.x * r.x + r.y * r.y).sum();
        let s2 = sum_sq / (2.0 * 10.0);
        assert!(s2 > 0.05 && s2 < 5.0, "INS variance way off: {s2}");
    }

    #[test]
    fn default_speed_steps_are_exact() {
        let cfg = ScenarioConfig {
            speed_jitter_mps: 0.0,
            epochs: 3,
            ..ScenarioConfig::default()
        };
        let tracks = generate_road_scenario(&cfg).unwrap();
        for t in &tracks {
            let step = wrap_delta(t.positions[1].x - t.positions[0].x, cfg.lane_length_m);
            assert!((step.abs() - 1.341).abs() < 1e-9, "step {step}");
        }
    }

    #[test]
    fn kinematic_consistency_and_ins_noise_statistics() {
        let cfg = ScenarioConfig { epochs: 400, ..ScenarioConfig::default() };
        let tracks = generate_road_scenario(&cfg).unwrap();
        let dt = cfg.epoch_period_s;
        let mut residuals: Vec<f64> = Vec::new();
        for t in &tracks {
            for e in 1..cfg.epochs {
                let d = wrap_delta(t.positions[e].x - t.positions[e - 1].x, cfg.lane_length_m);
                assert!(
                    (d - t.velocities[e].x * dt).abs() < 1e-9,
                    "kinematics broken for vehicle {} at epoch {e}",
                    t.id
                );
                residuals.push(t.ins_readings[e].x - t.velocities[e].x);
                residuals.push(t.ins_readings[e].y - t.velocities[e].y);
            }
        }
        // Chi-square test at the 1% level: with n samples of N(0, s^2),
        // n * s_hat^2 / s^2 ~ chi2(n); normal approximation z in [-2.58, 2.58].
        let n = residuals.len() as f64;
        let s2: f64 = residuals.iter().map(|r| r * r).sum::<f64>() / n;
        let z = (s2 / cfg.sigma_ins_mps.powi(2) - 1.0) * (n / 2.0).sqrt();
        assert!(n >= 1e4, "need at least 1e4 samples, got {n}");
        assert!(z.abs() < 2.58, "INS variance off: z = {z}, s2 = {s2}");
        // Zero-mean check at 3 sigma.
        let mean: f64 = residuals.iter().sum::<f64>() / n;
        assert!(mean.abs() < 3.0 * cfg.sigma_ins_mps / n.sqrt(), "{mean}");
    }

    #[test]
    fn rejects_degenerate_configs() {
        let cfg = ScenarioConfig { vehicles_per_lane: 0, ..ScenarioConfig::default() };
        assert!(generate_road_scenario(&cfg).is_err());
        let cfg = ScenarioConfig { epoch_period_s: -0.1, ..ScenarioConfig::default() };
        assert!(generate_road_scenario(&cfg).is_err());
    }
}
