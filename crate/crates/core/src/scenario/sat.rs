//! Satellite anchors: almanac parsing, near-circular Keplerian orbit
//! propagation into the Earth-fixed frame, and mask-angle visibility.

use super::ScenarioError;
use crate::geom::{look_angles, Vec3};
use crate::{Position, SatPosition};
use std::path::Path;

/// Earth gravitational parameter (m^3/s^2).
const MU_EARTH: f64 = 3.986_004_418e14;
/// Earth rotation rate (rad/s).
const OMEGA_EARTH: f64 = 7.292_115_146_7e-5;

/// Orbital elements of one satellite at the almanac reference time.
#[derive(Debug, Clone)]
pub struct AlmanacEntry {
    pub id: String,
    /// Semi-major axis (m).
    pub semi_major_m: f64,
    /// Inclination (rad).
    pub inclination_rad: f64,
    /// Right ascension of the ascending node at time 0 (rad).
    pub raan_rad: f64,
    /// Mean anomaly at time 0 (rad).
    pub mean_anomaly_rad: f64,
    /// Argument of perigee (rad).
    pub arg_perigee_rad: f64,
    /// Eccentricity.
    pub eccentricity: f64,
}

impl AlmanacEntry {
    fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.semi_major_m > 0.0) {
            return Err(ScenarioError::InvalidConfig(format!(
                "satellite {}: semi-major axis must be positive, got {}",
                self.id, self.semi_major_m
            )));
        }
        if !(0.0..1.0).contains(&self.eccentricity) {
            return Err(ScenarioError::InvalidConfig(format!(
                "satellite {}: eccentricity must lie in [0, 1), got {}",
                self.id, self.eccentricity
            )));
        }
        Ok(())
    }

    /// Earth-fixed position at absolute time `t` seconds.
    pub fn position_at(&self, t: f64) -> SatPosition {
        let n = (MU_EARTH / self.semi_major_m.powi(3)).sqrt();
        let m = self.mean_anomaly_rad + n * t;
        // Kepler's equation; converges in a couple of steps at small e.
        let e = self.eccentricity;
        let mut ecc_anom = m;
        for _ in 0..12 {
            let f = ecc_anom - e * ecc_anom.sin() - m;
            let fp = 1.0 - e * ecc_anom.cos();
            ecc_anom -= f / fp;
        }
        let true_anom = ((1.0 - e * e).sqrt() * ecc_anom.sin()).atan2(ecc_anom.cos() - e);
        let radius = self.semi_major_m * (1.0 - e * ecc_anom.cos());
        let arg_lat = self.arg_perigee_rad + true_anom;
        // Node angle in the rotating Earth-fixed frame.
        let node = self.raan_rad - OMEGA_EARTH * t;
        let (xo, yo) = (radius * arg_lat.cos(), radius * arg_lat.sin());
        let (sin_i, cos_i) = self.inclination_rad.sin_cos();
        let (sin_n, cos_n) = node.sin_cos();
        Vec3::new(
            xo * cos_n - yo * cos_i * sin_n,
            xo * sin_n + yo * cos_i * cos_n,
            yo * sin_i,
        )
    }
}

/// A constellation of satellites.
#[derive(Debug, Clone, Default)]
pub struct SatelliteAlmanac {
    pub entries: Vec<AlmanacEntry>,
}

impl SatelliteAlmanac {
    /// Bundled 24-satellite constellation: 6 planes at 55 deg
    /// inclination, 4 satellites per plane, semi-major axis 26560 km.
    /// The phasing puts two azimuth-separated satellites in the high
    /// elevation cone above the scene origin at the default scenario
    /// time, which matches the reference visibility rate of about one
    /// satellite every two epochs under the 55-85 degree mask.
    pub fn default_gps() -> Self {
        Self::walker("G", 24, 6, 26_559_700.0, 55f64.to_radians(), 3f64.to_radians(), 78f64.to_radians())
    }

    /// Bundled 27-satellite constellation: 3 planes at 56 deg
    /// inclination, 9 satellites per plane, semi-major axis 29600 km.
    pub fn default_galileo() -> Self {
        Self::walker("E", 27, 3, 29_599_800.0, 56f64.to_radians(), 13.333f64.to_radians(), 0.0)
    }

    fn walker(
        prefix: &str,
        count: usize,
        planes: usize,
        semi_major_m: f64,
        inclination_rad: f64,
        phase_step_rad: f64,
        phase_offset_rad: f64,
    ) -> Self {
        let per_plane = count / planes;
        let entries = (0..count)
            .map(|k| {
                let plane = k / per_plane;
                let slot = k % per_plane;
                AlmanacEntry {
                    id: format!("{prefix}{:02}", k + 1),
                    semi_major_m,
                    inclination_rad,
                    raan_rad: 2.0 * std::f64::consts::PI * plane as f64 / planes as f64,
                    mean_anomaly_rad: (2.0 * std::f64::consts::PI * slot as f64
                        / per_plane as f64
                        + phase_step_rad * plane as f64
                        + phase_offset_rad)
                        .rem_euclid(2.0 * std::f64::consts::PI),
                    arg_perigee_rad: 0.0,
                    eccentricity: 0.0,
                }
            })
            .collect();
        Self { entries }
    }

    /// Parse the text format: one satellite per line,
    /// `id a_m incl_rad raan_rad M0_rad argp_rad ecc`; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 7 {
                return Err(ScenarioError::AlmanacParse {
                    line: idx + 1,
                    msg: format!("expected 7 fields, got {}", fields.len()),
                });
            }
            let num = |s: &str, what: &str| -> Result<f64, ScenarioError> {
                s.parse::<f64>().map_err(|e| ScenarioError::AlmanacParse {
                    line: idx + 1,
                    msg: format!("bad {what} `{s}`: {e}"),
                })
            };
            let entry = AlmanacEntry {
                id: fields[0].to_string(),
                semi_major_m: num(fields[1], "semi-major axis")?,
                inclination_rad: num(fields[2], "inclination")?,
                raan_rad: num(fields[3], "RAAN")?,
                mean_anomaly_rad: num(fields[4], "mean anomaly")?,
                arg_perigee_rad: num(fields[5], "argument of perigee")?,
                eccentricity: num(fields[6], "eccentricity")?,
            };
            entry.validate()?;
            entries.push(entry);
        }
        Ok(Self { entries })
    }

    pub fn from_file(path: &Path) -> Result<Self, ScenarioError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Propagate every satellite across `epochs` epochs starting at absolute
/// time `gps_time_s`, spaced `dt` seconds: `result[epoch][sat]`.
pub fn propagate_satellites(
    almanac: &SatelliteAlmanac,
    gps_time_s: f64,
    epochs: usize,
    dt: f64,
) -> Result<Vec<Vec<SatPosition>>, ScenarioError> {
    for e in &almanac.entries {
        e.validate()?;
    }
    if !(dt > 0.0) {
        return Err(ScenarioError::InvalidConfig(format!(
            "epoch period must be positive, got {dt}"
        )));
    }
    Ok((0..epochs)
        .map(|k| {
            let t = gps_time_s + k as f64 * dt;
            almanac.entries.iter().map(|e| e.position_at(t)).collect()
        })
        .collect())
}

/// Indices of the satellites at or above `mask_rad` elevation as seen
/// from a ground vehicle. An empty result is legal.
pub fn visible_satellites(
    vehicle: Position,
    sats: &[SatPosition],
    mask_rad: f64,
) -> Vec<usize> {
    sats.iter()
        .enumerate()
        .filter(|(_, &s)| look_angles(vehicle, s).elevation >= mask_rad)
        .map(|(i, _)| i)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec2;
    use rand::{Rng, SeedableRng};

    #[test]
    fn equatorial_circular_orbit_stays_planar() {
        let entry = AlmanacEntry {
            id: "T1".into(),
            semi_major_m: 26_560_000.0,
            inclination_rad: 0.0,
            raan_rad: 0.0,
            mean_anomaly_rad: 0.3,
            arg_perigee_rad: 0.0,
            eccentricity: 0.0,
        };
        for k in 0..100 {
            let p = entry.position_at(568_800.0 + 0.1 * k as f64);
            assert!(p.z.abs() < 1e-6, "z = {}", p.z);
            assert!((p.norm() - 26_560_000.0).abs() < 1e-3);
        }
    }

    #[test]
    fn circular_orbit_radius_is_constant() {
        let almanac = SatelliteAlmanac::default_gps();
        let per_epoch = propagate_satellites(&almanac, 568_800.0, 100, 0.1).unwrap();
        for epoch in &per_epoch {
            for (s, p) in epoch.iter().enumerate() {
                let rel = (p.norm() - 26_559_700.0).abs() / 26_559_700.0;
                assert!(rel < 1e-9, "sat {s}: relative radius error {rel}");
            }
        }
        // Satellites do move between the first and last epoch.
        let moved = per_epoch[0][0].distance(per_epoch[99][0]);
        assert!(moved > 1.0, "satellite barely moved: {moved} m");
    }

    #[test]
    fn mask_at_zenith_sees_nothing_and_overhead_is_visible() {
        let overhead = Vec3::new(crate::geom::EARTH_RADIUS_M + 2.0e7, 0.0, 0.0);
        let east = Vec3::new(crate::geom::EARTH_RADIUS_M, 2.6e7, 0.0);
        let sats = vec![overhead, east];
        let at_zenith =
            visible_satellites(Vec2::new(0.0, 0.0), &sats, std::f64::consts::FRAC_PI_2);
        assert_eq!(at_zenith, vec![0]);
        let mask85 = visible_satellites(Vec2::new(0.0, 0.0), &sats, 85f64.to_radians());
        assert_eq!(mask85, vec![0]);
    }

    #[test]
    fn gps_like_horizon_count_is_six_to_twelve() {
        // Brute-force elevation oracle over the bundled constellation.
        let almanac = SatelliteAlmanac::default_gps();
        let per_epoch = propagate_satellites(&almanac, 568_800.0, 50, 7.0).unwrap();
        for epoch in &per_epoch {
            let visible = visible_satellites(Vec2::new(0.0, 0.0), epoch, 0.0);
            assert!(
                (6..=12).contains(&visible.len()),
                "visible at horizon: {}",
                visible.len()
            );
        }
    }

    #[test]
    fn high_mask_average_visibility_matches_reference_rate() {
        // Mean visible satellites at the reference scenario time, with
        // masks resampled uniformly in [55, 85] degrees per vehicle and
        // epoch: about one satellite every two epochs.
        let almanac = SatelliteAlmanac::default_gps();
        let epochs = 500;
        let per_epoch = propagate_satellites(&almanac, 568_800.0, epochs, 0.1).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut total = 0usize;
        let mut pairs = 0usize;
        for epoch in &per_epoch {
            for v in 0..32 {
                let vehicle = Vec2::new((v % 8) as f64 * 12.5, (v / 8) as f64 * 4.0 + 2.0);
                let mask = rng.gen_range(55f64.to_radians()..85f64.to_radians());
                total += visible_satellites(vehicle, epoch, mask).len();
                pairs += 1;
            }
        }
        assert!(pairs >= 10_000);
        let mean = total as f64 / pairs as f64;
        assert!(
            (mean - 0.5).abs() <= 0.2,
            "mean visibility {mean} outside 0.5 +/- 0.2"
        );
    }

    #[test]
    fn almanac_round_trip_and_errors() {
        let text = "# test constellation\nG01 26560000.0 0.9599 0.0 0.0 0.0 0.0\n\nG02 26560000.0 0.9599 1.0472 1.5708 0.0 0.001 # trailing comment\n";
        let alm = SatelliteAlmanac::parse(text).unwrap();
        assert_eq!(alm.entries.len(), 2);
        assert_eq!(alm.entries[1].id, "G02");
        assert!((alm.entries[1].eccentricity - 0.001).abs() < 1e-12);

        assert!(matches!(
            SatelliteAlmanac::parse("G01 26560000.0 0.9599 0.0\n"),
            Err(ScenarioError::AlmanacParse { line: 1, .. })
        ));
        assert!(SatelliteAlmanac::parse("G01 -5.0 0.9599 0.0 0.0 0.0 0.0\n").is_err());
    }

    #[test]
    fn default_constellations_have_expected_sizes() {
        assert_eq!(SatelliteAlmanac::default_gps().entries.len(), 24);
        assert_eq!(SatelliteAlmanac::default_galileo().entries.len(), 27);
    }
}
