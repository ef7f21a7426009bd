//! Scenario configuration: a TOML document whose keys mirror the struct
//! fields below (lowercase snake case). Unknown keys are rejected.

use super::sat::SatelliteAlmanac;
use super::ScenarioError;
use crate::noise::{ComponentDistribution, LosMarkov, MixtureNoiseModel};
use crate::{LosChain, MixtureNoise, NoiseComponent};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

const MPH_TO_MPS: f64 = 0.44704;

/// Measurement modality of the sampled observations. Only `distance`
/// feeds the estimator and the bounds; `rss` and `aoa` are supported for
/// sampling and dumps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Distance,
    Rss,
    Aoa,
}

impl Modality {
    pub fn name(self) -> &'static str {
        match self {
            Modality::Distance => "distance",
            Modality::Rss => "rss",
            Modality::Aoa => "aoa",
        }
    }
}

/// One noise component as configured.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentConfig {
    /// `gaussian`, `positive-mean-gaussian`, `ex-gaussian`, or `uniform`.
    pub kind: String,
    #[serde(default)]
    pub mean: f64,
    #[serde(default)]
    pub sigma: f64,
    /// Exponential rate for `ex-gaussian`.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Support bounds for `uniform`.
    #[serde(default)]
    pub lower: Option<f64>,
    #[serde(default)]
    pub upper: Option<f64>,
}

impl ComponentConfig {
    pub fn gaussian(mean: f64, sigma: f64) -> Self {
        Self { kind: "gaussian".into(), mean, sigma, lambda: None, lower: None, upper: None }
    }

    pub fn build(&self) -> Result<NoiseComponent, ScenarioError> {
        let kind = self.kind.replace('_', "-");
        let comp = match kind.as_str() {
            "gaussian" | "positive-mean-gaussian" => {
                ComponentDistribution::gaussian(self.mean, self.sigma)
            }
            "ex-gaussian" => {
                let lambda = self.lambda.ok_or_else(|| {
                    ScenarioError::InvalidConfig("ex-gaussian requires `lambda`".into())
                })?;
                ComponentDistribution::ex_gaussian(self.mean, self.sigma, lambda)
            }
            "uniform" => {
                let (lower, upper) = match (self.lower, self.upper) {
                    (Some(l), Some(u)) => (l, u),
                    _ => {
                        return Err(ScenarioError::InvalidConfig(
                            "uniform requires `lower` and `upper`".into(),
                        ))
                    }
                };
                ComponentDistribution::uniform(lower, upper)
            }
            other => {
                return Err(ScenarioError::InvalidConfig(format!(
                    "unknown component kind `{other}`"
                )))
            }
        };
        comp.validate().map_err(ScenarioError::Noise)?;
        Ok(comp)
    }
}

/// Mixture and Markov-chain parameters, per link type. The LOS fraction
/// and the chain are shared between vehicle and satellite links; the
/// component shapes may differ (`sigma_R` vs `sigma_sat`).
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Stationary LOS fraction.
    pub alpha: f64,
    /// LOS self-transition probability; defaults to `alpha` (memoryless).
    pub p_stay_los: Option<f64>,
    /// Vehicle-link LOS component.
    pub los: ComponentConfig,
    /// Vehicle-link NLOS component.
    pub nlos: ComponentConfig,
    /// Satellite-link LOS component.
    pub sat_los: ComponentConfig,
    /// Satellite-link NLOS component.
    pub sat_nlos: ComponentConfig,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            p_stay_los: None,
            los: ComponentConfig::gaussian(0.0, 1.0),
            nlos: ComponentConfig::gaussian(5.0, 5.0),
            sat_los: ComponentConfig::gaussian(0.0, 10.0),
            sat_nlos: ComponentConfig::gaussian(5.0, 5.0),
        }
    }
}

impl NoiseConfig {
    pub fn vehicle_mixture(&self) -> Result<MixtureNoise, ScenarioError> {
        Ok(MixtureNoiseModel::new(self.alpha, self.los.build()?, self.nlos.build()?)?)
    }

    pub fn satellite_mixture(&self) -> Result<MixtureNoise, ScenarioError> {
        Ok(MixtureNoiseModel::new(self.alpha, self.sat_los.build()?, self.sat_nlos.build()?)?)
    }

    pub fn los_chain(&self) -> Result<LosChain, ScenarioError> {
        if self.alpha <= 0.0 {
            return Ok(LosMarkov::degenerate(false));
        }
        if self.alpha >= 1.0 {
            return Ok(LosMarkov::degenerate(true));
        }
        let p_stay = self.p_stay_los.unwrap_or(self.alpha);
        Ok(LosMarkov::new(self.alpha, p_stay)?)
    }
}

/// Full scenario configuration with the four-lane-road defaults.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub lane_count: usize,
    pub lane_width_m: f64,
    pub lane_length_m: f64,
    pub vehicles_per_lane: usize,
    /// Mean vehicle speed (m/s). 13.41 m/s is 30 mph.
    pub mean_speed_mps: f64,
    /// If set, overrides `mean_speed_mps` (converted at the boundary).
    pub mean_speed_mph: Option<f64>,
    /// Per-vehicle speed spread around the mean (one draw per vehicle).
    pub speed_jitter_mps: f64,
    pub epoch_period_s: f64,
    pub epochs: usize,
    pub comm_radius_m: f64,
    pub mask_min_deg: f64,
    pub mask_max_deg: f64,
    pub sigma_ins_mps: f64,
    /// Spread of the initial position prior handed to the estimator.
    pub prior_spread_m: f64,
    /// GPS time of week (s) at epoch 0.
    pub gps_time_s: f64,
    /// Add the bundled second constellation on top of the first.
    pub use_galileo: bool,
    /// Almanac file; the bundled constellation is used when absent.
    pub almanac_path: Option<PathBuf>,
    pub modality: Modality,
    /// Path-loss exponent for the `rss` modality.
    pub rss_exponent: f64,
    pub seed: u64,
    pub noise: NoiseConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            lane_count: 4,
            lane_width_m: 4.0,
            lane_length_m: 100.0,
            vehicles_per_lane: 8,
            mean_speed_mps: 13.41,
            mean_speed_mph: None,
            speed_jitter_mps: 1.0,
            epoch_period_s: 0.1,
            epochs: 100,
            comm_radius_m: 50.0,
            mask_min_deg: 55.0,
            mask_max_deg: 85.0,
            sigma_ins_mps: 1.0,
            prior_spread_m: 15.0,
            gps_time_s: 568_800.0,
            use_galileo: false,
            almanac_path: None,
            modality: Modality::Distance,
            rss_exponent: 2.0,
            seed: 1,
            noise: NoiseConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn n_vehicles(&self) -> usize {
        self.lane_count * self.vehicles_per_lane
    }

    /// Mean speed in m/s after the config-boundary unit conversion.
    pub fn mean_speed(&self) -> f64 {
        self.mean_speed_mph.map_or(self.mean_speed_mps, |mph| mph * MPH_TO_MPS)
    }

    pub fn mask_range_rad(&self) -> (f64, f64) {
        (self.mask_min_deg.to_radians(), self.mask_max_deg.to_radians())
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut problems = Vec::new();
        if self.n_vehicles() == 0 {
            problems.push("zero vehicles".to_string());
        }
        if self.epoch_period_s <= 0.0 {
            problems.push("non-positive epoch period".to_string());
        }
        if self.epochs == 0 {
            problems.push("zero epochs".to_string());
        }
        for (name, v) in [
            ("lane_width_m", self.lane_width_m),
            ("lane_length_m", self.lane_length_m),
            ("sigma_ins_mps", self.sigma_ins_mps),
            ("prior_spread_m", self.prior_spread_m),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                problems.push(format!("{name} must be positive, got {v}"));
            }
        }
        // A parked fleet (mean speed 0) is a legal degenerate case.
        for (name, v) in [("mean_speed", self.mean_speed()), ("comm_radius_m", self.comm_radius_m)] {
            if !(v >= 0.0) || !v.is_finite() {
                problems.push(format!("{name} must be nonnegative, got {v}"));
            }
        }
        if !(0.0..=90.0).contains(&self.mask_min_deg)
            || !(0.0..=90.0).contains(&self.mask_max_deg)
            || self.mask_max_deg < self.mask_min_deg
        {
            problems.push(format!(
                "mask range [{}, {}] must lie within [0, 90] degrees",
                self.mask_min_deg, self.mask_max_deg
            ));
        }
        if self.speed_jitter_mps < 0.0 {
            problems.push("speed_jitter_mps must be nonnegative".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::InvalidConfig(problems.join("; ")))
        }
    }

    /// Parse a TOML config document; unknown keys are errors.
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let cfg: Self = toml::from_str(text)
            .map_err(|e| ScenarioError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn load_almanac(&self) -> Result<SatelliteAlmanac, ScenarioError> {
        let mut almanac = match &self.almanac_path {
            Some(path) => SatelliteAlmanac::from_file(path)?,
            None => SatelliteAlmanac::default_gps(),
        };
        if self.use_galileo {
            almanac.entries.extend(SatelliteAlmanac::default_galileo().entries);
        }
        Ok(almanac)
    }
}
