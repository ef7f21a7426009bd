//! Cooperative NLOS localization workbench.
//!
//! Simulates mobile agents ranging to each other and to satellite anchors
//! under a LOS/NLOS mixture noise model, runs a decoupled per-vehicle
//! particle filter on the resulting measurements, and computes the
//! matching Cramer-Rao lower bounds (static, mobile, and causal) together
//! with the anchor/agent information scaling laws, so that simulated
//! estimator error can be laid next to theory.
//!
//! The numeric core is generic over the scalar type via [`scalar::Real`];
//! the concrete aliases below pin the workbench to `f64`.

pub mod crlb;
pub mod filter;
pub mod geom;
pub mod harness;
pub mod noise;
pub mod quad;
pub mod rng;
pub mod scalar;
pub mod scenario;

pub use scalar::Real;

/// Workbench scalar type.
pub type Scalar = f64;
/// Planar position or velocity at workbench precision.
pub type Position = geom::Vec2<Scalar>;
/// Satellite position at workbench precision.
pub type SatPosition = geom::Vec3<Scalar>;
/// Mixture noise model at workbench precision.
pub type MixtureNoise = noise::MixtureNoiseModel<Scalar>;
/// Noise component at workbench precision.
pub type NoiseComponent = noise::ComponentDistribution<Scalar>;
/// Hidden-flag Markov chain at workbench precision.
pub type LosChain = noise::LosMarkov<Scalar>;
/// Particle cloud at workbench precision.
pub type Cloud = filter::ParticleCloud<Scalar>;
/// Fisher matrix at workbench precision.
pub type Fisher = crlb::FisherMatrix<Scalar>;
