//! Quasi-static manipulation skills built from contact-state transitions.
//!
//! * [`cone`] classifies contact configurations by their feasible-motion cone.
//! * [`reward`] composes reward programs for every state transition.
//! * [`sim`] is a position-stepped spring-damper contact simulator.
//! * [`agents`] holds the force-feedback controllers, the episode runner and
//!   the policy learners.
//! * [`pipeline`] binds demonstrated task sequences to skills and runs them.
//!
//! Geometry, sensing and reward evaluation are generic over [`Real`]; the
//! simulator and everything built on it run in `f64`.

pub mod agents;
pub mod cone;
pub mod error;
pub mod pipeline;
pub mod reward;
pub mod scalar;
pub mod sim;

pub use error::{AgentError, GeometryError, PipelineError, RewardError, SimError};
pub use scalar::Real;

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Quat = nalgebra::UnitQuaternion<f64>;

pub type ContactPoint = cone::ContactPoint<f64>;
pub type ContactSet = cone::ContactSet<f64>;
pub type FeasibleCone = cone::FeasibleCone<f64>;
pub type Classification = cone::Classification<f64>;
pub type Observation = reward::Observation<f64>;
pub type ForceReading = sim::ForceReading<f64>;
