//! A small laboratory for off-policy REINFORCE with importance-weight
//! clipping on verifiable arithmetic tasks.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below pin `f64`, and the `f32` module offers the same names at
//! single precision.

pub mod error;
pub mod metrics;
pub mod objectives;
pub mod policy;
pub mod sampler;
pub mod scalar;
pub mod task;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Policy = policy::PolicyParams<f64>;
pub type Snapshot = policy::PolicySnapshot<f64>;
pub type Clip = objectives::ClipConfig<f64>;
pub type Group = sampler::GroupBatch<f64>;
pub type Batch = sampler::EffectiveBatch<f64>;
pub type Run = trainer::RunResult<f64>;

pub mod f32 {
    pub type Policy = crate::policy::PolicyParams<f32>;
    pub type Snapshot = crate::policy::PolicySnapshot<f32>;
    pub type Clip = crate::objectives::ClipConfig<f32>;
    pub type Group = crate::sampler::GroupBatch<f32>;
    pub type Batch = crate::sampler::EffectiveBatch<f32>;
    pub type Run = crate::trainer::RunResult<f32>;
}
