//! Proximal policy optimization surrogates with an exact tabular oracle.

pub mod advantage;
pub mod autodiff;
pub mod cli;
pub mod distributions;
pub mod envs;
pub mod error;
pub mod objectives;
pub mod oracle;
pub mod policy;
pub mod scalar;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tape64 = autodiff::Tape<f64>;
pub type Tape32 = autodiff::Tape<f32>;
pub type Mlp64 = autodiff::Mlp<f64>;
pub type Mlp32 = autodiff::Mlp<f32>;
pub type PolicyDist64 = distributions::PolicyDist<f64>;
pub type PolicyDist32 = distributions::PolicyDist<f32>;
pub type ObjectiveConfig64 = objectives::ObjectiveConfig<f64>;
pub type ObjectiveConfig32 = objectives::ObjectiveConfig<f32>;
pub type SampleBatch64 = objectives::SampleBatch<f64>;
pub type SampleBatch32 = objectives::SampleBatch<f32>;
pub type Policy64 = policy::Policy<f64>;
pub type Policy32 = policy::Policy<f32>;
pub type TrainConfig64 = trainer::TrainConfig<f64>;
pub type TrainConfig32 = trainer::TrainConfig<f32>;
pub type Trainer64 = trainer::Trainer<f64>;
pub type Trainer32 = trainer::Trainer<f32>;
