//! Open-system quantum control of ladder systems: Lindblad propagation, a
//! bang-bang control environment, a distributed PPO agent, greedy, GRAPE and
//! exhaustive baselines, a two-level analytic oracle, and an experiment driver.
//!
//! Everything numerical is generic over [`scalar::Real`]; the aliases below fix
//! it to `f64`.

pub mod agent;
pub mod analytic;
pub mod baselines;
pub mod bench;
pub mod env;
pub mod error;
pub mod linalg;
pub mod lindblad;
pub mod nn;
pub mod parallel;
pub mod protocol;
pub mod scalar;

pub use agent::{train, CurvePoint, TrainConfig};
pub use baselines::{exhaustive_search, grape_optimize, run_greedy, GrapeConfig, GreedyMode};
pub use bench::{ExperimentConfig, PlotKind, ResultRecord};
pub use env::run_protocol;
pub use error::{Error, Result};
pub use lindblad::fidelity;
pub use protocol::{Action, ProtocolMode};
pub use scalar::Real;

pub type Complex = num_complex::Complex<f64>;
pub type ComplexMatrix = linalg::CMatrix<f64>;
pub type LadderModel = lindblad::LadderModel<f64>;
pub type DensityMatrix = lindblad::DensityMatrix<f64>;
pub type Superoperator = lindblad::Superoperator<f64>;
pub type Propagator = lindblad::Propagator<f64>;
pub type PropagatorPair = lindblad::PropagatorPair<f64>;
pub type Protocol = protocol::Protocol<f64>;
pub type EnvConfig = env::EnvConfig<f64>;
pub type ControlEnv = env::ControlEnv<f64>;
pub type Observation = env::Observation<f64>;
pub type Trajectory = env::Trajectory<f64>;
pub type ActorCritic = agent::ActorCritic<f64>;
pub type TrainResult = agent::TrainResult<f64>;
pub type GrapeResult = baselines::GrapeResult<f64>;
pub type GreedyRun = baselines::GreedyRun<f64>;
pub type ExhaustiveResult = baselines::ExhaustiveResult<f64>;
pub type TwoLevelParams = analytic::TwoLevelParams<f64>;
