//! Curriculum-weighted adaptation of learned dynamics models, with
//! deviation-gated planning and the experiment harness around them.
//!
//! The pipeline: pre-train a small MLP dynamics model on a clean `source`
//! variant of an environment, then adapt it online to a `target` variant
//! whose transition function differs in localized regions. Adaptation
//! downweights transitions the current model predicts poorly (a curriculum
//! that starts permissive and sharpens every epoch), a second network learns
//! to predict where the model deviates, and a kinodynamic planner uses that
//! deviation estimate to keep exploration inside the region where the model
//! can be trusted.
//!
//! Modules:
//! - [`nn`]: plain-`f64` MLPs, losses, gradients, SGD/Adam.
//! - [`envs`]: deterministic desk-scale simulators in source/target pairs.
//! - [`dynamics`]: normalization, pre-training, weighted fine-tuning.
//! - [`mde`]: the model-deviation estimator.
//! - [`planner`]: deviation-gated kinodynamic RRT.
//! - [`online`]: episode execution and the iterated learn/plan/collect loop.
//! - [`harness`]: configs, artifacts on disk, benchmarks, stats, reports.

pub mod dynamics;
pub mod envs;
pub mod error;
pub mod harness;
pub mod mde;
pub mod nn;
pub mod online;
pub mod planner;
pub mod seed;
pub mod stats;

pub use dynamics::{
    AdaptMode, DynamicsModel, NetConfig, Normalization, OptConfig, TrainReport, WeightSchedule,
};
pub use envs::{ActionCmd, EnvId, EnvSpec, State, Transition, Variant};
pub use error::{Error, Result};
pub use harness::benchmark::{make_benchmark, Benchmark, BenchmarkManifest};
pub use harness::config::RunConfig;
pub use harness::io::{Manifest, RunDir};
pub use harness::report::{online_curves, weight_histogram_long, CurveRow, HistBinRow};
pub use harness::validate::{run_validation, summarize_validation, ModeSummary, ValidationRow};
pub use mde::{MdeExample, MdeModel};
pub use nn::{Activation, Gradients, MlpParams, OptState, OutputActivation};
pub use online::{EpisodeRecord, ExecConfig, Method, MetricsRow, TerminatedBy};
pub use planner::{
    GoalRegion, Plan, PlanNode, PlannerConfig, Predictor, SimPredictor,
};
