//! Run configuration: one JSON document per run, schema-validated with
//! unknown keys rejected, and re-serializable with all defaults expanded so
//! the manifest always records the fully-resolved settings.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{AdaptMode, OptConfig, ScheduleKind, WeightSchedule};
use crate::envs::{EnvSpec, State, Variant};
use crate::error::{Error, Result};
use crate::nn::{Activation, OptAlgo};
use crate::planner::{GoalRegion, PlannerConfig};

/// Source/target environment pair for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    pub source: EnvSpec,
    pub target: EnvSpec,
}

/// Network architectures for the dynamics model and deviation estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NnSection {
    #[serde(default = "default_dynamics_hidden")]
    pub dynamics_hidden: Vec<usize>,
    #[serde(default = "default_activation")]
    pub dynamics_activation: Activation,
    #[serde(default = "default_mde_hidden")]
    pub mde_hidden: Vec<usize>,
    #[serde(default = "default_activation")]
    pub mde_activation: Activation,
}

fn default_dynamics_hidden() -> Vec<usize> {
    vec![64, 64]
}
fn default_mde_hidden() -> Vec<usize> {
    vec![32, 32]
}
fn default_activation() -> Activation {
    Activation::Relu
}

impl Default for NnSection {
    fn default() -> Self {
        NnSection {
            dynamics_hidden: default_dynamics_hidden(),
            dynamics_activation: default_activation(),
            mde_hidden: default_mde_hidden(),
            mde_activation: default_activation(),
        }
    }
}

/// Source data collection plus optimization settings for both the source
/// pre-training and the per-iteration fine-tuning of the dynamics model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_source_transitions")]
    pub source_transitions: usize,
    #[serde(default = "default_episode_len")]
    pub episode_len: usize,
    #[serde(default = "default_source_epochs")]
    pub source_epochs: usize,
    #[serde(default = "default_adapt_epochs")]
    pub adapt_epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    /// Seeds for multi-seed commands (validate, online); single-seed commands
    /// take the first entry unless overridden on the command line.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

fn default_source_transitions() -> usize {
    6000
}
fn default_episode_len() -> usize {
    25
}
fn default_source_epochs() -> usize {
    200
}
fn default_adapt_epochs() -> usize {
    20
}
fn default_batch_size() -> usize {
    64
}
fn default_lr() -> f64 {
    1e-3
}
fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            source_transitions: default_source_transitions(),
            episode_len: default_episode_len(),
            source_epochs: default_source_epochs(),
            adapt_epochs: default_adapt_epochs(),
            batch_size: default_batch_size(),
            lr: default_lr(),
            seeds: default_seeds(),
        }
    }
}

impl TrainSection {
    pub fn opt(&self) -> OptConfig {
        OptConfig { algo: OptAlgo::Adam, lr: self.lr, batch_size: self.batch_size }
    }
}

/// Curriculum hardening schedule without its error threshold; the threshold
/// is resolved separately (fixed or percentile-derived) and joined in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub kind: ScheduleKind,
    pub slope: f64,
    #[serde(default)]
    pub offset: f64,
}

/// Adaptation mode plus how the error threshold is obtained: exactly one of
/// `gamma` (fixed) or `gamma_percentile` (percentile of the source model's
/// squared error on held-out source data) must be set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptSection {
    #[serde(default = "default_mode")]
    pub mode: AdaptMode,
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub gamma_percentile: Option<f64>,
}

fn default_mode() -> AdaptMode {
    AdaptMode::Focus
}

impl AdaptSection {
    pub fn weight_schedule(&self, gamma: f64) -> WeightSchedule {
        WeightSchedule {
            kind: self.schedule.kind,
            slope: self.schedule.slope,
            offset: self.schedule.offset,
            gamma,
        }
    }

    /// The error threshold to adapt under: the pinned `gamma`, or the
    /// configured percentile of `model`'s squared prediction error over a
    /// held-out source set (which may then be discarded — only the scalar
    /// survives).
    pub fn resolve_gamma(
        &self,
        model: &crate::dynamics::DynamicsModel,
        held_out: &[crate::envs::Transition],
    ) -> Result<f64> {
        match (self.gamma, self.gamma_percentile) {
            (Some(g), None) => Ok(g),
            (None, Some(p)) => {
                if held_out.is_empty() {
                    return Err(Error::Data(
                        "gamma percentile needs a nonempty held-out set".into(),
                    ));
                }
                let mut errs = Vec::with_capacity(held_out.len());
                for t in held_out {
                    errs.push(crate::dynamics::prediction_error_sq(model, t)?);
                }
                let g = crate::stats::percentile_linear(&errs, p)?;
                if !(g > 0.0) {
                    return Err(Error::Numeric(format!(
                        "gamma at percentile {p} is not positive"
                    )));
                }
                Ok(g)
            }
            _ => Err(Error::Config(
                "exactly one of adapt.gamma / adapt.gamma_percentile must be set".into(),
            )),
        }
    }
}

/// Held-out source transitions used to resolve a percentile gamma.
pub const GAMMA_HELD_OUT_TRANSITIONS: usize = 500;

/// Deviation-estimator geometry, loss shape, gate threshold, and its
/// per-iteration training budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdeSection {
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default = "default_k_mde")]
    pub k_mde: f64,
    /// Gate threshold; when absent it is derived from the resolved gamma.
    #[serde(default)]
    pub d_max: Option<f64>,
    #[serde(default = "default_mde_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
}

fn default_resolution() -> usize {
    crate::mde::DEFAULT_MDE_RESOLUTION
}
fn default_k_mde() -> f64 {
    crate::mde::DEFAULT_K_MDE
}
fn default_mde_epochs() -> usize {
    150
}

impl Default for MdeSection {
    fn default() -> Self {
        MdeSection {
            resolution: default_resolution(),
            k_mde: default_k_mde(),
            d_max: None,
            epochs: default_mde_epochs(),
            batch_size: default_batch_size(),
            lr: default_lr(),
        }
    }
}

impl MdeSection {
    pub fn opt(&self) -> OptConfig {
        OptConfig { algo: OptAlgo::Adam, lr: self.lr, batch_size: self.batch_size }
    }
}

/// Search policy knobs; the gate threshold and gate switches are resolved at
/// runtime from the method and the mde section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerSection {
    #[serde(default = "default_max_nodes")]
    pub max_nodes: usize,
    #[serde(default = "default_candidates")]
    pub candidate_actions_per_expand: usize,
    #[serde(default = "default_goal_bias")]
    pub goal_bias: f64,
    #[serde(default = "default_random_accept_prob")]
    pub random_accept_prob: f64,
}

fn default_max_nodes() -> usize {
    800
}
fn default_candidates() -> usize {
    8
}
fn default_goal_bias() -> f64 {
    0.1
}
fn default_random_accept_prob() -> f64 {
    0.01
}

impl Default for PlannerSection {
    fn default() -> Self {
        PlannerSection {
            max_nodes: default_max_nodes(),
            candidate_actions_per_expand: default_candidates(),
            goal_bias: default_goal_bias(),
            random_accept_prob: default_random_accept_prob(),
        }
    }
}

impl PlannerSection {
    pub fn planner_config(
        &self,
        d_max: f64,
        use_mde: bool,
        allow_random_accepts: bool,
    ) -> PlannerConfig {
        PlannerConfig {
            d_max,
            random_accept_prob: self.random_accept_prob,
            goal_bias: self.goal_bias,
            max_nodes: self.max_nodes,
            candidate_actions_per_expand: self.candidate_actions_per_expand,
            use_mde,
            allow_random_accepts,
        }
    }
}

/// Online-loop shape: iteration/episode counts, execution budgets, and the
/// fixed start/goal for every episode of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OnlineSection {
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_episodes")]
    pub episodes_per_iteration: usize,
    #[serde(default = "default_max_actions")]
    pub max_actions: usize,
    #[serde(default = "default_max_replans")]
    pub max_replans: usize,
    pub replan_threshold: f64,
    /// Fixed start state; when absent, one start is drawn per run from the
    /// environment's reset distribution and reused for every episode.
    #[serde(default)]
    pub start: Option<State>,
    pub goal_center: [f64; 2],
    pub goal_radius: f64,
}

fn default_iterations() -> usize {
    20
}
fn default_episodes() -> usize {
    10
}
fn default_max_actions() -> usize {
    30
}
fn default_max_replans() -> usize {
    5
}

impl OnlineSection {
    pub fn goal(&self) -> GoalRegion {
        GoalRegion { center: self.goal_center.to_vec(), radius: self.goal_radius }
    }
}

/// Frozen-checkpoint evaluation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(default = "default_eval_episodes")]
    pub n_episodes: usize,
    /// Evaluation step budget = multiplier x the training max_actions.
    #[serde(default = "default_budget_multiplier")]
    pub budget_multiplier: usize,
}

fn default_eval_episodes() -> usize {
    20
}
fn default_budget_multiplier() -> usize {
    2
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            n_episodes: default_eval_episodes(),
            budget_multiplier: default_budget_multiplier(),
        }
    }
}

/// Artifact placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoSection {
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    /// Run directory name; when absent one is derived from env/mode/seed.
    #[serde(default)]
    pub run_id: Option<String>,
}

fn default_out_dir() -> String {
    "runs".into()
}

impl Default for IoSection {
    fn default() -> Self {
        IoSection { out_dir: default_out_dir(), run_id: None }
    }
}

/// Adaptation benchmark construction: dataset sizes, the share of rollouts
/// steered into distractor regions, and the similarity oracle's threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSection {
    #[serde(default = "default_train_size")]
    pub train_size: usize,
    #[serde(default = "default_val_size")]
    pub val_size: usize,
    #[serde(default = "default_episode_len")]
    pub episode_len: usize,
    /// Fraction of episodes steered toward distractor regions rather than
    /// rolled out with uniform random actions.
    #[serde(default = "default_steered_share")]
    pub steered_share: f64,
    /// Target fraction of dissimilar-labeled transitions in the train set.
    #[serde(default = "default_distractor_fraction")]
    pub distractor_fraction: f64,
    /// Allowed deviation of the achieved fraction from the target.
    #[serde(default = "default_distractor_tolerance")]
    pub distractor_tolerance: f64,
    #[serde(default = "default_similarity_gamma")]
    pub similarity_gamma: f64,
}

fn default_train_size() -> usize {
    2000
}
fn default_val_size() -> usize {
    300
}
fn default_steered_share() -> f64 {
    0.5
}
fn default_distractor_fraction() -> f64 {
    0.3
}
fn default_distractor_tolerance() -> f64 {
    0.05
}
fn default_similarity_gamma() -> f64 {
    0.02
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        BenchmarkSection {
            train_size: default_train_size(),
            val_size: default_val_size(),
            episode_len: default_episode_len(),
            steered_share: default_steered_share(),
            distractor_fraction: default_distractor_fraction(),
            distractor_tolerance: default_distractor_tolerance(),
            similarity_gamma: default_similarity_gamma(),
        }
    }
}

/// The complete run configuration. All fields below `env` carry defaults so
/// config files only state what they change; `resolved` serialization always
/// writes every field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvSection,
    #[serde(default)]
    pub nn: NnSection,
    #[serde(default)]
    pub train: TrainSection,
    pub adapt: AdaptSection,
    #[serde(default)]
    pub mde: MdeSection,
    #[serde(default)]
    pub planner: PlannerSection,
    pub online: OnlineSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub io: IoSection,
    #[serde(default)]
    pub benchmark: BenchmarkSection,
}

impl RunConfig {
    /// Parse and validate a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
        })?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| {
            Error::Config(format!("parsing config {}: {e}", path.display()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.env.source.validate()?;
        self.env.target.validate()?;
        if self.env.source.variant != Variant::Source {
            return Err(Error::Config("env.source must have variant \"source\"".into()));
        }
        if self.env.target.variant != Variant::Target {
            return Err(Error::Config("env.target must have variant \"target\"".into()));
        }
        if self.env.source.env_id != self.env.target.env_id {
            return Err(Error::Config("env.source and env.target must share an env_id".into()));
        }
        match (self.adapt.gamma, self.adapt.gamma_percentile) {
            (Some(g), None) if g > 0.0 && g.is_finite() => {}
            (None, Some(p)) if (0.0..=100.0).contains(&p) => {}
            (Some(_), None) => {
                return Err(Error::Config("adapt.gamma must be a positive finite number".into()));
            }
            (None, Some(_)) => {
                return Err(Error::Config(
                    "adapt.gamma_percentile must lie in [0, 100]".into(),
                ));
            }
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "adapt.gamma and adapt.gamma_percentile are mutually exclusive".into(),
                ));
            }
            (None, None) => {
                return Err(Error::Config(
                    "one of adapt.gamma or adapt.gamma_percentile is required".into(),
                ));
            }
        }
        // Probe the schedule with a placeholder threshold; gamma itself was
        // validated above or is derived from data later.
        self.adapt.weight_schedule(1.0).validate()?;
        if let Some(d) = self.mde.d_max {
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Config("mde.d_max must be > 0 when given".into()));
            }
        }
        if self.mde.resolution == 0 {
            return Err(Error::Config("mde.resolution must be >= 1".into()));
        }
        for (name, v) in [
            ("train.source_transitions", self.train.source_transitions),
            ("train.episode_len", self.train.episode_len),
            ("train.source_epochs", self.train.source_epochs),
            ("train.adapt_epochs", self.train.adapt_epochs),
            ("train.batch_size", self.train.batch_size),
            ("mde.epochs", self.mde.epochs),
            ("mde.batch_size", self.mde.batch_size),
            ("online.iterations", self.online.iterations),
            ("online.episodes_per_iteration", self.online.episodes_per_iteration),
            ("online.max_actions", self.online.max_actions),
            ("eval.n_episodes", self.eval.n_episodes),
            ("eval.budget_multiplier", self.eval.budget_multiplier),
            ("benchmark.train_size", self.benchmark.train_size),
            ("benchmark.val_size", self.benchmark.val_size),
            ("benchmark.episode_len", self.benchmark.episode_len),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if self.train.seeds.is_empty() {
            return Err(Error::Config("train.seeds must be nonempty".into()));
        }
        if !(self.train.lr > 0.0) || !(self.mde.lr > 0.0) {
            return Err(Error::Config("learning rates must be > 0".into()));
        }
        if !(self.online.replan_threshold >= 0.0) || !self.online.replan_threshold.is_finite() {
            return Err(Error::Config("online.replan_threshold must be finite and >= 0".into()));
        }
        if let Some(start) = &self.online.start {
            if start.0.len() != self.env.target.state_dim() {
                return Err(Error::Shape {
                    expected: self.env.target.state_dim(),
                    got: start.0.len(),
                    context: "online.start".into(),
                });
            }
        }
        self.online.goal().validate()?;
        // Planner knobs are checked through the type they feed.
        self.planner.planner_config(1.0, true, true).validate()?;
        for (name, p) in [
            ("benchmark.steered_share", self.benchmark.steered_share),
            ("benchmark.distractor_fraction", self.benchmark.distractor_fraction),
            ("benchmark.distractor_tolerance", self.benchmark.distractor_tolerance),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        if !(self.benchmark.similarity_gamma > 0.0) {
            return Err(Error::Config("benchmark.similarity_gamma must be > 0".into()));
        }
        if self.benchmark.val_size > self.benchmark.train_size {
            return Err(Error::Config(
                "benchmark.val_size larger than benchmark.train_size".into(),
            ));
        }
        Ok(())
    }

    /// Fully-resolved (defaults expanded) canonical JSON echo of this config.
    pub fn resolved_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Run directory name: explicit `io.run_id`, or derived from the
    /// environment, method label, and seed.
    pub fn run_id(&self, method_label: &str, seed_value: u64) -> String {
        match &self.io.run_id {
            Some(id) => id.clone(),
            None => format!("{}_{method_label}_s{seed_value}", self.env.target.env_id),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvSpec;

    fn minimal_json() -> serde_json::Value {
        serde_json::json!({
            "env": {
                "source": serde_json::to_value(EnvSpec::drag_point_source()).unwrap(),
                "target": serde_json::to_value(EnvSpec::drag_point_target()).unwrap(),
            },
            "adapt": {
                "schedule": {"kind": "affine", "slope": 5.0, "offset": 3.0},
                "gamma": 4e-5,
            },
            "online": {
                "replan_threshold": 0.05,
                "goal_center": [0.88, 0.5],
                "goal_radius": 0.05,
            },
        })
    }

    #[test]
    fn minimal_config_expands_defaults() {
        let cfg: RunConfig = serde_json::from_value(minimal_json()).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.nn.dynamics_hidden, vec![64, 64]);
        assert_eq!(cfg.train.batch_size, 64);
        assert_eq!(cfg.mde.resolution, 16);
        assert_eq!(cfg.planner.max_nodes, 800);
        assert_eq!(cfg.online.iterations, 20);
        assert_eq!(cfg.eval.n_episodes, 20);
        assert_eq!(cfg.io.out_dir, "runs");
        assert_eq!(cfg.benchmark.train_size, 2000);
        // The resolved echo must spell out every section.
        let echo = cfg.resolved_json().unwrap();
        for key in ["\"nn\"", "\"train\"", "\"eval\"", "\"benchmark\"", "\"mde_hidden\""] {
            assert!(echo.contains(key), "resolved config missing {key}");
        }
        let back: RunConfig = serde_json::from_str(&echo).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected_at_every_level() {
        let mut top = minimal_json();
        top["surprise"] = 1.into();
        assert!(serde_json::from_value::<RunConfig>(top).is_err());

        let mut nested = minimal_json();
        nested["adapt"]["extra"] = 1.into();
        assert!(serde_json::from_value::<RunConfig>(nested).is_err());

        let mut planner = minimal_json();
        planner["planner"] = serde_json::json!({"max_nodez": 5});
        assert!(serde_json::from_value::<RunConfig>(planner).is_err());
    }

    #[test]
    fn gamma_sources_are_mutually_exclusive_and_required() {
        let mut both = minimal_json();
        both["adapt"]["gamma_percentile"] = serde_json::json!(97.0);
        let cfg: RunConfig = serde_json::from_value(both).unwrap();
        assert!(cfg.validate().is_err());

        let mut neither = minimal_json();
        neither["adapt"].as_object_mut().unwrap().remove("gamma");
        let cfg: RunConfig = serde_json::from_value(neither).unwrap();
        assert!(cfg.validate().is_err());

        let mut pct = minimal_json();
        pct["adapt"].as_object_mut().unwrap().remove("gamma");
        pct["adapt"]["gamma_percentile"] = serde_json::json!(97.0);
        let cfg: RunConfig = serde_json::from_value(pct).unwrap();
        cfg.validate().unwrap();
    }

    #[test]
    fn cross_field_validation_catches_env_mismatch() {
        let mut swapped = minimal_json();
        swapped["env"]["target"] =
            serde_json::to_value(EnvSpec::drag_point_source()).unwrap();
        let cfg: RunConfig = serde_json::from_value(swapped).unwrap();
        assert!(cfg.validate().is_err(), "target with source variant must fail");

        let mut chain = minimal_json();
        chain["env"]["target"] = serde_json::to_value(EnvSpec::chain_target()).unwrap();
        let cfg: RunConfig = serde_json::from_value(chain).unwrap();
        assert!(cfg.validate().is_err(), "mixed env ids must fail");
    }

    #[test]
    fn run_id_prefers_the_explicit_name() {
        let mut cfg: RunConfig = serde_json::from_value(minimal_json()).unwrap();
        assert_eq!(cfg.run_id("focus", 3), "drag_point_focus_s3");
        cfg.io.run_id = Some("pinned".into());
        assert_eq!(cfg.run_id("focus", 3), "pinned");
    }
}
