//! The online adaptation loop: plan–execute episodes in the target
//! environment, aggregate every executed transition, fine-tune the dynamics
//! model on all data so far, relabel and fine-tune the deviation estimator,
//! checkpoint, repeat.
//!
//! Episodes execute open-loop: a plan's actions run in the simulator while
//! the observed state is compared to the plan's predicted state after every
//! action, and execution aborts into a replan when they diverge beyond a
//! threshold.

use serde::{Deserialize, Serialize};

use crate::dynamics::{fine_tune_dynamics, DynamicsModel, TrainReport, WeightSchedule};
use crate::envs::{self, EnvSpec, State, Transition, Variant};
use crate::error::{Error, Result};
use crate::harness::config::RunConfig;
use crate::harness::io::{self, DynamicsMeta, RunDir};
use crate::mde::{fine_tune_mde, make_mde_example, MdeExample, MdeModel};
use crate::planner::{self, GoalRegion, Plan, PlannerConfig, Predictor};
use crate::seed;

/// Experiment arm: which fine-tuning weights the dynamics model uses and
/// whether the planner's deviation gate is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Focus,
    AllData,
    AllDataNoMde,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Focus, Method::AllData, Method::AllDataNoMde];

    pub fn adapt_mode(self) -> crate::dynamics::AdaptMode {
        match self {
            Method::Focus => crate::dynamics::AdaptMode::Focus,
            Method::AllData | Method::AllDataNoMde => crate::dynamics::AdaptMode::AllData,
        }
    }

    pub fn uses_gate(self) -> bool {
        !matches!(self, Method::AllDataNoMde)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Focus => write!(f, "focus"),
            Method::AllData => write!(f, "all_data"),
            Method::AllDataNoMde => write!(f, "all_data_no_mde"),
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "focus" => Ok(Method::Focus),
            "all_data" => Ok(Method::AllData),
            "all_data_no_mde" => Ok(Method::AllDataNoMde),
            other => Err(Error::Config(format!(
                "unknown method {other:?}; expected focus, all_data, or all_data_no_mde"
            ))),
        }
    }
}

/// Why an episode stopped: the observed state entered the goal, the action
/// budget ran out, or the replanning budget ran out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminatedBy {
    Goal,
    Timeout,
    Budget,
}

/// Execution policy for one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecConfig {
    pub start: State,
    pub goal: GoalRegion,
    /// Strict divergence threshold between observed and predicted state.
    pub replan_threshold: f64,
    pub max_actions: usize,
    pub max_replans: usize,
}

impl ExecConfig {
    pub fn validate(&self) -> Result<()> {
        self.goal.validate()?;
        if !(self.replan_threshold >= 0.0) || !self.replan_threshold.is_finite() {
            return Err(Error::Config("replan_threshold must be finite and >= 0".into()));
        }
        if self.max_actions == 0 {
            return Err(Error::Config("max_actions must be >= 1".into()));
        }
        Ok(())
    }
}

/// Everything observed during one plan–execute episode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode_id: u64,
    pub start_state: State,
    pub goal: GoalRegion,
    pub plans: Vec<Plan>,
    pub executed_transitions: Vec<Transition>,
    /// The observed state entered the goal.
    pub success: bool,
    /// Some plan predicted reaching the goal.
    pub plan_reached_goal: bool,
    /// Plans beyond the first, whether triggered by divergence or by running
    /// out of planned actions short of the goal.
    pub replan_count: usize,
    pub terminated_by: TerminatedBy,
}

/// Plan and execute until the goal, action budget, or replan budget.
///
/// Planner calls draw their seeds as `indexed(rng_seed, "plan", k)` for the
/// k-th plan of the episode, so an episode is fully determined by
/// (predictor, estimator, spec, exec, rng_seed).
pub fn run_episode<P: Predictor>(
    predictor: &P,
    mde: Option<&MdeModel>,
    spec: &EnvSpec,
    planner_cfg: &PlannerConfig,
    exec: &ExecConfig,
    episode_id: u64,
    rng_seed: u64,
) -> Result<EpisodeRecord> {
    exec.validate()?;
    let mut state = exec.start.clone();
    let mut plans: Vec<Plan> = Vec::new();
    let mut transitions: Vec<Transition> = Vec::new();
    let mut success = false;
    let terminated_by;

    if planner::goal_check(&state, &exec.goal, spec)? {
        success = true;
        terminated_by = TerminatedBy::Goal;
    } else {
        'episode: loop {
            if transitions.len() >= exec.max_actions {
                terminated_by = TerminatedBy::Timeout;
                break;
            }
            if plans.len() > exec.max_replans {
                terminated_by = TerminatedBy::Budget;
                break;
            }
            let plan_seed = seed::indexed(rng_seed, "plan", plans.len() as u64);
            let plan =
                planner::plan(predictor, mde, spec, &state, &exec.goal, planner_cfg, plan_seed)?;
            let actions = plan.actions.clone();
            let predicted = plan.nodes.iter().map(|n| n.state.clone()).collect::<Vec<_>>();
            plans.push(plan);
            for (i, action) in actions.iter().enumerate() {
                if transitions.len() >= exec.max_actions {
                    terminated_by = TerminatedBy::Timeout;
                    break 'episode;
                }
                let observed = envs::env_step(spec, &state, action)?;
                transitions.push(Transition {
                    env_id: spec.env_id,
                    variant: spec.variant,
                    episode_id,
                    step_index: transitions.len() as u64,
                    state: state.clone(),
                    action: action.clone(),
                    next_state: observed.clone(),
                });
                state = observed;
                if planner::goal_check(&state, &exec.goal, spec)? {
                    success = true;
                    terminated_by = TerminatedBy::Goal;
                    break 'episode;
                }
                if envs::state_distance(&state, &predicted[i + 1])? > exec.replan_threshold {
                    break; // diverged: plan again from the observed state
                }
            }
        }
    }

    let plan_reached_goal = plans.iter().any(|p| p.reached_goal);
    Ok(EpisodeRecord {
        episode_id,
        start_state: exec.start.clone(),
        goal: exec.goal.clone(),
        replan_count: plans.len().saturating_sub(1),
        plans,
        executed_transitions: transitions,
        success,
        plan_reached_goal,
        terminated_by,
    })
}

/// Random-action episodes in the source environment until `n_transitions`
/// are recorded (the final episode is truncated to land exactly on it).
pub fn collect_random_source_data(
    spec: &EnvSpec,
    n_transitions: usize,
    episode_len: usize,
    seed_value: u64,
) -> Result<Vec<Transition>> {
    if spec.variant != Variant::Source {
        return Err(Error::Config("random data collection runs in the source variant".into()));
    }
    if episode_len == 0 {
        return Err(Error::Config("episode_len must be >= 1".into()));
    }
    spec.validate()?;
    let mut out = Vec::with_capacity(n_transitions);
    let mut episode = 0u64;
    while out.len() < n_transitions {
        let mut state = envs::env_reset(spec, seed::indexed(seed_value, "collect_reset", episode))?;
        let mut rng = seed::rng_indexed(seed_value, "collect", episode);
        for step in 0..episode_len {
            if out.len() == n_transitions {
                break;
            }
            let action = envs::sample_random_action(spec, &mut rng);
            let next = envs::env_step(spec, &state, &action)?;
            out.push(Transition {
                env_id: spec.env_id,
                variant: spec.variant,
                episode_id: episode,
                step_index: step as u64,
                state,
                action,
                next_state: next.clone(),
            });
            state = next;
        }
        episode += 1;
    }
    Ok(out)
}

/// Per-iteration bookkeeping surfaced by [`online_learn`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub iteration: usize,
    pub episodes: usize,
    pub new_transitions: usize,
    pub cumulative_transitions: usize,
    pub successes: usize,
}

/// Final state of one online run.
#[derive(Debug, Clone)]
pub struct OnlineRunState {
    pub iteration: usize,
    pub model: DynamicsModel,
    pub mde: MdeModel,
    pub dataset: Vec<Transition>,
    pub summaries: Vec<IterationSummary>,
    pub master_seed: u64,
}

/// Resolve the fixed start state for a run: the configured one, or a single
/// draw from the environment's reset distribution.
pub fn resolve_start(cfg: &RunConfig, seed_value: u64) -> Result<State> {
    match &cfg.online.start {
        Some(s) => Ok(s.clone()),
        None => envs::env_reset(&cfg.env.target, seed::substream(seed_value, "episode_start")),
    }
}

/// The full online loop. Per iteration: collect episodes with the current
/// model and estimator, fine-tune the dynamics model from the source
/// checkpoint's weights on all data so far, relabel the estimator's examples
/// with the new model, continue estimator training from its previous
/// checkpoint, and write the iteration's artifacts under `run_dir`.
///
/// The estimator gate is off during iteration 1 (the estimator has seen no
/// data yet and would reject everywhere it has no support) and follows the
/// method from iteration 2 on. Evaluation is a separate pass over the saved
/// checkpoints, see [`evaluate_checkpoint`].
pub fn online_learn(
    cfg: &RunConfig,
    method: Method,
    seed_value: u64,
    model0: &DynamicsModel,
    gamma: f64,
    run_dir: &RunDir,
) -> Result<OnlineRunState> {
    cfg.validate()?;
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Config(format!("gamma must be positive and finite, got {gamma}")));
    }
    let spec = &cfg.env.target;
    if model0.env_id != spec.env_id {
        return Err(Error::Config("source model does not match the target environment".into()));
    }
    let schedule: WeightSchedule = cfg.adapt.weight_schedule(gamma);
    let d_max = cfg.mde.d_max.unwrap_or_else(|| planner::d_max_from_gamma(gamma));
    let start = resolve_start(cfg, seed_value)?;
    let goal = cfg.online.goal();
    let exec = ExecConfig {
        start,
        goal,
        replan_threshold: cfg.online.replan_threshold,
        max_actions: cfg.online.max_actions,
        max_replans: cfg.online.max_replans,
    };
    let mut mde = MdeModel::init(
        spec.state_dim(),
        spec.action_dim(),
        cfg.mde.resolution,
        cfg.mde.k_mde,
        &cfg.nn.mde_hidden,
        cfg.nn.mde_activation,
        seed::substream(seed_value, "mde_init"),
    )?;
    let mut model = model0.clone();
    let mut dataset: Vec<Transition> = Vec::new();
    let mut summaries = Vec::new();
    let mut episode_counter = 0u64;

    for iteration in 1..=cfg.online.iterations {
        let gate_active = method.uses_gate() && iteration >= 2;
        let collect_cfg = cfg.planner.planner_config(d_max, gate_active, true);
        let mut episodes = Vec::with_capacity(cfg.online.episodes_per_iteration);
        let mut new_transitions = Vec::new();
        for _ in 0..cfg.online.episodes_per_iteration {
            let episode_seed = seed::indexed(seed_value, "episode", episode_counter);
            let record = run_episode(
                &model,
                gate_active.then_some(&mde),
                spec,
                &collect_cfg,
                &exec,
                episode_counter,
                episode_seed,
            )?;
            new_transitions.extend(record.executed_transitions.iter().cloned());
            episodes.push(record);
            episode_counter += 1;
        }
        if new_transitions.is_empty() {
            return Err(Error::Data(format!(
                "iteration {iteration} collected no transitions; dataset growth invariant broken"
            )));
        }
        dataset.extend(new_transitions.iter().cloned());

        let (tuned, report): (DynamicsModel, TrainReport) = fine_tune_dynamics(
            model0,
            &dataset,
            method.adapt_mode(),
            &schedule,
            &cfg.train.opt(),
            cfg.train.adapt_epochs,
            seed::indexed(seed_value, "adapt", iteration as u64),
        )?;
        model = tuned;

        let examples: Vec<MdeExample> = dataset
            .iter()
            .map(|t| make_mde_example(&model, spec, t, cfg.mde.resolution))
            .collect::<Result<_>>()?;
        let (tuned_mde, _losses) = fine_tune_mde(
            &mde,
            &examples,
            &cfg.mde.opt(),
            cfg.mde.epochs,
            seed::indexed(seed_value, "mde", iteration as u64),
        )?;
        mde = tuned_mde;

        let meta = DynamicsMeta {
            gamma_used: Some(gamma),
            mode: Some(method.adapt_mode()),
            schedule: Some(schedule),
        };
        io::write_dynamics_checkpoint(&run_dir.dynamics_ckpt(iteration), &model, &meta)?;
        io::write_mde_checkpoint(&run_dir.mde_ckpt(iteration), &mde)?;
        io::write_jsonl(&run_dir.episodes_path(iteration), &episodes)?;
        io::write_jsonl(&run_dir.dataset_shard_path(iteration), &new_transitions)?;
        io::write_string(&run_dir.train_report_path(iteration), &report.to_csv_string()?)?;

        summaries.push(IterationSummary {
            iteration,
            episodes: episodes.len(),
            new_transitions: new_transitions.len(),
            cumulative_transitions: dataset.len(),
            successes: episodes.iter().filter(|e| e.success).count(),
        });
    }

    Ok(OnlineRunState {
        iteration: cfg.online.iterations,
        model,
        mde,
        dataset,
        summaries,
        master_seed: seed_value,
    })
}

/// One row of the evaluation metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: Method,
    pub seed: u64,
    pub iteration: usize,
    /// Overall success rate.
    pub success: f64,
    /// Success rate over episodes whose planner predicted reaching the goal;
    /// empty when no plan did.
    pub success_given_plan: Option<f64>,
    /// Fraction of episodes where some plan predicted reaching the goal.
    pub frac_plans_reach_goal: f64,
    pub n_episodes: usize,
}

/// Evaluate a frozen checkpoint pair: same episode mechanics as collection,
/// but random accepts are disabled and the action budget is multiplied.
/// `gamma` is the threshold recorded with the checkpoint being evaluated; it
/// backs the gate threshold when the config does not pin one.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_checkpoint<P: Predictor>(
    predictor: &P,
    mde: Option<&MdeModel>,
    cfg: &RunConfig,
    method: Method,
    seed_value: u64,
    iteration: usize,
    n_episodes: usize,
    start: &State,
    gamma: f64,
) -> Result<MetricsRow> {
    if n_episodes == 0 {
        return Err(Error::Config("evaluation needs n_episodes >= 1".into()));
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Config(format!("gamma must be positive and finite, got {gamma}")));
    }
    let spec = &cfg.env.target;
    let d_max = cfg.mde.d_max.unwrap_or_else(|| planner::d_max_from_gamma(gamma));
    let use_mde = method.uses_gate();
    if use_mde && mde.is_none() {
        return Err(Error::Config("evaluation of a gated method needs the estimator".into()));
    }
    let planner_cfg = cfg.planner.planner_config(d_max, use_mde, false);
    let exec = ExecConfig {
        start: start.clone(),
        goal: cfg.online.goal(),
        replan_threshold: cfg.online.replan_threshold,
        max_actions: cfg.online.max_actions * cfg.eval.budget_multiplier,
        max_replans: cfg.online.max_replans,
    };
    let iter_seed = seed::indexed(seed_value, "eval_iter", iteration as u64);
    let mut successes = 0usize;
    let mut plans_reached = 0usize;
    let mut success_and_plan = 0usize;
    for e in 0..n_episodes {
        let record = run_episode(
            predictor,
            mde,
            spec,
            &planner_cfg,
            &exec,
            e as u64,
            seed::indexed(iter_seed, "eval_episode", e as u64),
        )?;
        if record.success {
            successes += 1;
        }
        if record.plan_reached_goal {
            plans_reached += 1;
            if record.success {
                success_and_plan += 1;
            }
        }
    }
    let n = n_episodes as f64;
    Ok(MetricsRow {
        method,
        seed: seed_value,
        iteration,
        success: successes as f64 / n,
        success_given_plan: (plans_reached > 0)
            .then(|| success_and_plan as f64 / plans_reached as f64),
        frac_plans_reach_goal: plans_reached as f64 / n,
        n_episodes,
    })
}
