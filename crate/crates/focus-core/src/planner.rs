//! Kinodynamic RRT over a learned (or exact) dynamics predictor, with an
//! optional deviation-estimator gate on every candidate expansion.
//!
//! The planner grows a tree of *predicted* states: each expansion samples a
//! steering target, picks the nearest tree node, propagates a handful of
//! random candidate actions through the predictor, and accepts the best
//! candidate that passes the gate. Nodes whose predicted deviation exceeds
//! `d_max` are only admitted through a low-probability random accept, which
//! keeps a controlled trickle of exploration into poorly-modeled regions.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::DynamicsModel;
use crate::envs::{self, ActionCmd, EnvSpec, State};
use crate::error::{Error, Result};
use crate::mde::{MdeGridContext, MdeModel};
use crate::seed;

/// Disc-shaped goal in goal-feature space: the controlled point's position
/// for the point environment, the chain midpoint's position for the rope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalRegion {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl GoalRegion {
    pub fn new(center: [f64; 2], radius: f64) -> Self {
        GoalRegion { center: center.to_vec(), radius }
    }

    pub fn validate(&self) -> Result<()> {
        if self.center.len() != 2 {
            return Err(Error::Shape {
                expected: 2,
                got: self.center.len(),
                context: "goal region center".into(),
            });
        }
        if !self.center.iter().all(|c| c.is_finite()) {
            return Err(Error::Config("goal region center must be finite".into()));
        }
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(Error::Config(format!(
                "goal region radius must be > 0, got {}",
                self.radius
            )));
        }
        Ok(())
    }
}

/// How a node entered the tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeGate {
    Root,
    Normal,
    RandomAccept,
}

/// Outcome of gating one candidate transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateOutcome {
    AcceptNormal,
    AcceptRandom,
    Reject,
}

/// One tree node: a predicted state plus the edge that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanNode {
    pub state: State,
    pub parent: Option<usize>,
    pub action_from_parent: Option<ActionCmd>,
    pub gate: NodeGate,
    /// Predicted deviation for the edge into this node; `None` when the gate
    /// was disabled or for the root.
    pub mde_value: Option<f64>,
}

/// Root-to-end path extracted from the tree. `nodes[0]` is the start (parent
/// ids are rewritten to path positions), `actions[i]` steers `nodes[i]` to
/// `nodes[i+1]`, and every edge satisfies
/// `nodes[i+1].state == predict(nodes[i].state, actions[i])` bit-exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Plan {
    pub nodes: Vec<PlanNode>,
    pub actions: Vec<ActionCmd>,
    pub reached_goal: bool,
    pub tree_size: usize,
    pub rng_seed: u64,
    /// Planning time in seconds. Profiling diagnostic only: excluded from
    /// serialization so artifacts stay byte-stable across machines.
    #[serde(skip)]
    pub wall_time: f64,
}

/// Search budget and gate policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerConfig {
    /// Deviation threshold below which a candidate is accepted outright.
    pub d_max: f64,
    #[serde(default = "default_random_accept_prob")]
    pub random_accept_prob: f64,
    #[serde(default = "default_goal_bias")]
    pub goal_bias: f64,
    /// Bounds both the tree size and the number of expansion attempts, so a
    /// fully closed gate still terminates.
    #[serde(default = "default_max_nodes")]
    pub max_nodes: usize,
    #[serde(default = "default_candidate_actions")]
    pub candidate_actions_per_expand: usize,
    #[serde(default = "default_true")]
    pub use_mde: bool,
    #[serde(default = "default_true")]
    pub allow_random_accepts: bool,
}

fn default_random_accept_prob() -> f64 {
    0.01
}
fn default_goal_bias() -> f64 {
    0.1
}
fn default_max_nodes() -> usize {
    2000
}
fn default_candidate_actions() -> usize {
    8
}
fn default_true() -> bool {
    true
}

impl PlannerConfig {
    /// Default policy around a given deviation threshold.
    pub fn new(d_max: f64) -> Self {
        PlannerConfig {
            d_max,
            random_accept_prob: default_random_accept_prob(),
            goal_bias: default_goal_bias(),
            max_nodes: default_max_nodes(),
            candidate_actions_per_expand: default_candidate_actions(),
            use_mde: true,
            allow_random_accepts: true,
        }
    }

    /// Evaluation variant: identical search, but candidates above `d_max`
    /// are rejected outright instead of occasionally sneaking in.
    pub fn for_eval(mut self) -> Self {
        self.allow_random_accepts = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d_max > 0.0) || !self.d_max.is_finite() {
            return Err(Error::Config(format!("d_max must be > 0, got {}", self.d_max)));
        }
        for (name, p) in
            [("random_accept_prob", self.random_accept_prob), ("goal_bias", self.goal_bias)]
        {
            if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        if self.max_nodes == 0 {
            return Err(Error::Config("max_nodes must be >= 1".into()));
        }
        if self.candidate_actions_per_expand == 0 {
            return Err(Error::Config("candidate_actions_per_expand must be >= 1".into()));
        }
        Ok(())
    }
}

/// Deviation threshold from the curriculum boundary: the boundary lives in
/// squared-error units, the threshold in distance units, with 50% headroom.
pub fn d_max_from_gamma(gamma: f64) -> f64 {
    1.5 * gamma.sqrt()
}

/// One-step state propagation. Implemented by the learned dynamics model and
/// by [`SimPredictor`] (the exact simulator), so planning quality can be
/// measured with the modeling error factored out.
pub trait Predictor {
    fn predict_next(&self, spec: &EnvSpec, state: &State, action: &ActionCmd) -> Result<State>;
}

impl Predictor for DynamicsModel {
    fn predict_next(&self, spec: &EnvSpec, state: &State, action: &ActionCmd) -> Result<State> {
        if spec.env_id != self.env_id {
            return Err(Error::Config(format!(
                "planner spec is {} but the dynamics model was trained on {}",
                spec.env_id, self.env_id
            )));
        }
        self.predict(state, action)
    }
}

/// Exact dynamics: propagates through the simulator itself.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimPredictor;

impl Predictor for SimPredictor {
    fn predict_next(&self, spec: &EnvSpec, state: &State, action: &ActionCmd) -> Result<State> {
        envs::env_step(spec, state, action)
    }
}

/// Gate one candidate transition by its predicted deviation.
///
/// Consumes exactly one uniform draw iff `d_hat >= d_max` and random accepts
/// are allowed; otherwise the rng is untouched.
pub fn mde_gate<R: Rng>(d_hat: f64, cfg: &PlannerConfig, rng: &mut R) -> GateOutcome {
    debug_assert!(d_hat >= 0.0, "deviation estimates are non-negative by construction");
    if d_hat < cfg.d_max {
        GateOutcome::AcceptNormal
    } else if cfg.allow_random_accepts && rng.gen::<f64>() < cfg.random_accept_prob {
        GateOutcome::AcceptRandom
    } else {
        GateOutcome::Reject
    }
}

/// Index of the tree node closest to `sample` (full-state distance), ties
/// broken toward the lowest id.
pub fn nearest(tree: &[PlanNode], sample: &[f64]) -> Result<usize> {
    let sample_state = State(sample.to_vec());
    nearest_by(tree, |node| envs::state_distance(&node.state, &sample_state))
}

fn nearest_by<F>(tree: &[PlanNode], mut metric: F) -> Result<usize>
where
    F: FnMut(&PlanNode) -> Result<f64>,
{
    if tree.is_empty() {
        return Err(Error::Data("nearest() called on an empty tree".into()));
    }
    let mut best = 0usize;
    let mut best_d = metric(&tree[0])?;
    for (id, node) in tree.iter().enumerate().skip(1) {
        let d = metric(node)?;
        if d < best_d {
            best = id;
            best_d = d;
        }
    }
    Ok(best)
}

/// Whether the state's goal feature lies strictly inside the goal disc.
pub fn goal_check(state: &State, goal: &GoalRegion, spec: &EnvSpec) -> Result<bool> {
    let feature = spec.goal_feature(state)?;
    let dx = feature[0] - goal.center[0];
    let dy = feature[1] - goal.center[1];
    Ok((dx * dx + dy * dy).sqrt() < goal.radius)
}

fn feature_distance(spec: &EnvSpec, state: &State, center: &[f64]) -> Result<f64> {
    let feature = spec.goal_feature(state)?;
    let dx = feature[0] - center[0];
    let dy = feature[1] - center[1];
    Ok((dx * dx + dy * dy).sqrt())
}

/// Steering target for one expansion: either a full sampled state or the
/// goal region itself, which is scored in goal-feature space because it does
/// not determine a full state for the rope.
enum SteerTarget {
    Full(State),
    Goal,
}

/// Grow a tree from `start` toward `goal` and return the best path found.
///
/// Per expansion attempt the rng is consumed in a fixed order: (1) one
/// uniform for the goal-bias coin; (2) if not goal-biased, one uniform per
/// state dimension for the sample; (3) `candidate_actions_per_expand` random
/// actions; (4) gate coins as documented on [`mde_gate`], candidates tried
/// best-first. The first candidate the gate admits becomes the new node.
///
/// Always returns a plan: to the first node predicted inside the goal, or
/// failing that to the tree node whose goal feature is closest to the goal
/// center (a root-only plan if no expansion ever succeeds).
pub fn plan<P: Predictor>(
    predictor: &P,
    mde: Option<&MdeModel>,
    spec: &EnvSpec,
    start: &State,
    goal: &GoalRegion,
    cfg: &PlannerConfig,
    rng_seed: u64,
) -> Result<Plan> {
    plan_with_tree(predictor, mde, spec, start, goal, cfg, rng_seed).map(|(p, _)| p)
}

/// [`plan`] variant that also returns the full tree, for diagnostics and
/// tree-invariant checks.
pub fn plan_with_tree<P: Predictor>(
    predictor: &P,
    mde: Option<&MdeModel>,
    spec: &EnvSpec,
    start: &State,
    goal: &GoalRegion,
    cfg: &PlannerConfig,
    rng_seed: u64,
) -> Result<(Plan, Vec<PlanNode>)> {
    let started = Instant::now();
    spec.validate()?;
    cfg.validate()?;
    goal.validate()?;
    if start.0.len() != spec.state_dim() {
        return Err(Error::Shape {
            expected: spec.state_dim(),
            got: start.0.len(),
            context: "planner start state".into(),
        });
    }
    let gate_ctx = match (cfg.use_mde, mde) {
        (false, _) => None,
        (true, Some(m)) => Some(MdeGridContext::new(m, spec)?),
        (true, None) => {
            return Err(Error::Config(
                "planner configured with use_mde=true but no deviation estimator given".into(),
            ));
        }
    };

    let mut tree = vec![PlanNode {
        state: start.clone(),
        parent: None,
        action_from_parent: None,
        gate: NodeGate::Root,
        mde_value: None,
    }];
    let mut goal_node = if goal_check(start, goal, spec)? { Some(0) } else { None };
    let mut rng = seed::rng(rng_seed, "planner");

    if goal_node.is_none() {
        'search: for _attempt in 0..cfg.max_nodes {
            if tree.len() >= cfg.max_nodes {
                break;
            }
            let target = if rng.gen::<f64>() < cfg.goal_bias {
                SteerTarget::Goal
            } else {
                let mut coords = Vec::with_capacity(spec.state_dim());
                for d in 0..spec.state_dim() {
                    let axis = d % 2;
                    coords.push(rng.gen_range(spec.bounds.min[axis]..=spec.bounds.max[axis]));
                }
                SteerTarget::Full(State(coords))
            };
            let score = |s: &State| -> Result<f64> {
                match &target {
                    SteerTarget::Full(sample) => envs::state_distance(s, sample),
                    SteerTarget::Goal => feature_distance(spec, s, &goal.center),
                }
            };
            let near_id = nearest_by(&tree, |node| score(&node.state))?;

            let n_cand = cfg.candidate_actions_per_expand;
            let mut candidates = Vec::with_capacity(n_cand);
            for _ in 0..n_cand {
                let action = envs::sample_random_action(spec, &mut rng);
                let next = predictor.predict_next(spec, &tree[near_id].state, &action)?;
                let s = score(&next)?;
                candidates.push((action, next, s));
            }
            let mut order: Vec<usize> = (0..n_cand).collect();
            order.sort_by(|&a, &b| candidates[a].2.total_cmp(&candidates[b].2));

            for idx in order {
                let (action, next, _) = &candidates[idx];
                let (gate, mde_value) = match &gate_ctx {
                    None => (NodeGate::Normal, None),
                    Some(ctx) => {
                        let d_hat =
                            ctx.predict(&tree[near_id].state.0, &action.0, &next.0)?;
                        match mde_gate(d_hat, cfg, &mut rng) {
                            GateOutcome::AcceptNormal => (NodeGate::Normal, Some(d_hat)),
                            GateOutcome::AcceptRandom => (NodeGate::RandomAccept, Some(d_hat)),
                            GateOutcome::Reject => continue,
                        }
                    }
                };
                tree.push(PlanNode {
                    state: next.clone(),
                    parent: Some(near_id),
                    action_from_parent: Some(action.clone()),
                    gate,
                    mde_value,
                });
                let new_id = tree.len() - 1;
                if goal_check(&tree[new_id].state, goal, spec)? {
                    goal_node = Some(new_id);
                    break 'search;
                }
                break;
            }
        }
    }

    let (end_id, reached_goal) = match goal_node {
        Some(id) => (id, true),
        None => {
            let id = nearest_by(&tree, |node| feature_distance(spec, &node.state, &goal.center))?;
            (id, false)
        }
    };

    let mut rev_path = vec![end_id];
    while let Some(parent) = tree[rev_path[rev_path.len() - 1]].parent {
        rev_path.push(parent);
    }
    let mut nodes = Vec::with_capacity(rev_path.len());
    let mut actions = Vec::with_capacity(rev_path.len().saturating_sub(1));
    for (pos, &tree_id) in rev_path.iter().rev().enumerate() {
        let mut node = tree[tree_id].clone();
        node.parent = if pos == 0 { None } else { Some(pos - 1) };
        if pos > 0 {
            actions.push(
                node.action_from_parent
                    .clone()
                    .expect("non-root path nodes always carry the action that created them"),
            );
        }
        nodes.push(node);
    }

    let plan = Plan {
        nodes,
        actions,
        reached_goal,
        tree_size: tree.len(),
        rng_seed,
        wall_time: started.elapsed().as_secs_f64(),
    };
    Ok((plan, tree))
}
