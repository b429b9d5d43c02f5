//! Deterministic desk-scale environments in two variants.
//!
//! Each environment exists as a `source` variant (clean dynamics, used for
//! pre-training) and a `target` variant whose transition function differs:
//! a global gain shift everywhere, plus localized distractions (invisible
//! distractor patches for `drag_point`, contact with visible obstacles for
//! `chain_rope_2d`).
//!
//! Everything here is a pure function of its inputs; the only randomness is
//! in `env_reset` and `sample_random_action`, both seeded explicitly.
//! `is_similar_region` is a ground-truth oracle that steps both simulators;
//! it exists for benchmark labeling and metrics only and is never visible to
//! the learner.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Tolerance to which the chain constraint solver is driven; the public
/// contract (segment lengths, obstacle clearance) is 1e-6, so solving to
/// 1e-9 leaves three orders of margin.
const CHAIN_SOLVE_TOL: f64 = 1e-9;
const CHAIN_SOLVE_MAX_ITERS: usize = 5_000;
/// Grippers cannot pull the chain taut beyond this fraction of its total
/// length; keeping slack bounds the constraint solver away from the
/// infeasible fully-stretched configuration.
const CHAIN_MAX_SPAN_FRACTION: f64 = 0.97;
const RESET_MAX_ATTEMPTS: usize = 10_000;
const SETTLE_MAX_ITERS: usize = 5_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvId {
    DragPoint,
    #[serde(rename = "chain_rope_2d")]
    ChainRope2d,
}

impl std::fmt::Display for EnvId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EnvId::DragPoint => write!(f, "drag_point"),
            EnvId::ChainRope2d => write!(f, "chain_rope_2d"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Source,
    Target,
}

/// Flat state vector; `drag_point` has 2 entries, `chain_rope_2d` has
/// `2 * n_points` entries laid out `[x0, y0, x1, y1, ..]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State(pub Vec<f64>);

/// Commanded displacement for every controlled point, same `[x, y]` pair
/// layout as [`State`]. `drag_point` controls its single point, the chain
/// controls its two gripped endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionCmd(pub Vec<f64>);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Bounds {
    pub fn unit() -> Self {
        Bounds { min: [0.0, 0.0], max: [1.0, 1.0] }
    }

    fn clamp_point(&self, p: &mut [f64]) {
        p[0] = p[0].clamp(self.min[0], self.max[0]);
        p[1] = p[1].clamp(self.min[1], self.max[1]);
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min[0] && x <= self.max[0] && y >= self.min[1] && y <= self.max[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Circle {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.center[0], y - self.center[1]);
        dx * dx + dy * dy < self.radius * self.radius
    }

    fn clearance(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (x - self.center[0], y - self.center[1]);
        (dx * dx + dy * dy).sqrt() - self.radius
    }
}

/// Region of the target `drag_point` arena where displacements are scaled
/// down by `gain` and rotated by `deflection` radians. Patches never appear
/// in the occupancy grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistractorPatch {
    pub center: [f64; 2],
    pub radius: f64,
    pub gain: f64,
    pub deflection: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    pub n_points: usize,
    pub segment_length: f64,
    pub relax_iters: usize,
    pub gravity_pull: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSpec {
    pub env_id: EnvId,
    pub variant: Variant,
    pub bounds: Bounds,
    #[serde(default)]
    pub obstacles: Vec<Circle>,
    #[serde(default)]
    pub distractor_patches: Vec<DistractorPatch>,
    pub global_gain: f64,
    pub action_limit: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<ChainParams>,
}

impl EnvSpec {
    pub fn drag_point_source() -> Self {
        EnvSpec {
            env_id: EnvId::DragPoint,
            variant: Variant::Source,
            bounds: Bounds::unit(),
            obstacles: Vec::new(),
            distractor_patches: Vec::new(),
            global_gain: 1.0,
            action_limit: 0.1,
            chain: None,
        }
    }

    /// Target arena with a large central patch and two smaller ones; free
    /// corridors remain above and below the center.
    pub fn drag_point_target() -> Self {
        EnvSpec {
            variant: Variant::Target,
            global_gain: 0.9,
            distractor_patches: vec![
                DistractorPatch { center: [0.5, 0.5], radius: 0.18, gain: 0.2, deflection: 2.0 },
                DistractorPatch { center: [0.45, 0.12], radius: 0.10, gain: 0.2, deflection: -2.2 },
                DistractorPatch { center: [0.60, 0.92], radius: 0.10, gain: 0.2, deflection: 2.5 },
            ],
            ..EnvSpec::drag_point_source()
        }
    }

    pub fn chain_source() -> Self {
        EnvSpec {
            env_id: EnvId::ChainRope2d,
            variant: Variant::Source,
            bounds: Bounds::unit(),
            obstacles: Vec::new(),
            distractor_patches: Vec::new(),
            global_gain: 1.0,
            action_limit: 0.05,
            chain: Some(ChainParams {
                n_points: 8,
                segment_length: 0.08,
                relax_iters: 20,
                gravity_pull: 0.005,
            }),
        }
    }

    pub fn chain_target() -> Self {
        EnvSpec {
            variant: Variant::Target,
            global_gain: 0.9,
            obstacles: vec![Circle { center: [0.5, 0.35], radius: 0.1 }],
            ..EnvSpec::chain_source()
        }
    }

    pub fn state_dim(&self) -> usize {
        match self.env_id {
            EnvId::DragPoint => 2,
            EnvId::ChainRope2d => 2 * self.chain.map_or(0, |c| c.n_points),
        }
    }

    pub fn controlled_points(&self) -> usize {
        match self.env_id {
            EnvId::DragPoint => 1,
            EnvId::ChainRope2d => 2,
        }
    }

    pub fn action_dim(&self) -> usize {
        2 * self.controlled_points()
    }

    /// The 2D feature goals are defined over: the point itself, or the chain
    /// midpoint (the ceil(n/2)-th point, 1-based).
    pub fn goal_feature(&self, state: &State) -> Result<[f64; 2]> {
        self.check_state(state)?;
        match self.env_id {
            EnvId::DragPoint => Ok([state.0[0], state.0[1]]),
            EnvId::ChainRope2d => {
                let n = self.chain.unwrap().n_points;
                let idx = n.div_ceil(2) - 1;
                Ok([state.0[2 * idx], state.0[2 * idx + 1]])
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bounds.min[0] >= self.bounds.max[0] || self.bounds.min[1] >= self.bounds.max[1] {
            return Err(Error::Config("env bounds must have min < max per axis".into()));
        }
        if !(self.action_limit > 0.0) {
            return Err(Error::Config("action_limit must be > 0".into()));
        }
        if !(self.global_gain > 0.0 && self.global_gain <= 1.0) {
            return Err(Error::Config("global_gain must lie in (0, 1]".into()));
        }
        if self.obstacles.iter().any(|o| o.radius <= 0.0) {
            return Err(Error::Config("obstacle radii must be > 0".into()));
        }
        for p in &self.distractor_patches {
            if p.radius <= 0.0 {
                return Err(Error::Config("patch radii must be > 0".into()));
            }
            if !(p.gain > 0.0 && p.gain <= 1.0) {
                return Err(Error::Config("patch gain must lie in (0, 1]".into()));
            }
        }
        if self.variant == Variant::Source
            && (!self.obstacles.is_empty() || !self.distractor_patches.is_empty())
        {
            return Err(Error::Config(
                "source variant must have no obstacles and no distractor patches".into(),
            ));
        }
        match self.env_id {
            EnvId::DragPoint => {
                if self.chain.is_some() {
                    return Err(Error::Config("drag_point must not carry chain params".into()));
                }
            }
            EnvId::ChainRope2d => {
                let c = self
                    .chain
                    .ok_or_else(|| Error::Config("chain_rope_2d requires chain params".into()))?;
                if c.n_points < 3 {
                    return Err(Error::Config("chain needs at least 3 points".into()));
                }
                if !(c.segment_length > 0.0) {
                    return Err(Error::Config("segment_length must be > 0".into()));
                }
                if c.relax_iters == 0 {
                    return Err(Error::Config("relax_iters must be >= 1".into()));
                }
                if c.gravity_pull < 0.0 {
                    return Err(Error::Config("gravity_pull must be >= 0".into()));
                }
                if !self.distractor_patches.is_empty() {
                    return Err(Error::Config("distractor patches are drag_point-only".into()));
                }
            }
        }
        Ok(())
    }

    fn check_state(&self, state: &State) -> Result<()> {
        if state.0.len() != self.state_dim() {
            return Err(Error::Shape {
                expected: self.state_dim(),
                got: state.0.len(),
                context: format!("{} state", self.env_id),
            });
        }
        Ok(())
    }

    fn check_action(&self, action: &ActionCmd) -> Result<()> {
        if action.0.len() != self.action_dim() {
            return Err(Error::Shape {
                expected: self.action_dim(),
                got: action.0.len(),
                context: format!("{} action", self.env_id),
            });
        }
        Ok(())
    }
}

/// One executed environment step with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub env_id: EnvId,
    pub variant: Variant,
    pub episode_id: u64,
    pub step_index: u64,
    pub state: State,
    pub action: ActionCmd,
    pub next_state: State,
}

/// Euclidean distance between two states of equal dimension.
pub fn state_distance(a: &State, b: &State) -> Result<f64> {
    if a.0.len() != b.0.len() {
        return Err(Error::Shape {
            expected: a.0.len(),
            got: b.0.len(),
            context: "state_distance".into(),
        });
    }
    Ok(euclidean(&a.0, &b.0))
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn clip_action(spec: &EnvSpec, action: &ActionCmd) -> Vec<f64> {
    let mut a = action.0.clone();
    for p in 0..spec.controlled_points() {
        let (ax, ay) = (a[2 * p], a[2 * p + 1]);
        let mag = (ax * ax + ay * ay).sqrt();
        if mag > spec.action_limit {
            let s = spec.action_limit / mag;
            a[2 * p] *= s;
            a[2 * p + 1] *= s;
        }
    }
    a
}

/// Sample a start state: uniform with one `action_limit` of clearance from
/// every obstacle and patch (`drag_point`), or a settled hanging chain whose
/// points all satisfy the same clearance (`chain_rope_2d`).
pub fn env_reset(spec: &EnvSpec, seed_value: u64) -> Result<State> {
    spec.validate()?;
    let mut rng = seed::rng(seed_value, "env_reset");
    match spec.env_id {
        EnvId::DragPoint => {
            for _ in 0..RESET_MAX_ATTEMPTS {
                let x = rng.gen_range(spec.bounds.min[0]..spec.bounds.max[0]);
                let y = rng.gen_range(spec.bounds.min[1]..spec.bounds.max[1]);
                if point_clear(spec, x, y) {
                    return Ok(State(vec![x, y]));
                }
            }
            Err(Error::Data("env_reset: no clear start state found".into()))
        }
        EnvId::ChainRope2d => {
            let c = spec.chain.unwrap();
            let span = CHAIN_MAX_SPAN_FRACTION * 0.85 * (c.n_points - 1) as f64 * c.segment_length;
            let m = spec.action_limit;
            let (w, h) = (
                spec.bounds.max[0] - spec.bounds.min[0],
                spec.bounds.max[1] - spec.bounds.min[1],
            );
            let x_lo = spec.bounds.min[0] + span / 2.0 + m;
            let x_hi = spec.bounds.max[0] - span / 2.0 - m;
            let y_lo = spec.bounds.min[1] + 0.35 * h;
            let y_hi = spec.bounds.max[1] - 0.1 * h;
            if x_lo >= x_hi || y_lo >= y_hi || span + 2.0 * m >= w {
                return Err(Error::Config("bounds too small for the chain".into()));
            }
            for _ in 0..RESET_MAX_ATTEMPTS {
                let cx = rng.gen_range(x_lo..x_hi);
                let cy = rng.gen_range(y_lo..y_hi);
                let mut pts = Vec::with_capacity(2 * c.n_points);
                for i in 0..c.n_points {
                    let t = i as f64 / (c.n_points - 1) as f64;
                    pts.push(cx - span / 2.0 + t * span);
                    pts.push(cy);
                }
                let settled = match settle_chain(spec, State(pts)) {
                    Ok(s) => s,
                    Err(_) => continue,
                };
                let clear = settled
                    .0
                    .chunks(2)
                    .all(|p| point_clear(spec, p[0], p[1]) && spec.bounds.contains(p[0], p[1]));
                if clear {
                    return Ok(settled);
                }
            }
            Err(Error::Data("env_reset: no clear settled chain found".into()))
        }
    }
}

fn point_clear(spec: &EnvSpec, x: f64, y: f64) -> bool {
    spec.obstacles
        .iter()
        .all(|o| o.clearance(x, y) >= spec.action_limit)
        && spec
            .distractor_patches
            .iter()
            .all(|p| {
                let c = Circle { center: p.center, radius: p.radius };
                c.clearance(x, y) >= spec.action_limit
            })
}

/// Iterate the zero-action step map until it reaches an exact fixed point,
/// so that "no command" leaves a resting chain bit-for-bit unchanged.
fn settle_chain(spec: &EnvSpec, start: State) -> Result<State> {
    let zero = ActionCmd(vec![0.0; spec.action_dim()]);
    let mut current = chain_step(spec, &start, &zero)?;
    for _ in 0..SETTLE_MAX_ITERS {
        let next = chain_step(spec, &current, &zero)?;
        if next == current {
            return Ok(current);
        }
        current = next;
    }
    Err(Error::Numeric("chain failed to settle to a fixed point".into()))
}

/// Advance the environment one step. Pure and total on well-shaped inputs:
/// actions beyond `action_limit` are clipped, never rejected.
pub fn env_step(spec: &EnvSpec, state: &State, action: &ActionCmd) -> Result<State> {
    spec.check_state(state)?;
    spec.check_action(action)?;
    if state.0.iter().chain(action.0.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite state or action".into()));
    }
    match spec.env_id {
        EnvId::DragPoint => drag_point_step(spec, state, action),
        EnvId::ChainRope2d => chain_step(spec, state, action),
    }
}

fn drag_point_step(spec: &EnvSpec, state: &State, action: &ActionCmd) -> Result<State> {
    let a = clip_action(spec, action);
    let (x, y) = (state.0[0], state.0[1]);
    let mut dx = spec.global_gain * a[0];
    let mut dy = spec.global_gain * a[1];
    if let Some(patch) = spec
        .distractor_patches
        .iter()
        .find(|p| Circle { center: p.center, radius: p.radius }.contains(x, y))
    {
        let (c, s) = (patch.deflection.cos(), patch.deflection.sin());
        let (rx, ry) = (c * dx - s * dy, s * dx + c * dy);
        dx = patch.gain * rx;
        dy = patch.gain * ry;
    }
    let mut next = [x + dx, y + dy];
    spec.bounds.clamp_point(&mut next);
    Ok(State(vec![next[0], next[1]]))
}

fn chain_step(spec: &EnvSpec, state: &State, action: &ActionCmd) -> Result<State> {
    let c = spec.chain.unwrap();
    let n = c.n_points;
    let a = clip_action(spec, action);
    let mut pts = state.0.clone();

    // Grippers move the two endpoints; they are clamped into bounds and kept
    // out of obstacles immediately, then stay pinned through relaxation.
    for (slot, pi) in [(0usize, 0usize), (1, n - 1)] {
        pts[2 * pi] += spec.global_gain * a[2 * slot];
        pts[2 * pi + 1] += spec.global_gain * a[2 * slot + 1];
        for _ in 0..2 {
            let p = &mut pts[2 * pi..2 * pi + 2];
            spec.bounds.clamp_point(p);
            project_out_of_obstacles(spec, p);
        }
    }
    cap_endpoint_span(&mut pts, n, c.segment_length);

    for _ in 0..c.relax_iters {
        segment_sweep(&mut pts, n, c.segment_length, false);
        for i in 1..n - 1 {
            pts[2 * i + 1] -= c.gravity_pull;
        }
        for i in 1..n - 1 {
            project_out_of_obstacles(spec, &mut pts[2 * i..2 * i + 2]);
        }
    }
    polish_constraints(spec, &mut pts, n, c.segment_length);
    Ok(State(pts))
}

/// Keep the endpoint separation solvable: with both endpoints pinned, the
/// segment constraints only have a solution if the span stays below the
/// total chain length.
fn cap_endpoint_span(pts: &mut [f64], n: usize, seg_len: f64) {
    let max_span = CHAIN_MAX_SPAN_FRACTION * (n - 1) as f64 * seg_len;
    let (x0, y0) = (pts[0], pts[1]);
    let (x1, y1) = (pts[2 * (n - 1)], pts[2 * (n - 1) + 1]);
    let (dx, dy) = (x1 - x0, y1 - y0);
    let span = (dx * dx + dy * dy).sqrt();
    if span > max_span {
        let (mx, my) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
        let (ux, uy) = (dx / span, dy / span);
        pts[0] = mx - ux * max_span / 2.0;
        pts[1] = my - uy * max_span / 2.0;
        pts[2 * (n - 1)] = mx + ux * max_span / 2.0;
        pts[2 * (n - 1) + 1] = my + uy * max_span / 2.0;
    }
}

/// One Gauss-Seidel pass of distance-constraint projection over all
/// segments; endpoints have zero inverse mass.
fn segment_sweep(pts: &mut [f64], n: usize, seg_len: f64, reverse: bool) {
    let mut order: Vec<usize> = (0..n - 1).collect();
    if reverse {
        order.reverse();
    }
    for i in order {
        let (ax, ay) = (pts[2 * i], pts[2 * i + 1]);
        let (bx, by) = (pts[2 * (i + 1)], pts[2 * (i + 1) + 1]);
        let (dx, dy) = (bx - ax, by - ay);
        let len = (dx * dx + dy * dy).sqrt();
        let (ux, uy) = if len > 1e-300 { (dx / len, dy / len) } else { (1.0, 0.0) };
        let excess = len - seg_len;
        let wa = if i == 0 { 0.0 } else { 1.0 };
        let wb = if i + 1 == n - 1 { 0.0 } else { 1.0 };
        let wsum = wa + wb;
        if wsum == 0.0 {
            continue;
        }
        pts[2 * i] += ux * excess * (wa / wsum);
        pts[2 * i + 1] += uy * excess * (wa / wsum);
        pts[2 * (i + 1)] -= ux * excess * (wb / wsum);
        pts[2 * (i + 1) + 1] -= uy * excess * (wb / wsum);
    }
}

fn project_out_of_obstacles(spec: &EnvSpec, p: &mut [f64]) {
    for o in &spec.obstacles {
        let (dx, dy) = (p[0] - o.center[0], p[1] - o.center[1]);
        let dist = (dx * dx + dy * dy).sqrt();
        if dist < o.radius {
            if dist > 1e-300 {
                let s = o.radius / dist;
                p[0] = o.center[0] + dx * s;
                p[1] = o.center[1] + dy * s;
            } else {
                p[0] = o.center[0] + o.radius;
                p[1] = o.center[1];
            }
        }
    }
}

/// Alternating projections (bounds, obstacles, segments) on the interior
/// points until every constraint holds to `CHAIN_SOLVE_TOL`.
fn polish_constraints(spec: &EnvSpec, pts: &mut [f64], n: usize, seg_len: f64) {
    for _ in 0..CHAIN_SOLVE_MAX_ITERS {
        if chain_violation(spec, pts, n, seg_len) < CHAIN_SOLVE_TOL {
            return;
        }
        for i in 1..n - 1 {
            spec.bounds.clamp_point(&mut pts[2 * i..2 * i + 2]);
            project_out_of_obstacles(spec, &mut pts[2 * i..2 * i + 2]);
        }
        segment_sweep(pts, n, seg_len, false);
        segment_sweep(pts, n, seg_len, true);
    }
}

fn chain_violation(spec: &EnvSpec, pts: &[f64], n: usize, seg_len: f64) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..n - 1 {
        let (dx, dy) = (
            pts[2 * (i + 1)] - pts[2 * i],
            pts[2 * (i + 1) + 1] - pts[2 * i + 1],
        );
        worst = worst.max(((dx * dx + dy * dy).sqrt() - seg_len).abs());
    }
    for i in 0..n {
        let (x, y) = (pts[2 * i], pts[2 * i + 1]);
        for o in &spec.obstacles {
            worst = worst.max(-o.clearance(x, y));
        }
        worst = worst.max(spec.bounds.min[0] - x);
        worst = worst.max(x - spec.bounds.max[0]);
        worst = worst.max(spec.bounds.min[1] - y);
        worst = worst.max(y - spec.bounds.max[1]);
    }
    worst
}

/// Random action: per controlled point, direction uniform on the circle and
/// magnitude uniform on `[0, action_limit]`.
pub fn sample_random_action<R: Rng>(spec: &EnvSpec, rng: &mut R) -> ActionCmd {
    let mut a = Vec::with_capacity(spec.action_dim());
    for _ in 0..spec.controlled_points() {
        let theta = rng.gen_range(0.0..std::f64::consts::TAU);
        let mag = rng.gen_range(0.0..=spec.action_limit);
        a.push(mag * theta.cos());
        a.push(mag * theta.sin());
    }
    ActionCmd(a)
}

/// Ground-truth similarity oracle: steps the source and the target simulator
/// from the transition's state/action and compares where they land. Strictly
/// a labeling/metrics tool; the learner never sees it.
pub fn is_similar_region(
    target: &EnvSpec,
    source: &EnvSpec,
    transition: &Transition,
    gamma: f64,
) -> Result<bool> {
    if target.env_id != source.env_id || transition.env_id != target.env_id {
        return Err(Error::Config("similarity oracle: environment mismatch".into()));
    }
    if !(gamma > 0.0) {
        return Err(Error::Config("similarity gamma must be > 0".into()));
    }
    let from_source = env_step(source, &transition.state, &transition.action)?;
    let from_target = env_step(target, &transition.state, &transition.action)?;
    Ok(state_distance(&from_source, &from_target)? < gamma)
}

/// Row-major `resolution x resolution` binary grid over the bounds; a cell
/// is 1.0 iff its center lies inside any obstacle. Distractor patches are
/// deliberately invisible here.
pub fn occupancy_grid(spec: &EnvSpec, resolution: usize) -> Result<Vec<f64>> {
    if resolution == 0 {
        return Err(Error::Config("grid resolution must be >= 1".into()));
    }
    let (w, h) = (
        spec.bounds.max[0] - spec.bounds.min[0],
        spec.bounds.max[1] - spec.bounds.min[1],
    );
    let mut grid = vec![0.0; resolution * resolution];
    for row in 0..resolution {
        let y = spec.bounds.min[1] + (row as f64 + 0.5) * h / resolution as f64;
        for col in 0..resolution {
            let x = spec.bounds.min[0] + (col as f64 + 0.5) * w / resolution as f64;
            if spec.obstacles.iter().any(|o| o.contains(x, y)) {
                grid[row * resolution + col] = 1.0;
            }
        }
    }
    Ok(grid)
}
