//! The learned dynamics model: source pre-training and curriculum-weighted
//! target adaptation.
//!
//! Adaptation re-weights every transition each minibatch with
//! `w = 1 - sigmoid(phi(j) * (err_sq - gamma))`, where `err_sq` is the
//! current model's squared prediction error on that transition, `gamma` is
//! the error level below which source and target dynamics are considered
//! interchangeable, and `phi(j)` grows with the epoch index `j` so the
//! inclusion boundary hardens as training proceeds. Weights act as constants
//! under differentiation: no gradient flows through the weighting sigmoid.
//!
//! Two baseline modes share the trainer: `all_data` (every weight 1) and
//! `low_initial_error` (weights computed once from the starting model and
//! then frozen).

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::envs::{EnvId, State, Transition, Variant};
use crate::error::{Error, Result};
use crate::nn::{
    self, Activation, MlpParams, OptAlgo, OptState, OutputActivation, SquaredErrorBatch,
};
use crate::seed;
use crate::stats;

/// Weight histograms are reported over 32 equal bins spanning [0, 1].
pub const WEIGHT_HIST_BINS: usize = 32;

/// Boundary hardness of the one-shot `LowInitialError` weighting: the value
/// the default affine curriculum starts from at epoch 0.
pub const LOW_INITIAL_ERROR_PHI: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptMode {
    Focus,
    AllData,
    LowInitialError,
}

impl std::fmt::Display for AdaptMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AdaptMode::Focus => write!(f, "focus"),
            AdaptMode::AllData => write!(f, "all_data"),
            AdaptMode::LowInitialError => write!(f, "low_initial_error"),
        }
    }
}

impl std::str::FromStr for AdaptMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "focus" => Ok(AdaptMode::Focus),
            "all_data" => Ok(AdaptMode::AllData),
            "low_initial_error" => Ok(AdaptMode::LowInitialError),
            other => Err(Error::Config(format!(
                "unknown mode {other:?}; expected focus, all_data, or low_initial_error"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Linear,
    Affine,
}

/// Curriculum schedule `phi(j)` plus the error threshold `gamma` it is
/// compared against: `linear` is `slope * j`, `affine` is `slope * j +
/// offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSchedule {
    pub kind: ScheduleKind,
    pub slope: f64,
    pub offset: f64,
    pub gamma: f64,
}

impl WeightSchedule {
    pub fn affine(slope: f64, offset: f64, gamma: f64) -> Self {
        WeightSchedule { kind: ScheduleKind::Affine, slope, offset, gamma }
    }

    pub fn linear(slope: f64, gamma: f64) -> Self {
        WeightSchedule { kind: ScheduleKind::Linear, slope, offset: 0.0, gamma }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.slope >= 0.0) || !(self.offset >= 0.0) {
            return Err(Error::Config("schedule slope and offset must be >= 0".into()));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::Config("schedule gamma must be > 0".into()));
        }
        Ok(())
    }

    /// `phi(j)` for the 0-based epoch index; nonnegative and nondecreasing.
    pub fn phi(&self, epoch_index: usize) -> f64 {
        let j = epoch_index as f64;
        match self.kind {
            ScheduleKind::Linear => self.slope * j,
            ScheduleKind::Affine => self.slope * j + self.offset,
        }
    }
}

/// Per-dimension standardization statistics, fit once on source data and
/// frozen for the lifetime of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalization {
    /// Mean and population standard deviation per dimension; dimensions with
    /// (numerically) zero spread get scale 1 so normalization stays finite.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Data("cannot fit normalization on an empty dataset".into()));
        }
        let dim = rows[0].len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Shape { expected: dim, got: 0, context: "normalization rows".into() });
        }
        let mut mean = vec![0.0; dim];
        for row in rows {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut var = vec![0.0; dim];
        for row in rows {
            for d in 0..dim {
                let c = row[d] - mean[d];
                var[d] += c * c;
            }
        }
        let scale = var
            .iter()
            .map(|v| {
                let s = (v / n as f64).sqrt();
                if s < 1e-8 { 1.0 } else { s }
            })
            .collect();
        Ok(Normalization { mean, scale })
    }

    pub fn identity(dim: usize) -> Self {
        Normalization { mean: vec![0.0; dim], scale: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != self.scale.len() {
            return Err(Error::Shape {
                expected: self.mean.len(),
                got: self.scale.len(),
                context: "normalization mean/scale".into(),
            });
        }
        if self.scale.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Config("normalization scales must be > 0".into()));
        }
        Ok(())
    }

    pub fn normalize(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.check(row)?;
        Ok(row
            .iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }

    pub fn denormalize(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.check(row)?;
        Ok(row
            .iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| m + s * v)
            .collect())
    }

    fn check(&self, row: &[f64]) -> Result<()> {
        if row.len() != self.dim() {
            return Err(Error::Shape {
                expected: self.dim(),
                got: row.len(),
                context: "normalization input".into(),
            });
        }
        Ok(())
    }
}

/// MLP over `concat(state, action)` predicting the next state, bracketed by
/// frozen input/output standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsModel {
    pub env_id: EnvId,
    pub net: MlpParams,
    pub input_norm: Normalization,
    pub output_norm: Normalization,
}

impl DynamicsModel {
    pub fn new(
        env_id: EnvId,
        net: MlpParams,
        input_norm: Normalization,
        output_norm: Normalization,
    ) -> Result<Self> {
        input_norm.validate()?;
        output_norm.validate()?;
        if net.input_dim() != input_norm.dim() {
            return Err(Error::Shape {
                expected: net.input_dim(),
                got: input_norm.dim(),
                context: "dynamics input normalization".into(),
            });
        }
        if net.output_dim() != output_norm.dim() {
            return Err(Error::Shape {
                expected: net.output_dim(),
                got: output_norm.dim(),
                context: "dynamics output normalization".into(),
            });
        }
        if net.input_dim() <= net.output_dim() {
            return Err(Error::Config(
                "dynamics net input must be state dim + action dim".into(),
            ));
        }
        Ok(DynamicsModel { env_id, net, input_norm, output_norm })
    }

    pub fn state_dim(&self) -> usize {
        self.net.output_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.net.input_dim() - self.net.output_dim()
    }

    /// `next = denormalize(net(normalize(state || action)))`; pure.
    pub fn predict(&self, state: &State, action: &crate::envs::ActionCmd) -> Result<State> {
        self.predict_raw(&state.0, &action.0).map(State)
    }

    pub fn predict_raw(&self, state: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        if state.len() != self.state_dim() {
            return Err(Error::Shape {
                expected: self.state_dim(),
                got: state.len(),
                context: "dynamics predict state".into(),
            });
        }
        if action.len() != self.action_dim() {
            return Err(Error::Shape {
                expected: self.action_dim(),
                got: action.len(),
                context: "dynamics predict action".into(),
            });
        }
        let mut joined = Vec::with_capacity(self.net.input_dim());
        joined.extend_from_slice(state);
        joined.extend_from_slice(action);
        let normalized = self.input_norm.normalize(&joined)?;
        let raw = nn::mlp_forward(&self.net, &normalized)?;
        self.output_norm.denormalize(&raw)
    }
}

/// Squared Euclidean distance between the model's prediction and the
/// transition's observed next state, in world units.
pub fn prediction_error_sq(model: &DynamicsModel, t: &Transition) -> Result<f64> {
    let pred = model.predict_raw(&t.state.0, &t.action.0)?;
    Ok(pred
        .iter()
        .zip(&t.next_state.0)
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

/// `w = 1 - sigmoid(phi(j) * (err_sq - gamma))`, always in [0, 1]; strictly
/// decreasing in `err_sq` whenever `phi(j) > 0`.
pub fn focus_weight(err_sq: f64, epoch_index: usize, sched: &WeightSchedule) -> f64 {
    1.0 - nn::sigmoid(sched.phi(epoch_index) * (err_sq - sched.gamma))
}

/// Mean over the batch of `err_sq * w`, with errors and weights both taken
/// from the current model. This is the value of the adaptation objective;
/// its gradient treats the weights as constants.
pub fn focused_loss(
    model: &DynamicsModel,
    batch: &[Transition],
    epoch_index: usize,
    sched: &WeightSchedule,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Config("focused_loss on an empty batch".into()));
    }
    sched.validate()?;
    let mut acc = 0.0;
    for t in batch {
        let err_sq = prediction_error_sq(model, t)?;
        acc += err_sq * focus_weight(err_sq, epoch_index, sched);
    }
    Ok(acc / batch.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReportRow {
    pub epoch: usize,
    pub mean_loss: f64,
    pub frac_below_gamma: f64,
    pub weight_hist: Vec<u64>,
}

/// Per-epoch training diagnostics. Row 0 snapshots the starting model
/// before any update (weights as the first epoch would assign them); row
/// `e >= 1` snapshots the model after epoch `e`, with weights at the phase
/// `phi(e-1)` that epoch trained under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub gamma: f64,
    pub rows: Vec<TrainReportRow>,
}

impl TrainReport {
    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["epoch".to_string(), "mean_loss".into(), "frac_below_gamma".into()];
        header.extend((0..WEIGHT_HIST_BINS).map(|b| format!("hist_bin_{b}")));
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![
                row.epoch.to_string(),
                format!("{:?}", row.mean_loss),
                format!("{:?}", row.frac_below_gamma),
            ];
            rec.extend(row.weight_hist.iter().map(|c| c.to_string()));
            w.write_record(&rec)?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::Data(e.to_string()))?)
            .map_err(|e| Error::Data(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig { hidden: vec![64, 64], activation: Activation::Relu }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptConfig {
    pub algo: OptAlgo,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for OptConfig {
    fn default() -> Self {
        OptConfig { algo: OptAlgo::Adam, lr: 1e-3, batch_size: 64 }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config("learning rate must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        Ok(())
    }

    fn make_state(&self, params: &MlpParams) -> Result<OptState> {
        match self.algo {
            OptAlgo::Sgd => OptState::sgd(self.lr),
            OptAlgo::Adam => OptState::adam(self.lr, params),
        }
    }
}

/// How per-example weights are produced during one training run.
enum WeightRule<'a> {
    Ones,
    Curriculum(&'a WeightSchedule),
    Frozen(Vec<f64>),
}

struct PreparedData {
    norm_inputs: Vec<Vec<f64>>,
    norm_targets: Vec<Vec<f64>>,
    out_scales: Vec<f64>,
}

fn check_uniform_dataset(dataset: &[Transition], expect_variant: Variant) -> Result<(EnvId, usize, usize)> {
    let first = dataset
        .first()
        .ok_or_else(|| Error::Config("training dataset is empty".into()))?;
    let (env_id, sd, ad) = (first.env_id, first.state.0.len(), first.action.0.len());
    for t in dataset {
        if t.variant != expect_variant || t.env_id != env_id {
            return Err(Error::Config(format!(
                "dataset must be uniformly {expect_variant:?}/{env_id}: found {:?}/{}",
                t.variant, t.env_id
            )));
        }
        if t.state.0.len() != sd || t.next_state.0.len() != sd || t.action.0.len() != ad {
            return Err(Error::Shape { expected: sd, got: t.state.0.len(), context: "dataset dims".into() });
        }
    }
    Ok((env_id, sd, ad))
}

fn prepare_data(
    dataset: &[Transition],
    input_norm: &Normalization,
    output_norm: &Normalization,
) -> Result<PreparedData> {
    let mut norm_inputs = Vec::with_capacity(dataset.len());
    let mut norm_targets = Vec::with_capacity(dataset.len());
    for t in dataset {
        let mut joined = Vec::with_capacity(input_norm.dim());
        joined.extend_from_slice(&t.state.0);
        joined.extend_from_slice(&t.action.0);
        norm_inputs.push(input_norm.normalize(&joined)?);
        norm_targets.push(output_norm.normalize(&t.next_state.0)?);
    }
    Ok(PreparedData { norm_inputs, norm_targets, out_scales: output_norm.scale.clone() })
}

/// World-unit squared error of `net` on prepared example `i`.
fn example_err_sq(net: &MlpParams, data: &PreparedData, i: usize) -> Result<f64> {
    let out = nn::mlp_forward(net, &data.norm_inputs[i])?;
    Ok(out
        .iter()
        .zip(&data.norm_targets[i])
        .zip(&data.out_scales)
        .map(|((y, t), s)| {
            let e = s * (y - t);
            e * e
        })
        .sum())
}

fn weights_for(rule: &WeightRule<'_>, errs: &[f64], indices: &[usize], epoch_index: usize) -> Vec<f64> {
    match rule {
        WeightRule::Ones => vec![1.0; indices.len()],
        WeightRule::Curriculum(sched) => indices
            .iter()
            .map(|&i| focus_weight(errs[i], epoch_index, sched))
            .collect(),
        WeightRule::Frozen(w) => indices.iter().map(|&i| w[i]).collect(),
    }
}

fn snapshot_row(
    net: &MlpParams,
    data: &PreparedData,
    rule: &WeightRule<'_>,
    epoch: usize,
    epoch_index: usize,
    gamma: f64,
) -> Result<TrainReportRow> {
    let n = data.norm_inputs.len();
    let mut errs = Vec::with_capacity(n);
    for i in 0..n {
        errs.push(example_err_sq(net, data, i)?);
    }
    let all: Vec<usize> = (0..n).collect();
    let weights = weights_for(rule, &errs, &all, epoch_index);
    let mean_loss = errs.iter().zip(&weights).map(|(e, w)| e * w).sum::<f64>() / n as f64;
    let frac_below_gamma = errs.iter().filter(|e| **e < gamma).count() as f64 / n as f64;
    let mut hist = vec![0u64; WEIGHT_HIST_BINS];
    for w in &weights {
        let bin = ((w * WEIGHT_HIST_BINS as f64) as usize).min(WEIGHT_HIST_BINS - 1);
        hist[bin] += 1;
    }
    Ok(TrainReportRow { epoch, mean_loss, frac_below_gamma, weight_hist: hist })
}

/// Shared minibatch trainer. Weights are recomputed from the CURRENT net on
/// every batch (curriculum rule), taken as all-ones, or read from a frozen
/// vector; in all cases they enter the gradient as constants.
fn run_training(
    mut net: MlpParams,
    data: &PreparedData,
    rule: &WeightRule<'_>,
    opt: &OptConfig,
    epochs: usize,
    seed_value: u64,
    gamma: f64,
) -> Result<(MlpParams, TrainReport)> {
    opt.validate()?;
    let n = data.norm_inputs.len();
    let mut rng = seed::rng(seed_value, "dynamics_train");
    let mut opt_state = opt.make_state(&net)?;
    let mut rows = vec![snapshot_row(&net, data, rule, 0, 0, gamma)?];
    for j in 0..epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for chunk in order.chunks(opt.batch_size) {
            let mut errs = vec![0.0; n];
            if matches!(rule, WeightRule::Curriculum(_)) {
                for &i in chunk {
                    errs[i] = example_err_sq(&net, data, i)?;
                }
            }
            let weights = weights_for(rule, &errs, chunk, j);
            let inputs: Vec<Vec<f64>> = chunk.iter().map(|&i| data.norm_inputs[i].clone()).collect();
            let targets: Vec<Vec<f64>> = chunk.iter().map(|&i| data.norm_targets[i].clone()).collect();
            let batch = SquaredErrorBatch {
                inputs: &inputs,
                targets: &targets,
                example_weights: Some(&weights),
                output_scales: Some(&data.out_scales),
            };
            let (_, grads) = nn::loss_and_grad(&net, &batch)?;
            let stepped = nn::optimizer_step(net, &grads, opt_state)?;
            net = stepped.0;
            opt_state = stepped.1;
        }
        rows.push(snapshot_row(&net, data, rule, j + 1, j, gamma)?);
    }
    Ok((net, TrainReport { gamma, rows }))
}

/// Pre-train a dynamics model on source transitions with a plain (equally
/// weighted) mean-squared-error objective. Normalization statistics come
/// from this dataset and are frozen into the returned model.
pub fn train_source(
    dataset: &[Transition],
    net_config: &NetConfig,
    opt: &OptConfig,
    epochs: usize,
    seed_value: u64,
) -> Result<(DynamicsModel, TrainReport)> {
    let (env_id, sd, ad) = check_uniform_dataset(dataset, Variant::Source)?;
    let mut layer_sizes = vec![sd + ad];
    layer_sizes.extend_from_slice(&net_config.hidden);
    layer_sizes.push(sd);
    let net = nn::mlp_init(
        &layer_sizes,
        net_config.activation,
        OutputActivation::Identity,
        seed::substream(seed_value, "dynamics_init"),
    )?;
    let joined: Vec<Vec<f64>> = dataset
        .iter()
        .map(|t| {
            let mut row = Vec::with_capacity(sd + ad);
            row.extend_from_slice(&t.state.0);
            row.extend_from_slice(&t.action.0);
            row
        })
        .collect();
    let targets: Vec<Vec<f64>> = dataset.iter().map(|t| t.next_state.0.clone()).collect();
    let input_norm = Normalization::fit(&joined)?;
    let output_norm = Normalization::fit(&targets)?;
    let data = prepare_data(dataset, &input_norm, &output_norm)?;
    let (net, report) = run_training(
        net,
        &data,
        &WeightRule::Ones,
        opt,
        epochs,
        seed_value,
        f64::INFINITY,
    )?;
    Ok((DynamicsModel::new(env_id, net, input_norm, output_norm)?, report))
}

/// Adapt `model0` to target transitions under the given mode. All modes
/// start from `model0`'s weights with fresh optimizer state and the frozen
/// source normalization; they differ only in how example weights are
/// produced.
pub fn fine_tune_dynamics(
    model0: &DynamicsModel,
    dataset: &[Transition],
    mode: AdaptMode,
    sched: &WeightSchedule,
    opt: &OptConfig,
    epochs: usize,
    seed_value: u64,
) -> Result<(DynamicsModel, TrainReport)> {
    sched.validate()?;
    let (env_id, sd, ad) = check_uniform_dataset(dataset, Variant::Target)?;
    if env_id != model0.env_id || sd != model0.state_dim() || ad != model0.action_dim() {
        return Err(Error::Config("fine-tune dataset does not match the model's environment".into()));
    }
    let data = prepare_data(dataset, &model0.input_norm, &model0.output_norm)?;
    let rule = match mode {
        AdaptMode::Focus => WeightRule::Curriculum(sched),
        AdaptMode::AllData => WeightRule::Ones,
        AdaptMode::LowInitialError => {
            // One-shot weighting from the starting model at a fixed,
            // permissive boundary hardness; unlike the curriculum these
            // weights never re-sharpen, whatever schedule the run uses.
            let frozen = WeightSchedule::affine(0.0, LOW_INITIAL_ERROR_PHI, sched.gamma);
            let mut w = Vec::with_capacity(dataset.len());
            for i in 0..dataset.len() {
                let err = example_err_sq(&model0.net, &data, i)?;
                w.push(focus_weight(err, 0, &frozen));
            }
            WeightRule::Frozen(w)
        }
    };
    let (net, report) = run_training(
        model0.net.clone(),
        &data,
        &rule,
        opt,
        epochs,
        seed_value,
        sched.gamma,
    )?;
    Ok((
        DynamicsModel::new(env_id, net, model0.input_norm.clone(), model0.output_norm.clone())?,
        report,
    ))
}

/// Default `gamma`: the 97th percentile of the model's squared prediction
/// error over a held-out source validation set.
pub fn gamma_percentile_97(model: &DynamicsModel, dataset: &[Transition]) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Data("gamma percentile needs a nonempty validation set".into()));
    }
    let mut errs = Vec::with_capacity(dataset.len());
    for t in dataset {
        errs.push(prediction_error_sq(model, t)?);
    }
    let g = stats::percentile_linear(&errs, 97.0)?;
    if !(g > 0.0) {
        return Err(Error::Numeric("97th-percentile gamma is not positive".into()));
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{self, ActionCmd, EnvSpec};
    use proptest::prelude::*;

    /// Zero-weight single-layer net bracketed by the given normalizations:
    /// predicts exactly `output_norm.mean` everywhere.
    fn zero_model(env_id: EnvId, input_norm: Normalization, output_norm: Normalization) -> DynamicsModel {
        let mut net = nn::mlp_init(
            &[input_norm.dim(), output_norm.dim()],
            Activation::Relu,
            OutputActivation::Identity,
            0,
        )
        .unwrap();
        {
            let (w, _) = nn::params_mut_for_test(&mut net);
            for layer in w.iter_mut() {
                layer.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        DynamicsModel::new(env_id, net, input_norm, output_norm).unwrap()
    }

    fn synthetic_transition(next: Vec<f64>) -> Transition {
        Transition {
            env_id: EnvId::DragPoint,
            variant: Variant::Target,
            episode_id: 0,
            step_index: 0,
            state: State(vec![0.0, 0.0]),
            action: ActionCmd(vec![0.0, 0.0]),
            next_state: State(next),
        }
    }

    /// Roll seeded random episodes in `spec` and collect the transitions.
    fn rollout(spec: &EnvSpec, episodes: u64, steps: u64, seed_value: u64) -> Vec<Transition> {
        let mut out = Vec::new();
        for ep in 0..episodes {
            let mut rng = seed::rng_indexed(seed_value, "rollout", ep);
            let mut state = envs::env_reset(spec, seed::indexed(seed_value, "rollout_reset", ep)).unwrap();
            for step in 0..steps {
                let action = envs::sample_random_action(spec, &mut rng);
                let next = envs::env_step(spec, &state, &action).unwrap();
                out.push(Transition {
                    env_id: spec.env_id,
                    variant: spec.variant,
                    episode_id: ep,
                    step_index: step,
                    state: state.clone(),
                    action,
                    next_state: next.clone(),
                });
                state = next;
            }
        }
        out
    }

    #[test]
    fn weight_at_gamma_is_exactly_half() {
        for sched in [
            WeightSchedule::affine(5.0, 3.0, 0.08),
            WeightSchedule::linear(0.5, 0.08),
            WeightSchedule::affine(12000.0, 2000.0, 4e-5),
        ] {
            for j in [0, 1, 7, 20] {
                let w = focus_weight(sched.gamma, j, &sched);
                assert!((w - 0.5).abs() < 1e-12, "w({j}) = {w}");
            }
        }
    }

    #[test]
    fn linear_schedule_at_epoch_zero_weighs_everything_half() {
        let sched = WeightSchedule::linear(0.5, 0.05);
        for err in [0.0, 0.01, 0.05, 10.0, 1e6] {
            assert!((focus_weight(err, 0, &sched) - 0.5).abs() < 1e-15);
        }
        // and phi grows linearly afterwards
        assert_eq!(sched.phi(4), 2.0);
    }

    #[test]
    fn affine_schedule_matches_frozen_logistic_values() {
        let sched = WeightSchedule::affine(5.0, 3.0, 0.08);
        // phi(0) = 3, err_sq - gamma = 1
        let w = focus_weight(sched.gamma + 1.0, 0, &sched);
        assert!((w - 0.04742587317756678).abs() < 1e-15, "w = {w}");
        // phi(20) = 103, err_sq - gamma = 0.01 -> 1 - sigmoid(1.03)
        let w = focus_weight(sched.gamma + 0.01, 20, &sched);
        assert!((w - 0.2630841041665798).abs() < 1e-13, "w = {w}");
    }

    #[test]
    fn focused_loss_matches_frozen_single_transition_value() {
        let model = zero_model(EnvId::DragPoint, Normalization::identity(4), Normalization::identity(2));
        let t = synthetic_transition(vec![0.18f64.sqrt(), 0.0]);
        // err_sq = 0.18, gamma = 0.08, phi = 3 for every epoch
        let sched = WeightSchedule::affine(0.0, 3.0, 0.08);
        let loss = focused_loss(&model, &[t], 0, &sched).unwrap();
        assert!((loss - 0.07660034697390138).abs() < 1e-12, "loss = {loss}");
    }

    #[test]
    fn focused_loss_with_flat_phi_zero_is_half_mse() {
        let model = zero_model(EnvId::DragPoint, Normalization::identity(4), Normalization::identity(2));
        let batch = vec![
            synthetic_transition(vec![0.3, 0.0]),
            synthetic_transition(vec![0.0, 0.4]),
            synthetic_transition(vec![0.1, 0.1]),
        ];
        let sched = WeightSchedule::linear(0.5, 0.05);
        let loss = focused_loss(&model, &batch, 0, &sched).unwrap();
        let mse = (0.09 + 0.16 + 0.02) / 3.0;
        assert!((loss - 0.5 * mse).abs() < 1e-14);
        assert!(focused_loss(&model, &[], 0, &sched).is_err());
    }

    #[test]
    fn zero_net_predicts_the_output_mean() {
        let out_norm = Normalization { mean: vec![0.3, -0.7], scale: vec![2.0, 0.5] };
        let model = zero_model(EnvId::DragPoint, Normalization::identity(4), out_norm);
        let pred = model
            .predict(&State(vec![0.9, 0.1]), &ActionCmd(vec![0.05, -0.05]))
            .unwrap();
        assert_eq!(pred.0, vec![0.3, -0.7]);
    }

    #[test]
    fn normalization_round_trips_and_rejects_bad_scales() {
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|i| vec![i as f64 * 0.1, (i as f64).sin(), 42.0])
            .collect();
        let norm = Normalization::fit(&rows).unwrap();
        // Constant third dimension gets the clamped scale of 1.
        assert_eq!(norm.scale[2], 1.0);
        for row in &rows {
            let back = norm.denormalize(&norm.normalize(row).unwrap()).unwrap();
            for (a, b) in row.iter().zip(&back) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let bad = Normalization { mean: vec![0.0], scale: vec![0.0] };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn prediction_error_matches_state_distance_squared() {
        let spec = EnvSpec::drag_point_source();
        let dataset = rollout(&spec, 2, 10, 7);
        let (model, _) = train_source(
            &dataset,
            &NetConfig { hidden: vec![8], activation: Activation::Tanh },
            &OptConfig::default(),
            2,
            7,
        )
        .unwrap();
        for t in &dataset {
            let err = prediction_error_sq(&model, t).unwrap();
            let pred = model.predict(&t.state, &t.action).unwrap();
            let d = envs::state_distance(&pred, &t.next_state).unwrap();
            assert!((err - d * d).abs() <= 1e-12 * err.max(1.0));
        }
    }

    #[test]
    fn weights_harden_with_epochs_on_both_sides_of_gamma() {
        let sched = WeightSchedule::affine(5.0, 3.0, 0.08);
        let above = sched.gamma + 0.02;
        let below = sched.gamma - 0.02;
        for j in 0..30 {
            assert!(
                focus_weight(above, j + 1, &sched) <= focus_weight(above, j, &sched),
                "above gamma must be nonincreasing in j"
            );
            assert!(
                focus_weight(below, j + 1, &sched) >= focus_weight(below, j, &sched),
                "below gamma must be nondecreasing in j"
            );
        }
        // Strictly decreasing in err_sq while phi > 0.
        let mut prev = focus_weight(0.0, 1, &sched);
        for k in 1..=20 {
            let w = focus_weight(k as f64 * 0.01, 1, &sched);
            assert!(w < prev);
            prev = w;
        }
    }

    proptest! {
        #[test]
        fn focus_weight_stays_in_unit_interval(
            err in 0.0..1e6f64,
            gamma in 1e-9..10.0f64,
            slope in 0.0..1e4f64,
            offset in 0.0..1e4f64,
            j in 0usize..1000,
        ) {
            let sched = WeightSchedule::affine(slope, offset, gamma);
            let w = focus_weight(err, j, &sched);
            prop_assert!((0.0..=1.0).contains(&w), "w = {w}");
        }
    }

    #[test]
    fn train_source_rejects_mixed_or_empty_datasets() {
        let spec = EnvSpec::drag_point_source();
        let mut dataset = rollout(&spec, 1, 5, 3);
        assert!(train_source(&[], &NetConfig::default(), &OptConfig::default(), 1, 0).is_err());
        dataset[3].variant = Variant::Target;
        assert!(train_source(&dataset, &NetConfig::default(), &OptConfig::default(), 1, 0).is_err());
    }

    #[test]
    fn train_source_is_deterministic_per_seed() {
        let spec = EnvSpec::drag_point_source();
        let dataset = rollout(&spec, 3, 15, 11);
        let cfg = NetConfig { hidden: vec![16], activation: Activation::Relu };
        let run = |s| train_source(&dataset, &cfg, &OptConfig::default(), 3, s).unwrap().0;
        assert_eq!(run(5).net, run(5).net, "same seed must be bit-identical");
        assert_ne!(run(5).net, run(6).net);
    }

    #[test]
    fn one_transition_is_memorized() {
        let spec = EnvSpec::drag_point_source();
        let dataset = rollout(&spec, 1, 1, 2);
        let cfg = NetConfig { hidden: vec![8], activation: Activation::Tanh };
        let opt = OptConfig { algo: OptAlgo::Adam, lr: 5e-3, batch_size: 1 };
        let (model, _) = train_source(&dataset, &cfg, &opt, 1500, 4).unwrap();
        let err = prediction_error_sq(&model, &dataset[0]).unwrap();
        assert!(err < 1e-6, "memorization error = {err}");
    }

    #[test]
    fn source_training_loss_is_nearly_monotone() {
        let spec = EnvSpec::drag_point_source();
        let dataset = rollout(&spec, 24, 25, 13);
        let cfg = NetConfig { hidden: vec![32, 32], activation: Activation::Relu };
        let (_, report) = train_source(&dataset, &cfg, &OptConfig::default(), 30, 13).unwrap();
        assert_eq!(report.rows.len(), 31);
        let n = dataset.len() as u64;
        for (e, pair) in report.rows.windows(2).enumerate() {
            assert!(
                pair[1].mean_loss <= 1.05 * pair[0].mean_loss,
                "loss rose more than 5% between epochs {e} and {}",
                e + 1
            );
        }
        for row in &report.rows {
            assert_eq!(row.weight_hist.iter().sum::<u64>(), n, "histogram mass");
            assert_eq!(row.frac_below_gamma, 1.0, "plain training reports gamma = +inf");
            assert_eq!(row.weight_hist[WEIGHT_HIST_BINS - 1], n, "all weights are 1");
        }
    }

    #[test]
    fn fine_tune_freezes_normalization_and_stays_deterministic() {
        let source = EnvSpec::drag_point_source();
        let target = EnvSpec::drag_point_target();
        let (model0, _) = train_source(
            &rollout(&source, 8, 25, 21),
            &NetConfig { hidden: vec![16], activation: Activation::Relu },
            &OptConfig::default(),
            5,
            21,
        )
        .unwrap();
        let dataset = rollout(&target, 6, 25, 22);
        let sched = WeightSchedule::affine(5.0, 3.0, 1e-4);
        let run = || {
            fine_tune_dynamics(&model0, &dataset, AdaptMode::Focus, &sched, &OptConfig::default(), 4, 9)
                .unwrap()
                .0
        };
        let tuned = run();
        assert_eq!(tuned.input_norm, model0.input_norm, "input normalization must stay frozen");
        assert_eq!(tuned.output_norm, model0.output_norm, "output normalization must stay frozen");
        assert_ne!(tuned.net, model0.net, "training must actually move the weights");
        assert_eq!(tuned.net, run().net, "fine-tuning must be deterministic");
    }

    #[test]
    fn all_data_equals_focus_with_weights_forced_to_one() {
        let source = EnvSpec::drag_point_source();
        let target = EnvSpec::drag_point_target();
        let (model0, _) = train_source(
            &rollout(&source, 8, 25, 31),
            &NetConfig { hidden: vec![16], activation: Activation::Relu },
            &OptConfig::default(),
            5,
            31,
        )
        .unwrap();
        let dataset = rollout(&target, 6, 25, 32);
        // gamma so large the sigmoid underflows to exactly 0 -> weight 1.
        let unit_sched = WeightSchedule::affine(5.0, 3.0, 1e12);
        let opt = OptConfig::default();
        let (a, _) =
            fine_tune_dynamics(&model0, &dataset, AdaptMode::AllData, &unit_sched, &opt, 4, 17).unwrap();
        let (b, _) =
            fine_tune_dynamics(&model0, &dataset, AdaptMode::Focus, &unit_sched, &opt, 4, 17).unwrap();
        assert_eq!(a.net, b.net, "all_data must reduce to focus with unit weights");
    }

    #[test]
    fn low_initial_error_weights_never_move() {
        let source = EnvSpec::drag_point_source();
        let target = EnvSpec::drag_point_target();
        let (model0, _) = train_source(
            &rollout(&source, 8, 25, 41),
            &NetConfig { hidden: vec![16], activation: Activation::Relu },
            &OptConfig::default(),
            5,
            41,
        )
        .unwrap();
        let dataset = rollout(&target, 6, 25, 42);
        let sched = WeightSchedule::affine(5.0, 3.0, 1e-4);
        let (_, report) = fine_tune_dynamics(
            &model0,
            &dataset,
            AdaptMode::LowInitialError,
            &sched,
            &OptConfig::default(),
            5,
            43,
        )
        .unwrap();
        for row in &report.rows {
            assert_eq!(
                row.weight_hist, report.rows[0].weight_hist,
                "frozen weights must produce identical histograms every epoch"
            );
        }
    }

    #[test]
    fn focusing_does_not_hurt_when_there_is_nothing_to_filter() {
        // Target dynamics identical to source: every transition is similar,
        // so focus and all_data should reach comparable validation error.
        let source = EnvSpec::drag_point_source();
        let mut clean_target = EnvSpec::drag_point_source();
        clean_target.variant = Variant::Target;
        let (model0, _) = train_source(
            &rollout(&source, 32, 25, 51),
            &NetConfig { hidden: vec![32, 32], activation: Activation::Relu },
            &OptConfig::default(),
            40,
            51,
        )
        .unwrap();
        let gamma = gamma_percentile_97(&model0, &rollout(&source, 8, 25, 52)).unwrap();
        let dataset = rollout(&clean_target, 16, 25, 53);
        let val = rollout(&clean_target, 6, 25, 54);
        let sched = WeightSchedule::affine(5.0, 3.0, gamma);
        let opt = OptConfig::default();
        let mse = |m: &DynamicsModel| {
            let total: f64 = val.iter().map(|t| prediction_error_sq(m, t).unwrap()).sum();
            total / val.len() as f64
        };
        let (focus, _) =
            fine_tune_dynamics(&model0, &dataset, AdaptMode::Focus, &sched, &opt, 15, 55).unwrap();
        let (all, _) =
            fine_tune_dynamics(&model0, &dataset, AdaptMode::AllData, &sched, &opt, 15, 55).unwrap();
        let (mf, ma) = (mse(&focus), mse(&all));
        assert!(
            (mf - ma).abs() <= 0.2 * mf.max(ma),
            "focus {mf} vs all_data {ma} diverge by more than 20%"
        );
    }

    #[test]
    fn gamma_percentile_matches_hand_interpolation() {
        let model = zero_model(EnvId::DragPoint, Normalization::identity(4), Normalization::identity(2));
        // Errors are exactly 0, 1, .., 99.
        let dataset: Vec<Transition> = (0..100)
            .map(|i| {
                let mut t = synthetic_transition(vec![(i as f64).sqrt(), 0.0]);
                t.variant = Variant::Source;
                t
            })
            .collect();
        let g = gamma_percentile_97(&model, &dataset).unwrap();
        // rank 0.97 * 99 = 96.03 -> 96 + 0.03
        assert!((g - 96.03).abs() < 1e-9, "gamma = {g}");
    }

    #[test]
    fn schedule_and_opt_validation() {
        assert!(WeightSchedule::affine(5.0, 3.0, 0.0).validate().is_err());
        assert!(WeightSchedule::affine(-1.0, 3.0, 0.1).validate().is_err());
        assert!(WeightSchedule::affine(5.0, 3.0, 0.1).validate().is_ok());
        assert!(OptConfig { algo: OptAlgo::Adam, lr: 0.0, batch_size: 64 }.validate().is_err());
        assert!(OptConfig { algo: OptAlgo::Adam, lr: 1e-3, batch_size: 0 }.validate().is_err());
    }

    #[test]
    fn train_report_csv_has_the_documented_columns() {
        let report = TrainReport {
            gamma: 0.05,
            rows: vec![TrainReportRow {
                epoch: 0,
                mean_loss: 0.125,
                frac_below_gamma: 0.5,
                weight_hist: vec![0; WEIGHT_HIST_BINS],
            }],
        };
        let csv_text = report.to_csv_string().unwrap();
        let mut lines = csv_text.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("epoch,mean_loss,frac_below_gamma,hist_bin_0,"));
        assert!(header.ends_with("hist_bin_31"));
        assert_eq!(header.split(',').count(), 3 + WEIGHT_HIST_BINS);
        assert_eq!(lines.next().unwrap().split(',').count(), 3 + WEIGHT_HIST_BINS);
        assert!(lines.next().is_none());
    }
}
