//! Model deviation estimator (MDE): a small network that predicts how far
//! the learned dynamics model's prediction will be from reality for a
//! proposed transition.
//!
//! Inputs are the flattened occupancy grid of the environment plus
//! `(state, action, predicted_next)`; the output is a strictly positive
//! scalar through a softplus head. Training minimizes
//! `(d_hat - d)^2 * exp(-k * d)` — squared error exponentially down-weighted
//! in the true error `d`, so the estimator is pushed hard to be right where
//! the model is good and only loosely where the model is already known to be
//! bad. Underestimating a large deviation costs far less than inventing one
//! where the model is accurate, which is exactly the bias a validity gate
//! wants.

use serde::{Deserialize, Serialize};

use crate::dynamics::{DynamicsModel, Normalization, OptConfig};
use crate::envs::{self, ActionCmd, EnvSpec, State, Transition, Variant};
use crate::error::{Error, Result};
use crate::nn::{self, Activation, MlpParams, OutputActivation};
use crate::seed;

/// Exponential down-weighting strength in the training loss.
pub const DEFAULT_K_MDE: f64 = 10.0;
/// Occupancy grid side length fed to the estimator.
pub const DEFAULT_MDE_RESOLUTION: usize = 16;
/// Deviation scale the softplus head is initialized to output. Without this
/// the head starts near ln 2 while real deviations live orders of magnitude
/// lower; the long descent at small learning rates (or the optimizer noise
/// floor at large ones) wrecks the ranking the estimator exists to provide.
pub const MDE_OUTPUT_PRIOR: f64 = 0.05;

/// Deviation estimator network plus the grid geometry it was built for.
/// `input_norm` starts empty and is fit on the first training call, then
/// frozen for the lifetime of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct MdeModel {
    pub net: MlpParams,
    pub resolution: usize,
    pub k_mde: f64,
    pub input_norm: Option<Normalization>,
}

impl MdeModel {
    /// Fresh estimator for the given state/action dimensions.
    pub fn init(
        state_dim: usize,
        action_dim: usize,
        resolution: usize,
        k_mde: f64,
        hidden: &[usize],
        activation: Activation,
        seed_value: u64,
    ) -> Result<Self> {
        if resolution == 0 {
            return Err(Error::Config("mde resolution must be >= 1".into()));
        }
        if !(k_mde > 0.0) {
            return Err(Error::Config("k_mde must be > 0".into()));
        }
        let input = resolution * resolution + 2 * state_dim + action_dim;
        let mut layer_sizes = vec![input];
        layer_sizes.extend_from_slice(hidden);
        layer_sizes.push(1);
        let mut net =
            nn::mlp_init(&layer_sizes, activation, OutputActivation::Softplus, seed_value)?;
        // softplus^{-1}(prior), so the untrained head reports a pessimistic
        // but plausibly-scaled deviation instead of ~0.69.
        net.set_output_bias((MDE_OUTPUT_PRIOR.exp_m1()).ln());
        Ok(MdeModel { net, resolution, k_mde, input_norm: None })
    }

    pub fn grid_len(&self) -> usize {
        self.resolution * self.resolution
    }

    pub fn validate(&self) -> Result<()> {
        if self.net.output_dim() != 1 {
            return Err(Error::Config("mde net must output a single scalar".into()));
        }
        if self.net.output_activation() != OutputActivation::Softplus {
            return Err(Error::Config("mde net must use a softplus output head".into()));
        }
        if let Some(norm) = &self.input_norm {
            norm.validate()?;
            if norm.dim() != self.net.input_dim() {
                return Err(Error::Shape {
                    expected: self.net.input_dim(),
                    got: norm.dim(),
                    context: "mde normalization".into(),
                });
            }
        }
        Ok(())
    }
}

/// One labeled training example: the transition as executed, what the
/// dynamics model predicted for it, and the (unsquared) distance between
/// prediction and reality. The grid is not serialized — it is a pure
/// function of the environment and is rebuilt on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdeExample {
    #[serde(flatten)]
    pub transition: Transition,
    pub predicted_next: State,
    pub true_error: f64,
    #[serde(skip)]
    pub grid: Vec<f64>,
}

impl MdeExample {
    /// Restore the grid after deserialization.
    pub fn rebuild_grid(&mut self, spec: &EnvSpec, resolution: usize) -> Result<()> {
        if spec.env_id != self.transition.env_id {
            return Err(Error::Config("grid rebuild: environment mismatch".into()));
        }
        self.grid = envs::occupancy_grid(spec, resolution)?;
        Ok(())
    }
}

/// Label one target transition with the model's prediction and its error.
pub fn make_mde_example(
    model: &DynamicsModel,
    spec: &EnvSpec,
    t: &Transition,
    resolution: usize,
) -> Result<MdeExample> {
    if t.env_id != spec.env_id || t.env_id != model.env_id {
        return Err(Error::Config("mde example: environment mismatch".into()));
    }
    if t.variant != Variant::Target {
        return Err(Error::Config("mde examples come from target transitions".into()));
    }
    let predicted_next = model.predict(&t.state, &t.action)?;
    let true_error = envs::state_distance(&predicted_next, &t.next_state)?;
    Ok(MdeExample {
        transition: t.clone(),
        predicted_next,
        true_error,
        grid: envs::occupancy_grid(spec, resolution)?,
    })
}

/// Pointwise training loss: `(d_hat - d)^2 * exp(-k * d)`.
pub fn mde_loss(d_hat: f64, d: f64, k_mde: f64) -> f64 {
    (d_hat - d) * (d_hat - d) * (-k_mde * d).exp()
}

fn assemble_input(mde: &MdeModel, grid: &[f64], s: &[f64], a: &[f64], s_pred: &[f64]) -> Result<Vec<f64>> {
    if grid.len() != mde.grid_len() {
        return Err(Error::Shape {
            expected: mde.grid_len(),
            got: grid.len(),
            context: "mde grid".into(),
        });
    }
    let mut input = Vec::with_capacity(mde.net.input_dim());
    input.extend_from_slice(grid);
    input.extend_from_slice(s);
    input.extend_from_slice(a);
    input.extend_from_slice(s_pred);
    if input.len() != mde.net.input_dim() {
        return Err(Error::Shape {
            expected: mde.net.input_dim(),
            got: input.len(),
            context: "mde input".into(),
        });
    }
    match &mde.input_norm {
        Some(norm) => norm.normalize(&input),
        None => Ok(input),
    }
}

/// Predicted deviation for a proposed transition; always > 0 (softplus
/// head). Recomputes the occupancy grid from the `EnvSpec` — planners that query
/// thousands of candidates should use [`MdeGridContext`] instead.
pub fn mde_predict(
    mde: &MdeModel,
    spec: &EnvSpec,
    s: &State,
    a: &ActionCmd,
    s_pred: &State,
) -> Result<f64> {
    let grid = envs::occupancy_grid(spec, mde.resolution)?;
    let input = assemble_input(mde, &grid, &s.0, &a.0, &s_pred.0)?;
    Ok(nn::mlp_forward(&mde.net, &input)?[0])
}

/// Amortized predictor for a fixed (estimator, environment) pair: the grid
/// never changes inside one planning call, so the first network layer's
/// contribution from the grid cells is computed once and every query resumes
/// from that partial sum, bit-exactly equal to the plain forward pass.
pub struct MdeGridContext<'m> {
    mde: &'m MdeModel,
    grid: Vec<f64>,
    prefix: Vec<f64>,
}

impl<'m> MdeGridContext<'m> {
    pub fn new(mde: &'m MdeModel, spec: &EnvSpec) -> Result<Self> {
        mde.validate()?;
        let grid = envs::occupancy_grid(spec, mde.resolution)?;
        let normalized_grid = match &mde.input_norm {
            Some(norm) => {
                // Per-dimension standardization lets the grid cells be
                // normalized independently of the rest of the input row.
                grid.iter()
                    .enumerate()
                    .map(|(i, v)| (v - norm.mean[i]) / norm.scale[i])
                    .collect()
            }
            None => grid.clone(),
        };
        let prefix = mde.net.layer0_prefix(&normalized_grid)?;
        Ok(MdeGridContext { mde, grid, prefix })
    }

    pub fn predict(&self, s: &[f64], a: &[f64], s_pred: &[f64]) -> Result<f64> {
        let g = self.mde.grid_len();
        let rest_len = s.len() + a.len() + s_pred.len();
        if g + rest_len != self.mde.net.input_dim() {
            return Err(Error::Shape {
                expected: self.mde.net.input_dim(),
                got: g + rest_len,
                context: "mde context input".into(),
            });
        }
        let mut rest = Vec::with_capacity(rest_len);
        rest.extend_from_slice(s);
        rest.extend_from_slice(a);
        rest.extend_from_slice(s_pred);
        if let Some(norm) = &self.mde.input_norm {
            for (i, v) in rest.iter_mut().enumerate() {
                *v = (*v - norm.mean[g + i]) / norm.scale[g + i];
            }
        }
        Ok(self.mde.net.forward_with_prefix(&self.prefix, g, &rest)?[0])
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }
}

fn example_rows(mde: &MdeModel, examples: &[MdeExample]) -> Result<Vec<Vec<f64>>> {
    examples
        .iter()
        .map(|ex| {
            if ex.grid.len() != mde.grid_len() {
                return Err(Error::Data(
                    "mde example grid missing or wrong size (rebuild after loading)".into(),
                ));
            }
            let mut row = Vec::with_capacity(mde.net.input_dim());
            row.extend_from_slice(&ex.grid);
            row.extend_from_slice(&ex.transition.state.0);
            row.extend_from_slice(&ex.transition.action.0);
            row.extend_from_slice(&ex.predicted_next.0);
            if row.len() != mde.net.input_dim() {
                return Err(Error::Shape {
                    expected: mde.net.input_dim(),
                    got: row.len(),
                    context: "mde example".into(),
                });
            }
            Ok(row)
        })
        .collect()
}

/// Train (or continue training) the estimator on labeled examples by
/// minibatch descent on the mean of [`mde_loss`]. Returns the trained model
/// and the mean training loss before training and after each epoch.
///
/// Input normalization is fit on the first call ever made for this model and
/// reused untouched on every later call.
pub fn fine_tune_mde(
    mde0: &MdeModel,
    examples: &[MdeExample],
    opt: &OptConfig,
    epochs: usize,
    seed_value: u64,
) -> Result<(MdeModel, Vec<f64>)> {
    use rand::seq::SliceRandom;
    mde0.validate()?;
    opt.validate()?;
    if examples.is_empty() {
        return Err(Error::Config("mde training needs a nonempty dataset".into()));
    }
    if examples.iter().any(|ex| !ex.true_error.is_finite() || ex.true_error < 0.0) {
        return Err(Error::Data("mde example with invalid true_error".into()));
    }
    let raw_rows = example_rows(mde0, examples)?;
    let mut mde = mde0.clone();
    if mde.input_norm.is_none() {
        mde.input_norm = Some(Normalization::fit(&raw_rows)?);
    }
    let norm = mde.input_norm.as_ref().expect("set above");
    let inputs: Vec<Vec<f64>> = raw_rows
        .iter()
        .map(|r| norm.normalize(r))
        .collect::<Result<_>>()?;
    let targets: Vec<Vec<f64>> = examples.iter().map(|ex| vec![ex.true_error]).collect();
    let loss_weights: Vec<f64> = examples
        .iter()
        .map(|ex| (-mde.k_mde * ex.true_error).exp())
        .collect();

    let n = examples.len();
    let mut rng = seed::rng(seed_value, "mde_train");
    let mut net = mde.net.clone();
    let mut opt_state = match opt.algo {
        nn::OptAlgo::Sgd => nn::OptState::sgd(opt.lr)?,
        nn::OptAlgo::Adam => nn::OptState::adam(opt.lr, &net)?,
    };
    let mean_loss = |net: &MlpParams| -> Result<f64> {
        let batch = nn::SquaredErrorBatch {
            inputs: &inputs,
            targets: &targets,
            example_weights: Some(&loss_weights),
            output_scales: None,
        };
        nn::batch_loss(net, &batch)
    };
    let mut losses = vec![mean_loss(&net)?];
    for _ in 0..epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for chunk in order.chunks(opt.batch_size) {
            let b_inputs: Vec<Vec<f64>> = chunk.iter().map(|&i| inputs[i].clone()).collect();
            let b_targets: Vec<Vec<f64>> = chunk.iter().map(|&i| targets[i].clone()).collect();
            let b_weights: Vec<f64> = chunk.iter().map(|&i| loss_weights[i]).collect();
            let batch = nn::SquaredErrorBatch {
                inputs: &b_inputs,
                targets: &b_targets,
                example_weights: Some(&b_weights),
                output_scales: None,
            };
            let (_, grads) = nn::loss_and_grad(&net, &batch)?;
            let stepped = nn::optimizer_step(net, &grads, opt_state)?;
            net = stepped.0;
            opt_state = stepped.1;
        }
        losses.push(mean_loss(&net)?);
    }
    mde.net = net;
    Ok((mde, losses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{train_source, NetConfig};
    use crate::envs::EnvId;
    use crate::stats;
    use rand::Rng;

    fn rollout(spec: &EnvSpec, episodes: u64, steps: u64, seed_value: u64) -> Vec<Transition> {
        let mut out = Vec::new();
        for ep in 0..episodes {
            let mut rng = seed::rng_indexed(seed_value, "rollout", ep);
            let mut state =
                envs::env_reset(spec, seed::indexed(seed_value, "rollout_reset", ep)).unwrap();
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

    fn synthetic_example(seed_value: u64, resolution: usize, true_error: f64) -> MdeExample {
        let mut rng = seed::rng(seed_value, "mde_synth");
        fn pt<R: Rng>(rng: &mut R) -> Vec<f64> {
            (0..2).map(|_| rng.gen_range(0.0..1.0)).collect()
        }
        let state = State(pt(&mut rng));
        let action = ActionCmd(vec![rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)]);
        let predicted_next = State(pt(&mut rng));
        let next_state = State(pt(&mut rng));
        MdeExample {
            transition: Transition {
                env_id: EnvId::DragPoint,
                variant: Variant::Target,
                episode_id: 0,
                step_index: 0,
                state,
                action,
                next_state,
            },
            predicted_next,
            true_error,
            grid: vec![0.0; resolution * resolution],
        }
    }

    #[test]
    fn loss_matches_frozen_values() {
        for (d, k) in [(0.0, 1.0), (0.3, 10.0), (2.0, 0.5)] {
            assert_eq!(mde_loss(d, d, k), 0.0);
        }
        assert_eq!(mde_loss(0.5, 0.0, 10.0), 0.25);
        let v = mde_loss(0.0, 0.5, 10.0);
        assert!((v - 1.6844867497713667e-3).abs() < 1e-15, "v = {v}");
    }

    #[test]
    fn loss_asymmetry_identity_holds() {
        for e in [0.01, 0.1, 0.5, 1.0] {
            for k in [1.0, 5.0, 10.0] {
                let ratio = mde_loss(e, 0.0, k) / mde_loss(0.0, e, k);
                let expected = (k * e).exp();
                assert!(
                    ((ratio - expected) / expected).abs() < 1e-12,
                    "e={e} k={k}: {ratio} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn example_labeling_matches_hand_values() {
        let spec = EnvSpec::drag_point_target();
        let t = rollout(&spec, 1, 1, 5).pop().unwrap();
        let model = {
            let source = EnvSpec::drag_point_source();
            train_source(
                &rollout(&source, 2, 10, 5),
                &NetConfig { hidden: vec![8], activation: Activation::Tanh },
                &OptConfig::default(),
                2,
                5,
            )
            .unwrap()
            .0
        };
        let ex = make_mde_example(&model, &spec, &t, 16).unwrap();
        let d = envs::state_distance(&ex.predicted_next, &t.next_state).unwrap();
        assert_eq!(ex.true_error, d);
        assert_eq!(ex.grid, envs::occupancy_grid(&spec, 16).unwrap());

        // 3-4-5 check through a model-free construction.
        let mut ex2 = ex.clone();
        ex2.predicted_next = State(vec![0.0, 0.0]);
        ex2.transition.next_state = State(vec![0.3, 0.4]);
        let d2 = envs::state_distance(&ex2.predicted_next, &ex2.transition.next_state).unwrap();
        assert!((d2 - 0.5).abs() < 1e-15);

        // Source transitions are rejected.
        let mut bad = t.clone();
        bad.variant = Variant::Source;
        assert!(make_mde_example(&model, &spec, &bad, 16).is_err());
    }

    #[test]
    fn predictions_are_positive_pure_and_match_the_context_path() {
        let spec = EnvSpec::chain_target();
        let sd = spec.state_dim();
        let mde = MdeModel::init(sd, 4, 16, 10.0, &[16], Activation::Relu, 3).unwrap();
        let mut rng = seed::rng(9, "mde_pred");
        let ctx = MdeGridContext::new(&mde, &spec).unwrap();
        for _ in 0..200 {
            let s = State((0..sd).map(|_| rng.gen_range(0.0..1.0)).collect());
            let a = ActionCmd((0..4).map(|_| rng.gen_range(-0.05..0.05)).collect());
            let p = State((0..sd).map(|_| rng.gen_range(0.0..1.0)).collect());
            let direct = mde_predict(&mde, &spec, &s, &a, &p).unwrap();
            assert!(direct > 0.0, "softplus head must stay positive");
            assert_eq!(direct, mde_predict(&mde, &spec, &s, &a, &p).unwrap());
            assert_eq!(direct, ctx.predict(&s.0, &a.0, &p.0).unwrap(), "context path must be bit-exact");
        }
    }

    #[test]
    fn context_path_is_bit_exact_after_training_too() {
        let examples: Vec<MdeExample> =
            (0..64).map(|i| synthetic_example(i, 4, 0.01 + 0.001 * i as f64)).collect();
        let mde0 = MdeModel::init(2, 2, 4, 10.0, &[8], Activation::Relu, 7).unwrap();
        let (mde, _) = fine_tune_mde(&mde0, &examples, &OptConfig::default(), 3, 7).unwrap();
        assert!(mde.input_norm.is_some(), "first training call must fit normalization");
        let spec = EnvSpec::drag_point_target();
        let ctx = MdeGridContext::new(&mde, &spec).unwrap();
        let grid = envs::occupancy_grid(&spec, 4).unwrap();
        let mut rng = seed::rng(11, "mde_ctx");
        for _ in 0..100 {
            let s: Vec<f64> = (0..2).map(|_| rng.gen_range(0.0..1.0)).collect();
            let a: Vec<f64> = (0..2).map(|_| rng.gen_range(-0.1..0.1)).collect();
            let p: Vec<f64> = (0..2).map(|_| rng.gen_range(0.0..1.0)).collect();
            let input = assemble_input(&mde, &grid, &s, &a, &p).unwrap();
            let direct = nn::mlp_forward(&mde.net, &input).unwrap()[0];
            assert_eq!(direct, ctx.predict(&s, &a, &p).unwrap());
        }
    }

    #[test]
    fn constant_labels_are_fit_tightly() {
        let c = 0.04;
        let examples: Vec<MdeExample> = (0..64).map(|i| synthetic_example(i, 4, c)).collect();
        let mde0 = MdeModel::init(2, 2, 4, 10.0, &[16], Activation::Tanh, 5).unwrap();
        let (mde, losses) = fine_tune_mde(&mde0, &examples, &OptConfig::default(), 1200, 5).unwrap();
        assert!(
            losses.last().unwrap() < losses.first().unwrap(),
            "training must reduce the loss"
        );
        let mut flat = EnvSpec::drag_point_source();
        flat.variant = Variant::Target;
        for ex in &examples {
            let d_hat = mde_predict(
                &mde,
                &flat,
                &ex.transition.state,
                &ex.transition.action,
                &ex.predicted_next,
            )
            .unwrap();
            assert!(
                (d_hat - c).abs() < 0.05 * c.max(0.01),
                "constant fit off: {d_hat} vs {c}"
            );
        }
    }

    #[test]
    fn training_is_deterministic_and_freezes_normalization() {
        let examples: Vec<MdeExample> =
            (0..80).map(|i| synthetic_example(i, 4, 0.002 * i as f64)).collect();
        let mde0 = MdeModel::init(2, 2, 4, 10.0, &[8], Activation::Relu, 1).unwrap();
        let opt = OptConfig::default();
        let (a, _) = fine_tune_mde(&mde0, &examples, &opt, 4, 2).unwrap();
        let (b, _) = fine_tune_mde(&mde0, &examples, &opt, 4, 2).unwrap();
        assert_eq!(a, b, "same seed must give a bit-identical model");

        // Continuing training must not refit normalization.
        let more: Vec<MdeExample> =
            (100..140).map(|i| synthetic_example(i, 4, 5.0 + 0.01 * i as f64)).collect();
        let (c, _) = fine_tune_mde(&a, &more, &opt, 2, 3).unwrap();
        assert_eq!(c.input_norm, a.input_norm, "normalization must stay frozen");
    }

    #[test]
    fn training_loss_is_nearly_monotone() {
        let examples: Vec<MdeExample> = (0..256)
            .map(|i| {
                let d = if i % 3 == 0 { 0.002 } else { 0.05 + 0.0005 * (i % 7) as f64 };
                synthetic_example(i, 4, d)
            })
            .collect();
        let mde0 = MdeModel::init(2, 2, 4, 10.0, &[16, 16], Activation::Relu, 8).unwrap();
        let (_, losses) = fine_tune_mde(&mde0, &examples, &OptConfig::default(), 30, 8).unwrap();
        assert_eq!(losses.len(), 31);
        for (e, pair) in losses.windows(2).enumerate() {
            assert!(
                pair[1] <= 1.05 * pair[0],
                "loss rose more than 5% between epochs {e} and {}: {} -> {}",
                e + 1,
                pair[0],
                pair[1]
            );
        }
    }

    #[test]
    fn rank_correlation_on_held_out_drag_point_data() {
        let source = EnvSpec::drag_point_source();
        let target = EnvSpec::drag_point_target();
        let (model0, _) = train_source(
            &rollout(&source, 200, 25, 61),
            &NetConfig { hidden: vec![64, 64], activation: Activation::Relu },
            &OptConfig::default(),
            200,
            61,
        )
        .unwrap();
        let make = |transitions: &[Transition]| -> Vec<MdeExample> {
            transitions
                .iter()
                .map(|t| make_mde_example(&model0, &target, t, DEFAULT_MDE_RESOLUTION).unwrap())
                .collect()
        };
        let train_examples = make(&rollout(&target, 80, 25, 62));
        let held_out = make(&rollout(&target, 12, 25, 63));
        let sd = target.state_dim();
        let mde0 = MdeModel::init(
            sd,
            2,
            DEFAULT_MDE_RESOLUTION,
            DEFAULT_K_MDE,
            &[32, 32],
            Activation::Relu,
            seed::substream(64, "mde_init"),
        )
        .unwrap();
        let (mde, _) =
            fine_tune_mde(&mde0, &train_examples, &OptConfig::default(), 200, 64).unwrap();
        let ctx = MdeGridContext::new(&mde, &target).unwrap();
        let mut preds = Vec::new();
        let mut truths = Vec::new();
        for ex in &held_out {
            preds.push(
                ctx.predict(&ex.transition.state.0, &ex.transition.action.0, &ex.predicted_next.0)
                    .unwrap(),
            );
            truths.push(ex.true_error);
        }
        let rho = stats::spearman_rho(&preds, &truths).unwrap();
        assert!(rho >= 0.6, "Spearman rank correlation too low: {rho}");
    }

    #[test]
    fn jsonl_shape_and_grid_rebuild_round_trip() {
        let spec = EnvSpec::drag_point_target();
        let ex = MdeExample {
            transition: Transition {
                env_id: EnvId::DragPoint,
                variant: Variant::Target,
                episode_id: 7,
                step_index: 2,
                state: State(vec![0.1, 0.2]),
                action: ActionCmd(vec![0.01, 0.0]),
                next_state: State(vec![0.109, 0.2]),
            },
            predicted_next: State(vec![0.11, 0.2]),
            true_error: 0.001,
            grid: envs::occupancy_grid(&spec, 16).unwrap(),
        };
        let json = serde_json::to_string(&ex).unwrap();
        assert_eq!(
            json,
            r#"{"env_id":"drag_point","variant":"target","episode_id":7,"step_index":2,"state":[0.1,0.2],"action":[0.01,0.0],"next_state":[0.109,0.2],"predicted_next":[0.11,0.2],"true_error":0.001}"#
        );
        let mut back: MdeExample = serde_json::from_str(&json).unwrap();
        assert!(back.grid.is_empty(), "grid must not travel through JSON");
        back.rebuild_grid(&spec, 16).unwrap();
        assert_eq!(back, ex);
    }

    #[test]
    fn training_rejects_empty_or_unready_data() {
        let mde0 = MdeModel::init(2, 2, 4, 10.0, &[8], Activation::Relu, 1).unwrap();
        assert!(fine_tune_mde(&mde0, &[], &OptConfig::default(), 1, 0).is_err());
        let mut ex = synthetic_example(0, 4, 0.01);
        ex.grid.clear(); // as if loaded from JSONL without rebuild_grid
        assert!(fine_tune_mde(&mde0, &[ex], &OptConfig::default(), 1, 0).is_err());
    }
}
