//! Head-to-head validation of the adaptation modes.
//!
//! Every mode fine-tunes the SAME pre-trained model on the SAME benchmark
//! training set — at a given seed they even share the batch-shuffle stream,
//! so the weighting rule is the only thing that differs — and is scored on
//! the similar-only validation set, where the source dynamics remain the
//! right answer and fitting the distractor data can only hurt.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dynamics::{self, AdaptMode, DynamicsModel, OptConfig, WeightSchedule};
use crate::envs::Transition;
use crate::error::{Error, Result};
use crate::seed;
use crate::stats;

/// The modes a validation run compares, in report order.
pub const VALIDATION_MODES: [AdaptMode; 3] =
    [AdaptMode::Focus, AdaptMode::AllData, AdaptMode::LowInitialError];

/// One adapted model's scores on the validation set. `mean_squared_error`
/// is the headline column (the training objective penalizes squared error);
/// `mean_distance` reports the same residuals before squaring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub mode: AdaptMode,
    pub seed: u64,
    pub mean_squared_error: f64,
    pub mean_distance: f64,
}

/// Per-mode aggregate plus the one-sided Wilcoxon signed-rank p-value that
/// focus beats this mode on mean squared error, paired by seed. The focus
/// row carries its self-comparison (p = 1 by construction).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: AdaptMode,
    pub mean_squared_error: f64,
    pub mean_distance: f64,
    pub p_focus_less: f64,
}

/// Mean squared prediction error and mean prediction distance over a
/// transition set.
pub fn validation_scores(
    model: &DynamicsModel,
    transitions: &[Transition],
) -> Result<(f64, f64)> {
    if transitions.is_empty() {
        return Err(Error::Data("validation on an empty transition set".into()));
    }
    let mut sq_sum = 0.0;
    let mut dist_sum = 0.0;
    for t in transitions {
        let e2 = dynamics::prediction_error_sq(model, t)?;
        sq_sum += e2;
        dist_sum += e2.sqrt();
    }
    let n = transitions.len() as f64;
    Ok((sq_sum / n, dist_sum / n))
}

/// Adapt `model0` under every mode at every seed and score each result.
/// Rows come out grouped by seed, mode-ordered within a seed.
pub fn run_validation(
    model0: &DynamicsModel,
    train: &[Transition],
    validation: &[Transition],
    schedule: &WeightSchedule,
    opt: &OptConfig,
    epochs: usize,
    seeds: &[u64],
) -> Result<Vec<ValidationRow>> {
    if seeds.is_empty() {
        return Err(Error::Config("validation needs at least one seed".into()));
    }
    let mut rows = Vec::with_capacity(seeds.len() * VALIDATION_MODES.len());
    for &s in seeds {
        let shuffle_seed = seed::substream(s, "validate");
        for mode in VALIDATION_MODES {
            let (model, _) = dynamics::fine_tune_dynamics(
                model0,
                train,
                mode,
                schedule,
                opt,
                epochs,
                shuffle_seed,
            )?;
            let (mean_squared_error, mean_distance) = validation_scores(&model, validation)?;
            rows.push(ValidationRow { mode, seed: s, mean_squared_error, mean_distance });
        }
    }
    Ok(rows)
}

/// Aggregate rows into one summary per mode. Requires every mode to cover
/// exactly the same seeds so the signed-rank pairing is well defined.
pub fn summarize_validation(rows: &[ValidationRow]) -> Result<Vec<ModeSummary>> {
    let mut by_mode: BTreeMap<String, BTreeMap<u64, &ValidationRow>> = BTreeMap::new();
    for row in rows {
        if by_mode
            .entry(row.mode.to_string())
            .or_default()
            .insert(row.seed, row)
            .is_some()
        {
            return Err(Error::Data(format!(
                "duplicate validation row for mode {} seed {}",
                row.mode, row.seed
            )));
        }
    }
    let focus = by_mode
        .get(&AdaptMode::Focus.to_string())
        .ok_or_else(|| Error::Data("validation rows contain no focus runs".into()))?
        .clone();
    let focus_seeds: Vec<u64> = focus.keys().copied().collect();
    let focus_mse: Vec<f64> = focus.values().map(|r| r.mean_squared_error).collect();

    let mut out = Vec::with_capacity(VALIDATION_MODES.len());
    for mode in VALIDATION_MODES {
        let per_seed = by_mode
            .get(&mode.to_string())
            .ok_or_else(|| Error::Data(format!("validation rows missing mode {mode}")))?;
        let seeds: Vec<u64> = per_seed.keys().copied().collect();
        if seeds != focus_seeds {
            return Err(Error::Data(format!(
                "mode {mode} covers different seeds than focus; cannot pair"
            )));
        }
        let mse: Vec<f64> = per_seed.values().map(|r| r.mean_squared_error).collect();
        let dist: Vec<f64> = per_seed.values().map(|r| r.mean_distance).collect();
        out.push(ModeSummary {
            mode,
            mean_squared_error: stats::mean(&mse)?,
            mean_distance: stats::mean(&dist)?,
            p_focus_less: stats::wilcoxon_signed_rank_less(&focus_mse, &mse)?,
        });
    }
    Ok(out)
}
