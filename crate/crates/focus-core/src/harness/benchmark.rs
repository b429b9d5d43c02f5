//! Fixed adaptation benchmark: a target-environment training set with a
//! controlled share of distractor-affected transitions, plus a validation
//! set kept to transitions whose source and target dynamics agree.
//!
//! Episodes mix uniform-random rollouts with rollouts steered toward the
//! distractor patches (or obstacles, for environments whose perturbation is
//! contact-driven), so the training set contains both clean and perturbed
//! data in a configurable ratio. Validation candidates are generated the
//! same way, labeled with [`envs::is_similar_region`], and only
//! similar-labeled transitions are retained — giving a held-out set on
//! which the source dynamics remain the right answer.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{self, ActionCmd, Circle, EnvSpec, State, Transition, Variant};
use crate::error::{Error, Result};
use crate::harness::config::BenchmarkSection;
use crate::harness::io;
use crate::seed;

pub const BENCHMARK_FORMAT_VERSION: u32 = 1;

/// How many validation candidates may be generated per requested slot
/// before generation gives up and reports the achieved counts.
const VAL_CANDIDATE_FACTOR: usize = 20;

/// Angular jitter (radians) around the straight-line steering direction.
const STEER_JITTER: f64 = 0.35;

/// Steered actions scale their magnitude by a uniform draw from this range
/// so approaches vary in speed instead of tracing one deterministic ray.
const STEER_MAGNITUDE_RANGE: std::ops::RangeInclusive<f64> = 0.7..=1.0;

/// Bookkeeping for a generated benchmark: the exact inputs plus the label
/// statistics observed while generating. No timestamps — regenerating from
/// the same inputs yields a byte-identical manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkManifest {
    pub format_version: u32,
    pub seed: u64,
    pub target: EnvSpec,
    pub source: EnvSpec,
    pub section: BenchmarkSection,
    /// Transitions in the training file.
    pub train_size: usize,
    /// Similar-labeled transitions in the validation file.
    pub val_size: usize,
    /// Training transitions the similarity oracle labels dissimilar.
    pub train_dissimilar: usize,
    /// `train_dissimilar / train_size`.
    pub achieved_distractor_fraction: f64,
    /// Validation candidates generated before the set filled.
    pub val_candidates: usize,
    /// Episodes rolled out in total (training plus validation).
    pub episodes: u64,
}

/// A generated benchmark held in memory; see [`write_benchmark`] for the
/// on-disk layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub train: Vec<Transition>,
    pub validation: Vec<Transition>,
    pub manifest: BenchmarkManifest,
}

/// Generate the benchmark: fill the training set, label it, then keep
/// generating until `val_size` similar-labeled validation transitions
/// exist.
///
/// Errors with the achieved counts if the candidate budget
/// (20 per requested slot) runs out before the validation set fills, and if
/// a validation transition ever duplicates a training transition byte for
/// byte.
pub fn make_benchmark(
    target: &EnvSpec,
    source: &EnvSpec,
    section: &BenchmarkSection,
    seed_value: u64,
) -> Result<Benchmark> {
    target.validate()?;
    source.validate()?;
    if target.variant != Variant::Target || source.variant != Variant::Source {
        return Err(Error::Config(
            "benchmark generation needs a target spec and its source counterpart".into(),
        ));
    }
    if target.env_id != source.env_id {
        return Err(Error::Config("benchmark source/target environments differ".into()));
    }
    validate_section(section)?;

    let circles = steering_circles(target);
    let mut episode = 0u64;

    let mut train: Vec<Transition> = Vec::with_capacity(section.train_size);
    while train.len() < section.train_size {
        for t in rollout_episode(target, &circles, section, seed_value, episode)? {
            if train.len() < section.train_size {
                train.push(t);
            }
        }
        episode += 1;
    }

    let mut train_dissimilar = 0usize;
    let mut train_keys: HashSet<String> = HashSet::with_capacity(train.len());
    for t in &train {
        if !envs::is_similar_region(target, source, t, section.similarity_gamma)? {
            train_dissimilar += 1;
        }
        train_keys.insert(content_key(t)?);
    }

    let budget = section.val_size.saturating_mul(VAL_CANDIDATE_FACTOR);
    let mut validation: Vec<Transition> = Vec::with_capacity(section.val_size);
    let mut candidates = 0usize;
    'collect: while validation.len() < section.val_size && candidates < budget {
        for t in rollout_episode(target, &circles, section, seed_value, episode)? {
            if validation.len() == section.val_size || candidates == budget {
                break 'collect;
            }
            candidates += 1;
            if envs::is_similar_region(target, source, &t, section.similarity_gamma)? {
                if train_keys.contains(&content_key(&t)?) {
                    return Err(Error::Benchmark(
                        "validation transition duplicates a training transition".into(),
                    ));
                }
                validation.push(t);
            }
        }
        episode += 1;
    }
    if validation.len() < section.val_size {
        return Err(Error::Benchmark(format!(
            "needed {} similar-labeled validation transitions but only {} of {} candidates \
             qualified",
            section.val_size,
            validation.len(),
            candidates
        )));
    }

    let manifest = BenchmarkManifest {
        format_version: BENCHMARK_FORMAT_VERSION,
        seed: seed_value,
        target: target.clone(),
        source: source.clone(),
        section: section.clone(),
        train_size: train.len(),
        val_size: validation.len(),
        train_dissimilar,
        achieved_distractor_fraction: train_dissimilar as f64 / train.len() as f64,
        val_candidates: candidates,
        episodes: episode,
    };
    Ok(Benchmark { train, validation, manifest })
}

fn validate_section(section: &BenchmarkSection) -> Result<()> {
    if section.train_size == 0 || section.val_size == 0 {
        return Err(Error::Config("benchmark sizes must be >= 1".into()));
    }
    if section.episode_len == 0 {
        return Err(Error::Config("benchmark episode_len must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&section.steered_share) {
        return Err(Error::Config("steered_share must lie in [0, 1]".into()));
    }
    if !(0.0..=1.0).contains(&section.distractor_fraction) {
        return Err(Error::Config("distractor_fraction must lie in [0, 1]".into()));
    }
    if !(section.distractor_tolerance >= 0.0) {
        return Err(Error::Config("distractor_tolerance must be >= 0".into()));
    }
    if !(section.similarity_gamma > 0.0) {
        return Err(Error::Config("similarity_gamma must be > 0".into()));
    }
    Ok(())
}

/// Regions worth steering into: distractor patches when the environment has
/// them, otherwise obstacles (whose contact dynamics differ from the
/// obstacle-free source).
fn steering_circles(spec: &EnvSpec) -> Vec<Circle> {
    if spec.distractor_patches.is_empty() {
        spec.obstacles.clone()
    } else {
        spec.distractor_patches
            .iter()
            .map(|p| Circle { center: p.center, radius: p.radius })
            .collect()
    }
}

/// One episode. A coin with probability `steered_share` picks between a
/// uniform-random rollout and one steered toward a uniformly chosen circle;
/// steered rollouts fall back to random actions while in contact with the
/// region so the perturbed dynamics get exercised from varied directions.
fn rollout_episode(
    spec: &EnvSpec,
    circles: &[Circle],
    section: &BenchmarkSection,
    master: u64,
    episode: u64,
) -> Result<Vec<Transition>> {
    let mut state = envs::env_reset(spec, seed::indexed(master, "bench_reset", episode))?;
    let mut rng = seed::rng_indexed(master, "bench", episode);
    let coin = rng.gen_bool(section.steered_share);
    let focus_circle = if coin && !circles.is_empty() {
        Some(circles[rng.gen_range(0..circles.len())])
    } else {
        None
    };

    let mut out = Vec::with_capacity(section.episode_len);
    for step in 0..section.episode_len {
        let action = match focus_circle {
            Some(c) if !in_contact(spec, &state, &c)? => steer_action(spec, &state, &c, &mut rng),
            _ => envs::sample_random_action(spec, &mut rng),
        };
        let next = envs::env_step(spec, &state, &action)?;
        out.push(Transition {
            env_id: spec.env_id,
            variant: spec.variant,
            episode_id: episode,
            step_index: step as u64,
            state: state.clone(),
            action: action.clone(),
            next_state: next.clone(),
        });
        state = next;
    }
    Ok(out)
}

/// Whether the rollout's tracked feature has reached the steering region; a
/// chain counts as in contact within one segment length of the circle,
/// since its midpoint is projected out of obstacles and never strictly
/// enters them.
fn in_contact(spec: &EnvSpec, state: &State, circle: &Circle) -> Result<bool> {
    let [fx, fy] = spec.goal_feature(state)?;
    let margin = spec.chain.map_or(0.0, |c| c.segment_length);
    let (dx, dy) = (fx - circle.center[0], fy - circle.center[1]);
    Ok((dx * dx + dy * dy).sqrt() < circle.radius + margin)
}

/// Move every controlled point toward the circle center, with angular
/// jitter and a randomized magnitude capped so a single step cannot
/// overshoot the center.
fn steer_action<R: Rng>(spec: &EnvSpec, state: &State, circle: &Circle, rng: &mut R) -> ActionCmd {
    let mut a = Vec::with_capacity(spec.action_dim());
    for [px, py] in controlled_positions(spec, state) {
        let (dx, dy) = (circle.center[0] - px, circle.center[1] - py);
        let dist = (dx * dx + dy * dy).sqrt();
        if dist < 1e-12 {
            a.extend([0.0, 0.0]);
            continue;
        }
        let theta = dy.atan2(dx) + rng.gen_range(-STEER_JITTER..=STEER_JITTER);
        let reach = (dist / spec.global_gain).min(spec.action_limit);
        let mag = reach * rng.gen_range(STEER_MAGNITUDE_RANGE);
        a.push(mag * theta.cos());
        a.push(mag * theta.sin());
    }
    ActionCmd(a)
}

/// Positions of the controlled points in state order: the point itself, or
/// the two chain endpoints.
fn controlled_positions(spec: &EnvSpec, state: &State) -> Vec<[f64; 2]> {
    match spec.chain {
        None => vec![[state.0[0], state.0[1]]],
        Some(c) => {
            let last = 2 * (c.n_points - 1);
            vec![[state.0[0], state.0[1]], [state.0[last], state.0[last + 1]]]
        }
    }
}

/// Canonical byte content of a transition, for overlap checks.
fn content_key(t: &Transition) -> Result<String> {
    Ok(serde_json::to_string(t)?)
}

pub fn train_path(dir: &Path) -> PathBuf {
    dir.join("train.jsonl")
}

pub fn validation_path(dir: &Path) -> PathBuf {
    dir.join("validation.jsonl")
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join("manifest.json")
}

/// Write `train.jsonl`, `validation.jsonl`, and `manifest.json` under
/// `dir`, creating it if needed.
pub fn write_benchmark(dir: &Path, bench: &Benchmark) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", dir.display()))))?;
    io::write_jsonl(&train_path(dir), &bench.train)?;
    io::write_jsonl(&validation_path(dir), &bench.validation)?;
    let mut doc = serde_json::to_string_pretty(&bench.manifest)?;
    doc.push('\n');
    io::write_string(&manifest_path(dir), &doc)
}

/// Read a benchmark directory back, rejecting unknown format versions and
/// manifests whose counts disagree with the files.
pub fn read_benchmark(dir: &Path) -> Result<Benchmark> {
    let manifest: BenchmarkManifest = serde_json::from_str(&io::read_string(&manifest_path(dir))?)?;
    if manifest.format_version != BENCHMARK_FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "benchmark manifest format {} is not supported (expected {})",
            manifest.format_version, BENCHMARK_FORMAT_VERSION
        )));
    }
    let train: Vec<Transition> = io::read_jsonl(&train_path(dir))?;
    let validation: Vec<Transition> = io::read_jsonl(&validation_path(dir))?;
    if train.len() != manifest.train_size || validation.len() != manifest.val_size {
        return Err(Error::Data(format!(
            "benchmark files disagree with the manifest: {} train / {} validation on disk, \
             {} / {} recorded",
            train.len(),
            validation.len(),
            manifest.train_size,
            manifest.val_size
        )));
    }
    Ok(Benchmark { train, validation, manifest })
}
