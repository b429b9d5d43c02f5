//! Artifact persistence: JSON checkpoints, JSON Lines datasets, CSV metrics,
//! and the run-directory layout with its manifest.
//!
//! Every format round-trips bit-exactly: floats are written with the
//! shortest representation that parses back to the same value, files carry
//! no timestamps, and readers reject unknown format versions and keys.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write as _};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{AdaptMode, DynamicsModel, Normalization, WeightSchedule};
use crate::envs::EnvId;
use crate::error::{Error, Result};
use crate::mde::MdeModel;
use crate::nn::{Activation, MlpParams, OptState, OutputActivation};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FORMAT_VERSION: u32 = 1;
/// Environment variable overriding the run-directory root from the config.
pub const RUN_ROOT_ENV_VAR: &str = "FOCUS_RUN_ROOT";

fn io_ctx(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

/// Lowercase hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

pub fn write_string(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_ctx(parent, e))?;
    }
    fs::write(path, content).map_err(|e| io_ctx(path, e))
}

pub fn read_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_ctx(path, e))
}

/// Write one JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_ctx(parent, e))?;
    }
    let file = File::create(path).map_err(|e| io_ctx(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(item)?;
        w.write_all(line.as_bytes()).map_err(|e| io_ctx(path, e))?;
        w.write_all(b"\n").map_err(|e| io_ctx(path, e))?;
    }
    w.flush().map_err(|e| io_ctx(path, e))
}

/// Read a JSON Lines file, reporting the 1-based line number on parse errors.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| io_ctx(path, e))?;
    let reader = BufReader::new(file);
    let mut items = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_ctx(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item: T = serde_json::from_str(&line).map_err(|e| {
            Error::Data(format!("{} line {}: {e}", path.display(), idx + 1))
        })?;
        items.push(item);
    }
    Ok(items)
}

/// Serialized network parameters: weights as nested row-major arrays
/// (per layer: one row per output unit).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetDoc {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub output_activation: OutputActivation,
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
}

impl NetDoc {
    pub fn from_params(params: &MlpParams) -> Self {
        let sizes = params.layer_sizes();
        let weights = params
            .weights()
            .iter()
            .enumerate()
            .map(|(l, flat)| flat.chunks(sizes[l]).map(<[f64]>::to_vec).collect())
            .collect();
        NetDoc {
            layer_sizes: sizes.to_vec(),
            activation: params.activation(),
            output_activation: params.output_activation(),
            weights,
            biases: params.biases().to_vec(),
        }
    }

    pub fn into_params(self) -> Result<MlpParams> {
        let flat_weights = self
            .weights
            .into_iter()
            .map(|rows| rows.into_iter().flatten().collect())
            .collect();
        MlpParams::from_parts(
            self.layer_sizes,
            flat_weights,
            self.biases,
            self.activation,
            self.output_activation,
        )
    }
}

fn check_version(version: u32, what: &str) -> Result<()> {
    if version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "{what} has format_version {version}, this reader supports {CHECKPOINT_FORMAT_VERSION}"
        )));
    }
    Ok(())
}

/// Adaptation metadata carried by a dynamics checkpoint. All fields are
/// absent for a source (pre-training) checkpoint.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsMeta {
    #[serde(default)]
    pub gamma_used: Option<f64>,
    #[serde(default)]
    pub mode: Option<AdaptMode>,
    #[serde(default)]
    pub schedule: Option<WeightSchedule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DynamicsCheckpoint {
    format_version: u32,
    net: NetDoc,
    /// Optimizer moments are never persisted by this writer: every training
    /// entry point restarts them, so storing them would imply a resume
    /// semantics that does not exist. The field stays in the format for
    /// readers that do carry state.
    opt_state: Option<OptState>,
    env_id: EnvId,
    input_normalization: Normalization,
    output_normalization: Normalization,
    #[serde(default)]
    gamma_used: Option<f64>,
    #[serde(default)]
    mode: Option<AdaptMode>,
    #[serde(default)]
    schedule: Option<WeightSchedule>,
}

pub fn write_dynamics_checkpoint(
    path: &Path,
    model: &DynamicsModel,
    meta: &DynamicsMeta,
) -> Result<()> {
    let doc = DynamicsCheckpoint {
        format_version: CHECKPOINT_FORMAT_VERSION,
        net: NetDoc::from_params(&model.net),
        opt_state: None,
        env_id: model.env_id,
        input_normalization: model.input_norm.clone(),
        output_normalization: model.output_norm.clone(),
        gamma_used: meta.gamma_used,
        mode: meta.mode,
        schedule: meta.schedule,
    };
    write_string(path, &serde_json::to_string_pretty(&doc)?)
}

pub fn read_dynamics_checkpoint(path: &Path) -> Result<(DynamicsModel, DynamicsMeta)> {
    let doc: DynamicsCheckpoint = serde_json::from_str(&read_string(path)?)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    check_version(doc.format_version, "dynamics checkpoint")?;
    let meta =
        DynamicsMeta { gamma_used: doc.gamma_used, mode: doc.mode, schedule: doc.schedule };
    let model = DynamicsModel::new(
        doc.env_id,
        doc.net.into_params()?,
        doc.input_normalization,
        doc.output_normalization,
    )?;
    Ok((model, meta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MdeCheckpoint {
    format_version: u32,
    net: NetDoc,
    opt_state: Option<OptState>,
    resolution: usize,
    k_mde: f64,
    normalization: Option<Normalization>,
}

pub fn write_mde_checkpoint(path: &Path, mde: &MdeModel) -> Result<()> {
    let doc = MdeCheckpoint {
        format_version: CHECKPOINT_FORMAT_VERSION,
        net: NetDoc::from_params(&mde.net),
        opt_state: None,
        resolution: mde.resolution,
        k_mde: mde.k_mde,
        normalization: mde.input_norm.clone(),
    };
    write_string(path, &serde_json::to_string_pretty(&doc)?)
}

pub fn read_mde_checkpoint(path: &Path) -> Result<MdeModel> {
    let doc: MdeCheckpoint = serde_json::from_str(&read_string(path)?)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    check_version(doc.format_version, "mde checkpoint")?;
    let mde = MdeModel {
        net: doc.net.into_params()?,
        resolution: doc.resolution,
        k_mde: doc.k_mde,
        input_norm: doc.normalization,
    };
    mde.validate()?;
    Ok(mde)
}

/// Run manifest: the resolved config echo plus a content hash over its
/// canonical serialization. Deliberately timestamp-free so re-running a
/// manifest reproduces it byte-for-byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub run_id: String,
    pub seed: u64,
    pub method: String,
    pub config_sha256: String,
    pub config: serde_json::Value,
}

impl Manifest {
    pub fn new(
        run_id: &str,
        seed: u64,
        method: &str,
        config: &super::config::RunConfig,
    ) -> Result<Self> {
        let canonical = serde_json::to_string(config)?;
        Ok(Manifest {
            format_version: MANIFEST_FORMAT_VERSION,
            run_id: run_id.to_string(),
            seed,
            method: method.to_string(),
            config_sha256: sha256_hex(canonical.as_bytes()),
            config: serde_json::to_value(config)?,
        })
    }
}

/// Paths inside one run directory:
/// `<root>/manifest.json`, `<root>/iter_<i>/{dynamics.ckpt, mde.ckpt,
/// episodes.jsonl, dataset_shard.jsonl, train_report.csv}`, and
/// `<root>/eval/metrics.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunDir {
    pub root: PathBuf,
}

/// Artifact root shared by every command: `$FOCUS_RUN_ROOT` overrides the
/// configured directory.
pub fn out_root(out_dir: &str) -> PathBuf {
    match std::env::var(RUN_ROOT_ENV_VAR) {
        Ok(v) => PathBuf::from(v),
        Err(_) => PathBuf::from(out_dir),
    }
}

impl RunDir {
    /// Resolve the run root: `$FOCUS_RUN_ROOT` overrides `out_dir`.
    pub fn resolve(out_dir: &str, run_id: &str) -> Self {
        RunDir { root: out_root(out_dir).join(run_id) }
    }

    pub fn create(&self) -> Result<()> {
        fs::create_dir_all(&self.root).map_err(|e| io_ctx(&self.root, e))
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn write_manifest(&self, manifest: &Manifest) -> Result<()> {
        write_string(&self.manifest_path(), &serde_json::to_string_pretty(manifest)?)
    }

    pub fn read_manifest(&self) -> Result<Manifest> {
        let manifest: Manifest = serde_json::from_str(&read_string(&self.manifest_path())?)?;
        if manifest.format_version != MANIFEST_FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "manifest format_version {} unsupported",
                manifest.format_version
            )));
        }
        Ok(manifest)
    }

    pub fn iter_dir(&self, iteration: usize) -> PathBuf {
        self.root.join(format!("iter_{iteration}"))
    }

    pub fn dynamics_ckpt(&self, iteration: usize) -> PathBuf {
        self.iter_dir(iteration).join("dynamics.ckpt")
    }

    pub fn mde_ckpt(&self, iteration: usize) -> PathBuf {
        self.iter_dir(iteration).join("mde.ckpt")
    }

    pub fn episodes_path(&self, iteration: usize) -> PathBuf {
        self.iter_dir(iteration).join("episodes.jsonl")
    }

    pub fn dataset_shard_path(&self, iteration: usize) -> PathBuf {
        self.iter_dir(iteration).join("dataset_shard.jsonl")
    }

    pub fn train_report_path(&self, iteration: usize) -> PathBuf {
        self.iter_dir(iteration).join("train_report.csv")
    }

    pub fn eval_metrics_path(&self) -> PathBuf {
        self.root.join("eval").join("metrics.csv")
    }
}

/// Append serializable rows to a CSV file, writing the header only when the
/// file is new. Used for the append-only metrics log.
pub fn append_csv_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_ctx(parent, e))?;
    }
    let exists = path.exists() && fs::metadata(path).map_err(|e| io_ctx(path, e))?.len() > 0;
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| io_ctx(path, e))?;
    let mut writer = csv::WriterBuilder::new().has_headers(!exists).from_writer(file);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| io_ctx(path, e))?;
    Ok(())
}

/// Read a whole CSV file into serde rows.
pub fn read_csv_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| io_ctx(path, e))?;
    let mut reader = csv::Reader::from_reader(BufReader::new(file));
    let mut rows = Vec::new();
    for row in reader.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}
