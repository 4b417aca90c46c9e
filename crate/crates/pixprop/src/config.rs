//! Run configuration (one TOML file, dotted-path overrides) and run
//! manifests (the provenance chain between commands).
//!
//! Every command resolves a [`RunConfig`] the same way: built-in defaults,
//! then the `--config` file, then each `--set key.path=value` in order,
//! then the `--seed` / `--out` flags. The canonical JSON serialization of
//! the resolved config is hashed into every manifest, so downstream
//! commands can tell exactly which configuration produced an artifact.
//!
//! A manifest records the tool version, the RNG scheme, the seed, the
//! config hash, a content hash per output file, and the manifest hashes of
//! its inputs. [`Manifest::verify`] re-hashes the files on disk and names
//! the first stale one, which is how a command refuses to run on
//! out-of-date artifacts.

use crate::evalkit::EvalOptions;
use crate::pipeline::PipelineConfig;
use crate::synthdata::SceneConfig;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

// ----- run configuration -------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    /// Number of scenes a `gen` run produces (ids `0..count`).
    pub count: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig { count: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Scenes per SGD step (gradients are averaged over the batch). One
    /// scene per step converges best on small datasets; raise it for
    /// smoother gradients on large ones.
    pub batch_size: usize,
    /// Base learning rates, sized for the sum-over-cells losses.
    pub lr_localizer: f64,
    pub lr_confidence: f64,
    /// Stepped decay: multiply by `decay_factor` every `decay_epochs`.
    pub decay_factor: f64,
    pub decay_epochs: usize,
    /// Channel width of the confidence branches' hidden layer.
    pub confidence_hidden: usize,
    /// Fraction of the image area separating small from large instances
    /// (the pixel threshold is `round(fraction * w * h)`).
    pub area_threshold_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 40,
            batch_size: 1,
            lr_localizer: 1e-2,
            lr_confidence: 1e-3,
            decay_factor: 0.1,
            decay_epochs: 15,
            confidence_hidden: 32,
            area_threshold_fraction: 0.0076,
        }
    }
}

/// Where commands find their inputs. Each directory must hold a manifest
/// written by the producing command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    /// Training dataset (a `gen` output).
    pub dataset: PathBuf,
    /// Held-out dataset for `eval`/`ablate` (another `gen` output).
    pub eval_dataset: PathBuf,
    /// Checkpoints (a `train` output).
    pub models: PathBuf,
    /// Proposals (an `infer` output).
    pub proposals: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            dataset: PathBuf::from("runs/dataset"),
            eval_dataset: PathBuf::from("runs/eval_dataset"),
            models: PathBuf::from("runs/models"),
            proposals: PathBuf::from("runs/proposals"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    /// Output directory; each command writes its artifacts plus a manifest
    /// here. The `--out` flag overrides it.
    pub out: PathBuf,
    pub gen: GenConfig,
    pub scene: SceneConfig,
    pub train: TrainConfig,
    pub pipeline: PipelineConfig,
    pub eval: EvalOptions,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: PathBuf::from("runs/out"),
            gen: GenConfig::default(),
            scene: SceneConfig::default(),
            train: TrainConfig::default(),
            pipeline: PipelineConfig::default(),
            eval: EvalOptions::default(),
            paths: PathsConfig::default(),
        }
    }
}

/// Small/large pixel-area threshold for a given image size.
pub fn area_threshold(fraction: f64, width: usize, height: usize) -> u64 {
    (fraction * (width * height) as f64).round() as u64
}

/// Load a config file, or the defaults when no path is given.
pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
    }
}

/// Apply `key.path=value` overrides in order. Keys must exist in the
/// config (typos are config errors); values are parsed as TOML, falling
/// back to strings.
pub fn apply_overrides(config: RunConfig, sets: &[String]) -> Result<RunConfig> {
    if sets.is_empty() {
        return Ok(config);
    }
    let mut root = toml::Value::try_from(&config)
        .map_err(|e| Error::Config(format!("config serialization: {e}")))?;
    for set in sets {
        let (key, raw) = set
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{set}` is not key=value")))?;
        let parsed = parse_toml_value(raw);
        let segments: Vec<&str> = key.split('.').collect();
        let (last, parents) = segments.split_last().expect("split_once gave a key");
        let mut cursor = &mut root;
        for seg in parents {
            let table = cursor
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("`{key}`: `{seg}` is not a table")))?;
            cursor = table
                .get_mut(*seg)
                .ok_or_else(|| Error::Config(format!("unknown config key `{key}` (at `{seg}`)")))?;
        }
        let table = cursor
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{key}`: not a table")))?;
        let entry = table
            .get_mut(*last)
            .ok_or_else(|| Error::Config(format!("unknown config key `{key}` (at `{last}`)")))?;
        let coerced = coerce_like(entry, parsed);
        *entry = coerced;
    }
    root.try_into()
        .map_err(|e| Error::Config(format!("after overrides: {e}")))
}

/// Parse a bare override value as TOML; anything unparseable is a string.
fn parse_toml_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("value key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Keep float fields float even when the override spells an integer.
fn coerce_like(existing: &toml::Value, new: toml::Value) -> toml::Value {
    match (existing, &new) {
        (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(*i as f64),
        _ => new,
    }
}

/// Canonical config hash: SHA-256 of the JSON serialization (field order
/// is declaration order, so the hash is stable).
pub fn config_sha256(config: &RunConfig) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    sha256_hex(json.as_bytes())
}

// ----- hashing -------------------------------------------------------------------

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut s = String::with_capacity(64);
    for b in digest {
        use std::fmt::Write as _;
        let _ = write!(s, "{b:02x}");
    }
    s
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    let digest = h.finalize();
    let mut s = String::with_capacity(64);
    for b in digest {
        use std::fmt::Write as _;
        let _ = write!(s, "{b:02x}");
    }
    Ok(s)
}

// ----- manifests -------------------------------------------------------------------

pub const MANIFEST_NAME: &str = "manifest.json";

/// Provenance record written next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Crate version that produced the artifact.
    pub version: String,
    /// Artifact kind: `dataset`, `models`, `proposals`, `report`, `ablation`.
    pub kind: String,
    pub seed: u64,
    /// Identifier of the seeded RNG derivation scheme.
    pub rng_scheme: String,
    /// Hash of the resolved [`RunConfig`] that produced this.
    pub config_sha256: String,
    /// Relative output path -> content hash.
    pub files: BTreeMap<String, String>,
    /// Input label -> hash of that input's manifest file.
    pub inputs: BTreeMap<String, String>,
    /// Free-form extras (spec hashes, skipped placements, …).
    pub notes: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(kind: &str, seed: u64, config_hash: String) -> Self {
        Manifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            kind: kind.to_string(),
            seed,
            rng_scheme: crate::rng::SCHEME.to_string(),
            config_sha256: config_hash,
            files: BTreeMap::new(),
            inputs: BTreeMap::new(),
            notes: BTreeMap::new(),
        }
    }

    /// Hash `root/rel` and record it under `rel`.
    pub fn record_file(&mut self, root: &Path, rel: &str) -> Result<()> {
        let hash = sha256_file(&root.join(rel))?;
        self.files.insert(rel.to_string(), hash);
        Ok(())
    }

    /// Record an input directory by the hash of its manifest file.
    pub fn record_input(&mut self, label: &str, input_dir: &Path) -> Result<()> {
        let hash = sha256_file(&input_dir.join(MANIFEST_NAME))?;
        self.inputs.insert(label.to_string(), hash);
        Ok(())
    }

    pub fn write(&self, root: &Path) -> Result<()> {
        let path = root.join(MANIFEST_NAME);
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, json.as_bytes()).map_err(|e| Error::io(&path, e))
    }

    pub fn load(root: &Path) -> Result<Manifest> {
        let path = root.join(MANIFEST_NAME);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.clone(),
            msg: format!("manifest: {e}"),
        })
    }

    /// Re-hash every recorded file under `root`; the first mismatch is a
    /// stale-artifact error naming the offending file.
    pub fn verify(&self, root: &Path) -> Result<()> {
        for (rel, want) in &self.files {
            let path = root.join(rel);
            let got = sha256_file(&path)?;
            if got != *want {
                return Err(Error::StaleArtifact {
                    path,
                    msg: format!("content hash {got} != recorded {want}"),
                });
            }
        }
        Ok(())
    }

    /// Load and verify in one step: what consumers call before reading an
    /// input directory. Checks the manifest kind too.
    pub fn load_verified(root: &Path, expect_kind: &str) -> Result<Manifest> {
        let m = Manifest::load(root)?;
        if m.kind != expect_kind {
            return Err(Error::StaleArtifact {
                path: root.join(MANIFEST_NAME),
                msg: format!("artifact kind `{}`, expected `{expect_kind}`", m.kind),
            });
        }
        m.verify(root)?;
        Ok(m)
    }
}
