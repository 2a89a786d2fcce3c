//! Run-directory layout and the per-run manifest.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::UsageError;

pub const MANIFEST: &str = "manifest.json";
pub const PIPELINE: &str = "pipeline.json";
pub const SPLITS: &str = "splits.json";
pub const STATS: &str = "dataset_stats.json";
pub const TRUTH: &str = "truth.csv";
pub const BLOCKING_MODEL: &str = "blocking_model.json";
pub const MATCHER: &str = "matcher.json";
pub const IMPORTANCE: &str = "importance.csv";
pub const BLOCKING_TRAIN_PAIRS: &str = "blocking_train_pairs.csv";
pub const TRAIN_PAIRS: &str = "train_pairs.csv";
pub const TEST_PAIRS: &str = "test_pairs.csv";
pub const GRID: &str = "grid_search.csv";
pub const BLOCKING_KEY: &str = "blocking_key.json";
pub const CANDIDATES: &str = "candidates.csv";
pub const BLOCKING_METRICS: &str = "blocking_metrics.json";
pub const CURVE: &str = "pc_rr_curve.csv";
pub const PREDICTIONS: &str = "predictions.csv";
pub const MATCHING_METRICS: &str = "matching_metrics.json";
pub const EVAL: &str = "eval.json";
pub const SWEEP: &str = "sweep.csv";
pub const REPORT: &str = "report.txt";
pub const EPS_DELTA: &str = "eps_delta.csv";

/// Counts of the benchmark a run was trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct DatasetStats {
    pub n_index: usize,
    pub n_candidates: usize,
    pub n_matches: usize,
}

pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self { root: root.to_path_buf() })
    }

    /// An existing run directory.
    pub fn open(root: &Path) -> Result<Self> {
        if !root.is_dir() {
            anyhow::bail!("run directory {} does not exist", root.display());
        }
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn has(&self, name: &str) -> bool {
        self.path(name).is_file()
    }

    /// Fails with a usage error naming the command that produces `name`.
    pub fn require(&self, name: &str, producer: &str) -> Result<PathBuf> {
        let p = self.path(name);
        if !p.is_file() {
            return Err(UsageError(format!("{} is missing; run `meshmatch {producer}` first", p.display())).into());
        }
        Ok(p)
    }

    pub fn writer(&self, name: &str) -> Result<BufWriter<File>> {
        let p = self.path(name);
        let f = File::create(&p).with_context(|| format!("creating {}", p.display()))?;
        Ok(BufWriter::new(f))
    }

    pub fn reader(&self, name: &str, producer: &str) -> Result<BufReader<File>> {
        let p = self.require(name, producer)?;
        let f = File::open(&p).with_context(|| format!("opening {}", p.display()))?;
        Ok(BufReader::new(f))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        write_json(&self.path(name), value)
    }

    pub fn read_json<T: DeserializeOwned>(&self, name: &str, producer: &str) -> Result<T> {
        let r = self.reader(name, producer)?;
        serde_json::from_reader(r).with_context(|| format!("parsing {}", self.path(name).display()))
    }

    /// Records one command invocation. The manifest is the only file of a
    /// run holding timestamps and timings.
    pub fn record(&self, command: &str, entry: ManifestEntry) -> Result<()> {
        let p = self.path(MANIFEST);
        let mut manifest: BTreeMap<String, Value> = if p.is_file() {
            serde_json::from_str(&fs::read_to_string(&p)?).with_context(|| format!("parsing {}", p.display()))?
        } else {
            BTreeMap::new()
        };
        manifest.insert(command.to_string(), entry.finish());
        write_json(&p, &manifest)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

pub struct ManifestEntry {
    started: f64,
    inputs: BTreeMap<String, String>,
    config: Value,
    timings: BTreeMap<String, f64>,
}

impl ManifestEntry {
    pub fn start() -> Self {
        Self {
            started: unix_now(),
            inputs: BTreeMap::new(),
            config: Value::Null,
            timings: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, name: &str, path: &Path) -> &mut Self {
        self.inputs.insert(name.to_string(), path.display().to_string());
        self
    }

    pub fn config<T: Serialize>(&mut self, cfg: &T) -> Result<&mut Self> {
        self.config = serde_json::to_value(cfg)?;
        Ok(self)
    }

    pub fn timing(&mut self, name: &str, seconds: f64) -> &mut Self {
        self.timings.insert(name.to_string(), seconds);
        self
    }

    fn finish(self) -> Value {
        json!({
            "started_unix": self.started,
            "finished_unix": unix_now(),
            "inputs": self.inputs,
            "config": self.config,
            "timings_s": self.timings,
        })
    }
}
