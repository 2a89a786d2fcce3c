//! On-disk benchmark bundle: index.jsonl, candidates.jsonl, truth.csv and
//! manifest.json.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Benchmark, GeneratorConfig};
use crate::error::{Error, Result};
use crate::eval::GroundTruth;
use crate::jsonl::{read_dataset_file, write_dataset_file};
use crate::mesh::DatasetRole;

pub const BUNDLE_FORMAT: &str = "meshmatch-bench/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContaminationRecord {
    pub kind: String,
    pub level: f64,
    pub seed: u64,
    pub contaminated_ids: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub format: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contamination: Option<ContaminationRecord>,
    pub n_index: usize,
    pub n_candidates: usize,
    pub n_matches: usize,
}

impl BundleManifest {
    pub fn new(bench: &Benchmark) -> Self {
        Self {
            format: BUNDLE_FORMAT.to_string(),
            generator: None,
            contamination: None,
            n_index: bench.index.len(),
            n_candidates: bench.candidates.len(),
            n_matches: bench.truth.n_matches(),
        }
    }
}

pub fn write_bundle(dir: &Path, bench: &Benchmark, manifest: &BundleManifest) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_dataset_file(&dir.join("index.jsonl"), &bench.index)?;
    write_dataset_file(&dir.join("candidates.jsonl"), &bench.candidates)?;
    let truth_path = dir.join("truth.csv");
    let f = File::create(&truth_path).map_err(|e| Error::io(&truth_path, e))?;
    bench.truth.write_csv(BufWriter::new(f))?;
    let manifest_path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(())
}

pub fn read_bundle(dir: &Path) -> Result<(Benchmark, BundleManifest)> {
    let manifest_path = dir.join("manifest.json");
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: BundleManifest = serde_json::from_str(&text)?;
    if manifest.format != BUNDLE_FORMAT {
        return Err(Error::Schema(format!(
            "unsupported bundle format `{}`, expected `{BUNDLE_FORMAT}`",
            manifest.format
        )));
    }
    let index = read_dataset_file(&dir.join("index.jsonl"), DatasetRole::Index)?;
    let candidates = read_dataset_file(&dir.join("candidates.jsonl"), DatasetRole::Candidate)?;
    let truth_path = dir.join("truth.csv");
    let f = File::open(&truth_path).map_err(|e| Error::io(&truth_path, e))?;
    let truth = GroundTruth::read_csv(f, candidates.ids().map(str::to_string))?;
    for (c, i) in truth.matches() {
        if !candidates.contains(c) || !index.contains(i) {
            return Err(Error::InvalidInput(format!("truth pair ({c}, {i}) references a missing mesh")));
        }
    }
    Ok((
        Benchmark {
            index,
            candidates,
            truth,
        },
        manifest,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::generate_benchmark;

    #[test]
    fn round_trip_and_byte_identical() {
        let cfg = GeneratorConfig {
            n_entities: 15,
            seed: 3,
            ..Default::default()
        };
        let mut manifest = BundleManifest::new(&generate_benchmark(&cfg).unwrap());
        manifest.generator = Some(cfg.clone());
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_bundle(a.path(), &generate_benchmark(&cfg).unwrap(), &manifest).unwrap();
        write_bundle(b.path(), &generate_benchmark(&cfg).unwrap(), &manifest).unwrap();
        for f in ["index.jsonl", "candidates.jsonl", "truth.csv", "manifest.json"] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
        }
        let (back, m) = read_bundle(a.path()).unwrap();
        assert_eq!(m, manifest);
        assert_eq!(back.truth.n_matches(), 12);
        assert_eq!(back.candidates.len(), 15);
    }

    #[test]
    fn missing_dir_errors() {
        let d = tempfile::tempdir().unwrap();
        assert!(read_bundle(&d.path().join("nope")).is_err());
    }
}
