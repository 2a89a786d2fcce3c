//! Feature-importance blocking: key selection, k-d tree index over the key
//! sub-vectors and k-NN candidate generation with optional pruning.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{blocking_metrics, GroundTruth};
use crate::kdtree::KdTree;
use crate::matcher::TrainedMatcher;
use crate::pairs::PairFeatureVector;
use crate::props::{PropertySchema, PropertyVector};

pub const DEFAULT_PRUNE_QUANTILE: f64 = 0.95;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyCriterion {
    #[default]
    FeatureImportance,
    RatioStd,
}

impl std::str::FromStr for KeyCriterion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "importance" | "feature_importance" => Ok(Self::FeatureImportance),
            "std" | "ratio_std" => Ok(Self::RatioStd),
            other => Err(Error::InvalidInput(format!("unknown key criterion `{other}`"))),
        }
    }
}

/// Schema column indices used for blocking, most relevant first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockingKey {
    pub feature_ids: Vec<usize>,
    pub criterion: KeyCriterion,
}

impl BlockingKey {
    pub fn new(feature_ids: Vec<usize>, criterion: KeyCriterion, schema_len: usize) -> Result<Self> {
        if feature_ids.is_empty() || feature_ids.len() > schema_len {
            return Err(Error::InvalidInput(format!(
                "key size {} outside 1..={schema_len}",
                feature_ids.len()
            )));
        }
        let mut seen = HashSet::new();
        for &f in &feature_ids {
            if f >= schema_len || !seen.insert(f) {
                return Err(Error::InvalidInput(format!("bad or repeated key feature {f}")));
            }
        }
        Ok(Self {
            feature_ids,
            criterion,
        })
    }

    pub fn len(&self) -> usize {
        self.feature_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.feature_ids.is_empty()
    }

    pub fn names(&self, schema: &PropertySchema) -> Vec<&'static str> {
        self.feature_ids.iter().map(|&f| schema.properties()[f].name()).collect()
    }

    fn project<'a>(&'a self, values: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
        self.feature_ids.iter().map(move |&f| values[f])
    }
}

/// What a key is ranked from.
#[derive(Debug, Clone, Copy)]
pub enum KeySource<'a> {
    Model(&'a TrainedMatcher),
    /// Matching pairs whose ratio spread ranks the features (ascending std).
    Profiles {
        pairs: &'a [PairFeatureVector],
        schema: &'a PropertySchema,
    },
}

/// Sample standard deviation, 0 for fewer than two values.
fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Top-`size` features by importance (descending) or ratio std (ascending),
/// ties in schema order.
pub fn select_blocking_key(source: KeySource<'_>, size: usize) -> Result<BlockingKey> {
    match source {
        KeySource::Model(model) => {
            let d = model.schema.len();
            if size == 0 || size > d {
                return Err(Error::InvalidInput(format!("key size {size} outside 1..={d}")));
            }
            let ids = model.ranked_features().into_iter().take(size).collect();
            BlockingKey::new(ids, KeyCriterion::FeatureImportance, d)
        }
        KeySource::Profiles { pairs, schema } => {
            let d = schema.len();
            if size == 0 || size > d {
                return Err(Error::InvalidInput(format!("key size {size} outside 1..={d}")));
            }
            let matching: Vec<&PairFeatureVector> = pairs
                .iter()
                .filter(|p| p.label.is_none_or(|l| l.is_match()))
                .collect();
            if matching.is_empty() {
                return Err(Error::InvalidInput("no matching pairs to profile".into()));
            }
            if let Some(p) = matching.iter().find(|p| p.values.len() != d) {
                return Err(Error::SchemaMismatch(format!(
                    "pair ({}, {}) has {} features, schema has {d}",
                    p.candidate_id,
                    p.index_id,
                    p.values.len()
                )));
            }
            let stds: Vec<f64> = (0..d)
                .map(|f| sample_std(&matching.iter().map(|p| p.values[f]).collect::<Vec<_>>()))
                .collect();
            let mut ids: Vec<usize> = (0..d).collect();
            ids.sort_by(|&a, &b| stds[a].total_cmp(&stds[b]).then(a.cmp(&b)));
            ids.truncate(size);
            BlockingKey::new(ids, KeyCriterion::RatioStd, d)
        }
    }
}

/// k-d tree over the key sub-vectors of the index set.
#[derive(Debug, Clone)]
pub struct BlockingIndex {
    pub key: BlockingKey,
    tree: KdTree,
    /// Tree payload to mesh id, sorted so that tree ranks follow id order.
    ids: Vec<String>,
    pub prune_threshold: Option<f64>,
}

impl BlockingIndex {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn with_threshold(mut self, threshold: Option<f64>) -> Self {
        self.prune_threshold = threshold;
        self
    }

    /// Nearest index meshes to one property vector as `(index_id, distance)`.
    pub fn query(&self, values: &[f64], k: usize) -> Vec<(&str, f64)> {
        let q: Vec<f64> = self.key.project(values).collect();
        self.tree
            .knn(&q, k, None)
            .into_iter()
            .map(|(i, d)| (self.ids[i].as_str(), d))
            .collect()
    }

    /// Euclidean distance between two vectors in the key space.
    pub fn key_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.key
            .project(a)
            .zip(self.key.project(b))
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }
}

pub fn build_index(index_set: &[PropertyVector], key: &BlockingKey) -> Result<BlockingIndex> {
    if index_set.is_empty() {
        return Err(Error::InvalidInput("cannot build a blocking index over an empty set".into()));
    }
    let d = index_set[0].values.len();
    if let Some(&f) = key.feature_ids.iter().find(|&&f| f >= d) {
        return Err(Error::SchemaMismatch(format!("key feature {f} beyond vector length {d}")));
    }
    let mut sorted: Vec<&PropertyVector> = index_set.iter().collect();
    sorted.sort_by(|a, b| a.mesh_id.cmp(&b.mesh_id));
    if let Some(w) = sorted.windows(2).find(|w| w[0].mesh_id == w[1].mesh_id) {
        return Err(Error::InvalidInput(format!("duplicate index id `{}`", w[0].mesh_id)));
    }
    if sorted.iter().any(|v| v.values.len() != d || v.normalized != sorted[0].normalized) {
        return Err(Error::SchemaMismatch("index vectors are not schema-aligned".into()));
    }
    let mut points = Vec::with_capacity(sorted.len() * key.len());
    for v in &sorted {
        points.extend(key.project(&v.values));
    }
    let tree = KdTree::build(points, key.len(), (0..sorted.len()).collect())?;
    Ok(BlockingIndex {
        key: key.clone(),
        tree,
        ids: sorted.into_iter().map(|v| v.mesh_id.clone()).collect(),
        prune_threshold: None,
    })
}

/// Linear-interpolation quantile (the "type 7" definition).
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidInput("quantile of an empty sample".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidInput(format!("quantile {q} outside [0, 1]")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = q * (v.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Ok(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

/// Pruning threshold: the `q`-quantile of key-space distances between known
/// matching pairs `(candidate vector, index vector)`.
pub fn calibrate_threshold(
    index: &BlockingIndex,
    matches: &[(&PropertyVector, &PropertyVector)],
    q: f64,
) -> Result<f64> {
    let d: Vec<f64> = matches
        .iter()
        .map(|(c, i)| index.key_distance(&c.values, &i.values))
        .collect();
    quantile(&d, q)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePair {
    pub candidate_id: String,
    pub index_id: String,
    pub distance: f64,
    /// 1-based position in the candidate's neighbour list.
    pub rank: usize,
}

/// Retrieved pairs, grouped by candidate in query order, distances
/// non-decreasing within each group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub pairs: Vec<CandidatePair>,
    pub k: usize,
    pub pruned: bool,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, candidate_id: &str, index_id: &str) -> bool {
        self.pairs
            .iter()
            .any(|p| p.candidate_id == candidate_id && p.index_id == index_id)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["candidate_id", "index_id", "distance", "rank"])?;
        for p in &self.pairs {
            wtr.write_record([
                p.candidate_id.clone(),
                p.index_id.clone(),
                format!("{:?}", p.distance),
                p.rank.to_string(),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io("<candidate csv>", e))?;
        Ok(())
    }

    /// Reads a candidate CSV; `k` is taken as the largest rank present.
    pub fn read_csv<R: Read>(r: R, pruned: bool) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != ["candidate_id", "index_id", "distance", "rank"] {
            return Err(Error::Schema("candidate CSV header must be candidate_id,index_id,distance,rank".into()));
        }
        let mut pairs = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let parse_err = |what: &str| Error::Schema(format!("bad {what} in candidate CSV row {:?}", rec.position()));
            pairs.push(CandidatePair {
                candidate_id: rec[0].to_string(),
                index_id: rec[1].to_string(),
                distance: rec[2].parse().map_err(|_| parse_err("distance"))?,
                rank: rec[3].parse().map_err(|_| parse_err("rank"))?,
            });
        }
        let k = pairs.iter().map(|p| p.rank).max().unwrap_or(0);
        Ok(Self { pairs, k, pruned })
    }
}

/// k nearest index meshes per candidate. With a threshold, each list stops
/// at the first neighbour farther than it. `k` above the index size is
/// clamped with a warning.
pub fn generate_candidates(
    cands: &[PropertyVector],
    index: &BlockingIndex,
    k: usize,
    threshold: Option<f64>,
) -> Result<CandidateSet> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let k_eff = if k > index.len() {
        log::warn!("k={k} exceeds index size {}, clamping", index.len());
        index.len()
    } else {
        k
    };
    let lists: Vec<Vec<CandidatePair>> = cands
        .par_iter()
        .map(|c| {
            index
                .query(&c.values, k_eff)
                .into_iter()
                .take_while(|&(_, d)| threshold.is_none_or(|t| d <= t))
                .enumerate()
                .map(|(r, (id, distance))| CandidatePair {
                    candidate_id: c.mesh_id.clone(),
                    index_id: id.to_string(),
                    distance,
                    rank: r + 1,
                })
                .collect()
        })
        .collect();
    Ok(CandidateSet {
        pairs: lists.into_iter().flatten().collect(),
        k: k_eff,
        pruned: threshold.is_some(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub fb_size: usize,
    pub k: usize,
    pub pc: f64,
    pub rr: f64,
    pub query_s: f64,
    pub build_s: f64,
}

/// PC, RR and timings over a `(|F_B|, k)` grid. Keys are prefixes of
/// `ranking`, the feature order of the chosen criterion.
pub fn sweep(
    cands: &[PropertyVector],
    index_set: &[PropertyVector],
    ranking: &[usize],
    criterion: KeyCriterion,
    truth: &GroundTruth,
    k_list: &[usize],
    fb_list: &[usize],
) -> Result<Vec<SweepRow>> {
    let truth = truth.restrict_to(cands.iter().map(|c| c.mesh_id.as_str()));
    let d = ranking.len();
    let mut rows = Vec::new();
    for &fb in fb_list {
        let key = BlockingKey::new(ranking.iter().copied().take(fb).collect(), criterion, d)?;
        let t0 = Instant::now();
        let index = build_index(index_set, &key)?;
        let build_s = t0.elapsed().as_secs_f64();
        for &k in k_list {
            let t1 = Instant::now();
            let cs = generate_candidates(cands, &index, k, None)?;
            let query_s = t1.elapsed().as_secs_f64();
            let m = blocking_metrics(&cs, &truth, cands.len(), index_set.len())?;
            rows.push(SweepRow {
                fb_size: fb,
                k: cs.k,
                pc: m.pc.unwrap_or(0.0),
                rr: m.rr.unwrap_or(0.0),
                query_s,
                build_s,
            });
        }
    }
    Ok(rows)
}

/// Writes the sweep grid; timing columns are optional so the file can stay
/// byte-stable across runs.
pub fn write_sweep_csv<W: Write>(w: W, rows: &[SweepRow], timings: bool) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["fb_size", "k", "pc", "rr"];
    if timings {
        header.extend(["query_s", "build_s"]);
    }
    wtr.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.fb_size.to_string(), r.k.to_string(), format!("{:.6}", r.pc), format!("{:.6}", r.rr)];
        if timings {
            rec.extend([format!("{:.6}", r.query_s), format!("{:.6}", r.build_s)]);
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| Error::io("<sweep csv>", e))?;
    Ok(())
}
