//! Synthetic clean-clean benchmarks of extruded prisms with controlled
//! systematic discrepancy between the two sources.

mod bundle;
mod contaminate;
mod splits;

pub use bundle::{read_bundle, write_bundle, BundleManifest, ContaminationRecord, BUNDLE_FORMAT};
pub use contaminate::{contaminate_swap, dirty_clean_variant, Contaminated, DirtyClean};
pub use splits::{build_splits, pair_vectors, vector_lookup, LabeledPair, SplitPolicy, Splits};

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::GroundTruth;
use crate::mesh::{DatasetRole, MeshDataset, Polygon, PolygonMesh, SourceTag, Vertex3};

/// Geometric channel a discrepancy acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    /// Independent factors on the two footprint axes.
    FootprintScale,
    HeightScale,
    /// Per-vertex radial factor on the footprint.
    VertexJitter,
}

/// Multiplicative factor `r_g * (1 + N(0, sigma))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub r_g: f64,
    pub sigma: f64,
}

impl Discrepancy {
    pub const fn new(r_g: f64, sigma: f64) -> Self {
        Self { r_g, sigma }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.sigma == 0.0 {
            return self.r_g;
        }
        let z: f64 = Normal::new(0.0, self.sigma).expect("sigma validated").sample(rng);
        // keep the factor positive for very large sigma
        self.r_g * (1.0 + z).max(0.05)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexMode {
    /// The index set holds every generated entity, including those whose
    /// candidate was replaced by an unmatched one.
    #[default]
    Containment,
    /// The index set holds only the matched entities.
    DisjointCopy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_entities: usize,
    pub seed: u64,
    pub discrepancy: BTreeMap<Transform, Discrepancy>,
    pub footprint_complexity: usize,
    pub unmatched_fraction: f64,
    /// Give each candidate its own yaw and translation.
    pub rigid_transform: bool,
    pub index_mode: IndexMode,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_entities: 1000,
            seed: 0,
            discrepancy: BTreeMap::from([
                (Transform::FootprintScale, Discrepancy::new(1.0, 0.02)),
                (Transform::HeightScale, Discrepancy::new(1.0, 0.02)),
            ]),
            footprint_complexity: 10,
            unmatched_fraction: 0.2,
            rigid_transform: true,
            index_mode: IndexMode::Containment,
        }
    }
}

impl GeneratorConfig {
    /// Noiseless copies in the same pose.
    pub fn clone_benchmark(n_entities: usize, seed: u64) -> Self {
        Self {
            n_entities,
            seed,
            discrepancy: BTreeMap::new(),
            rigid_transform: false,
            ..Self::default()
        }
    }

    /// Same `(r_g, sigma)` on footprint and height.
    pub fn with_uniform_discrepancy(mut self, r_g: f64, sigma: f64) -> Self {
        self.discrepancy = BTreeMap::from([
            (Transform::FootprintScale, Discrepancy::new(r_g, sigma)),
            (Transform::HeightScale, Discrepancy::new(r_g, sigma)),
        ]);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_entities == 0 || self.n_entities > 999_999 {
            return Err(Error::InvalidInput("n_entities must be in 1..=999999".into()));
        }
        if self.footprint_complexity < 3 {
            return Err(Error::InvalidInput("footprint_complexity must be at least 3".into()));
        }
        if !(0.0..1.0).contains(&self.unmatched_fraction) {
            return Err(Error::InvalidInput("unmatched_fraction must lie in [0, 1)".into()));
        }
        for (t, d) in &self.discrepancy {
            if !(d.r_g > 0.0 && d.r_g.is_finite()) || !(d.sigma >= 0.0 && d.sigma.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "{t:?}: r_g must be positive and sigma non-negative"
                )));
            }
        }
        Ok(())
    }

    fn channel(&self, t: Transform) -> Option<Discrepancy> {
        self.discrepancy.get(&t).copied()
    }
}

#[derive(Debug, Clone)]
pub struct Benchmark {
    pub index: MeshDataset,
    pub candidates: MeshDataset,
    pub truth: GroundTruth,
}

/// Shape of one entity in its local frame.
#[derive(Debug, Clone)]
struct Entity {
    footprint: Vec<[f64; 2]>,
    height: f64,
}

#[derive(Debug, Clone, Copy)]
struct Pose {
    yaw: f64,
    offset: [f64; 3],
}

fn draw_entity<R: Rng>(rng: &mut R, n: usize) -> Entity {
    // log-uniform sizes spread entities evenly in log-property space
    let radius = rng.random_range(4f64.ln()..60f64.ln()).exp();
    let aspect = rng.random_range(1.0..3.0);
    let footprint = (0..n)
        .map(|i| {
            // angles stay strictly increasing, so the ring is star-shaped and simple
            let theta = TAU * (i as f64 + rng.random_range(-0.25..0.25)) / n as f64;
            let rho = radius * rng.random_range(0.4..1.0);
            [aspect * rho * theta.cos(), rho * theta.sin()]
        })
        .collect();
    Entity {
        footprint,
        height: rng.random_range(3f64.ln()..60f64.ln()).exp(),
    }
}

fn draw_pose<R: Rng>(rng: &mut R) -> Pose {
    Pose {
        yaw: rng.random_range(0.0..TAU),
        offset: [
            rng.random_range(-10_000.0..10_000.0),
            rng.random_range(-10_000.0..10_000.0),
            rng.random_range(0.0..50.0),
        ],
    }
}

/// Closed prism: bottom face facing down, top face up, outward side quads.
pub fn prism_mesh(
    mesh_id: impl Into<String>,
    footprint: &[[f64; 2]],
    height: f64,
    yaw: f64,
    offset: [f64; 3],
    source_tag: SourceTag,
) -> Result<PolygonMesh> {
    let n = footprint.len();
    let (s, c) = yaw.sin_cos();
    let place = |p: &[f64; 2], z: f64| {
        Vertex3::new(
            c * p[0] - s * p[1] + offset[0],
            s * p[0] + c * p[1] + offset[1],
            z + offset[2],
        )
    };
    let mut vertices: Vec<Vertex3> = footprint.iter().map(|p| place(p, 0.0)).collect();
    vertices.extend(footprint.iter().map(|p| place(p, height)));
    let mut polygons = Vec::with_capacity(n + 2);
    polygons.push(Polygon::new((0..n).rev().collect()));
    polygons.push(Polygon::new((n..2 * n).collect()));
    for i in 0..n {
        let j = (i + 1) % n;
        polygons.push(Polygon::new(vec![i, j, n + j, n + i]));
    }
    PolygonMesh::new(mesh_id, vertices, polygons, source_tag)
}

fn entity_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn index_id(e: usize) -> String {
    format!("I{e:06}")
}

pub fn candidate_id(e: usize) -> String {
    format!("C{e:06}")
}

/// Index mesh and matched candidate mesh for entity `e`.
fn matched_pair(cfg: &GeneratorConfig, e: usize) -> Result<(PolygonMesh, PolygonMesh)> {
    let mut rng = entity_rng(cfg.seed, e as u64);
    let entity = draw_entity(&mut rng, cfg.footprint_complexity);
    let pose = draw_pose(&mut rng);
    let index = prism_mesh(index_id(e), &entity.footprint, entity.height, pose.yaw, pose.offset, SourceTag::Index)?;

    let (fx, fy) = match cfg.channel(Transform::FootprintScale) {
        Some(d) => (d.draw(&mut rng), d.draw(&mut rng)),
        None => (1.0, 1.0),
    };
    let fh = cfg.channel(Transform::HeightScale).map_or(1.0, |d| d.draw(&mut rng));
    let jitter = cfg.channel(Transform::VertexJitter);
    let footprint: Vec<[f64; 2]> = entity
        .footprint
        .iter()
        .map(|p| {
            let j = jitter.map_or(1.0, |d| d.draw(&mut rng));
            [p[0] * fx * j, p[1] * fy * j]
        })
        .collect();
    let cand_pose = if cfg.rigid_transform { draw_pose(&mut rng) } else { pose };
    let cand = prism_mesh(
        candidate_id(e),
        &footprint,
        entity.height * fh,
        cand_pose.yaw,
        cand_pose.offset,
        SourceTag::Candidate,
    )?;
    Ok((index, cand))
}

/// Candidate mesh of a fresh entity with no counterpart in the index set.
fn unmatched_candidate(cfg: &GeneratorConfig, e: usize) -> Result<PolygonMesh> {
    let mut rng = entity_rng(cfg.seed, (cfg.n_entities + e) as u64);
    let entity = draw_entity(&mut rng, cfg.footprint_complexity);
    let pose = draw_pose(&mut rng);
    prism_mesh(candidate_id(e), &entity.footprint, entity.height, pose.yaw, pose.offset, SourceTag::Candidate)
}

/// Deterministic in `cfg`; entities are generated in parallel from
/// per-entity random streams.
pub fn generate_benchmark(cfg: &GeneratorConfig) -> Result<Benchmark> {
    cfg.validate()?;
    let n = cfg.n_entities;
    let n_unmatched = (cfg.unmatched_fraction * n as f64).round() as usize;
    let mut master = entity_rng(cfg.seed, u64::MAX);
    let unmatched: BTreeSet<usize> = sample(&mut master, n, n_unmatched).into_iter().collect();

    let generated: Vec<(Option<PolygonMesh>, PolygonMesh, bool)> = (0..n)
        .into_par_iter()
        .map(|e| {
            let (index, cand) = matched_pair(cfg, e)?;
            if unmatched.contains(&e) {
                let keep_index = cfg.index_mode == IndexMode::Containment;
                Ok((keep_index.then_some(index), unmatched_candidate(cfg, e)?, false))
            } else {
                Ok((Some(index), cand, true))
            }
        })
        .collect::<Result<_>>()?;

    let mut index = Vec::with_capacity(n);
    let mut cands = Vec::with_capacity(n);
    let mut pairs = BTreeMap::new();
    for (e, (i, c, matched)) in generated.into_iter().enumerate() {
        if matched {
            pairs.insert(candidate_id(e), index_id(e));
        }
        index.extend(i);
        cands.push(c);
    }
    let candidates = MeshDataset::new(DatasetRole::Candidate, cands)?;
    let truth = GroundTruth::from_pairs(pairs, candidates.ids().map(str::to_string))?;
    Ok(Benchmark {
        index: MeshDataset::new(DatasetRole::Index, index)?,
        candidates,
        truth,
    })
}
