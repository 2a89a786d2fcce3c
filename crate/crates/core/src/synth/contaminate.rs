//! Cross-source swaps and dirty-clean relocation of matched entities.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::GroundTruth;
use crate::mesh::{DatasetRole, MeshDataset, PolygonMesh, SourceTag};

#[derive(Debug, Clone)]
pub struct Contaminated {
    pub index: MeshDataset,
    pub candidates: MeshDataset,
    pub truth: GroundTruth,
    /// Candidate ids (after the swap) of the swapped entities.
    pub contaminated_ids: BTreeSet<String>,
}

#[derive(Debug, Clone)]
pub struct DirtyClean {
    /// Candidates plus the relocated index matches.
    pub candidates: MeshDataset,
    /// Index set without the relocated meshes.
    pub index: MeshDataset,
    /// Within-source duplicate pairs `(candidate_id, relocated_id)`.
    pub within_source: Vec<(String, String)>,
    /// Cross-source truth over the reduced index set.
    pub cross_truth: GroundTruth,
}

/// `ceil(level * n)`, tolerant of representation error in `level * n`.
fn affected(level: f64, n: usize) -> Result<usize> {
    if !(0.0..=0.5).contains(&level) {
        return Err(Error::InvalidInput(format!("contamination level {level} outside [0, 0.5]")));
    }
    Ok(((level * n as f64) - 1e-9).ceil().max(0.0) as usize)
}

fn pick_matches(truth: &GroundTruth, level: f64, seed: u64) -> Result<Vec<(String, String)>> {
    let all: Vec<(&String, &String)> = truth.matches().iter().collect();
    let m = affected(level, all.len())?;
    // a fixed permutation per seed, so higher levels extend lower ones
    let mut order: Vec<usize> = (0..all.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut picks = order[..m].to_vec();
    picks.sort_unstable();
    Ok(picks
        .into_iter()
        .map(|j| (all[j].0.clone(), all[j].1.clone()))
        .collect())
}

fn retag(mut m: PolygonMesh, tag: SourceTag) -> PolygonMesh {
    m.source_tag = tag;
    m
}

/// Exchanges the candidate and index meshes (ids included) of
/// `ceil(level * |matches|)` matched entities.
pub fn contaminate_swap(
    index: &MeshDataset,
    candidates: &MeshDataset,
    truth: &GroundTruth,
    level: f64,
    seed: u64,
) -> Result<Contaminated> {
    let swapped = pick_matches(truth, level, seed)?;
    let moved_c: BTreeSet<&str> = swapped.iter().map(|(c, _)| c.as_str()).collect();
    let moved_i: BTreeSet<&str> = swapped.iter().map(|(_, i)| i.as_str()).collect();

    let mut new_index: Vec<PolygonMesh> = index
        .meshes()
        .iter()
        .filter(|m| !moved_i.contains(m.mesh_id.as_str()))
        .cloned()
        .collect();
    let mut new_cands: Vec<PolygonMesh> = candidates
        .meshes()
        .iter()
        .filter(|m| !moved_c.contains(m.mesh_id.as_str()))
        .cloned()
        .collect();
    let mut pairs: BTreeMap<String, String> = truth
        .matches()
        .iter()
        .filter(|(c, _)| !moved_c.contains(c.as_str()))
        .map(|(c, i)| (c.clone(), i.clone()))
        .collect();
    let mut contaminated_ids = BTreeSet::new();
    for (c, i) in &swapped {
        let cm = candidates.get(c).ok_or_else(|| Error::InvalidInput(format!("missing candidate `{c}`")))?;
        let im = index.get(i).ok_or_else(|| Error::InvalidInput(format!("missing index mesh `{i}`")))?;
        new_index.push(retag(cm.clone(), SourceTag::Index));
        new_cands.push(retag(im.clone(), SourceTag::Candidate));
        pairs.insert(i.clone(), c.clone());
        contaminated_ids.insert(i.clone());
    }
    new_index.sort_by(|a, b| a.mesh_id.cmp(&b.mesh_id));
    new_cands.sort_by(|a, b| a.mesh_id.cmp(&b.mesh_id));
    let candidates = MeshDataset::new(DatasetRole::Candidate, new_cands)?;
    let truth = GroundTruth::from_pairs(pairs, candidates.ids().map(str::to_string))?;
    Ok(Contaminated {
        index: MeshDataset::new(DatasetRole::Index, new_index)?,
        candidates,
        truth,
        contaminated_ids,
    })
}

/// Moves the index matches of `ceil(level * |matches|)` entities into the
/// candidate set, creating within-source duplicates.
pub fn dirty_clean_variant(
    index: &MeshDataset,
    candidates: &MeshDataset,
    truth: &GroundTruth,
    level: f64,
    seed: u64,
) -> Result<DirtyClean> {
    let moved = pick_matches(truth, level, seed)?;
    let moved_i: BTreeSet<&str> = moved.iter().map(|(_, i)| i.as_str()).collect();
    let mut new_cands: Vec<PolygonMesh> = candidates.meshes().to_vec();
    let mut new_index = Vec::with_capacity(index.len());
    for m in index.meshes() {
        if moved_i.contains(m.mesh_id.as_str()) {
            new_cands.push(retag(m.clone(), SourceTag::Candidate));
        } else {
            new_index.push(m.clone());
        }
    }
    new_cands.sort_by(|a, b| a.mesh_id.cmp(&b.mesh_id));
    let pairs: BTreeMap<String, String> = truth
        .matches()
        .iter()
        .filter(|(_, i)| !moved_i.contains(i.as_str()))
        .map(|(c, i)| (c.clone(), i.clone()))
        .collect();
    let candidates = MeshDataset::new(DatasetRole::Candidate, new_cands)?;
    let cross_truth = GroundTruth::from_pairs(pairs, candidates.ids().map(str::to_string))?;
    Ok(DirtyClean {
        candidates,
        index: MeshDataset::new(DatasetRole::Index, new_index)?,
        within_source: moved,
        cross_truth,
    })
}
