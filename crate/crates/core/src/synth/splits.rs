//! Train/test split policy with random and hard negatives.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bkafi::{build_index, BlockingIndex, BlockingKey, KeyCriterion};
use crate::error::{Error, Result};
use crate::eval::GroundTruth;
use crate::pairs::{pair_features_with, Label, PairFeatureVector, RatioMode};
use crate::props::PropertyVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitPolicy {
    pub train_ratio: f64,
    pub negatives_per_positive: usize,
    pub hard_negative_k: usize,
    /// Share of unmatched candidates in the blocking evaluation set.
    pub unmatched_eval_fraction: f64,
    pub seed: u64,
}

impl Default for SplitPolicy {
    fn default() -> Self {
        Self {
            train_ratio: 0.6,
            negatives_per_positive: 2,
            hard_negative_k: 3,
            unmatched_eval_fraction: 0.2,
            seed: 0,
        }
    }
}

impl SplitPolicy {
    fn validate(&self) -> Result<()> {
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(Error::InvalidInput("train_ratio must lie in (0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.unmatched_eval_fraction) {
            return Err(Error::InvalidInput("unmatched_eval_fraction must lie in [0, 1)".into()));
        }
        if self.negatives_per_positive == 0 || self.hard_negative_k == 0 {
            return Err(Error::InvalidInput("negative counts must be at least 1".into()));
        }
        Ok(())
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub candidate_id: String,
    pub index_id: String,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    /// Matched candidates used for training, sorted.
    pub train_candidates: Vec<String>,
    /// Matched candidates held out for testing, sorted.
    pub test_candidates: Vec<String>,
    /// Training positives plus random negatives, for the blocking model.
    pub blocking_train: Vec<LabeledPair>,
    /// Blocker neighbours of each training candidate plus its true match.
    pub matching_train: Vec<LabeledPair>,
    /// Same construction over the test candidates.
    pub matching_test: Vec<LabeledPair>,
    /// Test candidates plus unmatched candidates, queried against the full
    /// index set.
    pub blocking_eval_candidates: Vec<String>,
}

pub fn vector_lookup(vectors: &[PropertyVector]) -> HashMap<&str, &PropertyVector> {
    vectors.iter().map(|v| (v.mesh_id.as_str(), v)).collect()
}

/// Ratio features for labelled id pairs.
pub fn pair_vectors(
    pairs: &[LabeledPair],
    cands: &HashMap<&str, &PropertyVector>,
    index: &HashMap<&str, &PropertyVector>,
    mode: RatioMode,
) -> Result<Vec<PairFeatureVector>> {
    pairs
        .iter()
        .map(|p| {
            let c = cands
                .get(p.candidate_id.as_str())
                .ok_or_else(|| Error::InvalidInput(format!("unknown candidate `{}`", p.candidate_id)))?;
            let i = index
                .get(p.index_id.as_str())
                .ok_or_else(|| Error::InvalidInput(format!("unknown index mesh `{}`", p.index_id)))?;
            let mut f = pair_features_with(c, i, mode)?;
            f.label = Some(p.label);
            Ok(f)
        })
        .collect()
}

fn hard_pairs(
    candidates: &[String],
    cands: &HashMap<&str, &PropertyVector>,
    blocker: &BlockingIndex,
    truth: &GroundTruth,
    k: usize,
) -> Vec<LabeledPair> {
    let mut out = Vec::new();
    for c in candidates {
        let truth_id = truth.match_of(c);
        let neighbours = blocker.query(&cands[c.as_str()].values, k);
        let mut has_match = false;
        for (i, _) in neighbours {
            let is_match = truth_id == Some(i);
            has_match |= is_match;
            out.push(LabeledPair {
                candidate_id: c.clone(),
                index_id: i.to_string(),
                label: Label::from_bool(is_match),
            });
        }
        if let (false, Some(i)) = (has_match, truth_id) {
            out.push(LabeledPair {
                candidate_id: c.clone(),
                index_id: i.to_string(),
                label: Label::Match,
            });
        }
    }
    out
}

/// Splits the matched candidates into disjoint train and test sets and
/// builds the labelled pair sets. Hard negatives come from `blocker`, or
/// from a full-schema index when none is given.
pub fn build_splits(
    index_vectors: &[PropertyVector],
    cand_vectors: &[PropertyVector],
    truth: &GroundTruth,
    policy: &SplitPolicy,
    blocker: Option<&BlockingIndex>,
) -> Result<Splits> {
    policy.validate()?;
    let cands = vector_lookup(cand_vectors);
    let index = vector_lookup(index_vectors);
    for (c, i) in truth.matches() {
        if !cands.contains_key(c.as_str()) || !index.contains_key(i.as_str()) {
            return Err(Error::InvalidInput(format!("truth pair ({c}, {i}) references a missing mesh")));
        }
    }

    let mut matched: Vec<String> = truth.matches().keys().cloned().collect();
    matched.shuffle(&mut policy.rng(0));
    let n_train = (policy.train_ratio * matched.len() as f64).round() as usize;
    if n_train == 0 || n_train == matched.len() {
        return Err(Error::InvalidInput(format!(
            "{} matched entities cannot be split at train_ratio {}",
            matched.len(),
            policy.train_ratio
        )));
    }
    let mut test_candidates = matched.split_off(n_train);
    let mut train_candidates = matched;
    train_candidates.sort();
    test_candidates.sort();

    let mut index_ids: Vec<&str> = index.keys().copied().collect();
    index_ids.sort_unstable();
    if index_ids.len() <= policy.negatives_per_positive {
        return Err(Error::InvalidInput("index set too small for the requested negatives".into()));
    }
    let mut rng = policy.rng(1);
    let mut blocking_train = Vec::with_capacity(train_candidates.len() * (1 + policy.negatives_per_positive));
    for c in &train_candidates {
        let m = truth.match_of(c).expect("train candidates are matched");
        blocking_train.push(LabeledPair {
            candidate_id: c.clone(),
            index_id: m.to_string(),
            label: Label::Match,
        });
        let picks = sample(&mut rng, index_ids.len(), policy.negatives_per_positive + 1);
        for i in picks
            .into_iter()
            .map(|j| index_ids[j])
            .filter(|&i| i != m)
            .take(policy.negatives_per_positive)
        {
            blocking_train.push(LabeledPair {
                candidate_id: c.clone(),
                index_id: i.to_string(),
                label: Label::NonMatch,
            });
        }
    }

    let owned;
    let blocker = match blocker {
        Some(b) => b,
        None => {
            let d = index_vectors[0].values.len();
            let key = BlockingKey::new((0..d).collect(), KeyCriterion::FeatureImportance, d)?;
            owned = build_index(index_vectors, &key)?;
            &owned
        }
    };
    let matching_train = hard_pairs(&train_candidates, &cands, blocker, truth, policy.hard_negative_k);
    let matching_test = hard_pairs(&test_candidates, &cands, blocker, truth, policy.hard_negative_k);

    let unmatched: Vec<&str> = truth
        .candidates_without_match()
        .iter()
        .map(String::as_str)
        .filter(|c| cands.contains_key(c))
        .collect();
    let f = policy.unmatched_eval_fraction;
    let wanted = (test_candidates.len() as f64 * f / (1.0 - f)).round() as usize;
    let take = wanted.min(unmatched.len());
    if take < wanted {
        log::warn!("only {} unmatched candidates available, wanted {wanted}", unmatched.len());
    }
    let picks = sample(&mut policy.rng(2), unmatched.len(), take).into_vec();
    let mut blocking_eval_candidates: Vec<String> = test_candidates.clone();
    blocking_eval_candidates.extend(picks.into_iter().map(|j| unmatched[j].to_string()));
    blocking_eval_candidates.sort();

    Ok(Splits {
        train_candidates,
        test_candidates,
        blocking_train,
        matching_train,
        matching_test,
        blocking_eval_candidates,
    })
}
