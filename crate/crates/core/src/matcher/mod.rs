//! Tree-ensemble match classifier with impurity-based feature importance.

pub mod tree;

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pairs::{Label, PairFeatureVector};
use crate::props::PropertySchema;
pub use tree::DecisionTree;
use tree::{grow_tree, Criterion, GrowParams, Matrix};

pub const MODEL_FORMAT: &str = "meshmatch-matcher/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    Bagging,
    RandomForest,
    GradientBoosting,
}

impl std::str::FromStr for EnsembleKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bagging" => Ok(Self::Bagging),
            "random_forest" | "forest" | "rf" => Ok(Self::RandomForest),
            "gradient_boosting" | "boosting" | "gb" => Ok(Self::GradientBoosting),
            other => Err(Error::InvalidInput(format!("unknown ensemble kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatcherConfig {
    pub kind: EnsembleKind,
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Boosting shrinkage.
    pub learning_rate: f64,
    pub decision_threshold: f64,
    pub seed: u64,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self {
            kind: EnsembleKind::Bagging,
            n_trees: 100,
            max_depth: 8,
            min_samples_split: 2,
            min_samples_leaf: 1,
            learning_rate: 0.1,
            decision_threshold: 0.5,
            seed: 0,
        }
    }
}

impl MatcherConfig {
    pub fn bagging(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn random_forest(seed: u64) -> Self {
        Self {
            kind: EnsembleKind::RandomForest,
            seed,
            ..Self::default()
        }
    }

    pub fn gradient_boosting(seed: u64) -> Self {
        Self {
            kind: EnsembleKind::GradientBoosting,
            max_depth: 3,
            seed,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.max_depth == 0 {
            return Err(Error::InvalidInput("n_trees and max_depth must be >= 1".into()));
        }
        if !(self.decision_threshold > 0.0 && self.decision_threshold < 1.0) {
            return Err(Error::InvalidInput("decision_threshold must lie in (0, 1)".into()));
        }
        if self.kind == EnsembleKind::GradientBoosting && !(self.learning_rate > 0.0) {
            return Err(Error::InvalidInput("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// A trained, immutable ensemble. Serialized as a single JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedMatcher {
    pub format: String,
    pub schema: PropertySchema,
    pub ensemble_kind: EnsembleKind,
    pub hyperparameters: MatcherConfig,
    pub seed: u64,
    pub decision_threshold: f64,
    /// Initial log-odds for boosting; unused by averaging ensembles.
    pub base_score: f64,
    pub trees: Vec<DecisionTree>,
    pub importance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub candidate_id: String,
    pub index_id: String,
    pub probability: f64,
    pub label: Label,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn tree_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Flattens labeled pairs into a feature matrix and 0/1 targets.
fn design(pairs: &[PairFeatureVector], schema: &PropertySchema) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = schema.len();
    let mut x = Vec::with_capacity(pairs.len() * d);
    let mut y = Vec::with_capacity(pairs.len());
    for p in pairs {
        if p.values.len() != d {
            return Err(Error::SchemaMismatch(format!(
                "pair ({}, {}) has {} features, schema has {d}",
                p.candidate_id,
                p.index_id,
                p.values.len()
            )));
        }
        if p.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Training(format!(
                "pair ({}, {}) has non-finite features",
                p.candidate_id, p.index_id
            )));
        }
        let label = p.label.ok_or_else(|| {
            Error::Training(format!("pair ({}, {}) is unlabeled", p.candidate_id, p.index_id))
        })?;
        x.extend_from_slice(&p.values);
        y.push(if label.is_match() { 1.0 } else { 0.0 });
    }
    Ok((x, y))
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter_mut().for_each(|x| *x /= total);
    } else {
        let n = v.len() as f64;
        v.iter_mut().for_each(|x| *x = 1.0 / n);
    }
    v
}

/// Trains an ensemble on labeled pair features. Deterministic for a given seed.
pub fn train(
    pairs: &[PairFeatureVector],
    schema: &PropertySchema,
    config: &MatcherConfig,
) -> Result<TrainedMatcher> {
    config.validate()?;
    let (x, y) = design(pairs, schema)?;
    let positives = y.iter().filter(|&&v| v == 1.0).count();
    if positives == 0 || positives == y.len() {
        return Err(Error::Training(format!(
            "need both classes, got {positives} matches out of {} pairs",
            y.len()
        )));
    }
    let d = schema.len();
    let m = Matrix::new(&x, d);
    let n = y.len();

    let (trees, importance, base_score) = match config.kind {
        EnsembleKind::Bagging | EnsembleKind::RandomForest => {
            let max_features = match config.kind {
                EnsembleKind::RandomForest => Some(((d as f64).sqrt() as usize).max(1)),
                _ => None,
            };
            let params = GrowParams {
                max_depth: config.max_depth,
                min_samples_split: config.min_samples_split as f64,
                min_samples_leaf: config.min_samples_leaf as f64,
                max_features,
            };
            let grown: Vec<(DecisionTree, Vec<f64>)> = (0..config.n_trees)
                .into_par_iter()
                .map(|t| {
                    let mut rng = tree_rng(config.seed, t as u64);
                    let mut weight = vec![0.0; n];
                    for _ in 0..n {
                        weight[rng.random_range(0..n)] += 1.0;
                    }
                    grow_tree(m, &y, &weight, Criterion::Gini, params, &mut rng)
                })
                .collect();
            let mut imp = vec![0.0; d];
            let mut trees = Vec::with_capacity(grown.len());
            for (tree, ti) in grown {
                // a tree without splits carries no importance signal
                if ti.iter().sum::<f64>() > 0.0 {
                    imp.iter_mut().zip(normalized(ti)).for_each(|(a, b)| *a += b);
                }
                trees.push(tree);
            }
            (trees, normalized(imp), 0.0)
        }
        EnsembleKind::GradientBoosting => {
            let p0 = (positives as f64 / n as f64).clamp(1e-6, 1.0 - 1e-6);
            let base = (p0 / (1.0 - p0)).ln();
            let mut score = vec![base; n];
            let weight = vec![1.0; n];
            let params = GrowParams {
                max_depth: config.max_depth,
                min_samples_split: config.min_samples_split as f64,
                min_samples_leaf: config.min_samples_leaf as f64,
                max_features: None,
            };
            let mut rng = tree_rng(config.seed, 0);
            let mut imp = vec![0.0; d];
            let mut trees = Vec::with_capacity(config.n_trees);
            for _ in 0..config.n_trees {
                let p: Vec<f64> = score.iter().map(|&s| sigmoid(s)).collect();
                let grad: Vec<f64> = y.iter().zip(&p).map(|(y, p)| y - p).collect();
                let hess: Vec<f64> = p.iter().map(|p| p * (1.0 - p)).collect();
                let (tree, gain) = grow_tree(
                    m,
                    &grad,
                    &weight,
                    Criterion::Newton { hessian: &hess },
                    params,
                    &mut rng,
                );
                for (i, s) in score.iter_mut().enumerate() {
                    *s += config.learning_rate * tree.predict(m.row(i));
                }
                imp.iter_mut().zip(gain).for_each(|(a, g)| *a += g);
                trees.push(tree);
            }
            (trees, normalized(imp), base)
        }
    };

    Ok(TrainedMatcher {
        format: MODEL_FORMAT.to_string(),
        schema: schema.clone(),
        ensemble_kind: config.kind,
        hyperparameters: config.clone(),
        seed: config.seed,
        decision_threshold: config.decision_threshold,
        base_score,
        trees,
        importance,
    })
}

impl TrainedMatcher {
    /// Match probability for one feature row.
    pub fn probability(&self, row: &[f64]) -> f64 {
        match self.ensemble_kind {
            EnsembleKind::Bagging | EnsembleKind::RandomForest => {
                self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
            }
            EnsembleKind::GradientBoosting => {
                let lr = self.hyperparameters.learning_rate;
                sigmoid(self.base_score + lr * self.trees.iter().map(|t| t.predict(row)).sum::<f64>())
            }
        }
    }

    /// Classifies pairs whose features follow `schema`, which must equal the
    /// schema the model was trained on.
    pub fn predict(&self, schema: &PropertySchema, pairs: &[PairFeatureVector]) -> Result<Vec<Prediction>> {
        if schema != &self.schema {
            return Err(Error::SchemaMismatch(format!(
                "model expects [{}], got [{}]",
                self.schema.names().join(","),
                schema.names().join(",")
            )));
        }
        pairs
            .par_iter()
            .map(|p| {
                if p.values.len() != self.schema.len() {
                    return Err(Error::SchemaMismatch(format!(
                        "pair ({}, {}) has {} features",
                        p.candidate_id,
                        p.index_id,
                        p.values.len()
                    )));
                }
                let probability = self.probability(&p.values);
                Ok(Prediction {
                    candidate_id: p.candidate_id.clone(),
                    index_id: p.index_id.clone(),
                    probability,
                    label: Label::from_bool(probability >= self.decision_threshold),
                })
            })
            .collect()
    }

    /// `(property, score)` sorted by descending score, ties in schema order.
    pub fn feature_importance(&self) -> Vec<(String, f64)> {
        let mut ranked: Vec<(usize, f64)> = self.importance.iter().copied().enumerate().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked
            .into_iter()
            .map(|(i, s)| (self.schema.properties()[i].name().to_string(), s))
            .collect()
    }

    /// Schema column indices ranked by importance.
    pub fn ranked_features(&self) -> Vec<usize> {
        let mut ranked: Vec<usize> = (0..self.importance.len()).collect();
        ranked.sort_by(|&a, &b| self.importance[b].total_cmp(&self.importance[a]).then(a.cmp(&b)));
        ranked
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer(w, self)?;
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let m: TrainedMatcher = serde_json::from_reader(r)?;
        if m.format != MODEL_FORMAT {
            return Err(Error::Schema(format!(
                "unsupported model format `{}` (expected `{MODEL_FORMAT}`)",
                m.format
            )));
        }
        if m.importance.len() != m.schema.len() {
            return Err(Error::Schema("importance length differs from schema".into()));
        }
        Ok(m)
    }
}

/// Accuracy and F1 (fractions) over k folds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub accuracy: f64,
    pub f1: f64,
}

/// Shuffled k-fold cross-validation; folds whose training part holds a
/// single class are skipped.
pub fn cross_validate(
    pairs: &[PairFeatureVector],
    schema: &PropertySchema,
    config: &MatcherConfig,
    folds: usize,
) -> Result<CvScore> {
    if folds < 2 || pairs.len() < folds {
        return Err(Error::InvalidInput(format!(
            "cannot run {folds}-fold CV on {} pairs",
            pairs.len()
        )));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut rng = tree_rng(config.seed, u64::MAX);
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
    let (mut correct, mut total, mut tp, mut fp, mut fne) = (0usize, 0usize, 0usize, 0usize, 0usize);
    for k in 0..folds {
        let (test, train_set): (Vec<usize>, Vec<usize>) = (0..order.len()).partition(|pos| pos % folds == k);
        let test: Vec<PairFeatureVector> = test.iter().map(|&i| pairs[order[i]].clone()).collect();
        let tr: Vec<PairFeatureVector> = train_set.iter().map(|&i| pairs[order[i]].clone()).collect();
        let model = match train(&tr, schema, config) {
            Ok(m) => m,
            Err(Error::Training(_)) => continue,
            Err(e) => return Err(e),
        };
        for (p, pred) in test.iter().zip(model.predict(schema, &test)?) {
            let truth = p.label.is_some_and(Label::is_match);
            let said = pred.label.is_match();
            total += 1;
            correct += usize::from(truth == said);
            tp += usize::from(truth && said);
            fp += usize::from(!truth && said);
            fne += usize::from(truth && !said);
        }
    }
    if total == 0 {
        return Err(Error::Training("no fold could be trained".into()));
    }
    let f1 = if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fne) as f64
    };
    Ok(CvScore {
        accuracy: correct as f64 / total as f64,
        f1,
    })
}

/// Small fixed grid over depth and ensemble size, scored by CV F1.
/// Returns the winning config (first on ties) and every grid score.
pub fn grid_search(
    pairs: &[PairFeatureVector],
    schema: &PropertySchema,
    base: &MatcherConfig,
    depths: &[usize],
    tree_counts: &[usize],
    folds: usize,
) -> Result<(MatcherConfig, Vec<(MatcherConfig, CvScore)>)> {
    let mut scored = Vec::new();
    for &max_depth in depths {
        for &n_trees in tree_counts {
            let cfg = MatcherConfig {
                max_depth,
                n_trees,
                ..base.clone()
            };
            let score = cross_validate(pairs, schema, &cfg, folds)?;
            scored.push((cfg, score));
        }
    }
    let best = scored
        .iter()
        .fold(None::<&(MatcherConfig, CvScore)>, |best, cur| match best {
            Some(b) if b.1.f1 >= cur.1.f1 => Some(b),
            _ => Some(cur),
        })
        .map(|(c, _)| c.clone())
        .ok_or_else(|| Error::InvalidInput("empty hyperparameter grid".into()))?;
    Ok((best, scored))
}

pub const DEFAULT_GRID_DEPTHS: [usize; 3] = [4, 8, 12];
pub const DEFAULT_GRID_TREES: [usize; 2] = [50, 100];

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled(values: Vec<f64>, is_match: bool, i: usize) -> PairFeatureVector {
        PairFeatureVector {
            candidate_id: format!("c{i}"),
            index_id: format!("i{i}"),
            values,
            label: Some(Label::from_bool(is_match)),
        }
    }

    fn schema(n: usize) -> PropertySchema {
        PropertySchema::new(crate::props::Property::ALL[..n].to_vec()).unwrap()
    }

    #[test]
    fn refuses_single_class_and_nan() {
        let s = schema(1);
        let one = vec![labeled(vec![1.0], true, 0), labeled(vec![1.1], true, 1)];
        assert!(matches!(train(&one, &s, &MatcherConfig::default()), Err(Error::Training(_))));
        let nan = vec![labeled(vec![f64::NAN], true, 0), labeled(vec![1.1], false, 1)];
        assert!(matches!(train(&nan, &s, &MatcherConfig::default()), Err(Error::Training(_))));
    }

    #[test]
    fn empty_prediction() {
        let s = schema(1);
        let data = vec![labeled(vec![1.0], true, 0), labeled(vec![2.0], false, 1)];
        let m = train(&data, &s, &MatcherConfig::default()).unwrap();
        assert!(m.predict(&s, &[]).unwrap().is_empty());
        assert!(matches!(m.predict(&schema(2), &[]), Err(Error::SchemaMismatch(_))));
    }

    #[test]
    fn bad_model_format_rejected() {
        let s = schema(1);
        let data = vec![labeled(vec![1.0], true, 0), labeled(vec![2.0], false, 1)];
        let mut m = train(&data, &s, &MatcherConfig::default()).unwrap();
        m.format = "other/9".into();
        let json = m.to_json().unwrap();
        assert!(TrainedMatcher::read(json.as_bytes()).is_err());
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("rf".parse::<EnsembleKind>().unwrap(), EnsembleKind::RandomForest);
        assert!("svm".parse::<EnsembleKind>().is_err());
    }
}
