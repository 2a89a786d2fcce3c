//! Training and inference stages chained end to end over a benchmark.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bkafi::{
    build_index, calibrate_threshold, generate_candidates, select_blocking_key, BlockingIndex, BlockingKey,
    CandidateSet, KeyCriterion, KeySource, DEFAULT_PRUNE_QUANTILE,
};
use crate::error::Result;
use crate::eval::{blocking_metrics, matching_metrics, GroundTruth, MetricsReport};
use crate::matcher::{train, MatcherConfig, Prediction, TrainedMatcher};
use crate::pairs::{PairFeatureVector, RatioMode};
use crate::props::{featurize_dataset, normalize_log1p, PropertySchema, PropertyVector};
use crate::synth::{build_splits, pair_vectors, vector_lookup, Benchmark, LabeledPair, SplitPolicy, Splits};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlockingConfig {
    pub fb_size: usize,
    pub k: usize,
    pub criterion: KeyCriterion,
    pub prune: bool,
    pub prune_quantile: f64,
    /// Model whose importances rank the key features.
    pub model: MatcherConfig,
}

impl Default for BlockingConfig {
    fn default() -> Self {
        Self {
            fb_size: 3,
            k: 5,
            criterion: KeyCriterion::FeatureImportance,
            prune: false,
            prune_quantile: DEFAULT_PRUNE_QUANTILE,
            model: MatcherConfig::random_forest(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub schema: PropertySchema,
    pub ratio_mode: RatioMode,
    pub split: SplitPolicy,
    pub blocking: BlockingConfig,
    pub matcher: MatcherConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema: PropertySchema::full(),
            ratio_mode: RatioMode::LogRatio,
            split: SplitPolicy::default(),
            blocking: BlockingConfig::default(),
            matcher: MatcherConfig::bagging(0),
        }
    }
}

impl ExperimentConfig {
    /// One seed for every stochastic stage.
    pub fn seeded(mut self, seed: u64) -> Self {
        self.split.seed = seed;
        self.blocking.model.seed = seed;
        self.matcher.seed = seed;
        self
    }
}

/// Raw and log1p-normalized property vectors of both sources.
#[derive(Debug, Clone)]
pub struct Featurized {
    pub schema: PropertySchema,
    pub index_raw: Vec<PropertyVector>,
    pub index: Vec<PropertyVector>,
    pub candidates_raw: Vec<PropertyVector>,
    pub candidates: Vec<PropertyVector>,
}

impl Featurized {
    /// Vectors matching a ratio mode, as `(candidates, index)`.
    pub fn for_mode(&self, mode: RatioMode) -> (&[PropertyVector], &[PropertyVector]) {
        match mode {
            RatioMode::LogRatio => (&self.candidates, &self.index),
            RatioMode::RawRatio => (&self.candidates_raw, &self.index_raw),
        }
    }
}

pub fn featurize_benchmark(bench: &Benchmark, schema: &PropertySchema) -> Result<Featurized> {
    let index_raw = featurize_dataset(&bench.index, schema, false)?;
    let candidates_raw = featurize_dataset(&bench.candidates, schema, false)?;
    let norm = |v: &[PropertyVector]| v.iter().map(normalize_log1p).collect::<Result<Vec<_>>>();
    Ok(Featurized {
        schema: schema.clone(),
        index: norm(&index_raw)?,
        candidates: norm(&candidates_raw)?,
        index_raw,
        candidates_raw,
    })
}

pub fn labeled_features(feats: &Featurized, pairs: &[LabeledPair], mode: RatioMode) -> Result<Vec<PairFeatureVector>> {
    let (c, i) = feats.for_mode(mode);
    pair_vectors(pairs, &vector_lookup(c), &vector_lookup(i), mode)
}

/// Training stage output: the blocking model, the key and the index.
#[derive(Debug, Clone)]
pub struct BlockingStage {
    pub model: TrainedMatcher,
    pub key: BlockingKey,
    pub index: BlockingIndex,
    pub index_build_s: f64,
}

/// Trains the blocking model on the random-negative pairs and builds the
/// index over the full index set.
pub fn train_blocking(
    feats: &Featurized,
    truth: &GroundTruth,
    splits: &Splits,
    cfg: &ExperimentConfig,
) -> Result<BlockingStage> {
    let pairs = labeled_features(feats, &splits.blocking_train, cfg.ratio_mode)?;
    let model = train(&pairs, &feats.schema, &cfg.blocking.model)?;
    assemble_blocking(feats, truth, splits, cfg, model)
}

/// Key selection, index build and optional threshold calibration around an
/// already trained blocking model.
pub fn assemble_blocking(
    feats: &Featurized,
    truth: &GroundTruth,
    splits: &Splits,
    cfg: &ExperimentConfig,
    model: TrainedMatcher,
) -> Result<BlockingStage> {
    let key = match cfg.blocking.criterion {
        KeyCriterion::FeatureImportance => select_blocking_key(KeySource::Model(&model), cfg.blocking.fb_size)?,
        KeyCriterion::RatioStd => {
            let pairs = labeled_features(feats, &splits.blocking_train, cfg.ratio_mode)?;
            let positives: Vec<PairFeatureVector> = pairs
                .into_iter()
                .filter(|p| p.label.is_some_and(|l| l.is_match()))
                .collect();
            select_blocking_key(
                KeySource::Profiles {
                    pairs: &positives,
                    schema: &feats.schema,
                },
                cfg.blocking.fb_size,
            )?
        }
    };
    let t0 = Instant::now();
    let mut index = build_index(&feats.index, &key)?;
    let index_build_s = t0.elapsed().as_secs_f64();
    if cfg.blocking.prune {
        let cands = vector_lookup(&feats.candidates);
        let idx = vector_lookup(&feats.index);
        let matches: Vec<(&PropertyVector, &PropertyVector)> = splits
            .train_candidates
            .iter()
            .filter_map(|c| Some((*cands.get(c.as_str())?, *idx.get(truth.match_of(c)?)?)))
            .collect();
        let t = calibrate_threshold(&index, &matches, cfg.blocking.prune_quantile)?;
        index = index.with_threshold(Some(t));
    }
    Ok(BlockingStage {
        model,
        key,
        index,
        index_build_s,
    })
}

/// Candidate generation for the blocking evaluation set, with metrics.
pub fn run_blocking(
    feats: &Featurized,
    truth: &GroundTruth,
    splits: &Splits,
    stage: &BlockingStage,
    k: usize,
) -> Result<(CandidateSet, MetricsReport)> {
    let lookup = vector_lookup(&feats.candidates);
    let queries: Vec<PropertyVector> = splits
        .blocking_eval_candidates
        .iter()
        .map(|c| lookup[c.as_str()].clone())
        .collect();
    let t0 = Instant::now();
    let cands = generate_candidates(&queries, &stage.index, k, stage.index.prune_threshold)?;
    let wall = t0.elapsed().as_secs_f64();
    let eval_truth = truth.restrict_to(splits.blocking_eval_candidates.iter().map(String::as_str));
    let mut report = blocking_metrics(&cands, &eval_truth, queries.len(), feats.index.len())?;
    report.wall_time_s = Some(wall);
    report.index_build_s = Some(stage.index_build_s);
    Ok((cands, report))
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub splits: Splits,
    pub blocking: BlockingStage,
    pub candidates: CandidateSet,
    pub blocking_metrics: MetricsReport,
    pub matcher: TrainedMatcher,
    pub test_pairs: Vec<PairFeatureVector>,
    pub predictions: Vec<Prediction>,
    pub matching_metrics: MetricsReport,
}

/// Full run: splits, blocking model and index, hard-negative pair sets,
/// matcher training, blocking and matching evaluation.
pub fn run_experiment(bench: &Benchmark, feats: &Featurized, cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let truth = &bench.truth;
    let initial = build_splits(&feats.index, &feats.candidates, truth, &cfg.split, None)?;
    let blocking = train_blocking(feats, truth, &initial, cfg)?;
    let splits = build_splits(&feats.index, &feats.candidates, truth, &cfg.split, Some(&blocking.index))?;
    let (candidates, blocking_metrics) = run_blocking(feats, truth, &splits, &blocking, cfg.blocking.k)?;

    let train_pairs = labeled_features(feats, &splits.matching_train, cfg.ratio_mode)?;
    let matcher = train(&train_pairs, &feats.schema, &cfg.matcher)?;
    let test_pairs = labeled_features(feats, &splits.matching_test, cfg.ratio_mode)?;
    let predictions = matcher.predict(&feats.schema, &test_pairs)?;
    let matching_metrics = matching_metrics(&predictions, truth);
    Ok(ExperimentOutput {
        splits,
        blocking,
        candidates,
        blocking_metrics,
        matcher,
        test_pairs,
        predictions,
        matching_metrics,
    })
}
