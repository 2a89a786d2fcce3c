use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use log::{info, warn};
use serde_json::json;

use meshmatch::bkafi::{self, write_sweep_csv, CandidateSet, KeyCriterion, KeySource};
use meshmatch::cityjson::parse_cityjson;
use meshmatch::eval::{pc_rr_curve, write_curve_csv};
use meshmatch::jsonl::read_dataset_file;
use meshmatch::matcher::{grid_search, DEFAULT_GRID_DEPTHS, DEFAULT_GRID_TREES};
use meshmatch::pairs::{read_pair_csv, write_pair_csv, DiscrepancyOptions};
use meshmatch::pipeline::{
    assemble_blocking, featurize_benchmark, labeled_features, run_blocking, train_blocking, Featurized,
};
use meshmatch::props::{featurize_dataset, write_property_csv};
use meshmatch::synth::{
    build_splits, contaminate_swap, dirty_clean_variant, generate_benchmark, read_bundle, vector_lookup,
    write_bundle, Benchmark, BundleManifest, ContaminationRecord, LabeledPair, Splits, Transform,
};
use meshmatch::{
    estimate_discrepancy, matching_metrics, pruning_metrics, select_blocking_key, DatasetRole,
    GroundTruth, Label, MatcherConfig, MetricsReport, PairFeatureVector, Prediction, PropertySchema,
    TrainedMatcher,
};

use crate::config::PipelineConfig;
use crate::run::*;
use crate::{
    BlockArgs, ContaminateArgs, ContaminationMode, Criterion, FeaturizeArgs, GenBenchArgs, InputFormat,
    InvariantError, MatchArgs, ReportArgs, Role, RunArgs, SweepArgs, TrainArgs, UsageError,
};

fn key_criterion(c: Criterion) -> KeyCriterion {
    match c {
        Criterion::Importance => KeyCriterion::FeatureImportance,
        Criterion::Std => KeyCriterion::RatioStd,
    }
}

fn checked(report: MetricsReport, what: &str) -> Result<MetricsReport> {
    report
        .check()
        .map_err(|e| InvariantError(format!("{what} metrics: {e}")))?;
    Ok(report)
}

/// Metrics written to disk carry no timings, so reruns stay byte-identical.
fn without_timings(mut r: MetricsReport) -> MetricsReport {
    r.wall_time_s = None;
    r.index_build_s = None;
    r
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let t0 = Instant::now();
    let out = f()?;
    Ok((out, t0.elapsed().as_secs_f64()))
}

fn load_matcher(rd: &RunDir, name: &str) -> Result<TrainedMatcher> {
    Ok(TrainedMatcher::read(rd.reader(name, "train")?)?)
}

fn load_truth(rd: &RunDir, splits: &Splits) -> Result<GroundTruth> {
    let all = splits
        .blocking_eval_candidates
        .iter()
        .chain(&splits.train_candidates)
        .chain(&splits.test_candidates)
        .cloned()
        .collect::<BTreeSet<_>>();
    Ok(GroundTruth::read_csv(rd.reader(TRUTH, "train")?, all)?)
}

pub fn featurize(cfg: PipelineConfig, a: &FeaturizeArgs) -> Result<()> {
    let role = match a.role {
        Role::Index => DatasetRole::Index,
        Role::Candidate => DatasetRole::Candidate,
    };
    let format = match a.format {
        Some(f) => f,
        None => match a.input.extension().and_then(|e| e.to_str()) {
            Some("jsonl") => InputFormat::Jsonl,
            Some("json") => InputFormat::Cityjson,
            _ => return Err(UsageError(format!("cannot guess the format of {}; pass --format", a.input.display())).into()),
        },
    };
    let t0 = Instant::now();
    let dataset = match format {
        InputFormat::Jsonl => read_dataset_file(&a.input, role)?,
        InputFormat::Cityjson => {
            let bytes = fs::read(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
            let (ds, report) = parse_cityjson(&bytes, cfg.min_polygons, role)?;
            for s in &report.skipped {
                warn!("skipped {}: {}", s.object_id, s.reason);
            }
            ds
        }
    };
    if dataset.is_empty() {
        warn!("{} holds no meshes; writing the header only", a.input.display());
    }
    let schema = cfg.schema()?;
    let vectors = featurize_dataset(&dataset, &schema, a.normalize)?;
    match &a.output {
        Some(p) => {
            let f = File::create(p).with_context(|| format!("creating {}", p.display()))?;
            write_property_csv(BufWriter::new(f), &schema, &vectors)?;
        }
        None => write_property_csv(io::stdout().lock(), &schema, &vectors)?,
    }
    info!("featurized {} meshes in {:.3}s", vectors.len(), t0.elapsed().as_secs_f64());
    Ok(())
}

pub fn gen_bench(cfg: PipelineConfig, a: &GenBenchArgs) -> Result<()> {
    let mut g = cfg.generator;
    if let Some(n) = a.n {
        g.n_entities = n;
    }
    if let Some(s) = a.seed {
        g.seed = s;
    }
    if a.r_g.is_some() || a.sigma.is_some() {
        let base = g.discrepancy.get(&Transform::HeightScale).copied();
        let r_g = a.r_g.or(base.map(|d| d.r_g)).unwrap_or(1.0);
        let sigma = a.sigma.or(base.map(|d| d.sigma)).unwrap_or(0.0);
        g = g.with_uniform_discrepancy(r_g, sigma);
    }
    if let Some(u) = a.unmatched {
        g.unmatched_fraction = u;
    }
    if let Some(c) = a.complexity {
        g.footprint_complexity = c;
    }
    if a.disjoint {
        g.index_mode = meshmatch::synth::IndexMode::DisjointCopy;
    }
    g.validate().map_err(|e| UsageError(e.to_string()))?;
    let (bench, secs) = timed(|| Ok(generate_benchmark(&g)?))?;
    let mut manifest = BundleManifest::new(&bench);
    manifest.generator = Some(g);
    write_bundle(&a.out, &bench, &manifest)?;
    info!(
        "wrote {} index and {} candidate meshes to {} in {secs:.3}s",
        bench.index.len(),
        bench.candidates.len(),
        a.out.display()
    );
    Ok(())
}

pub fn contaminate(a: &ContaminateArgs) -> Result<()> {
    if !(0.0..=0.5).contains(&a.level) {
        return Err(UsageError(format!("--level {} outside [0, 0.5]", a.level)).into());
    }
    let (bench, base) = read_bundle(&a.bench)?;
    let (out, kind, ids, within) = match a.mode {
        ContaminationMode::Swap => {
            let c = contaminate_swap(&bench.index, &bench.candidates, &bench.truth, a.level, a.seed)?;
            let b = Benchmark {
                index: c.index,
                candidates: c.candidates,
                truth: c.truth,
            };
            (b, "swap", c.contaminated_ids, Vec::new())
        }
        ContaminationMode::DirtyClean => {
            let d = dirty_clean_variant(&bench.index, &bench.candidates, &bench.truth, a.level, a.seed)?;
            let ids = d.within_source.iter().map(|(_, i)| i.clone()).collect();
            let b = Benchmark {
                index: d.index,
                candidates: d.candidates,
                truth: d.cross_truth,
            };
            (b, "dirty_clean", ids, d.within_source)
        }
    };
    let mut manifest = BundleManifest::new(&out);
    manifest.generator = base.generator;
    manifest.contamination = Some(ContaminationRecord {
        kind: kind.to_string(),
        level: a.level,
        seed: a.seed,
        contaminated_ids: ids,
    });
    write_bundle(&a.out, &out, &manifest)?;
    if !within.is_empty() {
        let mut w = csv::Writer::from_path(a.out.join("within_source.csv"))?;
        w.write_record(["candidate_id", "duplicate_id"])?;
        for (c, i) in &within {
            w.write_record([c, i])?;
        }
        w.flush()?;
    }
    info!("{kind} contamination at level {} written to {}", a.level, a.out.display());
    Ok(())
}

fn write_grid(path: &Path, scored: &[(MatcherConfig, meshmatch::matcher::CvScore)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["max_depth", "n_trees", "cv_accuracy", "cv_f1"])?;
    for (c, s) in scored {
        w.write_record([
            c.max_depth.to_string(),
            c.n_trees.to_string(),
            format!("{:.6}", s.accuracy),
            format!("{:.6}", s.f1),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn pick_matcher(
    pairs: &[PairFeatureVector],
    schema: &PropertySchema,
    base: &MatcherConfig,
    grid: bool,
    grid_out: &Path,
) -> Result<MatcherConfig> {
    if !grid {
        return Ok(base.clone());
    }
    let (best, scored) = grid_search(pairs, schema, base, &DEFAULT_GRID_DEPTHS, &DEFAULT_GRID_TREES, 5)?;
    write_grid(grid_out, &scored)?;
    info!("grid search picked depth {} with {} trees", best.max_depth, best.n_trees);
    Ok(best)
}

pub fn train(mut cfg: PipelineConfig, a: &TrainArgs) -> Result<()> {
    cfg.set_seed(a.seed);
    if let Some(pairs_path) = &a.pairs {
        let model_path = a.model.as_ref().expect("clap requires --model with --pairs");
        let f = File::open(pairs_path).with_context(|| format!("opening {}", pairs_path.display()))?;
        let (schema, pairs) = read_pair_csv(BufReader::new(f))?;
        let grid_out = model_path.with_extension("grid.csv");
        let mcfg = pick_matcher(&pairs, &schema, &cfg.matcher, a.grid_search, &grid_out)?;
        let model = meshmatch::train(&pairs, &schema, &mcfg)?;
        let f = File::create(model_path).with_context(|| format!("creating {}", model_path.display()))?;
        let mut w = BufWriter::new(f);
        model.write(&mut w)?;
        w.flush()?;
        info!("trained on {} pairs, model written to {}", pairs.len(), model_path.display());
        return Ok(());
    }
    let (Some(bench_dir), Some(run_dir)) = (&a.bench, &a.run) else {
        return Err(UsageError("train needs either --bench and --run, or --pairs and --model".into()).into());
    };
    let exp = cfg.experiment()?;
    let rd = RunDir::create(run_dir)?;
    let mut entry = ManifestEntry::start();
    entry.input("bench", bench_dir).config(&cfg)?;

    let (bench, _) = read_bundle(bench_dir)?;
    let (feats, t) = timed(|| Ok(featurize_benchmark(&bench, &exp.schema)?))?;
    entry.timing("featurize", t);
    let truth = &bench.truth;
    let initial = build_splits(&feats.index, &feats.candidates, truth, &exp.split, None)?;
    let (stage, t) = timed(|| Ok(train_blocking(&feats, truth, &initial, &exp)?))?;
    entry.timing("blocking_model", t);
    let splits = build_splits(&feats.index, &feats.candidates, truth, &exp.split, Some(&stage.index))?;

    let train_pairs = labeled_features(&feats, &splits.matching_train, exp.ratio_mode)?;
    let mcfg = pick_matcher(&train_pairs, &feats.schema, &exp.matcher, a.grid_search, &rd.path(GRID))?;
    cfg.matcher = mcfg.clone();
    let (matcher, t) = timed(|| Ok(meshmatch::train(&train_pairs, &feats.schema, &mcfg)?))?;
    entry.timing("matcher", t);
    let test_pairs = labeled_features(&feats, &splits.matching_test, exp.ratio_mode)?;
    let blocking_pairs = labeled_features(&feats, &splits.blocking_train, exp.ratio_mode)?;

    rd.write_json(PIPELINE, &cfg)?;
    rd.write_json(SPLITS, &splits)?;
    rd.write_json(
        STATS,
        &DatasetStats {
            n_index: bench.index.len(),
            n_candidates: bench.candidates.len(),
            n_matches: truth.n_matches(),
        },
    )?;
    truth.write_csv(rd.writer(TRUTH)?)?;
    for (name, model) in [(BLOCKING_MODEL, &stage.model), (MATCHER, &matcher)] {
        let mut w = rd.writer(name)?;
        model.write(&mut w)?;
        w.flush()?;
    }
    write_pair_csv(rd.writer(BLOCKING_TRAIN_PAIRS)?, &feats.schema, &blocking_pairs)?;
    write_pair_csv(rd.writer(TRAIN_PAIRS)?, &feats.schema, &train_pairs)?;
    write_pair_csv(rd.writer(TEST_PAIRS)?, &feats.schema, &test_pairs)?;
    let mut w = csv::Writer::from_writer(rd.writer(IMPORTANCE)?);
    w.write_record(["property", "blocking_importance", "matcher_importance"])?;
    for (j, name) in feats.schema.names().into_iter().enumerate() {
        w.write_record([
            name.to_string(),
            stage.model.importance[j].to_string(),
            matcher.importance[j].to_string(),
        ])?;
    }
    w.flush()?;
    rd.record("train", entry)?;
    info!(
        "trained on {} pairs ({} test pairs); key [{}]",
        train_pairs.len(),
        test_pairs.len(),
        stage.key.names(&feats.schema).join(", ")
    );
    Ok(())
}

/// Effective config of a trained run with block-time flags applied.
fn block_config(rd: &RunDir, a: &BlockArgs) -> Result<PipelineConfig> {
    let mut cfg: PipelineConfig = rd.read_json(PIPELINE, "train")?;
    let b = &mut cfg.blocking;
    if let Some(k) = a.k {
        b.k = k;
    }
    if let Some(f) = a.fb_size {
        b.fb_size = f;
    }
    if let Some(c) = a.criterion {
        b.criterion = key_criterion(c);
    }
    if let Some(q) = a.prune_quantile {
        if !(0.0..=1.0).contains(&q) {
            return Err(UsageError(format!("--prune-quantile {q} outside [0, 1]")).into());
        }
        b.prune = true;
        b.prune_quantile = q;
    }
    if a.no_prune {
        b.prune = false;
    }
    if b.k == 0 {
        return Err(UsageError("--k must be positive".into()).into());
    }
    Ok(cfg)
}

struct Loaded {
    rd: RunDir,
    bench: Benchmark,
    manifest: BundleManifest,
    feats: Featurized,
    splits: Splits,
}

fn load_run(cfg: &PipelineConfig, args: &RunArgs) -> Result<Loaded> {
    let rd = RunDir::open(&args.run)?;
    let splits: Splits = rd.read_json(SPLITS, "train")?;
    let (bench, manifest) = read_bundle(&args.bench)?;
    let feats = featurize_benchmark(&bench, &cfg.schema()?)?;
    Ok(Loaded {
        rd,
        bench,
        manifest,
        feats,
        splits,
    })
}

pub fn block(a: &BlockArgs) -> Result<()> {
    let cfg = block_config(&RunDir::open(&a.run.run)?, a)?;
    let exp = cfg.experiment()?;
    let Loaded {
        rd, bench, feats, splits, ..
    } = load_run(&cfg, &a.run)?;
    let mut entry = ManifestEntry::start();
    entry.input("bench", &a.run.bench).config(&cfg)?;
    let model = load_matcher(&rd, BLOCKING_MODEL)?;
    if model.schema != feats.schema {
        return Err(UsageError("blocking model schema differs from the run config".into()).into());
    }
    let truth = &bench.truth;
    let stage = assemble_blocking(&feats, truth, &splits, &exp, model)?;
    let (cands, mut report) = run_blocking(&feats, truth, &splits, &stage, exp.blocking.k)?;
    entry.timing("index_build", report.index_build_s.unwrap_or(0.0));
    entry.timing("query", report.wall_time_s.unwrap_or(0.0));

    let n_queries = splits.blocking_eval_candidates.len();
    let eval_truth = truth.restrict_to(splits.blocking_eval_candidates.iter().map(String::as_str));
    let curve_source = if stage.index.prune_threshold.is_some() {
        let mut open = stage.clone();
        open.index = open.index.with_threshold(None);
        let (full, _) = run_blocking(&feats, truth, &splits, &open, exp.blocking.k)?;
        let (rr_k, pc_k) = pruning_metrics(&cands, &full, &eval_truth, n_queries)?;
        report.rr_k = Some(rr_k);
        report.pc_k = Some(pc_k);
        full
    } else {
        cands.clone()
    };
    let report = checked(without_timings(report), "blocking")?;
    let curve = pc_rr_curve(&curve_source, &eval_truth, n_queries, feats.index.len())?;

    cands.write_csv(rd.writer(CANDIDATES)?)?;
    rd.write_json(BLOCKING_METRICS, &report)?;
    write_curve_csv(rd.writer(CURVE)?, ["k", "pc", "rr"], &curve)?;
    rd.write_json(
        BLOCKING_KEY,
        &json!({
            "properties": stage.key.names(&feats.schema),
            "feature_ids": stage.key.feature_ids,
            "criterion": stage.key.criterion,
            "k": cands.k,
            "prune_threshold": stage.index.prune_threshold,
        }),
    )?;
    rd.record("block", entry)?;
    print!("{}", report.to_table());
    Ok(())
}

fn contaminated_ids(manifest: &BundleManifest) -> Option<&BTreeSet<String>> {
    manifest
        .contamination
        .as_ref()
        .filter(|c| c.kind == "swap")
        .map(|c| &c.contaminated_ids)
}

fn write_predictions(w: impl Write, preds: &[Prediction]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["candidate_id", "index_id", "probability", "label"])?;
    for p in preds {
        let label = if p.label.is_match() { "1" } else { "0" };
        w.write_record([p.candidate_id.as_str(), p.index_id.as_str(), &p.probability.to_string(), label])?;
    }
    w.flush()?;
    Ok(())
}

fn read_predictions(r: impl io::Read) -> Result<Vec<Prediction>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let bad = || anyhow::anyhow!("malformed prediction row {:?}", rec.position().map(|p| p.line()));
        let probability: f64 = rec.get(2).ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let label = match rec.get(3) {
            Some("1") => Label::Match,
            Some("0") => Label::NonMatch,
            _ => return Err(bad()),
        };
        out.push(Prediction {
            candidate_id: rec[0].to_string(),
            index_id: rec[1].to_string(),
            probability,
            label,
        });
    }
    Ok(out)
}

/// Overall metrics, plus metrics over the swapped entities when the bundle
/// is a swap contamination.
fn matching_summary(preds: &[Prediction], truth: &GroundTruth, manifest: &BundleManifest) -> Result<serde_json::Value> {
    let overall = checked(matching_metrics(preds, truth), "matching")?;
    let mut out = json!({ "overall": overall });
    if let Some(ids) = contaminated_ids(manifest) {
        let subset: Vec<Prediction> = preds
            .iter()
            .filter(|p| ids.contains(&p.candidate_id))
            .cloned()
            .collect();
        out["contaminated_only"] = serde_json::to_value(checked(matching_metrics(&subset, truth), "matching")?)?;
    }
    Ok(out)
}

fn print_summary(title: &str, summary: &serde_json::Value) -> Result<()> {
    for key in ["overall", "contaminated_only"] {
        if let Some(v) = summary.get(key) {
            let r: MetricsReport = serde_json::from_value(v.clone())?;
            println!("{title} ({key})\n{}", r.to_table());
        }
    }
    Ok(())
}

pub fn match_pairs(a: &MatchArgs) -> Result<()> {
    let rd0 = RunDir::open(&a.run.run)?;
    let cfg: PipelineConfig = rd0.read_json(PIPELINE, "train")?;
    let exp = cfg.experiment()?;
    let matcher = load_matcher(&rd0, MATCHER)?;
    let mut entry = ManifestEntry::start();
    entry.input("bench", &a.run.bench).config(&cfg)?;
    let (schema, pairs, bench_manifest, truth) = match &a.candidates {
        Some(path) => {
            entry.input("candidates", path);
            let Loaded {
                bench, manifest, feats, ..
            } = load_run(&cfg, &a.run)?;
            let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let cands = CandidateSet::read_csv(BufReader::new(f), false)?;
            let labeled: Vec<LabeledPair> = cands
                .pairs
                .iter()
                .map(|p| LabeledPair {
                    candidate_id: p.candidate_id.clone(),
                    index_id: p.index_id.clone(),
                    label: Label::from_bool(bench.truth.is_match(&p.candidate_id, &p.index_id)),
                })
                .collect();
            let pairs = labeled_features(&feats, &labeled, exp.ratio_mode)?;
            (feats.schema, pairs, manifest, bench.truth)
        }
        None => {
            let (bench, manifest) = read_bundle(&a.run.bench)?;
            let (schema, pairs) = read_pair_csv(rd0.reader(TEST_PAIRS, "train")?)?;
            (schema, pairs, manifest, bench.truth)
        }
    };
    let (preds, t) = timed(|| Ok(matcher.predict(&schema, &pairs)?))?;
    entry.timing("predict", t);
    if preds.is_empty() {
        warn!("no pairs to classify");
    }
    let summary = matching_summary(&preds, &truth, &bench_manifest)?;
    write_predictions(rd0.writer(PREDICTIONS)?, &preds)?;
    rd0.write_json(MATCHING_METRICS, &summary)?;
    rd0.record("match", entry)?;
    print_summary("matching", &summary)
}

fn blocking_key_info(rd: &RunDir) -> Result<(usize, bool)> {
    let v: serde_json::Value = rd.read_json(BLOCKING_KEY, "block")?;
    let k = v["k"].as_u64().unwrap_or(0) as usize;
    Ok((k, !v["prune_threshold"].is_null()))
}

pub fn eval(a: &RunArgs) -> Result<()> {
    let rd = RunDir::open(&a.run)?;
    let splits: Splits = rd.read_json(SPLITS, "train")?;
    let (bench, manifest) = read_bundle(&a.bench)?;
    let mut out = serde_json::Map::new();
    if rd.has(CANDIDATES) {
        let (k, pruned) = blocking_key_info(&rd)?;
        let mut cands = CandidateSet::read_csv(rd.reader(CANDIDATES, "block")?, pruned)?;
        cands.k = k;
        let eval_truth = bench
            .truth
            .restrict_to(splits.blocking_eval_candidates.iter().map(String::as_str));
        let report = meshmatch::blocking_metrics(
            &cands,
            &eval_truth,
            splits.blocking_eval_candidates.len(),
            bench.index.len(),
        )?;
        let report = checked(report, "blocking")?;
        println!("blocking\n{}", report.to_table());
        out.insert("blocking".into(), serde_json::to_value(report)?);
    }
    if rd.has(PREDICTIONS) {
        let preds = read_predictions(rd.reader(PREDICTIONS, "match")?)?;
        let summary = matching_summary(&preds, &bench.truth, &manifest)?;
        print_summary("matching", &summary)?;
        out.insert("matching".into(), summary);
    }
    if out.is_empty() {
        return Err(UsageError(format!("{} has no candidates or predictions to evaluate", a.run.display())).into());
    }
    rd.write_json(EVAL, &out)
}

pub fn sweep(a: &SweepArgs) -> Result<()> {
    let rd0 = RunDir::open(&a.run.run)?;
    let mut cfg: PipelineConfig = rd0.read_json(PIPELINE, "train")?;
    if let Some(c) = a.criterion {
        cfg.blocking.criterion = key_criterion(c);
    }
    let exp = cfg.experiment()?;
    let Loaded {
        rd, bench, feats, splits, ..
    } = load_run(&cfg, &a.run)?;
    let d = feats.schema.len();
    if let Some(&bad) = a.fb_list.iter().find(|&&f| f == 0 || f > d) {
        return Err(UsageError(format!("key size {bad} outside 1..={d}")).into());
    }
    if a.k_list.contains(&0) {
        return Err(UsageError("k values must be positive".into()).into());
    }
    let ranking = match exp.blocking.criterion {
        KeyCriterion::FeatureImportance => load_matcher(&rd, BLOCKING_MODEL)?.ranked_features(),
        KeyCriterion::RatioStd => {
            let positives: Vec<PairFeatureVector> = labeled_features(&feats, &splits.blocking_train, exp.ratio_mode)?
                .into_iter()
                .filter(|p| p.label.is_some_and(Label::is_match))
                .collect();
            select_blocking_key(
                KeySource::Profiles {
                    pairs: &positives,
                    schema: &feats.schema,
                },
                d,
            )?
            .feature_ids
        }
    };
    let lookup = vector_lookup(&feats.candidates);
    let queries: Vec<_> = splits
        .blocking_eval_candidates
        .iter()
        .map(|c| lookup[c.as_str()].clone())
        .collect();
    let mut entry = ManifestEntry::start();
    entry.input("bench", &a.run.bench).config(&json!({
        "criterion": exp.blocking.criterion,
        "k_list": a.k_list,
        "fb_list": a.fb_list,
    }))?;
    let rows = bkafi::sweep(
        &queries,
        &feats.index,
        &ranking,
        exp.blocking.criterion,
        &bench.truth,
        &a.k_list,
        &a.fb_list,
    )?;
    for r in &rows {
        entry.timing(&format!("fb{}_k{}_query", r.fb_size, r.k), r.query_s);
        entry.timing(&format!("fb{}_build", r.fb_size), r.build_s);
    }
    write_sweep_csv(rd.writer(SWEEP)?, &rows, false)?;
    rd.record("sweep", entry)?;
    for r in &rows {
        println!("fb={:<3} k={:<4} PC={:>8.4} RR={:>10.6}", r.fb_size, r.k, r.pc, r.rr);
    }
    Ok(())
}

pub fn report(a: &ReportArgs) -> Result<()> {
    let rd = RunDir::open(&a.run)?;
    let cfg: PipelineConfig = rd.read_json(PIPELINE, "train")?;
    let splits: Splits = rd.read_json(SPLITS, "train")?;
    let stats: DatasetStats = rd.read_json(STATS, "train")?;
    let mut text = String::new();
    text.push_str(&format!(
        "benchmark: {} index meshes, {} candidates, {} matches\n",
        stats.n_index, stats.n_candidates, stats.n_matches
    ));
    text.push_str(&format!(
        "splits: {} train / {} test candidates, {} blocking queries\n\n",
        splits.train_candidates.len(),
        splits.test_candidates.len(),
        splits.blocking_eval_candidates.len()
    ));
    if rd.has(BLOCKING_KEY) {
        let key: serde_json::Value = rd.read_json(BLOCKING_KEY, "block")?;
        text.push_str(&format!("blocking key: {}\n", key["properties"]));
    }
    if rd.has(BLOCKING_METRICS) {
        let m: MetricsReport = rd.read_json(BLOCKING_METRICS, "block")?;
        text.push_str(&format!("blocking\n{}\n", m.to_table()));
    }
    if rd.has(MATCHING_METRICS) {
        let v: serde_json::Value = rd.read_json(MATCHING_METRICS, "match")?;
        for key in ["overall", "contaminated_only"] {
            if let Some(m) = v.get(key) {
                let m: MetricsReport = serde_json::from_value(m.clone())?;
                text.push_str(&format!("matching ({key})\n{}\n", m.to_table()));
            }
        }
    }

    if rd.has(CANDIDATES) {
        let (k, pruned) = blocking_key_info(&rd)?;
        let mut cands = CandidateSet::read_csv(rd.reader(CANDIDATES, "block")?, pruned)?;
        cands.k = k;
        let truth = load_truth(&rd, &splits)?;
        let eval_truth = truth.restrict_to(splits.blocking_eval_candidates.iter().map(String::as_str));
        let curve = pc_rr_curve(&cands, &eval_truth, splits.blocking_eval_candidates.len(), stats.n_index)?;
        write_curve_csv(rd.writer(CURVE)?, ["k", "pc", "rr"], &curve)?;
    }

    let (schema, pairs) = read_pair_csv(rd.reader(TRAIN_PAIRS, "train")?)?;
    let matches: Vec<PairFeatureVector> = pairs
        .into_iter()
        .filter(|p| p.label.is_some_and(Label::is_match))
        .collect();
    let mut w = csv::Writer::from_writer(rd.writer(EPS_DELTA)?);
    w.write_record(["property", "epsilon", "delta"])?;
    text.push_str(&format!("discrepancy over training matches ({:?} ratios)\n", cfg.ratio_mode));
    for name in schema.names() {
        let profile = estimate_discrepancy(&matches, &schema, name, &DiscrepancyOptions::default())?;
        text.push_str(&format!("  {name:<28} r_g={:.6} sigma={:.6}\n", profile.r_g, profile.sigma));
        for (eps, delta) in &profile.curve {
            w.write_record([name.to_string(), format!("{eps:.9}"), format!("{delta:.6}")])?;
        }
    }
    w.flush()?;
    fs::write(rd.path(REPORT), &text).with_context(|| format!("writing {}", rd.path(REPORT).display()))?;
    print!("{text}");
    Ok(())
}
