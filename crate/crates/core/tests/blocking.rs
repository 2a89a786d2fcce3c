use std::collections::{BTreeMap, BTreeSet};

use meshmatch::bkafi::{build_index, calibrate_threshold, generate_candidates, sweep};
use meshmatch::pairs::DiscrepancyProfile;
use meshmatch::pipeline::{featurize_benchmark, run_experiment, ExperimentConfig};
use meshmatch::synth::{generate_benchmark, pair_vectors, vector_lookup, Discrepancy, GeneratorConfig, LabeledPair, Transform};
use meshmatch::{
    blocking_metrics, estimate_discrepancy, pruning_metrics, BlockingKey, KeyCriterion, Label, MatcherConfig,
    PropertySchema, RatioMode,
};

fn bench(n: usize, seed: u64) -> meshmatch::synth::Benchmark {
    generate_benchmark(&GeneratorConfig {
        n_entities: n,
        seed,
        ..Default::default()
    })
    .unwrap()
}

#[test]
fn full_key_with_k_equal_to_index_size_finds_every_match() {
    let b = bench(250, 1);
    let schema = PropertySchema::full();
    let feats = featurize_benchmark(&b, &schema).unwrap();
    let key = BlockingKey::new((0..schema.len()).collect(), KeyCriterion::RatioStd, schema.len()).unwrap();
    let index = build_index(&feats.index, &key).unwrap();
    let cands = generate_candidates(&feats.candidates, &index, feats.index.len(), None).unwrap();
    assert_eq!(cands.len(), feats.candidates.len() * feats.index.len());
    let m = blocking_metrics(&cands, &b.truth, feats.candidates.len(), feats.index.len()).unwrap();
    assert_eq!(m.pc, Some(100.0));
    assert_eq!(m.rr, Some(0.0));
}

#[test]
fn sweep_pc_grows_with_k_and_rr_shrinks() {
    let b = bench(400, 2);
    let schema = PropertySchema::full();
    let feats = featurize_benchmark(&b, &schema).unwrap();
    let ranking: Vec<usize> = (0..schema.len()).collect();
    let ks = [1, 2, 5, 10, 20];
    let rows = sweep(&feats.candidates, &feats.index, &ranking, KeyCriterion::RatioStd, &b.truth, &ks, &[2, 4, 8]).unwrap();
    assert_eq!(rows.len(), 15);
    for fb in rows.chunks(ks.len()) {
        assert!(fb.windows(2).all(|w| w[1].pc >= w[0].pc && w[1].rr <= w[0].rr));
    }
}

#[test]
fn pruning_is_a_subset_and_infinite_threshold_is_identity() {
    let b = bench(500, 3);
    let schema = PropertySchema::full();
    let feats = featurize_benchmark(&b, &schema).unwrap();
    let key = BlockingKey::new(vec![1, 2, 3], KeyCriterion::FeatureImportance, schema.len()).unwrap();
    let index = build_index(&feats.index, &key).unwrap();
    let c = vector_lookup(&feats.candidates);
    let i = vector_lookup(&feats.index);
    let matches: Vec<_> = b.truth.matches().iter().map(|(a, z)| (c[a.as_str()], i[z.as_str()])).collect();
    let k = 8;
    let open = generate_candidates(&feats.candidates, &index, k, None).unwrap();
    let open_set: BTreeSet<_> = open.pairs.iter().map(|p| (&p.candidate_id, &p.index_id)).collect();
    let n = feats.candidates.len();
    let mut last_size = 0;
    for q in [0.0, 0.25, 0.5, 0.75, 0.9, 1.0] {
        let t = calibrate_threshold(&index, &matches, q).unwrap();
        let pruned = generate_candidates(&feats.candidates, &index, k, Some(t)).unwrap();
        assert!(pruned.pairs.iter().all(|p| open_set.contains(&(&p.candidate_id, &p.index_id))));
        assert!(pruned.len() >= last_size, "q={q}: a larger threshold lost pairs");
        last_size = pruned.len();
        let (rr_k, pc_k) = pruning_metrics(&pruned, &open, &b.truth, n).unwrap();
        assert!((0.0..=1.0).contains(&rr_k) && (0.0..=1.0).contains(&pc_k), "q={q}");
    }
    let inf = generate_candidates(&feats.candidates, &index, k, Some(f64::INFINITY)).unwrap();
    assert_eq!(inf.pairs, open.pairs);
    let (_, pc_k) = pruning_metrics(&inf, &open, &b.truth, n).unwrap();
    assert_eq!(pc_k, 1.0);
}

#[test]
fn discrepancy_of_a_known_scale_is_recovered() {
    let d = Discrepancy::new(1.3, 0.04);
    let b = generate_benchmark(&GeneratorConfig {
        n_entities: 3000,
        seed: 8,
        unmatched_fraction: 0.0,
        discrepancy: BTreeMap::from([(Transform::FootprintScale, d), (Transform::HeightScale, d)]),
        ..Default::default()
    })
    .unwrap();
    let schema = PropertySchema::from_names(&["height_diff"]).unwrap();
    let feats = featurize_benchmark(&b, &schema).unwrap();
    let (c, i) = feats.for_mode(RatioMode::RawRatio);
    let labeled: Vec<LabeledPair> = b
        .truth
        .matches()
        .iter()
        .map(|(c, i)| LabeledPair {
            candidate_id: c.clone(),
            index_id: i.clone(),
            label: Label::Match,
        })
        .collect();
    let pairs = pair_vectors(&labeled, &vector_lookup(c), &vector_lookup(i), RatioMode::RawRatio).unwrap();
    let p = estimate_discrepancy(&pairs, &schema, "height_diff", &Default::default()).unwrap();
    assert!((p.r_g - 1.3).abs() / 1.3 <= 0.01, "r_g {}", p.r_g);
    assert!((p.sigma - 1.3 * 0.04).abs() / (1.3 * 0.04) <= 0.1, "sigma {}", p.sigma);
    let ratios: Vec<f64> = pairs.iter().map(|q| q.values[0]).collect();
    let delta = DiscrepancyProfile::delta_at(&ratios, p.r_g, 2.0 * p.sigma);
    assert!((delta - 0.05).abs() <= 0.02, "delta {delta}");
}

#[test]
fn experiment_is_deterministic_and_metrics_are_consistent() {
    let b = generate_benchmark(&GeneratorConfig {
        n_entities: 600,
        seed: 4,
        ..Default::default()
    })
    .unwrap();
    let mut cfg = ExperimentConfig::default().seeded(4);
    cfg.matcher = MatcherConfig {
        n_trees: 30,
        ..MatcherConfig::bagging(4)
    };
    let feats = featurize_benchmark(&b, &cfg.schema).unwrap();
    let a = run_experiment(&b, &feats, &cfg).unwrap();
    let z = run_experiment(&b, &feats, &cfg).unwrap();
    assert_eq!(a.candidates.pairs, z.candidates.pairs);
    assert_eq!(a.predictions, z.predictions);
    assert_eq!(a.matcher.to_json().unwrap(), z.matcher.to_json().unwrap());
    a.blocking_metrics.check().unwrap();
    a.matching_metrics.check().unwrap();
    let f1 = a.matching_metrics.f1.unwrap();
    assert!(f1 > 80.0, "F1 {f1}");
    // splits never share candidates
    let train: BTreeSet<_> = a.splits.train_candidates.iter().collect();
    assert!(a.splits.test_candidates.iter().all(|c| !train.contains(c)));
}
