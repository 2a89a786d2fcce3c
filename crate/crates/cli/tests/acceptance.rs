//! Acceptance checks for the whole pipeline. Prints one PASS/FAIL line per
//! criterion and exits nonzero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use meshmatch::bkafi::{build_index, calibrate_threshold, generate_candidates, CandidatePair, CandidateSet};
use meshmatch::kdtree::{squared_distance, KdTree};
use meshmatch::pairs::DiscrepancyProfile;
use meshmatch::pipeline::{featurize_benchmark, run_experiment, ExperimentConfig, ExperimentOutput, Featurized};
use meshmatch::synth::{
    contaminate_swap, generate_benchmark, pair_vectors, vector_lookup, Discrepancy, GeneratorConfig, LabeledPair,
    Transform,
};
use meshmatch::{
    blocking_metrics, compute_properties, estimate_discrepancy, matching_metrics, pair_features,
    pruning_metrics, BlockingKey, GroundTruth, KeyCriterion, Label, MatcherConfig, Polygon, PolygonMesh,
    Prediction, PropertySchema, RatioMode, SourceTag, Vertex3,
};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn rr_arithmetic() -> Check {
    let t0 = Instant::now();
    let (nc, ni, k) = (3507, 9985, 20);
    let mut pairs = Vec::with_capacity(nc * k);
    for c in 0..nc {
        for r in 0..k {
            pairs.push(CandidatePair {
                candidate_id: format!("C{c:05}"),
                index_id: format!("I{:05}", (c + r) % ni),
                distance: r as f64,
                rank: r + 1,
            });
        }
    }
    let cands = CandidateSet {
        pairs,
        k,
        pruned: false,
    };
    let truth = GroundTruth::from_pairs(
        BTreeMap::from([("C00000".to_string(), "I00000".to_string())]),
        (0..nc).map(|c| format!("C{c:05}")),
    )
    .map_err(err)?;
    let m = blocking_metrics(&cands, &truth, nc, ni).map_err(err)?;
    let rr = m.rr.ok_or("no RR reported")?;
    let secs = t0.elapsed().as_secs_f64();
    ensure((rr - 99.7997).abs() <= 1e-4, || format!("RR = {rr:.6}"))?;
    ensure(secs < 1.0, || format!("took {secs:.3}s"))?;
    Ok(format!("RR = {rr:.6}% in {secs:.3}s"))
}

fn kd_tree_oracle() -> Check {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0;
    for dims in [3usize, 24] {
        let n = 1000;
        let points: Vec<f64> = (0..n * dims).map(|_| rng.random_range(-1.0..1.0)).collect();
        let tree = KdTree::build(points.clone(), dims, (0..n).collect()).map_err(err)?;
        for _ in 0..100 {
            let q: Vec<f64> = (0..dims).map(|_| rng.random_range(-1.2..1.2)).collect();
            let mut brute: Vec<(usize, f64)> = (0..n)
                .map(|i| (i, squared_distance(&q, &points[i * dims..(i + 1) * dims]).sqrt()))
                .collect();
            brute.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            for k in [1usize, 5, 20] {
                let got: Vec<usize> = tree.knn(&q, k, None).into_iter().map(|(i, _)| i).collect();
                let want: Vec<usize> = brute[..k].iter().map(|(i, _)| *i).collect();
                ensure(got == want, || format!("{dims}-d, k={k}: {got:?} != {want:?}"))?;
                checked += 1;
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    ensure(secs < 5.0, || format!("took {secs:.3}s"))?;
    Ok(format!("{checked} query/k combinations identical to brute force in {secs:.3}s"))
}

fn exhaustive_recall() -> Check {
    let mut out = Vec::new();
    for (seed, unmatched) in [(0u64, 0.2), (9, 0.0)] {
        let bench = generate_benchmark(&GeneratorConfig {
            n_entities: 400,
            seed,
            unmatched_fraction: unmatched,
            ..Default::default()
        })
        .map_err(err)?;
        let schema = PropertySchema::full();
        let feats = featurize_benchmark(&bench, &schema).map_err(err)?;
        let key = BlockingKey::new((0..schema.len()).collect(), KeyCriterion::FeatureImportance, schema.len())
            .map_err(err)?;
        let index = build_index(&feats.index, &key).map_err(err)?;
        let cands = generate_candidates(&feats.candidates, &index, feats.index.len(), None).map_err(err)?;
        let m = blocking_metrics(&cands, &bench.truth, feats.candidates.len(), feats.index.len()).map_err(err)?;
        let pc = m.pc.ok_or("no PC reported")?;
        ensure(pc == 100.0, || format!("seed {seed}: PC = {pc}"))?;
        out.push(format!("seed {seed}: PC = {pc}"));
    }
    Ok(out.join(", "))
}

fn self_ratio_identity() -> Check {
    let bench = generate_benchmark(&GeneratorConfig {
        n_entities: 1000,
        seed: 4,
        ..Default::default()
    })
    .map_err(err)?;
    let feats = featurize_benchmark(&bench, &PropertySchema::full()).map_err(err)?;
    let mut worst = 0.0f64;
    for (c, i) in feats.candidates.iter().zip(&feats.index) {
        let same = pair_features(c, c).map_err(err)?;
        ensure(same.values.iter().all(|&v| v == 1.0), || format!("{} self-ratio {:?}", c.mesh_id, same.values))?;
        let ab = pair_features(c, i).map_err(err)?;
        let ba = pair_features(i, c).map_err(err)?;
        for (x, y) in ab.values.iter().zip(&ba.values) {
            worst = worst.max((x * y - 1.0).abs());
        }
    }
    ensure(worst <= 1e-9, || format!("reciprocity error {worst:e}"))?;
    Ok(format!(
        "{} meshes all-ones; max |a*b - 1| = {worst:.1e}",
        feats.candidates.len()
    ))
}

fn invariance() -> Check {
    let bench = generate_benchmark(&GeneratorConfig {
        n_entities: 200,
        seed: 5,
        unmatched_fraction: 0.0,
        ..Default::default()
    })
    .map_err(err)?;
    let schema = PropertySchema::full();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = (0.0f64, String::new());
    for mesh in bench.candidates.meshes() {
        let base = compute_properties(mesh, &schema).map_err(err)?;
        let shift = Vertex3::new(
            rng.random_range(-1e5..1e5),
            rng.random_range(-1e5..1e5),
            rng.random_range(-1e3..1e3),
        );
        let angle = rng.random_range(-10.0..10.0);
        for moved in [mesh.translated(shift), mesh.rotated_z(angle)] {
            let v = compute_properties(&moved, &schema).map_err(err)?;
            for (j, (a, b)) in base.values.iter().zip(&v.values).enumerate() {
                let d = rel_diff(*a, *b);
                if d > worst.0 {
                    worst = (d, format!("{} on {}", schema.names()[j], mesh.mesh_id));
                }
            }
        }
    }
    ensure(worst.0 < 1e-6, || format!("relative change {:e} ({})", worst.0, worst.1))?;
    Ok(format!("200 meshes, max relative change {:.1e}", worst.0))
}

/// Frustum over a convex polygon inscribed in an ellipse, under a random
/// linear map and translation; convex and closed by construction.
fn random_convex_polyhedron(rng: &mut ChaCha8Rng, id: usize) -> PolygonMesh {
    let n = rng.random_range(3..12);
    let mut angles: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    angles.sort_by(f64::total_cmp);
    angles.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
    let (ax, ay) = (rng.random_range(1.0..30.0), rng.random_range(1.0..30.0));
    let top = rng.random_range(0.1..1.0);
    let h = rng.random_range(1.0..50.0);
    let ring: Vec<[f64; 3]> = angles.iter().map(|t| [ax * t.cos(), ay * t.sin(), 0.0]).collect();
    let m = ring.len();
    let mut local: Vec<[f64; 3]> = ring.clone();
    local.extend(ring.iter().map(|p| [top * p[0], top * p[1], h]));
    // random linear map with positive determinant
    let mut a = [[0.0; 3]; 3];
    loop {
        for row in a.iter_mut() {
            for x in row.iter_mut() {
                *x = rng.random_range(-1.0..1.0);
            }
        }
        let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
        if det > 0.2 {
            break;
        }
    }
    let t = [
        rng.random_range(-1e4..1e4),
        rng.random_range(-1e4..1e4),
        rng.random_range(0.0..100.0),
    ];
    let vertices = local
        .iter()
        .map(|p| {
            Vertex3::new(
                a[0][0] * p[0] + a[0][1] * p[1] + a[0][2] * p[2] + t[0],
                a[1][0] * p[0] + a[1][1] * p[1] + a[1][2] * p[2] + t[1],
                a[2][0] * p[0] + a[2][1] * p[1] + a[2][2] * p[2] + t[2],
            )
        })
        .collect();
    let mut polygons = vec![Polygon::new((0..m).rev().collect()), Polygon::new((m..2 * m).collect())];
    for i in 0..m {
        let j = (i + 1) % m;
        polygons.push(Polygon::new(vec![i, j, m + j, m + i]));
    }
    PolygonMesh::new(format!("P{id}"), vertices, polygons, SourceTag::Index).expect("valid polyhedron")
}

fn cross(a: Vertex3, b: Vertex3) -> Vertex3 {
    a.cross(b)
}

/// Fan-triangulated area and signed-tetrahedra volume, with tetrahedra
/// apexed at the first vertex to avoid cancellation far from the origin.
fn brute_area_volume(mesh: &PolygonMesh) -> (f64, f64) {
    let apex = mesh.vertices[0];
    let (mut area, mut vol6) = (0.0, 0.0);
    for poly in &mesh.polygons {
        let v: Vec<Vertex3> = poly.vertex_ids.iter().map(|&i| mesh.vertices[i].sub(apex)).collect();
        for k in 1..v.len() - 1 {
            area += 0.5 * cross(v[k].sub(v[0]), v[k + 1].sub(v[0])).norm();
            vol6 += v[0].dot(cross(v[k], v[k + 1]));
        }
    }
    (area, (vol6 / 6.0).abs())
}

fn geometry_oracle() -> Check {
    let schema = PropertySchema::from_names(&["area", "volume"]).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut worst_a, mut worst_v) = (0.0f64, 0.0f64);
    for id in 0..100 {
        let mesh = random_convex_polyhedron(&mut rng, id);
        let (area, volume) = brute_area_volume(&mesh);
        let p = compute_properties(&mesh, &schema).map_err(err)?;
        worst_a = worst_a.max(rel_diff(p.values[0], area));
        worst_v = worst_v.max(rel_diff(p.values[1], volume));
    }
    ensure(worst_a <= 1e-9 && worst_v <= 1e-9, || {
        format!("relative error area {worst_a:e}, volume {worst_v:e}")
    })?;
    Ok(format!("100 polyhedra, max relative error area {worst_a:.1e}, volume {worst_v:.1e}"))
}

fn discrepancy_recovery() -> Check {
    let d = Discrepancy::new(1.2, 0.05);
    let cfg = GeneratorConfig {
        n_entities: 10_000,
        seed: 7,
        unmatched_fraction: 0.0,
        discrepancy: BTreeMap::from([(Transform::FootprintScale, d), (Transform::HeightScale, d)]),
        ..Default::default()
    };
    let bench = generate_benchmark(&cfg).map_err(err)?;
    let schema = PropertySchema::from_names(&["height_diff"]).map_err(err)?;
    let feats = featurize_benchmark(&bench, &schema).map_err(err)?;
    let (c, i) = feats.for_mode(RatioMode::RawRatio);
    let matches: Vec<LabeledPair> = bench
        .truth
        .matches()
        .iter()
        .map(|(c, i)| LabeledPair {
            candidate_id: c.clone(),
            index_id: i.clone(),
            label: Label::Match,
        })
        .collect();
    let pairs = pair_vectors(&matches, &vector_lookup(c), &vector_lookup(i), RatioMode::RawRatio).map_err(err)?;
    let profile = estimate_discrepancy(&pairs, &schema, "height_diff", &Default::default()).map_err(err)?;
    let ratios: Vec<f64> = pairs.iter().map(|p| p.values[0]).collect();
    let delta = DiscrepancyProfile::delta_at(&ratios, profile.r_g, 2.0 * profile.sigma);
    let r_err = (profile.r_g - 1.2).abs() / 1.2;
    ensure(pairs.len() == 10_000, || format!("{} matched pairs", pairs.len()))?;
    ensure(r_err <= 0.01, || format!("r_g = {:.5}", profile.r_g))?;
    ensure((delta - 0.05).abs() <= 0.02, || format!("delta(2 sigma) = {delta:.4}"))?;
    Ok(format!(
        "r_g = {:.5}, sigma = {:.5}, delta(2 sigma) = {delta:.4}",
        profile.r_g, profile.sigma
    ))
}

fn synthetic_bench(n: usize, seed: u64, sigma: f64) -> Result<meshmatch::synth::Benchmark, String> {
    generate_benchmark(&GeneratorConfig {
        n_entities: n,
        seed,
        unmatched_fraction: 0.2,
        ..GeneratorConfig::default().with_uniform_discrepancy(1.0, sigma)
    })
    .map_err(err)
}

fn experiment(
    bench: &meshmatch::synth::Benchmark,
    cfg: &ExperimentConfig,
) -> Result<(Featurized, ExperimentOutput), String> {
    let feats = featurize_benchmark(bench, &cfg.schema).map_err(err)?;
    let out = run_experiment(bench, &feats, cfg).map_err(err)?;
    Ok((feats, out))
}

fn end_to_end() -> Check {
    let t0 = Instant::now();
    let bench = synthetic_bench(2000, 0, 0.02)?;
    let mut cfg = ExperimentConfig::default().seeded(0);
    cfg.split.train_ratio = 0.6;
    cfg.blocking.criterion = KeyCriterion::FeatureImportance;
    cfg.blocking.fb_size = 3;
    cfg.blocking.k = 5;
    cfg.matcher = MatcherConfig {
        n_trees: 100,
        ..MatcherConfig::bagging(0)
    };
    let (_, out) = experiment(&bench, &cfg)?;
    let secs = t0.elapsed().as_secs_f64();
    let pc5 = *out.blocking_metrics.pc_at_k.get(&5).ok_or("no PC@5 reported")?;
    let f1 = out.matching_metrics.f1.ok_or("no F1 reported")?;
    ensure(pc5 >= 90.0, || format!("PC@5 = {pc5:.2}"))?;
    ensure(f1 >= 90.0, || format!("F1 = {f1:.2}"))?;
    ensure(secs < 120.0, || format!("took {secs:.1}s"))?;
    Ok(format!("PC@5 = {pc5:.2}, F1 = {f1:.2}, {secs:.1}s"))
}

fn criterion_ordering() -> Check {
    let mut rows = Vec::new();
    for seed in 0..3u64 {
        let bench = synthetic_bench(2000, seed, 0.02)?;
        let mut pc1 = Vec::new();
        for crit in [KeyCriterion::FeatureImportance, KeyCriterion::RatioStd] {
            let mut cfg = ExperimentConfig::default().seeded(seed);
            cfg.blocking.criterion = crit;
            cfg.blocking.fb_size = 3;
            cfg.blocking.k = 5;
            let (_, out) = experiment(&bench, &cfg)?;
            pc1.push(*out.blocking_metrics.pc_at_k.get(&1).ok_or("no PC@1 reported")?);
        }
        ensure(pc1[0] >= pc1[1], || {
            format!("seed {seed}: importance PC@1 {:.2} < std PC@1 {:.2}", pc1[0], pc1[1])
        })?;
        rows.push(format!("seed {seed}: {:.2} vs {:.2}", pc1[0], pc1[1]));
    }
    Ok(format!("importance vs std PC@1: {}", rows.join("; ")))
}

fn pruning_laws() -> Check {
    let bench = synthetic_bench(800, 3, 0.02)?;
    let schema = PropertySchema::full();
    let feats = featurize_benchmark(&bench, &schema).map_err(err)?;
    let key = BlockingKey::new(vec![1, 2, 8], KeyCriterion::FeatureImportance, schema.len()).map_err(err)?;
    let index = build_index(&feats.index, &key).map_err(err)?;
    let cands = vector_lookup(&feats.candidates);
    let idx = vector_lookup(&feats.index);
    let matches: Vec<_> = bench
        .truth
        .matches()
        .iter()
        .take(300)
        .map(|(c, i)| (cands[c.as_str()], idx[i.as_str()]))
        .collect();
    let k = 10;
    let open = generate_candidates(&feats.candidates, &index, k, None).map_err(err)?;
    let n = feats.candidates.len();
    let mut out = Vec::new();
    for q in [0.0, 0.5, 0.8, 0.9, 0.95, 0.99, 1.0] {
        let t = calibrate_threshold(&index, &matches, q).map_err(err)?;
        let pruned = generate_candidates(&feats.candidates, &index, k, Some(t)).map_err(err)?;
        let all: BTreeSet<(&str, &str)> = open
            .pairs
            .iter()
            .map(|p| (p.candidate_id.as_str(), p.index_id.as_str()))
            .collect();
        ensure(
            pruned
                .pairs
                .iter()
                .all(|p| all.contains(&(p.candidate_id.as_str(), p.index_id.as_str()))),
            || format!("q={q}: pruned set not a subset"),
        )?;
        let (rr_k, pc_k) = pruning_metrics(&pruned, &open, &bench.truth, n).map_err(err)?;
        ensure(rr_k >= 0.0 && pc_k <= 1.0, || format!("q={q}: RR_k {rr_k}, PC_k {pc_k}"))?;
        out.push(format!("q={q}: RR_k {rr_k:.3} PC_k {pc_k:.3}"));
    }
    let inf = generate_candidates(&feats.candidates, &index, k, Some(f64::INFINITY)).map_err(err)?;
    let (rr_k, pc_k) = pruning_metrics(&inf, &open, &bench.truth, n).map_err(err)?;
    ensure(pc_k == 1.0, || format!("infinite threshold: PC_k {pc_k}"))?;
    ensure(inf.pairs == open.pairs, || "infinite threshold changed the set".into())?;
    out.push(format!("t=inf: RR_k {rr_k:.3} PC_k {pc_k}"));
    Ok(out.join(", "))
}

fn contaminated_f1(preds: &[Prediction], truth: &GroundTruth, ids: &BTreeSet<String>) -> f64 {
    let subset: Vec<Prediction> = preds.iter().filter(|p| ids.contains(&p.candidate_id)).cloned().collect();
    matching_metrics(&subset, truth).f1.unwrap_or(0.0)
}

fn contamination_robustness() -> Check {
    let levels = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5];
    let seeds = [0u64, 1, 2];
    let mut overall = vec![0.0; levels.len()];
    let mut only = vec![0.0; levels.len()];
    for &seed in &seeds {
        let bench = generate_benchmark(&GeneratorConfig {
            n_entities: 2000,
            seed,
            ..GeneratorConfig::default().with_uniform_discrepancy(1.1, 0.02)
        })
        .map_err(err)?;
        for (l, &level) in levels.iter().enumerate() {
            let c = contaminate_swap(&bench.index, &bench.candidates, &bench.truth, level, seed).map_err(err)?;
            let dirty = meshmatch::synth::Benchmark {
                index: c.index,
                candidates: c.candidates,
                truth: c.truth,
            };
            let (_, out) = experiment(&dirty, &ExperimentConfig::default().seeded(seed))?;
            overall[l] += out.matching_metrics.f1.unwrap_or(0.0) / seeds.len() as f64;
            only[l] += contaminated_f1(&out.predictions, &dirty.truth, &c.contaminated_ids) / seeds.len() as f64;
        }
    }
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join("/");
    let detail = format!("overall F1 {}; contaminated-only F1 {}", fmt(&overall), fmt(&only[1..]));
    ensure((overall[5] - overall[0]).abs() <= 3.0, || format!("{detail}: level 0.5 drifts from level 0"))?;
    ensure(only[1..].windows(2).all(|w| w[1] >= w[0]), || {
        format!("{detail}: contaminated-only F1 decreases")
    })?;
    Ok(detail)
}

fn snapshot(dir: &Path, skip: &str) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(err)? {
        let p = entry.map_err(err)?.path();
        let name = p.file_name().unwrap().to_string_lossy().into_owned();
        if name != skip {
            out.insert(name, std::fs::read(&p).map_err(err)?);
        }
    }
    Ok(out)
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_meshmatch"))
        .args(args)
        .env("RUST_LOG", "error")
        .status()
        .map_err(err)?;
    ensure(status.success(), || format!("`meshmatch {}` exited with {status}", args.join(" ")))
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(err)?;
    let mut snaps = Vec::new();
    for rep in ["a", "b"] {
        let bench = tmp.path().join(format!("bench_{rep}"));
        let run = tmp.path().join(format!("run_{rep}"));
        let (b, r) = (bench.to_str().unwrap(), run.to_str().unwrap());
        run_cli(&["gen-bench", "--out", b, "--n", "600", "--seed", "11"])?;
        run_cli(&["train", "--bench", b, "--run", r, "--seed", "11"])?;
        run_cli(&["block", "--bench", b, "--run", r, "--prune-quantile", "0.95"])?;
        run_cli(&["match", "--bench", b, "--run", r])?;
        snaps.push((snapshot(&bench, "")?, snapshot(&run, "manifest.json")?));
    }
    let (a, b) = (&snaps[0], &snaps[1]);
    for (x, y) in [(&a.0, &b.0), (&a.1, &b.1)] {
        ensure(x.keys().eq(y.keys()), || "different file sets".into())?;
        for (name, bytes) in x {
            ensure(&y[name] == bytes, || format!("{name} differs between runs"))?;
        }
    }
    Ok(format!("{} files byte-identical across two runs", a.0.len() + a.1.len()))
}

fn main() {
    let checks: [(&str, fn() -> Check); 12] = [
        ("RR arithmetic", rr_arithmetic),
        ("KD-tree matches brute force", kd_tree_oracle),
        ("exhaustive blocking recall", exhaustive_recall),
        ("self-ratio identity and reciprocity", self_ratio_identity),
        ("translation and z-rotation invariance", invariance),
        ("area and volume oracle", geometry_oracle),
        ("discrepancy recovery", discrepancy_recovery),
        ("end-to-end synthetic pipeline", end_to_end),
        ("importance key beats std key", criterion_ordering),
        ("pruning laws", pruning_laws),
        ("contamination robustness", contamination_robustness),
        ("byte-identical reruns", determinism),
    ];
    let only: Option<usize> = std::env::args().nth(1).and_then(|a| a.parse().ok());
    let mut failed = 0;
    for (n, (name, check)) in checks.iter().enumerate() {
        if only.is_some_and(|o| o != n + 1) {
            continue;
        }
        let t0 = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t0.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.1}s]", n + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why} [{secs:.1}s]", n + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance check(s) failed");
        std::process::exit(1);
    }
}
