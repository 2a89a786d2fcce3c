use std::collections::BTreeMap;

use meshmatch::mesh::box_mesh;
use meshmatch::synth::{generate_benchmark, Discrepancy, GeneratorConfig, Transform};
use meshmatch::{compute_properties, validate_mesh, PropertySchema, Vertex3};

fn rel(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

fn area_volume() -> PropertySchema {
    PropertySchema::from_names(&["area", "volume"]).unwrap()
}

#[test]
fn box_has_closed_form_area_and_volume() {
    let p = compute_properties(&box_mesh("b", 2.0, 3.0, 5.0), &area_volume()).unwrap();
    assert!(rel(p.values[0], 2.0 * (6.0 + 10.0 + 15.0)) < 1e-12);
    assert!(rel(p.values[1], 30.0) < 1e-12);
}

#[test]
fn doubling_every_axis_scales_area_by_four_and_volume_by_eight() {
    let d = Discrepancy::new(2.0, 0.0);
    let bench = generate_benchmark(&GeneratorConfig {
        n_entities: 300,
        seed: 21,
        unmatched_fraction: 0.0,
        rigid_transform: false,
        discrepancy: BTreeMap::from([(Transform::FootprintScale, d), (Transform::HeightScale, d)]),
        ..Default::default()
    })
    .unwrap();
    let schema = area_volume();
    for (c, i) in bench.truth.matches() {
        let pc = compute_properties(bench.candidates.get(c).unwrap(), &schema).unwrap();
        let pi = compute_properties(bench.index.get(i).unwrap(), &schema).unwrap();
        assert!(rel(pc.values[0], 4.0 * pi.values[0]) <= 1e-9, "{c}: area");
        assert!(rel(pc.values[1], 8.0 * pi.values[1]) <= 1e-9, "{c}: volume");
    }
}

#[test]
fn uniform_scaling_of_a_mesh() {
    let schema = area_volume();
    let bench = generate_benchmark(&GeneratorConfig {
        n_entities: 50,
        seed: 2,
        ..Default::default()
    })
    .unwrap();
    for m in bench.index.meshes() {
        let a = compute_properties(m, &schema).unwrap();
        let b = compute_properties(&m.scaled(3.0), &schema).unwrap();
        assert!(rel(b.values[0], 9.0 * a.values[0]) <= 1e-9);
        assert!(rel(b.values[1], 27.0 * a.values[1]) <= 1e-9);
    }
}

#[test]
fn generated_meshes_are_closed_and_clean() {
    let bench = generate_benchmark(&GeneratorConfig {
        n_entities: 400,
        seed: 13,
        footprint_complexity: 16,
        ..Default::default()
    })
    .unwrap();
    for m in bench.index.meshes().iter().chain(bench.candidates.meshes()) {
        let r = validate_mesh(m);
        assert!(r.closed, "{} open", m.mesh_id);
        assert_eq!(r.degenerate_polygons, 0, "{}", m.mesh_id);
        assert_eq!(r.duplicate_vertices, 0, "{}", m.mesh_id);
        let v = compute_properties(m, &area_volume()).unwrap();
        assert!(v.values[1] > 0.0, "{} has no volume", m.mesh_id);
    }
}

#[test]
fn every_property_is_pose_invariant() {
    let schema = PropertySchema::full();
    let bench = generate_benchmark(&GeneratorConfig {
        n_entities: 60,
        seed: 31,
        ..Default::default()
    })
    .unwrap();
    for m in bench.candidates.meshes() {
        let base = compute_properties(m, &schema).unwrap();
        let moved = m.rotated_z(1.234).translated(Vertex3::new(-3.2e4, 7.7e4, 55.0));
        let v = compute_properties(&moved, &schema).unwrap();
        for (j, (a, b)) in base.values.iter().zip(&v.values).enumerate() {
            assert!(rel(*a, *b) < 1e-6, "{} {}: {a} vs {b}", m.mesh_id, schema.names()[j]);
        }
    }
}

#[test]
fn generator_is_deterministic_per_seed() {
    let cfg = GeneratorConfig {
        n_entities: 200,
        seed: 5,
        ..Default::default()
    };
    let a = generate_benchmark(&cfg).unwrap();
    let b = generate_benchmark(&cfg).unwrap();
    assert_eq!(a.index.meshes(), b.index.meshes());
    assert_eq!(a.candidates.meshes(), b.candidates.meshes());
    assert_eq!(a.truth.matches(), b.truth.matches());
    let c = generate_benchmark(&GeneratorConfig { seed: 6, ..cfg }).unwrap();
    assert_ne!(a.candidates.meshes(), c.candidates.meshes());
}
