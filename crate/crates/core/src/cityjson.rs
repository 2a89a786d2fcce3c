//! CityJSON (1.0 / 1.1 subset) ingestion.
//!
//! Every city object becomes one [`PolygonMesh`]: solids and surfaces are
//! flattened into a face list, only outer rings are kept, and only the
//! exterior shell of a solid is used. When an object carries several
//! geometries the one with the highest LoD wins (first one on ties).

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::mesh::{DatasetRole, MeshDataset, Polygon, PolygonMesh, Vertex3};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedObject {
    pub object_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IngestionReport {
    pub objects_seen: usize,
    pub meshes_kept: usize,
    pub skipped: Vec<SkippedObject>,
}

impl IngestionReport {
    fn skip(&mut self, id: &str, reason: impl Into<String>) {
        self.skipped.push(SkippedObject {
            object_id: id.to_string(),
            reason: reason.into(),
        });
    }
}

#[derive(Debug, Clone, Copy)]
struct Transform {
    scale: [f64; 3],
    translate: [f64; 3],
}

impl Transform {
    const IDENTITY: Transform = Transform {
        scale: [1.0, 1.0, 1.0],
        translate: [0.0, 0.0, 0.0],
    };

    fn apply(&self, v: [f64; 3]) -> Vertex3 {
        Vertex3::new(
            v[0] * self.scale[0] + self.translate[0],
            v[1] * self.scale[1] + self.translate[1],
            v[2] * self.scale[2] + self.translate[2],
        )
    }
}

/// Parses a CityJSON document into a dataset. Objects with fewer than
/// `min_polygons` faces, or with unsupported geometry, are listed in the report.
pub fn parse_cityjson(
    bytes: &[u8],
    min_polygons: usize,
    role: DatasetRole,
) -> Result<(MeshDataset, IngestionReport)> {
    let doc: Value = serde_json::from_slice(bytes).map_err(|e| Error::Parse {
        offset: byte_offset(bytes, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let root = doc
        .as_object()
        .ok_or_else(|| Error::Schema("top level is not an object".into()))?;

    let transform = match root.get("transform") {
        None | Some(Value::Null) => Transform::IDENTITY,
        Some(t) => Transform {
            scale: triple(t.get("scale"), "transform.scale")?,
            translate: triple(t.get("translate"), "transform.translate")?,
        },
    };

    let raw_vertices = root
        .get("vertices")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Schema("missing \"vertices\" array".into()))?;
    let vertices = raw_vertices
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let t = triple(Some(v), "vertex").map_err(|_| Error::Schema(format!("vertex {i} is not a numeric triple")))?;
            let p = transform.apply(t);
            if !p.is_finite() {
                return Err(Error::Schema(format!("vertex {i} is not finite")));
            }
            Ok(p)
        })
        .collect::<Result<Vec<_>>>()?;

    let objects = root
        .get("CityObjects")
        .and_then(Value::as_object)
        .ok_or_else(|| Error::Schema("missing \"CityObjects\" object".into()))?;

    let mut report = IngestionReport::default();
    let mut meshes = Vec::new();
    // serde_json's map is ordered by key, so output order is deterministic
    for (id, obj) in objects {
        report.objects_seen += 1;
        let geoms = match obj.get("geometry").and_then(Value::as_array) {
            Some(g) if !g.is_empty() => g,
            _ => {
                report.skip(id, "no geometry");
                continue;
            }
        };
        let Some(geom) = pick_highest_lod(geoms) else {
            report.skip(id, "no geometry with a type");
            continue;
        };
        let gtype = geom.get("type").and_then(Value::as_str).unwrap_or_default();
        let rings = match flatten_outer_rings(gtype, geom.get("boundaries")) {
            Ok(r) => r,
            Err(reason) => {
                report.skip(id, reason);
                continue;
            }
        };
        match build_mesh(id, &vertices, rings, role) {
            Ok(mesh) if mesh.polygons.len() >= min_polygons => meshes.push(mesh),
            Ok(mesh) => report.skip(
                id,
                format!("{} polygons < minimum {min_polygons}", mesh.polygons.len()),
            ),
            Err(e) => report.skip(id, e.to_string()),
        }
    }
    report.meshes_kept = meshes.len();
    Ok((MeshDataset::new(role, meshes)?, report))
}

fn triple(v: Option<&Value>, what: &str) -> Result<[f64; 3]> {
    let arr = v
        .and_then(Value::as_array)
        .filter(|a| a.len() == 3)
        .ok_or_else(|| Error::Schema(format!("{what} must be a 3-element array")))?;
    let mut out = [0.0; 3];
    for (o, x) in out.iter_mut().zip(arr) {
        *o = x
            .as_f64()
            .ok_or_else(|| Error::Schema(format!("{what} must be numeric")))?;
    }
    Ok(out)
}

fn lod_key(g: &Value) -> String {
    match g.get("lod") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        _ => String::new(),
    }
}

fn pick_highest_lod(geoms: &[Value]) -> Option<&Value> {
    let mut best: Option<(&Value, String)> = None;
    for g in geoms.iter().filter(|g| g.get("type").is_some()) {
        let lod = lod_key(g);
        if best.as_ref().is_none_or(|(_, b)| lod > *b) {
            best = Some((g, lod));
        }
    }
    best.map(|(g, _)| g)
}

/// Outer ring of every surface, with shells/solids flattened away.
fn flatten_outer_rings(gtype: &str, boundaries: Option<&Value>) -> Result<Vec<Vec<usize>>, String> {
    let b = boundaries
        .and_then(Value::as_array)
        .ok_or_else(|| "geometry has no boundaries".to_string())?;
    let surfaces: Vec<&Value> = match gtype {
        "MultiSurface" | "CompositeSurface" => b.iter().collect(),
        // exterior shell only
        "Solid" => match b.first().and_then(Value::as_array) {
            Some(shell) => shell.iter().collect(),
            None => return Err("solid has no shells".into()),
        },
        other => return Err(format!("unsupported geometry type `{other}`")),
    };
    surfaces
        .into_iter()
        .map(|s| {
            let outer = s
                .as_array()
                .and_then(|rings| rings.first())
                .and_then(Value::as_array)
                .ok_or_else(|| "surface without an outer ring".to_string())?;
            outer
                .iter()
                .map(|i| {
                    i.as_u64()
                        .map(|i| i as usize)
                        .ok_or_else(|| "ring index is not a non-negative integer".to_string())
                })
                .collect()
        })
        .collect()
}

fn build_mesh(
    id: &str,
    pool: &[Vertex3],
    rings: Vec<Vec<usize>>,
    role: DatasetRole,
) -> Result<PolygonMesh> {
    if let Some(&bad) = rings.iter().flatten().find(|&&i| i >= pool.len()) {
        return Err(Error::InvalidMesh {
            mesh_id: id.to_string(),
            reason: format!("vertex index {bad} out of range"),
        });
    }
    let raw = PolygonMesh {
        mesh_id: id.to_string(),
        vertices: pool.to_vec(),
        polygons: rings.into_iter().map(Polygon::new).collect(),
        source_tag: role.into(),
    };
    let mesh = raw.deduplicated();
    mesh.check_structure()?;
    Ok(mesh)
}

fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut offset = 0;
    for (i, l) in bytes.split(|&b| b == b'\n').enumerate() {
        if i + 1 == line {
            return (offset + column.saturating_sub(1)).min(bytes.len());
        }
        offset += l.len() + 1;
    }
    bytes.len()
}

/// Reads a candidate/index CityJSON pair plus an id-mapping CSV
/// (`candidate_id,index_id`) as released with the Hague benchmark.
pub fn load_cityjson_pair(
    index_bytes: &[u8],
    candidate_bytes: &[u8],
    mapping_csv: &[u8],
    min_polygons: usize,
) -> Result<(MeshDataset, MeshDataset, crate::eval::GroundTruth)> {
    let (index, _) = parse_cityjson(index_bytes, min_polygons, DatasetRole::Index)?;
    let (cands, _) = parse_cityjson(candidate_bytes, min_polygons, DatasetRole::Candidate)?;
    let mut rdr = csv::Reader::from_reader(mapping_csv);
    let mut pairs = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let (c, i) = (rec.get(0).unwrap_or_default(), rec.get(1).unwrap_or_default());
        if cands.contains(c) && index.contains(i) {
            pairs.insert(c.to_string(), i.to_string());
        }
    }
    let truth = crate::eval::GroundTruth::from_pairs(
        pairs,
        cands.ids().map(str::to_string),
    )?;
    Ok((index, cands, truth))
}
