//! Native mesh format: JSON lines, one mesh per line.
//!
//! `{"mesh_id": "...", "vertices": [[x,y,z], ...], "polygons": [[i, ...], ...]}`
//!
//! Floats are written in shortest round-trip form, so a dataset survives
//! write/read bit-exactly.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{DatasetRole, MeshDataset, Polygon, PolygonMesh, Vertex3};

#[derive(Serialize, Deserialize)]
struct MeshRecord {
    mesh_id: String,
    vertices: Vec<[f64; 3]>,
    polygons: Vec<Vec<usize>>,
}

pub fn write_mesh_line<W: Write>(mut w: W, mesh: &PolygonMesh) -> Result<()> {
    let rec = MeshRecord {
        mesh_id: mesh.mesh_id.clone(),
        vertices: mesh.vertices.iter().map(|v| v.to_array()).collect(),
        polygons: mesh.polygons.iter().map(|p| p.vertex_ids.clone()).collect(),
    };
    serde_json::to_writer(&mut w, &rec)?;
    w.write_all(b"\n").map_err(|e| Error::io("<writer>", e))
}

pub fn write_dataset<W: Write>(mut w: W, dataset: &MeshDataset) -> Result<()> {
    for m in dataset.meshes() {
        write_mesh_line(&mut w, m)?;
    }
    Ok(())
}

pub fn read_dataset<R: BufRead>(r: R, role: DatasetRole) -> Result<MeshDataset> {
    let mut meshes = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<reader>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: MeshRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            offset: e.column().saturating_sub(1),
            message: format!("line {}: {e}", lineno + 1),
        })?;
        meshes.push(PolygonMesh::new(
            rec.mesh_id,
            rec.vertices.into_iter().map(Vertex3::from).collect(),
            rec.polygons.into_iter().map(Polygon::new).collect(),
            role.into(),
        )?);
    }
    MeshDataset::new(role, meshes)
}

pub fn write_dataset_file(path: &Path, dataset: &MeshDataset) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    write_dataset(&mut w, dataset)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_dataset_file(path: &Path, role: DatasetRole) -> Result<MeshDataset> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(std::io::BufReader::new(f), role)
}
