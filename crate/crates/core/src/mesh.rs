//! Polygon mesh domain types and structural validation.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Faces below this area count as degenerate.
pub const DEGENERATE_AREA: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vertex3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vertex3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }

    pub fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }

    pub fn scale(self, s: f64) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn dot(self, o: Self) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Bit pattern key, used for exact-equality dedup.
    pub(crate) fn bits(&self) -> [u64; 3] {
        // -0.0 and 0.0 are the same point
        let canon = |v: f64| if v == 0.0 { 0u64 } else { v.to_bits() };
        [canon(self.x), canon(self.y), canon(self.z)]
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f64; 3]> for Vertex3 {
    fn from(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

/// A single ring of vertex indices; the closing edge back to the first
/// vertex is implicit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polygon {
    pub vertex_ids: Vec<usize>,
}

impl Polygon {
    pub fn new(vertex_ids: Vec<usize>) -> Self {
        Self { vertex_ids }
    }

    /// Drops consecutive repeats (including the wrap-around pair).
    pub fn cleaned(mut self) -> Self {
        self.vertex_ids.dedup();
        while self.vertex_ids.len() > 1 && self.vertex_ids.first() == self.vertex_ids.last() {
            self.vertex_ids.pop();
        }
        self
    }

    pub fn len(&self) -> usize {
        self.vertex_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertex_ids.is_empty()
    }

    /// Directed edges, including the implicit closing edge.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.vertex_ids.len();
        (0..n).map(move |i| (self.vertex_ids[i], self.vertex_ids[(i + 1) % n]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceTag {
    Candidate,
    Index,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolygonMesh {
    pub mesh_id: String,
    pub vertices: Vec<Vertex3>,
    pub polygons: Vec<Polygon>,
    pub source_tag: SourceTag,
}

impl PolygonMesh {
    /// Builds a mesh and checks the structural invariants: finite coordinates,
    /// rings of at least three ids without consecutive repeats, ids in range.
    pub fn new(
        mesh_id: impl Into<String>,
        vertices: Vec<Vertex3>,
        polygons: Vec<Polygon>,
        source_tag: SourceTag,
    ) -> Result<Self> {
        let mesh = Self {
            mesh_id: mesh_id.into(),
            vertices,
            polygons,
            source_tag,
        };
        mesh.check_structure()?;
        Ok(mesh)
    }

    pub fn check_structure(&self) -> Result<()> {
        let bad = |reason: String| Error::InvalidMesh {
            mesh_id: self.mesh_id.clone(),
            reason,
        };
        if self.polygons.is_empty() {
            return Err(bad("mesh has no polygons".into()));
        }
        if let Some(i) = self.vertices.iter().position(|v| !v.is_finite()) {
            return Err(bad(format!("vertex {i} is not finite")));
        }
        for (pi, poly) in self.polygons.iter().enumerate() {
            if poly.len() < 3 {
                return Err(bad(format!("polygon {pi} has {} vertices", poly.len())));
            }
            if let Some(&id) = poly.vertex_ids.iter().find(|&&id| id >= self.vertices.len()) {
                return Err(bad(format!("polygon {pi} references missing vertex {id}")));
            }
            if poly.edges().any(|(a, b)| a == b) {
                return Err(bad(format!("polygon {pi} repeats a vertex consecutively")));
            }
        }
        Ok(())
    }

    /// Exact-equality dedup of the vertex pool; drops unreferenced vertices
    /// and re-indexes the rings. Rings that collapse below three ids are dropped.
    pub fn deduplicated(&self) -> PolygonMesh {
        let mut remap: HashMap<[u64; 3], usize> = HashMap::new();
        let mut vertices = Vec::new();
        let mut old_to_new = vec![usize::MAX; self.vertices.len()];
        for poly in &self.polygons {
            for &id in &poly.vertex_ids {
                if old_to_new[id] != usize::MAX {
                    continue;
                }
                let v = self.vertices[id];
                let new_id = *remap.entry(v.bits()).or_insert_with(|| {
                    vertices.push(v);
                    vertices.len() - 1
                });
                old_to_new[id] = new_id;
            }
        }
        let polygons = self
            .polygons
            .iter()
            .map(|p| Polygon::new(p.vertex_ids.iter().map(|&i| old_to_new[i]).collect()).cleaned())
            .filter(|p| p.len() >= 3)
            .collect();
        PolygonMesh {
            mesh_id: self.mesh_id.clone(),
            vertices,
            polygons,
            source_tag: self.source_tag,
        }
    }

    pub fn translated(&self, t: Vertex3) -> PolygonMesh {
        let mut m = self.clone();
        m.vertices.iter_mut().for_each(|v| *v = v.add(t));
        m
    }

    /// Rotation about the vertical axis through the origin.
    pub fn rotated_z(&self, angle: f64) -> PolygonMesh {
        let (s, c) = angle.sin_cos();
        let mut m = self.clone();
        for v in &mut m.vertices {
            *v = Vertex3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z);
        }
        m
    }

    pub fn scaled(&self, s: f64) -> PolygonMesh {
        let mut m = self.clone();
        m.vertices.iter_mut().for_each(|v| *v = v.scale(s));
        m
    }

    pub fn ring(&self, poly: &Polygon) -> Vec<Vertex3> {
        poly.vertex_ids.iter().map(|&i| self.vertices[i]).collect()
    }
}

/// Newell normal of a ring; its length is twice the (projected) ring area.
pub fn newell_normal(ring: &[Vertex3]) -> Vertex3 {
    let n = ring.len();
    let mut acc = Vertex3::new(0.0, 0.0, 0.0);
    if n < 3 {
        return acc;
    }
    // accumulate relative to the first vertex to keep large coordinates exact-ish
    let o = ring[0];
    for i in 0..n {
        let a = ring[i].sub(o);
        let b = ring[(i + 1) % n].sub(o);
        acc.x += (a.y - b.y) * (a.z + b.z);
        acc.y += (a.z - b.z) * (a.x + b.x);
        acc.z += (a.x - b.x) * (a.y + b.y);
    }
    acc
}

pub fn polygon_area(ring: &[Vertex3]) -> f64 {
    0.5 * newell_normal(ring).norm()
}

/// Diagnostic summary produced by [`validate_mesh`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub closed: bool,
    pub boundary_edges: usize,
    /// Edges used by more than two faces.
    pub non_manifold_edges: usize,
    pub degenerate_polygons: usize,
    pub duplicate_vertices: usize,
}

pub fn validate_mesh(mesh: &PolygonMesh) -> ValidationReport {
    let mut edge_use: HashMap<(usize, usize), usize> = HashMap::new();
    for poly in &mesh.polygons {
        for (a, b) in poly.edges() {
            *edge_use.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    let boundary_edges = edge_use.values().filter(|&&c| c == 1).count();
    let non_manifold_edges = edge_use.values().filter(|&&c| c > 2).count();

    let degenerate_polygons = mesh
        .polygons
        .iter()
        .filter(|p| polygon_area(&mesh.ring(p)) < DEGENERATE_AREA)
        .count();

    let mut seen = HashSet::new();
    let duplicate_vertices = mesh.vertices.iter().filter(|v| !seen.insert(v.bits())).count();

    ValidationReport {
        closed: !edge_use.is_empty() && boundary_edges == 0 && non_manifold_edges == 0,
        boundary_edges,
        non_manifold_edges,
        degenerate_polygons,
        duplicate_vertices,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetRole {
    Candidate,
    Index,
}

impl From<DatasetRole> for SourceTag {
    fn from(r: DatasetRole) -> Self {
        match r {
            DatasetRole::Candidate => SourceTag::Candidate,
            DatasetRole::Index => SourceTag::Index,
        }
    }
}

/// An immutable collection of meshes from one source, keyed by mesh id.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshDataset {
    role: DatasetRole,
    meshes: Vec<PolygonMesh>,
    by_id: BTreeMap<String, usize>,
}

impl MeshDataset {
    pub fn new(role: DatasetRole, meshes: Vec<PolygonMesh>) -> Result<Self> {
        let mut by_id = BTreeMap::new();
        for (i, m) in meshes.iter().enumerate() {
            if by_id.insert(m.mesh_id.clone(), i).is_some() {
                return Err(Error::InvalidInput(format!(
                    "duplicate mesh id `{}` in {role:?} dataset",
                    m.mesh_id
                )));
            }
        }
        Ok(Self {
            role,
            meshes,
            by_id,
        })
    }

    pub fn empty(role: DatasetRole) -> Self {
        Self {
            role,
            meshes: Vec::new(),
            by_id: BTreeMap::new(),
        }
    }

    pub fn role(&self) -> DatasetRole {
        self.role
    }

    pub fn meshes(&self) -> &[PolygonMesh] {
        &self.meshes
    }

    pub fn into_meshes(self) -> Vec<PolygonMesh> {
        self.meshes
    }

    pub fn len(&self) -> usize {
        self.meshes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meshes.is_empty()
    }

    pub fn get(&self, mesh_id: &str) -> Option<&PolygonMesh> {
        self.by_id.get(mesh_id).map(|&i| &self.meshes[i])
    }

    pub fn contains(&self, mesh_id: &str) -> bool {
        self.by_id.contains_key(mesh_id)
    }

    /// Mesh ids in sorted order.
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.by_id.keys().map(String::as_str)
    }
}

/// Axis-aligned box `[0,dx]x[0,dy]x[0,dz]` with outward-facing quads.
pub fn box_mesh(mesh_id: &str, dx: f64, dy: f64, dz: f64) -> PolygonMesh {
    let vertices = vec![
        Vertex3::new(0.0, 0.0, 0.0),
        Vertex3::new(dx, 0.0, 0.0),
        Vertex3::new(dx, dy, 0.0),
        Vertex3::new(0.0, dy, 0.0),
        Vertex3::new(0.0, 0.0, dz),
        Vertex3::new(dx, 0.0, dz),
        Vertex3::new(dx, dy, dz),
        Vertex3::new(0.0, dy, dz),
    ];
    let polygons = [
        vec![0, 3, 2, 1],
        vec![4, 5, 6, 7],
        vec![0, 1, 5, 4],
        vec![1, 2, 6, 5],
        vec![2, 3, 7, 6],
        vec![3, 0, 4, 7],
    ]
    .into_iter()
    .map(Polygon::new)
    .collect();
    PolygonMesh {
        mesh_id: mesh_id.to_string(),
        vertices,
        polygons,
        source_tag: SourceTag::Index,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_cube() {
        let r = validate_mesh(&box_mesh("c", 1.0, 1.0, 1.0));
        assert!(r.closed);
        assert_eq!(r.boundary_edges, 0);
        assert_eq!(r.degenerate_polygons, 0);
        assert_eq!(r.duplicate_vertices, 0);
    }

    #[test]
    fn open_box_has_four_boundary_edges() {
        let mut m = box_mesh("c", 1.0, 1.0, 1.0);
        m.polygons.pop();
        let r = validate_mesh(&m);
        assert!(!r.closed);
        assert_eq!(r.boundary_edges, 4);
    }

    #[test]
    fn collinear_triangle_is_degenerate() {
        let m = PolygonMesh::new(
            "tri",
            vec![
                Vertex3::new(0.0, 0.0, 0.0),
                Vertex3::new(1.0, 0.0, 0.0),
                Vertex3::new(2.0, 0.0, 0.0),
            ],
            vec![Polygon::new(vec![0, 1, 2])],
            SourceTag::Candidate,
        )
        .unwrap();
        assert_eq!(validate_mesh(&m).degenerate_polygons, 1);
    }

    #[test]
    fn structure_errors() {
        let v = vec![Vertex3::new(0.0, 0.0, 0.0); 3];
        assert!(PolygonMesh::new("a", v.clone(), vec![], SourceTag::Index).is_err());
        assert!(PolygonMesh::new("a", v.clone(), vec![Polygon::new(vec![0, 1, 5])], SourceTag::Index).is_err());
        assert!(PolygonMesh::new("a", v.clone(), vec![Polygon::new(vec![0, 1, 1])], SourceTag::Index).is_err());
        assert!(PolygonMesh::new("a", v, vec![Polygon::new(vec![0, 1, 0])], SourceTag::Index).is_err());
        let nan = vec![Vertex3::new(f64::NAN, 0.0, 0.0); 3];
        assert!(PolygonMesh::new("a", nan, vec![Polygon::new(vec![0, 1, 2])], SourceTag::Index).is_err());
    }

    #[test]
    fn dedup_merges_equal_vertices() {
        let mut m = box_mesh("c", 1.0, 1.0, 1.0);
        // duplicate vertex 0 and point the bottom face at the copy
        m.vertices.push(m.vertices[0]);
        m.polygons[0] = Polygon::new(vec![8, 3, 2, 1]);
        assert_eq!(validate_mesh(&m).duplicate_vertices, 1);
        let d = m.deduplicated();
        assert_eq!(d.vertices.len(), 8);
        assert!(validate_mesh(&d).closed);
    }

    #[test]
    fn cleaned_ring_drops_closing_repeat() {
        let p = Polygon::new(vec![0, 1, 1, 2, 0]).cleaned();
        assert_eq!(p.vertex_ids, vec![0, 1, 2]);
    }

    #[test]
    fn dataset_rejects_duplicate_ids() {
        let a = box_mesh("a", 1.0, 1.0, 1.0);
        assert!(MeshDataset::new(DatasetRole::Index, vec![a.clone(), a]).is_err());
    }
}
