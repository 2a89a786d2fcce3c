//! Per-mesh geometric property vectors and their log(1+x) normalization.
//!
//! All properties are computed in a frame centred on the vertex centroid,
//! and every footprint descriptor is built from the convex hull or a
//! principal-axis rectangle of the xy projection, so the vector does not
//! depend on where a building sits or how it is turned about the vertical.

use std::fmt;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hull::{convex_hull, pca_rectangle, ring_area, ring_perimeter, Point2};
use crate::mesh::{newell_normal, validate_mesh, MeshDataset, PolygonMesh, Vertex3};

/// Denominator floor shared by every ratio in the pipeline.
pub const GUARD: f64 = 1e-12;

/// Nominal storey height in metres.
pub const STOREY_HEIGHT: f64 = 3.0;

pub(crate) fn guard(x: f64) -> f64 {
    x.max(GUARD)
}

macro_rules! properties {
    ($($variant:ident => $name:literal,)*) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum Property {
            $($variant,)*
        }

        impl Property {
            pub const ALL: &'static [Property] = &[$(Property::$variant,)*];

            pub fn name(self) -> &'static str {
                match self {
                    $(Property::$variant => $name,)*
                }
            }

            pub fn from_name(name: &str) -> Option<Property> {
                match name {
                    $($name => Some(Property::$variant),)*
                    _ => None,
                }
            }
        }
    };
}

properties! {
    NumVertices => "num_vertices",
    Area => "area",
    Volume => "volume",
    HeightDiff => "height_diff",
    Perimeter => "perimeter",
    Circumference => "circumference",
    PerimeterIndex => "perimeter_index",
    ConvexHullArea => "convex_hull_area",
    AveCentroidDistance => "ave_centroid_distance",
    ShapeIndex => "shape_index",
    Fractality => "fractality",
    Elongation => "elongation",
    Hemisphericality => "hemisphericality",
    Cubeness => "cubeness",
    AxesSymmetry => "axes_symmetry",
    Density => "density",
    NumFloors => "num_floors",
    BoundingBoxWidth => "bounding_box_width",
    BoundingBoxLength => "bounding_box_length",
    BoundingBoxHeight => "bounding_box_height",
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Ordered list of properties; the order is the feature order for every
/// downstream vector, pair feature and trained model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct PropertySchema {
    properties: Vec<Property>,
}

impl PropertySchema {
    pub fn new(properties: Vec<Property>) -> Result<Self> {
        if properties.is_empty() {
            return Err(Error::InvalidInput("schema must not be empty".into()));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = properties.iter().find(|p| !seen.insert(**p)) {
            return Err(Error::InvalidInput(format!("property `{dup}` listed twice")));
        }
        Ok(Self { properties })
    }

    /// Every registered property, in registry order.
    pub fn full() -> Self {
        Self {
            properties: Property::ALL.to_vec(),
        }
    }

    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let props = names
            .iter()
            .map(|n| {
                Property::from_name(n.as_ref())
                    .ok_or_else(|| Error::InvalidInput(format!("unknown property `{}`", n.as_ref())))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(props)
    }

    pub fn len(&self) -> usize {
        self.properties.len()
    }

    pub fn is_empty(&self) -> bool {
        self.properties.is_empty()
    }

    pub fn properties(&self) -> &[Property] {
        &self.properties
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.properties.iter().map(|p| p.name()).collect()
    }

    pub fn position(&self, p: Property) -> Option<usize> {
        self.properties.iter().position(|&q| q == p)
    }

    pub fn position_by_name(&self, name: &str) -> Option<usize> {
        Property::from_name(name).and_then(|p| self.position(p))
    }
}

impl TryFrom<Vec<String>> for PropertySchema {
    type Error = Error;
    fn try_from(v: Vec<String>) -> Result<Self> {
        Self::from_names(&v)
    }
}

impl From<PropertySchema> for Vec<String> {
    fn from(s: PropertySchema) -> Self {
        s.names().into_iter().map(String::from).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyVector {
    pub mesh_id: String,
    pub values: Vec<f64>,
    pub normalized: bool,
}

impl PropertyVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Intermediate geometric measurements every property is derived from.
#[derive(Debug, Clone, Copy)]
struct Measures {
    num_vertices: f64,
    area: f64,
    volume: f64,
    height: f64,
    perimeter: f64,
    hull_perimeter: f64,
    hull_area: f64,
    footprint_perimeter: f64,
    centroid_distance: f64,
    long_extent: f64,
    short_extent: f64,
    axes_symmetry: f64,
}

fn measure(mesh: &PolygonMesh) -> Measures {
    let mesh = mesh.deduplicated();
    let n = mesh.vertices.len();
    let centroid = mesh
        .vertices
        .iter()
        .fold(Vertex3::new(0.0, 0.0, 0.0), |a, v| a.add(*v))
        .scale(1.0 / n.max(1) as f64);
    let local: Vec<Vertex3> = mesh.vertices.iter().map(|v| v.sub(centroid)).collect();

    let mut area = 0.0;
    let mut signed_volume6 = 0.0;
    let mut perimeter = 0.0;
    let mut footprint_perimeter = 0.0;
    for poly in &mesh.polygons {
        let ring: Vec<Vertex3> = poly.vertex_ids.iter().map(|&i| local[i]).collect();
        let normal = newell_normal(&ring);
        let len = normal.norm();
        area += 0.5 * len;
        let mean = ring
            .iter()
            .fold(Vertex3::new(0.0, 0.0, 0.0), |a, v| a.add(*v))
            .scale(1.0 / ring.len() as f64);
        signed_volume6 += normal.dot(mean);
        let ring_len: f64 = (0..ring.len())
            .map(|i| ring[(i + 1) % ring.len()].sub(ring[i]).norm())
            .sum();
        perimeter += ring_len;
        // ground faces: horizontal, facing down
        if len > 0.0 && normal.z / len < -1.0 + 1e-6 {
            footprint_perimeter += ring_len;
        }
    }
    let volume = if validate_mesh(&mesh).closed {
        (signed_volume6 / 6.0).abs()
    } else {
        log::warn!("mesh `{}` is not closed; volume reported as 0", mesh.mesh_id);
        0.0
    };

    let (zmin, zmax) = local
        .iter()
        .fold((f64::MAX, f64::MIN), |(lo, hi), v| (lo.min(v.z), hi.max(v.z)));
    let height = if n == 0 { 0.0 } else { zmax - zmin };

    let xy: Vec<Point2> = local.iter().map(|v| [v.x, v.y]).collect();
    let hull = convex_hull(&xy);
    let hull_area = ring_area(&hull);
    let hull_perimeter = ring_perimeter(&hull);
    if footprint_perimeter == 0.0 {
        footprint_perimeter = hull_perimeter;
    }
    let (long_extent, short_extent) = pca_rectangle(&xy);

    let centroid_distance = local.iter().map(|v| v.norm()).sum::<f64>() / n.max(1) as f64;

    Measures {
        num_vertices: n as f64,
        area,
        volume,
        height,
        perimeter,
        hull_perimeter,
        hull_area,
        footprint_perimeter,
        centroid_distance,
        long_extent,
        short_extent,
        axes_symmetry: axes_symmetry(&local),
    }
}

/// Sum over the three principal planes of the RMS nearest-neighbour distance
/// between the centred vertex set and its mirror image.
fn axes_symmetry(local: &[Vertex3]) -> f64 {
    if local.len() < 2 {
        return 0.0;
    }
    let mut cov = nalgebra::Matrix3::<f64>::zeros();
    for v in local {
        let p = nalgebra::Vector3::new(v.x, v.y, v.z);
        cov += p * p.transpose();
    }
    cov /= local.len() as f64;
    let eig = nalgebra::SymmetricEigen::new(cov);
    let mut total = 0.0;
    for axis in eig.eigenvectors.column_iter() {
        let e = Vertex3::new(axis[0], axis[1], axis[2]);
        let mut sq = 0.0;
        for v in local {
            let m = v.sub(e.scale(2.0 * v.dot(e)));
            let nearest = local
                .iter()
                .map(|w| {
                    let d = m.sub(*w);
                    d.dot(d)
                })
                .fold(f64::INFINITY, f64::min);
            sq += nearest;
        }
        total += (sq / local.len() as f64).sqrt();
    }
    total
}

impl Property {
    fn evaluate(self, m: &Measures) -> f64 {
        use std::f64::consts::PI;
        match self {
            Property::NumVertices => m.num_vertices,
            Property::Area => m.area,
            Property::Volume => m.volume,
            Property::HeightDiff => m.height,
            Property::Perimeter => m.perimeter,
            Property::Circumference => m.hull_perimeter,
            Property::PerimeterIndex => m.perimeter / guard(m.area),
            Property::ConvexHullArea => m.hull_area,
            Property::AveCentroidDistance => m.centroid_distance,
            Property::ShapeIndex => m.footprint_perimeter / (2.0 * (PI * guard(m.hull_area)).sqrt()),
            Property::Fractality => {
                if m.footprint_perimeter <= 1.0 {
                    0.0
                } else {
                    // a ground ring smaller than the hull can push this below zero
                    (1.0 - guard(m.hull_area).ln() / (2.0 * m.footprint_perimeter.ln())).max(0.0)
                }
            }
            Property::Elongation => m.long_extent / guard(m.short_extent),
            Property::Hemisphericality => {
                3.0 * (2.0 * PI).sqrt() * m.volume / guard(m.area).powf(1.5)
            }
            Property::Cubeness => 6.0 * m.volume.powf(2.0 / 3.0) / guard(m.area),
            Property::AxesSymmetry => m.axes_symmetry,
            Property::Density => m.volume / guard(m.hull_area),
            Property::NumFloors => (m.height / STOREY_HEIGHT).floor().max(1.0),
            Property::BoundingBoxWidth => m.short_extent,
            Property::BoundingBoxLength => m.long_extent,
            Property::BoundingBoxHeight => m.height,
        }
    }
}

/// Raw (unnormalized) property vector of `mesh` in `schema` order.
pub fn compute_properties(mesh: &PolygonMesh, schema: &PropertySchema) -> Result<PropertyVector> {
    if mesh.polygons.is_empty() {
        return Err(Error::InvalidMesh {
            mesh_id: mesh.mesh_id.clone(),
            reason: "mesh has no polygons".into(),
        });
    }
    let m = measure(mesh);
    let values: Vec<f64> = schema.properties().iter().map(|p| p.evaluate(&m)).collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidMesh {
            mesh_id: mesh.mesh_id.clone(),
            reason: format!("property `{}` is not finite", schema.properties()[i]),
        });
    }
    Ok(PropertyVector {
        mesh_id: mesh.mesh_id.clone(),
        values,
        normalized: false,
    })
}

/// Element-wise `ln(1 + g)`. Normalizing an already normalized vector is an error.
pub fn normalize_log1p(v: &PropertyVector) -> Result<PropertyVector> {
    if v.normalized {
        return Err(Error::State(format!(
            "property vector of `{}` is already normalized",
            v.mesh_id
        )));
    }
    let values = v
        .values
        .iter()
        .enumerate()
        .map(|(index, &value)| {
            if value <= -1.0 || value.is_nan() {
                Err(Error::Domain { index, value })
            } else {
                Ok(value.ln_1p())
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PropertyVector {
        mesh_id: v.mesh_id.clone(),
        values,
        normalized: true,
    })
}

/// Featurizes every mesh of a dataset in parallel; output order follows the
/// dataset's mesh order.
pub fn featurize_dataset(
    dataset: &MeshDataset,
    schema: &PropertySchema,
    normalize: bool,
) -> Result<Vec<PropertyVector>> {
    dataset
        .meshes()
        .par_iter()
        .map(|m| {
            let raw = compute_properties(m, schema)?;
            if normalize {
                normalize_log1p(&raw)
            } else {
                Ok(raw)
            }
        })
        .collect()
}

/// Writes the property matrix as CSV (`mesh_id` then schema columns),
/// rows sorted by mesh id.
pub fn write_property_csv<W: Write>(
    w: W,
    schema: &PropertySchema,
    vectors: &[PropertyVector],
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["mesh_id"];
    header.extend(schema.names());
    wtr.write_record(&header)?;
    let mut rows: Vec<&PropertyVector> = vectors.iter().collect();
    rows.sort_by(|a, b| a.mesh_id.cmp(&b.mesh_id));
    for v in rows {
        if v.len() != schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "vector `{}` has {} entries, schema has {}",
                v.mesh_id,
                v.len(),
                schema.len()
            )));
        }
        let mut rec = vec![v.mesh_id.clone()];
        rec.extend(v.values.iter().map(|x| x.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn read_property_csv<R: Read>(r: R, normalized: bool) -> Result<(PropertySchema, Vec<PropertyVector>)> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    if header.get(0) != Some("mesh_id") {
        return Err(Error::Schema("first column must be mesh_id".into()));
    }
    let names: Vec<&str> = header.iter().skip(1).collect();
    let schema = PropertySchema::from_names(&names)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let values = rec
            .iter()
            .skip(1)
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| Error::Schema(format!("bad number `{s}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(PropertyVector {
            mesh_id: rec.get(0).unwrap_or_default().to_string(),
            values,
            normalized,
        });
    }
    Ok((schema, out))
}
