use nalgebra::{Point3, Vector3};

use super::transform::RigidTransform;
use crate::error::{Error, Result};

/// Triangles with area at or below this (mm²) are rejected as degenerate.
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

/// Indexed triangle surface in millimeters with area-weighted vertex normals.
///
/// Counterclockwise winding (seen from outside) is the outward side. Every
/// vertex is referenced by at least one triangle and no triangle is degenerate.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Point3<f64>>,
    triangles: Vec<[usize; 3]>,
    normals: Vec<Vector3<f64>>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Point3<f64>>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::EmptyMesh);
        }
        if let Some(i) = vertices
            .iter()
            .position(|v| !v.coords.iter().all(|c| c.is_finite()))
        {
            return Err(Error::InvalidMesh(format!("vertex {i} is not finite")));
        }
        let mut referenced = vec![false; vertices.len()];
        for (t, tri) in triangles.iter().enumerate() {
            for &i in tri {
                if i >= vertices.len() {
                    return Err(Error::InvalidMesh(format!(
                        "triangle {t} references vertex {i} of {}",
                        vertices.len()
                    )));
                }
                referenced[i] = true;
            }
            let area = triangle_area(&vertices[tri[0]], &vertices[tri[1]], &vertices[tri[2]]);
            if area <= MIN_TRIANGLE_AREA {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} is degenerate (area {area:e})"
                )));
            }
        }
        if let Some(i) = referenced.iter().position(|r| !r) {
            return Err(Error::InvalidMesh(format!("vertex {i} is not used by any triangle")));
        }
        let normals = vertex_normals(&vertices, &triangles);
        Ok(Self {
            vertices,
            triangles,
            normals,
        })
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Unit area-weighted vertex normals.
    pub fn normals(&self) -> &[Vector3<f64>] {
        &self.normals
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_points(&self, t: usize) -> [Point3<f64>; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Unit geometric normal of triangle `t`.
    pub fn face_normal(&self, t: usize) -> Vector3<f64> {
        let [a, b, c] = self.triangle_points(t);
        (b - a).cross(&(c - a)).normalize()
    }

    /// Mean of the vertex positions.
    pub fn centroid(&self) -> Point3<f64> {
        let sum = self
            .vertices
            .iter()
            .fold(Vector3::zeros(), |acc, v| acc + v.coords);
        Point3::from(sum / self.vertices.len() as f64)
    }

    /// Same topology, new vertex positions.
    pub fn with_vertices(&self, vertices: Vec<Point3<f64>>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::LengthMismatch {
                expected: self.vertices.len(),
                found: vertices.len(),
            });
        }
        TriMesh::new(vertices, self.triangles.clone())
    }

    /// Sorted, deduplicated one-ring neighbors of every vertex.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nbrs = vec![Vec::new(); self.vertices.len()];
        for &[a, b, c] in &self.triangles {
            for (u, v) in [(a, b), (b, c), (c, a)] {
                nbrs[u].push(v);
                nbrs[v].push(u);
            }
        }
        for n in &mut nbrs {
            n.sort_unstable();
            n.dedup();
        }
        nbrs
    }

    /// Every directed edge is matched by exactly one reverse edge: the surface
    /// is closed, manifold and consistently wound.
    pub fn is_closed(&self) -> bool {
        let mut edges: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|&[a, b, c]| [(a, b), (b, c), (c, a)])
            .collect();
        edges.sort_unstable();
        if edges.windows(2).any(|w| w[0] == w[1]) {
            return false;
        }
        edges.iter().all(|&(u, v)| edges.binary_search(&(v, u)).is_ok())
    }

    /// Signed enclosed volume (positive for outward-oriented closed meshes).
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|&[a, b, c]| {
                let (a, b, c) = (self.vertices[a], self.vertices[b], self.vertices[c]);
                a.coords.dot(&b.coords.cross(&c.coords)) / 6.0
            })
            .sum()
    }

    pub fn bounding_box(&self) -> Aabb {
        Aabb::from_points(&self.vertices).expect("mesh has vertices")
    }
}

pub(crate) fn triangle_area(a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

fn vertex_normals(vertices: &[Point3<f64>], triangles: &[[usize; 3]]) -> Vec<Vector3<f64>> {
    let mut acc = vec![Vector3::zeros(); vertices.len()];
    let mut fallback = vec![None; vertices.len()];
    for &[a, b, c] in triangles {
        // cross product length is twice the area: area weighting for free
        let n = (vertices[b] - vertices[a]).cross(&(vertices[c] - vertices[a]));
        let unit = n.normalize();
        for i in [a, b, c] {
            acc[i] += n;
            fallback[i].get_or_insert(unit);
        }
    }
    acc.into_iter()
        .zip(fallback)
        .map(|(n, f)| {
            let len = n.norm();
            if len > 1e-300 {
                n / len
            } else {
                f.unwrap_or_else(Vector3::z)
            }
        })
        .collect()
}

/// Axis-aligned box, `min <= max` componentwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    pub fn from_points(points: &[Point3<f64>]) -> Option<Self> {
        let first = points.first()?;
        let mut b = Aabb {
            min: *first,
            max: *first,
        };
        for p in &points[1..] {
            b.grow(p);
        }
        Some(b)
    }

    pub fn grow(&mut self, p: &Point3<f64>) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn center(&self) -> Point3<f64> {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }

    /// Squared distance from `p` to the box (zero inside).
    pub fn distance_squared(&self, p: &Point3<f64>) -> f64 {
        let mut d2 = 0.0;
        for k in 0..3 {
            let gap = if p[k] < self.min[k] {
                self.min[k] - p[k]
            } else if p[k] > self.max[k] {
                p[k] - self.max[k]
            } else {
                0.0
            };
            d2 += gap * gap;
        }
        d2
    }
}

/// Tight componentwise bounds of the mesh vertices.
pub fn bounding_box(mesh: &TriMesh) -> Aabb {
    mesh.bounding_box()
}

/// Maps every vertex by `t`; normals follow the rotation and topology is kept.
pub fn transform_mesh(mesh: &TriMesh, t: &RigidTransform) -> TriMesh {
    TriMesh {
        vertices: mesh.vertices.iter().map(|v| t.apply_point(v)).collect(),
        triangles: mesh.triangles.clone(),
        normals: mesh.normals.iter().map(|n| t.apply_vector(n)).collect(),
    }
}

/// Uniform scaling about `center`.
pub fn scale_mesh(mesh: &TriMesh, factor: f64, center: &Point3<f64>) -> Result<TriMesh> {
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "scale factor must be positive, got {factor}"
        )));
    }
    if factor == 1.0 {
        return Ok(mesh.clone());
    }
    let vertices = mesh
        .vertices
        .iter()
        .map(|v| center + (v - center) * factor)
        .collect();
    Ok(TriMesh {
        vertices,
        triangles: mesh.triangles.clone(),
        normals: mesh.normals.clone(),
    })
}
