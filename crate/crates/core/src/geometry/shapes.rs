//! Procedural closed meshes used as templates, phantoms and test fixtures.

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use super::mesh::TriMesh;

/// Axis-aligned cube of the given edge length centered at the origin.
pub fn cube(edge: f64) -> TriMesh {
    box_mesh(Vector3::repeat(edge))
}

/// Axis-aligned box with the given extents centered at the origin (8 vertices, 12 triangles).
pub fn box_mesh(extent: Vector3<f64>) -> TriMesh {
    let h = extent / 2.0;
    let vertices = (0..8)
        .map(|i| {
            Point3::new(
                if i & 1 == 0 { -h.x } else { h.x },
                if i & 2 == 0 { -h.y } else { h.y },
                if i & 4 == 0 { -h.z } else { h.z },
            )
        })
        .collect();
    let triangles = vec![
        [0, 2, 1],
        [1, 2, 3], // -z
        [4, 5, 6],
        [5, 7, 6], // +z
        [0, 1, 4],
        [1, 5, 4], // -y
        [2, 6, 3],
        [3, 6, 7], // +y
        [0, 4, 2],
        [2, 4, 6], // -x
        [1, 3, 5],
        [3, 7, 5], // +x
    ];
    TriMesh::new(vertices, triangles).expect("box is valid")
}

/// Box whose faces are each split into an `n`×`n` grid of quads, so that
/// flat regions carry interior vertices.
pub fn subdivided_box(extent: Vector3<f64>, n: usize) -> TriMesh {
    let n = n.max(1);
    let h = extent / 2.0;
    let mut builder = Welder::default();
    // (normal axis, sign) for each face; u, v axes chosen so u × v = outward normal
    for (axis, sign) in [(0, 1.0), (0, -1.0), (1, 1.0), (1, -1.0), (2, 1.0), (2, -1.0)] {
        let (ua, va) = ((axis + 1) % 3, (axis + 2) % 3);
        let point = |i: usize, j: usize| {
            let mut p = Point3::origin();
            p[axis] = sign * h[axis];
            p[ua] = -h[ua] + extent[ua] * i as f64 / n as f64;
            p[va] = -h[va] + extent[va] * j as f64 / n as f64;
            p
        };
        for i in 0..n {
            for j in 0..n {
                let (a, b, c, d) = (point(i, j), point(i + 1, j), point(i + 1, j + 1), point(i, j + 1));
                if sign > 0.0 {
                    builder.push([a, b, c]);
                    builder.push([a, c, d]);
                } else {
                    builder.push([a, c, b]);
                    builder.push([a, d, c]);
                }
            }
        }
    }
    builder.finish()
}

/// Geodesic sphere: icosahedron subdivided `subdivisions` times
/// (20·4^s triangles), vertices exactly on the sphere.
pub fn icosphere(radius: f64, subdivisions: u32) -> TriMesh {
    let (dirs, triangles) = unit_icosphere(subdivisions);
    let vertices = dirs.iter().map(|d| Point3::from(d * radius)).collect();
    TriMesh::new(vertices, triangles).expect("icosphere is valid")
}

/// Triaxial ellipsoid centered at the origin.
pub fn ellipsoid(semi_axes: [f64; 3], subdivisions: u32) -> TriMesh {
    let (dirs, triangles) = unit_icosphere(subdivisions);
    let vertices = dirs
        .iter()
        .map(|d| Point3::new(d.x * semi_axes[0], d.y * semi_axes[1], d.z * semi_axes[2]))
        .collect();
    TriMesh::new(vertices, triangles).expect("ellipsoid is valid")
}

/// Star-shaped, non-convex, rotationally asymmetric blob roughly `2·size`
/// across: a flattened ellipsoid with three equatorial lobes and a lateral
/// bias, loosely resembling a bicondylar implant profile from every side.
pub fn lobed(size: f64, subdivisions: u32) -> TriMesh {
    let (dirs, triangles) = unit_icosphere(subdivisions);
    let vertices = dirs
        .iter()
        .map(|u| Point3::from(u * (size * lobed_radius(u))))
        .collect();
    TriMesh::new(vertices, triangles).expect("lobed shape is valid")
}

fn lobed_radius(u: &Vector3<f64>) -> f64 {
    let (a, b, c) = (1.0, 0.8, 0.7);
    let ellipse = 1.0 / ((u.x / a).powi(2) + (u.y / b).powi(2) + (u.z / c).powi(2)).sqrt();
    let phi = u.z.atan2(u.x);
    let equator = 1.0 - u.y * u.y;
    ellipse * (1.0 + 0.12 * (3.0 * phi).cos() * equator + 0.08 * u.x + 0.06 * u.z * (1.0 + u.y))
}

fn unit_icosphere(subdivisions: u32) -> (Vec<Vector3<f64>>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vector3<f64>> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|p| Vector3::from(*p).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vector3<f64>>| {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) / 2.0).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    (verts, faces)
}

/// Collects triangles by position, merging exactly coincident corners.
#[derive(Default)]
struct Welder {
    index: HashMap<[u64; 3], usize>,
    vertices: Vec<Point3<f64>>,
    triangles: Vec<[usize; 3]>,
}

impl Welder {
    fn push(&mut self, tri: [Point3<f64>; 3]) {
        let mut idx = [0; 3];
        for (k, p) in tri.iter().enumerate() {
            let key = [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()];
            let next = self.vertices.len();
            idx[k] = *self.index.entry(key).or_insert(next);
            if idx[k] == next {
                self.vertices.push(*p);
            }
        }
        self.triangles.push(idx);
    }

    fn finish(self) -> TriMesh {
        TriMesh::new(self.vertices, self.triangles).expect("welded mesh is valid")
    }
}
