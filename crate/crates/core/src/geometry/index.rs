//! Bounding-volume hierarchy over triangles for exact closest-point queries.

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use super::mesh::{Aabb, TriMesh};

const LEAF_SIZE: usize = 4;

/// Result of a closest-point query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceHit {
    pub point: Point3<f64>,
    pub triangle: usize,
    pub distance: f64,
    /// Positive outside. The sign comes from the angle-weighted pseudo-normal of
    /// the nearest feature (face, edge or vertex), which is exact for closed,
    /// consistently oriented meshes.
    pub signed_distance: f64,
}

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    kind: NodeKind,
}

#[derive(Debug, Clone)]
enum NodeKind {
    /// `order[start..start + count]`
    Leaf { start: usize, count: usize },
    Inner { left: usize, right: usize },
}

/// Immutable triangle hierarchy; queries take `&self` and may run concurrently.
#[derive(Debug, Clone)]
pub struct SurfaceIndex {
    vertices: Vec<Point3<f64>>,
    corners: Vec<[Point3<f64>; 3]>,
    /// Per triangle: face normal, then edge pseudo-normals (ab, bc, ca), then
    /// vertex pseudo-normals (a, b, c).
    pseudo_normals: Vec<[Vector3<f64>; 7]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

pub fn build_spatial_index(mesh: &TriMesh) -> SurfaceIndex {
    SurfaceIndex::new(mesh)
}

impl SurfaceIndex {
    pub fn new(mesh: &TriMesh) -> Self {
        let corners: Vec<_> = (0..mesh.triangle_count())
            .map(|t| mesh.triangle_points(t))
            .collect();
        let pseudo_normals = pseudo_normals(mesh);
        let mut index = SurfaceIndex {
            vertices: mesh.vertices().to_vec(),
            order: (0..corners.len()).collect(),
            corners,
            pseudo_normals,
            nodes: Vec::new(),
        };
        let centroids: Vec<Point3<f64>> = index
            .corners
            .iter()
            .map(|[a, b, c]| Point3::from((a.coords + b.coords + c.coords) / 3.0))
            .collect();
        let n = index.order.len();
        index.build(&centroids, 0, n);
        index
    }

    /// Vertices of the indexed mesh.
    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn triangle_count(&self) -> usize {
        self.corners.len()
    }

    fn bounds_of(&self, range: &[usize]) -> Aabb {
        let mut b = Aabb::from_points(&self.corners[range[0]]).unwrap();
        for &t in range {
            for p in &self.corners[t] {
                b.grow(p);
            }
        }
        b
    }

    fn build(&mut self, centroids: &[Point3<f64>], start: usize, end: usize) -> usize {
        let bounds = self.bounds_of(&self.order[start..end]);
        let id = self.nodes.len();
        self.nodes.push(Node {
            bounds,
            kind: NodeKind::Leaf {
                start,
                count: end - start,
            },
        });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let cb = Aabb::from_points(
            &self.order[start..end]
                .iter()
                .map(|&t| centroids[t])
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let axis = cb.extent().imax();
        let mid = (start + end) / 2;
        self.order[start..end].sort_by(|&a, &b| {
            centroids[a][axis]
                .total_cmp(&centroids[b][axis])
                .then(a.cmp(&b))
        });
        let left = self.build(centroids, start, mid);
        let right = self.build(centroids, mid, end);
        self.nodes[id].kind = NodeKind::Inner { left, right };
        id
    }

    fn hit(&self, t: usize, q: &Point3<f64>) -> (f64, Point3<f64>) {
        let [a, b, c] = &self.corners[t];
        let p = closest_point_on_triangle(q, a, b, c);
        ((q - p).norm_squared(), p)
    }

    fn finish(&self, q: &Point3<f64>, t: usize, d2: f64, p: Point3<f64>) -> SurfaceHit {
        let distance = d2.sqrt();
        let [a, b, c] = &self.corners[t];
        let (_, feature) = closest_feature(q, a, b, c);
        let side = (q - p).dot(&self.pseudo_normals[t][feature as usize]);
        let signed_distance = if side < 0.0 { -distance } else { distance };
        SurfaceHit {
            point: p,
            triangle: t,
            distance,
            signed_distance,
        }
    }

    /// Globally closest surface point; ties go to the lowest triangle index.
    pub fn closest_point(&self, q: &Point3<f64>) -> SurfaceHit {
        let mut best = (f64::INFINITY, usize::MAX, Point3::origin());
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            // conservative margin so rounding never prunes an exact tie
            if node.bounds.distance_squared(q) > best.0 * (1.0 + 1e-9) {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, count } => {
                    for &t in &self.order[start..start + count] {
                        let (d2, p) = self.hit(t, q);
                        if d2 < best.0 || (d2 == best.0 && t < best.1) {
                            best = (d2, t, p);
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    let dl = self.nodes[left].bounds.distance_squared(q);
                    let dr = self.nodes[right].bounds.distance_squared(q);
                    // push the farther child first so the nearer one is explored first
                    if dl <= dr {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        self.finish(q, best.1, best.0, best.2)
    }

    /// Linear scan over every triangle; reference answer for the hierarchy.
    pub fn closest_point_exhaustive(&self, q: &Point3<f64>) -> SurfaceHit {
        let mut best = (f64::INFINITY, usize::MAX, Point3::origin());
        for t in 0..self.corners.len() {
            let (d2, p) = self.hit(t, q);
            if d2 < best.0 {
                best = (d2, t, p);
            }
        }
        self.finish(q, best.1, best.0, best.2)
    }
}

pub fn closest_point_on_surface(index: &SurfaceIndex, query: &Point3<f64>) -> SurfaceHit {
    index.closest_point(query)
}

/// Closest point of triangle `abc` to `p`, by Voronoi-region classification.
pub fn closest_point_on_triangle(
    p: &Point3<f64>,
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
) -> Point3<f64> {
    closest_feature(p, a, b, c).0
}

/// Which part of a triangle a closest point lies on; the value indexes the
/// per-triangle pseudo-normal table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Feature {
    Face = 0,
    EdgeAb = 1,
    EdgeBc = 2,
    EdgeCa = 3,
    A = 4,
    B = 5,
    C = 6,
}

fn closest_feature(
    p: &Point3<f64>,
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
) -> (Point3<f64>, Feature) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (*a, Feature::A);
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (*b, Feature::B);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, Feature::EdgeAb);
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (*c, Feature::C);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, Feature::EdgeCa);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, Feature::EdgeBc);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, Feature::Face)
}

/// Angle-weighted vertex normals and summed edge normals, laid out per triangle.
fn pseudo_normals(mesh: &TriMesh) -> Vec<[Vector3<f64>; 7]> {
    let tris = mesh.triangles();
    let mut vertex = vec![Vector3::zeros(); mesh.vertex_count()];
    let mut edge: HashMap<(usize, usize), Vector3<f64>> = HashMap::new();
    for (t, tri) in tris.iter().enumerate() {
        let n = mesh.face_normal(t);
        let pts = mesh.triangle_points(t);
        for k in 0..3 {
            let (u, v, w) = (pts[k], pts[(k + 1) % 3], pts[(k + 2) % 3]);
            vertex[tri[k]] += n * (v - u).angle(&(w - u));
            let (i, j) = (tri[k], tri[(k + 1) % 3]);
            *edge.entry((i.min(j), i.max(j))).or_insert_with(Vector3::zeros) += n;
        }
    }
    tris.iter()
        .enumerate()
        .map(|(t, &[a, b, c])| {
            let e = |i: usize, j: usize| edge[&(i.min(j), i.max(j))];
            [
                mesh.face_normal(t),
                e(a, b),
                e(b, c),
                e(c, a),
                vertex[a],
                vertex[b],
                vertex[c],
            ]
        })
        .collect()
}
