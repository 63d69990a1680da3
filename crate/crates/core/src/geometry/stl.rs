//! STL reading and writing, with vertex welding and winding repair on load.
//!
//! Both flavours are accepted on input. A file is treated as binary when its
//! length matches `84 + 50·n` for the facet count `n` stored in the header,
//! even if the header happens to start with `solid`.

use std::collections::{HashMap, VecDeque};
use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::Point3;

use super::mesh::{triangle_area, TriMesh, MIN_TRIANGLE_AREA};
use crate::error::{Error, Result};

/// Distance (mm) under which raw facet corners are merged into one vertex.
pub const WELD_TOLERANCE: f64 = 1e-6;

pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_stl(&bytes)
}

pub fn parse_stl(bytes: &[u8]) -> Result<TriMesh> {
    let facets = if is_binary(bytes) {
        parse_binary(bytes)?
    } else {
        parse_ascii(bytes)?
    };
    mesh_from_facets(&facets)
}

/// Welds raw facets, drops collapsed ones and repairs winding.
pub fn mesh_from_facets(facets: &[[Point3<f64>; 3]]) -> Result<TriMesh> {
    if facets.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let (vertices, triangles) = weld(facets, WELD_TOLERANCE);
    let triangles: Vec<[usize; 3]> = triangles
        .into_iter()
        .filter(|&[a, b, c]| {
            a != b
                && b != c
                && c != a
                && triangle_area(&vertices[a], &vertices[b], &vertices[c]) > MIN_TRIANGLE_AREA
        })
        .collect();
    if triangles.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let triangles = orient_consistently(&vertices, triangles)?;
    // compact away vertices only referenced by dropped facets
    let mut remap = vec![usize::MAX; vertices.len()];
    let mut kept = Vec::new();
    let triangles = triangles
        .into_iter()
        .map(|tri| {
            tri.map(|i| {
                if remap[i] == usize::MAX {
                    remap[i] = kept.len();
                    kept.push(vertices[i]);
                }
                remap[i]
            })
        })
        .collect();
    TriMesh::new(kept, triangles)
}

fn is_binary(bytes: &[u8]) -> bool {
    if bytes.len() < 84 {
        return false;
    }
    let n = u32::from_le_bytes([bytes[80], bytes[81], bytes[82], bytes[83]]) as usize;
    let expected = n.checked_mul(50).and_then(|b| b.checked_add(84));
    if expected == Some(bytes.len()) {
        return true;
    }
    !bytes.trim_ascii_start().starts_with(b"solid")
}

fn parse_binary(bytes: &[u8]) -> Result<Vec<[Point3<f64>; 3]>> {
    let n = u32::from_le_bytes([bytes[80], bytes[81], bytes[82], bytes[83]]) as usize;
    if bytes.len() < 84 + 50 * n {
        return Err(Error::MalformedStl(format!(
            "binary header announces {n} facets but only {} bytes follow",
            bytes.len() - 84
        )));
    }
    let read_f32 = |off: usize| f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as f64;
    let mut facets = Vec::with_capacity(n);
    for f in 0..n {
        let base = 84 + 50 * f + 12; // skip the stored normal
        let mut tri = [Point3::origin(); 3];
        for (k, p) in tri.iter_mut().enumerate() {
            let o = base + 12 * k;
            *p = Point3::new(read_f32(o), read_f32(o + 4), read_f32(o + 8));
        }
        check_finite(&tri, f)?;
        facets.push(tri);
    }
    Ok(facets)
}

fn parse_ascii(bytes: &[u8]) -> Result<Vec<[Point3<f64>; 3]>> {
    let text = std::str::from_utf8(bytes)
        .map_err(|_| Error::MalformedStl("text STL is not valid UTF-8".into()))?;
    let mut tokens = text.split_ascii_whitespace().peekable();
    if tokens.next() != Some("solid") {
        return Err(Error::MalformedStl("missing `solid` keyword".into()));
    }
    let mut facets = Vec::new();
    let mut corners = Vec::with_capacity(3);
    let mut saw_end = false;
    while let Some(tok) = tokens.next() {
        match tok {
            "vertex" => {
                let mut p = [0.0; 3];
                for c in &mut p {
                    let t = tokens
                        .next()
                        .ok_or_else(|| Error::MalformedStl("truncated vertex".into()))?;
                    *c = t
                        .parse()
                        .map_err(|_| Error::MalformedStl(format!("bad coordinate `{t}`")))?;
                }
                corners.push(Point3::from(p));
            }
            "endfacet" => {
                let tri: [Point3<f64>; 3] = corners.as_slice().try_into().map_err(|_| {
                    Error::MalformedStl(format!(
                        "facet {} has {} vertices",
                        facets.len(),
                        corners.len()
                    ))
                })?;
                check_finite(&tri, facets.len())?;
                facets.push(tri);
                corners.clear();
            }
            "endsolid" => {
                saw_end = true;
                break;
            }
            _ => {}
        }
    }
    if !saw_end {
        return Err(Error::MalformedStl("missing `endsolid`".into()));
    }
    if !corners.is_empty() {
        return Err(Error::MalformedStl("unterminated facet".into()));
    }
    Ok(facets)
}

fn check_finite(tri: &[Point3<f64>; 3], facet: usize) -> Result<()> {
    if tri.iter().all(|p| p.coords.iter().all(|c| c.is_finite())) {
        Ok(())
    } else {
        Err(Error::MalformedStl(format!("facet {facet} has a non-finite coordinate")))
    }
}

/// Merges corners closer than `tol`; the first occurrence of a position
/// becomes the representative vertex, so the output order is deterministic.
pub fn weld(facets: &[[Point3<f64>; 3]], tol: f64) -> (Vec<Point3<f64>>, Vec<[usize; 3]>) {
    let cell = |p: &Point3<f64>| p.coords.map(|c| (c / tol).floor() as i64);
    let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    let mut vertices: Vec<Point3<f64>> = Vec::new();
    let tol2 = tol * tol;
    let triangles = facets
        .iter()
        .map(|tri| {
            tri.map(|p| {
                let c = cell(&p);
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        for dz in -1..=1 {
                            if let Some(bucket) = grid.get(&[c.x + dx, c.y + dy, c.z + dz]) {
                                if let Some(&i) =
                                    bucket.iter().find(|&&i| (vertices[i] - p).norm_squared() <= tol2)
                                {
                                    return i;
                                }
                            }
                        }
                    }
                }
                vertices.push(p);
                grid.entry([c.x, c.y, c.z]).or_default().push(vertices.len() - 1);
                vertices.len() - 1
            })
        })
        .collect();
    (vertices, triangles)
}

/// Makes every edge-connected patch consistently wound.
///
/// A breadth-first flood fill propagates orientation across shared edges;
/// each patch then keeps whichever orientation the majority of its facets
/// already had. Closed patches with negative enclosed volume are flipped so
/// that counterclockwise faces point outward. Non-orientable input is an error.
pub fn orient_consistently(
    vertices: &[Point3<f64>],
    mut triangles: Vec<[usize; 3]>,
) -> Result<Vec<[usize; 3]>> {
    let mut edge_faces: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (t, &[a, b, c]) in triangles.iter().enumerate() {
        for (u, v) in [(a, b), (b, c), (c, a)] {
            edge_faces.entry((u.min(v), u.max(v))).or_default().push(t);
        }
    }
    let has_directed = |tri: &[usize; 3], u: usize, v: usize| {
        (0..3).any(|k| tri[k] == u && tri[(k + 1) % 3] == v)
    };

    let n = triangles.len();
    let mut flip: Vec<Option<bool>> = vec![None; n];
    for seed in 0..n {
        if flip[seed].is_some() {
            continue;
        }
        flip[seed] = Some(false);
        let mut patch = vec![seed];
        let mut queue = VecDeque::from([seed]);
        while let Some(t) = queue.pop_front() {
            let ft = flip[t].unwrap();
            let tri = triangles[t];
            for k in 0..3 {
                let (u, v) = (tri[k], tri[(k + 1) % 3]);
                for &o in &edge_faces[&(u.min(v), u.max(v))] {
                    if o == t {
                        continue;
                    }
                    // consistent neighbours traverse the shared edge in opposite directions
                    let same_dir = has_directed(&triangles[o], u, v);
                    let want = ft ^ same_dir;
                    match flip[o] {
                        None => {
                            flip[o] = Some(want);
                            patch.push(o);
                            queue.push_back(o);
                        }
                        Some(f) if f != want => {
                            return Err(Error::InvalidMesh(format!(
                                "surface is not orientable near facets {t} and {o}"
                            )))
                        }
                        Some(_) => {}
                    }
                }
            }
        }

        let flipped = patch.iter().filter(|&&t| flip[t] == Some(true)).count();
        let invert = 2 * flipped > patch.len();
        for &t in &patch {
            if flip[t].unwrap() ^ invert {
                triangles[t].swap(1, 2);
            }
        }

        let closed = patch.iter().all(|&t| {
            let tri = triangles[t];
            (0..3).all(|k| {
                let (u, v) = (tri[k], tri[(k + 1) % 3]);
                edge_faces[&(u.min(v), u.max(v))].len() == 2
            })
        });
        if closed {
            let volume: f64 = patch
                .iter()
                .map(|&t| {
                    let [a, b, c] = triangles[t].map(|i| vertices[i].coords);
                    a.dot(&b.cross(&c))
                })
                .sum();
            if volume < 0.0 {
                for &t in &patch {
                    triangles[t].swap(1, 2);
                }
            }
        }
    }
    Ok(triangles)
}

/// Writes text STL with shortest round-trip decimal coordinates, so a
/// save/load cycle reproduces positions bit for bit.
pub fn save_mesh(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    write_ascii(mesh, &mut out).expect("writing to memory");
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_ascii(mesh: &TriMesh, w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "solid silmorph")?;
    for t in 0..mesh.triangle_count() {
        let n = mesh.face_normal(t);
        writeln!(w, "  facet normal {} {} {}", n.x, n.y, n.z)?;
        writeln!(w, "    outer loop")?;
        for p in mesh.triangle_points(t) {
            writeln!(w, "      vertex {} {} {}", p.x, p.y, p.z)?;
        }
        writeln!(w, "    endloop")?;
        writeln!(w, "  endfacet")?;
    }
    writeln!(w, "endsolid silmorph")
}

/// Binary STL (little-endian, 50-byte facet records, single precision).
pub fn save_mesh_binary(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(84 + 50 * mesh.triangle_count());
    let mut header = [0u8; 80];
    header[..14].copy_from_slice(b"silmorph model");
    out.extend_from_slice(&header);
    out.extend_from_slice(&(mesh.triangle_count() as u32).to_le_bytes());
    for t in 0..mesh.triangle_count() {
        let n = mesh.face_normal(t);
        for c in n.iter() {
            out.extend_from_slice(&(*c as f32).to_le_bytes());
        }
        for p in mesh.triangle_points(t) {
            for c in p.coords.iter() {
                out.extend_from_slice(&(*c as f32).to_le_bytes());
            }
        }
        out.extend_from_slice(&0u16.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
