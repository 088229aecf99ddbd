//! Triangle meshes: file loading, validation, and procedural test surfaces.
//!
//! File support is deliberately narrow — ASCII PLY and OBJ with triangular
//! faces only. The procedural generators stand in for patient anatomy at
//! desk scale: a sphere, a cratered "cavity" surface, and a bumpy blob.

use nalgebra::Vector3;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("i/o error reading mesh: {0}")]
    Io(#[from] std::io::Error),
    #[error("mesh parse error: {0}")]
    Parse(String),
    #[error("mesh validation error: {0}")]
    Validation(String),
}

/// A triangle surface `M = (V, F)`: vertex positions in millimetres and
/// triangular face indices.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub faces: Vec<[u32; 3]>,
}

impl TriMesh {
    /// Build a mesh, enforcing the structural invariants: at least three
    /// vertices, all face indices in range, no degenerate faces.
    pub fn new(vertices: Vec<Vector3<f64>>, faces: Vec<[u32; 3]>) -> Result<Self, MeshError> {
        if vertices.len() < 3 {
            return Err(MeshError::Validation(format!(
                "need at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        let n = vertices.len() as u32;
        for (i, f) in faces.iter().enumerate() {
            if f.iter().any(|&idx| idx >= n) {
                return Err(MeshError::Validation(format!(
                    "face {i} references vertex out of range (n = {n})"
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(MeshError::Validation(format!(
                    "face {i} has repeated vertex indices"
                )));
            }
        }
        if vertices.iter().any(|v| !(v.x.is_finite() && v.y.is_finite() && v.z.is_finite())) {
            return Err(MeshError::Validation("non-finite vertex position".into()));
        }
        Ok(Self { vertices, faces })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    /// Arithmetic mean of the vertex positions.
    pub fn centroid(&self) -> Vector3<f64> {
        let sum: Vector3<f64> = self.vertices.iter().sum();
        sum / self.vertices.len() as f64
    }

    /// Largest vertex distance from the centroid, used for auto-framing.
    pub fn bounding_radius(&self) -> f64 {
        let c = self.centroid();
        self.vertices
            .iter()
            .map(|v| (v - c).norm())
            .fold(0.0, f64::max)
    }
}

/// Free-function alias matching the pipeline vocabulary.
pub fn mesh_centroid(mesh: &TriMesh) -> Vector3<f64> {
    mesh.centroid()
}

/// Load a mesh from an ASCII PLY or OBJ file, by extension.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriMesh, MeshError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .as_deref()
    {
        Some("ply") => parse_ply(&text),
        Some("obj") => parse_obj(&text),
        other => Err(MeshError::Parse(format!(
            "unsupported mesh extension {other:?} (expected .ply or .obj)"
        ))),
    }
}

fn parse_floats(line: &str, n: usize) -> Result<Vec<f64>, MeshError> {
    let vals: Vec<f64> = line
        .split_whitespace()
        .take(n)
        .map(|t| t.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| MeshError::Parse(format!("bad number in {line:?}: {e}")))?;
    if vals.len() < n {
        return Err(MeshError::Parse(format!(
            "expected {n} numbers, got {} in {line:?}",
            vals.len()
        )));
    }
    Ok(vals)
}

fn parse_ply(text: &str) -> Result<TriMesh, MeshError> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(MeshError::Parse("missing 'ply' magic".into()));
    }

    let mut vertex_count: Option<usize> = None;
    let mut face_count: Option<usize> = None;
    let mut in_header = true;
    // Track which element's properties we are reading so extra elements fail
    // loudly rather than silently skewing counts.
    let mut current_element = String::new();
    for line in lines.by_ref() {
        let line = line.trim();
        if line.is_empty() || line.starts_with("comment") {
            continue;
        }
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => {
                if tok.next() != Some("ascii") {
                    return Err(MeshError::Parse("only ascii PLY is supported".into()));
                }
            }
            Some("element") => {
                let name = tok.next().unwrap_or_default();
                let count: usize = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| MeshError::Parse("bad element count".into()))?;
                current_element = name.to_string();
                match name {
                    "vertex" => vertex_count = Some(count),
                    "face" => face_count = Some(count),
                    other => {
                        return Err(MeshError::Parse(format!("unsupported element '{other}'")))
                    }
                }
            }
            Some("property") => {
                if current_element == "face" && !line.contains("list") {
                    return Err(MeshError::Parse("face element must be an index list".into()));
                }
            }
            Some("end_header") => {
                in_header = false;
                break;
            }
            other => return Err(MeshError::Parse(format!("unexpected header token {other:?}"))),
        }
    }
    if in_header {
        return Err(MeshError::Parse("header not terminated".into()));
    }
    let nv = vertex_count.ok_or_else(|| MeshError::Parse("no vertex element".into()))?;
    let nf = face_count.ok_or_else(|| MeshError::Parse("no face element".into()))?;

    let mut body = lines.filter(|l| !l.trim().is_empty());
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let line = body
            .next()
            .ok_or_else(|| MeshError::Parse("truncated vertex data".into()))?;
        let v = parse_floats(line, 3)?;
        vertices.push(Vector3::new(v[0], v[1], v[2]));
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let line = body
            .next()
            .ok_or_else(|| MeshError::Parse("truncated face data".into()))?;
        let idx: Vec<u64> = line
            .split_whitespace()
            .map(|t| t.parse::<u64>())
            .collect::<Result<_, _>>()
            .map_err(|e| MeshError::Parse(format!("bad face index in {line:?}: {e}")))?;
        if idx.first() != Some(&3) || idx.len() != 4 {
            return Err(MeshError::Parse(format!(
                "only triangular faces are supported, got {line:?}"
            )));
        }
        faces.push([idx[1] as u32, idx[2] as u32, idx[3] as u32]);
    }
    TriMesh::new(vertices, faces)
}

fn parse_obj(text: &str) -> Result<TriMesh, MeshError> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let rest: Vec<&str> = tok.collect();
                let v = parse_floats(&rest.join(" "), 3)?;
                vertices.push(Vector3::new(v[0], v[1], v[2]));
            }
            Some("f") => {
                let idx: Vec<u32> = tok
                    .map(|t| {
                        // "f v", "f v/vt", "f v/vt/vn" all start with the
                        // vertex index.
                        let first = t.split('/').next().unwrap_or(t);
                        first
                            .parse::<i64>()
                            .map_err(|e| MeshError::Parse(format!("bad face index {t:?}: {e}")))
                            .and_then(|i| {
                                if i >= 1 {
                                    Ok((i - 1) as u32)
                                } else {
                                    Err(MeshError::Parse(format!(
                                        "negative/zero OBJ indices unsupported: {i}"
                                    )))
                                }
                            })
                    })
                    .collect::<Result<_, _>>()?;
                if idx.len() != 3 {
                    return Err(MeshError::Parse(format!(
                        "only triangular faces are supported, got {} indices",
                        idx.len()
                    )));
                }
                faces.push([idx[0], idx[1], idx[2]]);
            }
            // Ignore normals, texcoords, groups, materials, comments.
            _ => {}
        }
    }
    TriMesh::new(vertices, faces)
}

/// Unit icosahedron vertices (golden-ratio construction), later scaled.
fn icosahedron() -> (Vec<Vector3<f64>>, Vec<[u32; 3]>) {
    let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let verts = vec![
        Vector3::new(-1.0, phi, 0.0),
        Vector3::new(1.0, phi, 0.0),
        Vector3::new(-1.0, -phi, 0.0),
        Vector3::new(1.0, -phi, 0.0),
        Vector3::new(0.0, -1.0, phi),
        Vector3::new(0.0, 1.0, phi),
        Vector3::new(0.0, -1.0, -phi),
        Vector3::new(0.0, 1.0, -phi),
        Vector3::new(phi, 0.0, -1.0),
        Vector3::new(phi, 0.0, 1.0),
        Vector3::new(-phi, 0.0, -1.0),
        Vector3::new(-phi, 0.0, 1.0),
    ];
    let faces = vec![
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
    (verts, faces)
}

/// Unit sphere as a subdivided icosahedron: `10·4^level + 2` vertices and
/// `20·4^level` faces, scaled to `radius_mm`.
pub fn icosphere(level: u32, radius_mm: f64) -> TriMesh {
    let (mut verts, mut faces) = icosahedron();
    for v in &mut verts {
        v.normalize_mut();
    }
    for _ in 0..level {
        let mut midpoint_cache: std::collections::HashMap<(u32, u32), u32> =
            std::collections::HashMap::new();
        let mut next_faces = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mids = [0u32; 3];
            for e in 0..3 {
                let (a, b) = (f[e], f[(e + 1) % 3]);
                let key = (a.min(b), a.max(b));
                mids[e] = *midpoint_cache.entry(key).or_insert_with(|| {
                    let m = ((verts[a as usize] + verts[b as usize]) / 2.0).normalize();
                    verts.push(m);
                    (verts.len() - 1) as u32
                });
            }
            next_faces.push([f[0], mids[0], mids[2]]);
            next_faces.push([f[1], mids[1], mids[0]]);
            next_faces.push([f[2], mids[2], mids[1]]);
            next_faces.push([mids[0], mids[1], mids[2]]);
        }
        faces = next_faces;
    }
    for v in &mut verts {
        *v *= radius_mm;
    }
    TriMesh::new(verts, faces).expect("icosphere construction is valid")
}

/// Sphere with a smooth crater dented toward the center around the +z pole;
/// a desk-scale stand-in for a concave surgical cavity.
pub fn cavity_surface(level: u32, radius_mm: f64, crater_depth: f64, crater_angle_rad: f64) -> TriMesh {
    let mut mesh = icosphere(level, radius_mm);
    let axis = Vector3::new(0.0, 0.0, 1.0);
    for v in &mut mesh.vertices {
        let dir = v.normalize();
        let angle = dir.dot(&axis).clamp(-1.0, 1.0).acos();
        if angle < crater_angle_rad {
            // Cosine falloff: full depth at the pole, zero at the rim.
            let w = 0.5 * (1.0 + (std::f64::consts::PI * angle / crater_angle_rad).cos());
            *v -= dir * crater_depth * w;
        }
    }
    mesh
}

/// Bumpy blob: radial displacement by low-order spherical harmonics with
/// seeded amplitudes. Distinct enough from the sphere/cavity to act as a
/// third "patient".
pub fn blob_surface(level: u32, radius_mm: f64, seed: u64) -> TriMesh {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let amps: Vec<f64> = (0..6).map(|_| rng.random_range(-0.18..0.18)).collect();
    let mut mesh = icosphere(level, radius_mm);
    for v in &mut mesh.vertices {
        let d = v.normalize();
        let (x, y, z) = (d.x, d.y, d.z);
        let bump = amps[0] * (3.0 * x).sin() * (2.0 * y).cos()
            + amps[1] * (4.0 * y).sin() * z
            + amps[2] * (2.0 * z).sin() * (3.0 * x).cos()
            + amps[3] * x * y * 2.0
            + amps[4] * (5.0 * (x + y)).sin() * 0.5
            + amps[5] * (z * z - 0.33);
        *v *= 1.0 + bump;
    }
    mesh
}

/// Resolve a `builtin:` mesh name used by the CLI: `sphere`, `cavity`,
/// or `blob`.
pub fn builtin_mesh(name: &str, radius_mm: f64) -> Result<TriMesh, MeshError> {
    match name {
        "sphere" => Ok(icosphere(3, radius_mm)),
        "cavity" => Ok(cavity_surface(3, radius_mm, 0.55 * radius_mm, 0.9)),
        "blob" => Ok(blob_surface(3, radius_mm, 977)),
        other => Err(MeshError::Parse(format!(
            "unknown builtin mesh '{other}' (expected sphere | cavity | blob)"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const ONE_TRIANGLE_PLY: &str = "ply\nformat ascii 1.0\nelement vertex 3\n\
        property float x\nproperty float y\nproperty float z\n\
        element face 1\nproperty list uchar int vertex_indices\nend_header\n\
        0 0 0\n3 0 0\n0 3 0\n3 0 1 2\n";

    #[test]
    fn ply_single_triangle() {
        let mesh = parse_ply(ONE_TRIANGLE_PLY).unwrap();
        assert_eq!(mesh.vertex_count(), 3);
        assert_eq!(mesh.face_count(), 1);
    }

    #[test]
    fn ply_out_of_range_index_rejected() {
        let text = ONE_TRIANGLE_PLY.replace("3 0 1 2", "3 0 1 3");
        let err = parse_ply(&text).unwrap_err();
        assert!(matches!(err, MeshError::Validation(_)), "{err}");
    }

    #[test]
    fn ply_quad_face_rejected() {
        let text = ONE_TRIANGLE_PLY
            .replace("element vertex 3", "element vertex 4")
            .replace("0 3 0\n", "0 3 0\n1 1 1\n")
            .replace("3 0 1 2", "4 0 1 2 3");
        let err = parse_ply(&text).unwrap_err();
        assert!(matches!(err, MeshError::Parse(_)), "{err}");
    }

    #[test]
    fn obj_round_trip_of_triangle() {
        let obj = "# comment\nv 0 0 0\nv 3 0 0\nv 0 3 0\nf 1 2 3\n";
        let mesh = parse_obj(obj).unwrap();
        assert_eq!(mesh.vertex_count(), 3);
        assert_eq!(mesh.faces[0], [0, 1, 2]);
        // Slash-form indices pick the vertex component.
        let obj2 = "v 0 0 0\nv 3 0 0\nv 0 3 0\nf 1/1 2/2 3/3\n";
        assert_eq!(parse_obj(obj2).unwrap().faces[0], [0, 1, 2]);
    }

    #[test]
    fn load_mesh_by_extension() {
        let dir = tempfile::tempdir().unwrap();
        let ply = dir.path().join("tri.ply");
        std::fs::write(&ply, ONE_TRIANGLE_PLY).unwrap();
        assert_eq!(load_mesh(&ply).unwrap().face_count(), 1);

        let missing = dir.path().join("nope.ply");
        assert!(matches!(load_mesh(&missing).unwrap_err(), MeshError::Io(_)));
    }

    #[test]
    fn icosphere_level3_counts() {
        // Euler-consistent subdivision counts: V = 10·4^L + 2, F = 20·4^L.
        let mesh = icosphere(3, 1.0);
        assert_eq!(mesh.vertex_count(), 642);
        assert_eq!(mesh.face_count(), 1280);
        for level in 0..3 {
            let m = icosphere(level, 1.0);
            assert_eq!(m.vertex_count(), 10 * 4usize.pow(level) + 2);
            assert_eq!(m.face_count(), 20 * 4usize.pow(level));
        }
        // All vertices on the sphere.
        for v in &mesh.vertices {
            assert_relative_eq!(v.norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn centroid_cases() {
        let cube: Vec<Vector3<f64>> = (0..8)
            .map(|i| {
                Vector3::new(
                    f64::from(i & 1),
                    f64::from((i >> 1) & 1),
                    f64::from((i >> 2) & 1),
                )
            })
            .collect();
        let mesh = TriMesh::new(cube, vec![[0, 1, 2]]).unwrap();
        assert_eq!(mesh.centroid(), Vector3::new(0.5, 0.5, 0.5));

        let tri = TriMesh::new(
            vec![
                Vector3::zeros(),
                Vector3::new(3.0, 0.0, 0.0),
                Vector3::new(0.0, 3.0, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert_eq!(tri.centroid(), Vector3::new(1.0, 1.0, 0.0));

        // Translation linearity.
        let offset = Vector3::new(5.0, -2.0, 9.0);
        let moved = TriMesh::new(
            tri.vertices.iter().map(|v| v + offset).collect(),
            tri.faces.clone(),
        )
        .unwrap();
        assert_eq!(moved.centroid(), tri.centroid() + offset);
    }

    #[test]
    fn degenerate_face_rejected() {
        let verts = vec![
            Vector3::zeros(),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
        ];
        assert!(TriMesh::new(verts, vec![[0, 0, 1]]).is_err());
    }

    #[test]
    fn builtin_meshes_distinct() {
        let s = builtin_mesh("sphere", 25.0).unwrap();
        let c = builtin_mesh("cavity", 25.0).unwrap();
        let b = builtin_mesh("blob", 25.0).unwrap();
        assert_ne!(s.vertices, c.vertices);
        assert_ne!(s.vertices, b.vertices);
        assert_ne!(c.vertices, b.vertices);
        assert!(builtin_mesh("teapot", 25.0).is_err());
    }
}
