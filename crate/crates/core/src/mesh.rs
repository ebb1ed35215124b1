//! Triangle meshes: OFF loading, writing and unit-volume normalization.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Triangle soup with shared vertices. Indices always address `vertices`.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh<T: Real> {
    pub vertices: Vec<[T; 3]>,
    pub faces: Vec<[u32; 3]>,
    pub label: Option<String>,
}

impl<T: Real> TriangleMesh<T> {
    /// Builds a mesh, checking that every face index addresses a vertex.
    pub fn new(vertices: Vec<[T; 3]>, faces: Vec<[u32; 3]>) -> Result<Self> {
        let n = vertices.len();
        if let Some(bad) = faces.iter().flatten().find(|&&i| i as usize >= n) {
            return Err(Error::DegenerateMesh(format!(
                "face index {bad} out of range for {n} vertices"
            )));
        }
        Ok(Self {
            vertices,
            faces,
            label: None,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn triangle(&self, f: usize) -> [[T; 3]; 3] {
        let [a, b, c] = self.faces[f];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    /// Axis-aligned bounding box `(min, max)`, or `None` for a mesh without vertices.
    pub fn bounds(&self) -> Option<([T; 3], [T; 3])> {
        let first = *self.vertices.first()?;
        let mut lo = first;
        let mut hi = first;
        for v in &self.vertices {
            for a in 0..3 {
                lo[a] = lo[a].min(v[a]);
                hi[a] = hi[a].max(v[a]);
            }
        }
        Some((lo, hi))
    }

    /// Bounding-box extents along x, y, z.
    pub fn extents(&self) -> [T; 3] {
        match self.bounds() {
            Some((lo, hi)) => [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]],
            None => [T::zero(); 3],
        }
    }

    /// Applies a uniform scale followed by a translation to every vertex.
    pub fn transformed(&self, scale: T, offset: [T; 3]) -> Self {
        let vertices = self
            .vertices
            .iter()
            .map(|v| {
                [
                    v[0] * scale + offset[0],
                    v[1] * scale + offset[1],
                    v[2] * scale + offset[2],
                ]
            })
            .collect();
        Self {
            vertices,
            faces: self.faces.clone(),
            label: self.label.clone(),
        }
    }

    /// Converts the vertex scalar type.
    pub fn cast<U: Real>(&self) -> TriangleMesh<U> {
        TriangleMesh {
            vertices: self
                .vertices
                .iter()
                .map(|v| v.map(|c| U::of(c.to_f64_lossy())))
                .collect(),
            faces: self.faces.clone(),
            label: self.label.clone(),
        }
    }
}

/// Centers the bounding box at the origin and scales uniformly so the longest
/// axis has extent 1.
///
/// A mesh that is already normalized up to a few ulps is returned unchanged,
/// which makes the operation idempotent bit-for-bit.
pub fn normalize<T: Real>(mesh: &TriangleMesh<T>) -> Result<TriangleMesh<T>> {
    if mesh.faces.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let (lo, hi) = mesh
        .bounds()
        .ok_or_else(|| Error::DegenerateMesh("no vertices".into()))?;
    let two = T::of(2.0);
    let center = [0, 1, 2].map(|a| (lo[a] + hi[a]) / two);
    let extent = (0..3).map(|a| hi[a] - lo[a]).fold(T::zero(), T::max);
    if !extent.is_finite() || extent <= T::zero() {
        return Err(Error::DegenerateMesh("zero extent on all axes".into()));
    }
    let tol = T::epsilon() * T::of(8.0);
    let centered = center.iter().all(|c| c.abs() <= tol);
    if centered && (extent - T::one()).abs() <= tol {
        return Ok(mesh.clone());
    }
    let scale = T::one() / extent;
    let vertices = mesh
        .vertices
        .iter()
        .map(|v| [0, 1, 2].map(|a| (v[a] - center[a]) * scale))
        .collect();
    Ok(TriangleMesh {
        vertices,
        faces: mesh.faces.clone(),
        label: mesh.label.clone(),
    })
}

/// Reads an ASCII OFF file, fan-triangulating polygons with more than three vertices.
pub fn load_off<T: Real>(path: impl AsRef<Path>) -> Result<TriangleMesh<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_off(&text)
}

struct Tokens<'a> {
    items: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        let last_line = self.items.last().map(|t| t.0).unwrap_or(1);
        let tok = self.items.get(self.pos).copied().ok_or_else(|| Error::Parse {
            line: last_line,
            msg: format!("unexpected end of file while reading {what}"),
        })?;
        self.pos += 1;
        Ok(tok)
    }

    fn number<N: std::str::FromStr>(&mut self, what: &str) -> Result<N> {
        let (line, tok) = self.next(what)?;
        tok.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("expected {what}, found {tok:?}"),
        })
    }
}

/// Parses OFF text. Accepts the ModelNet variant where the counts follow the
/// `OFF` keyword on the same line (`OFF490 1052 0`).
pub fn parse_off<T: Real>(text: &str) -> Result<TriangleMesh<T>> {
    let mut items = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        items.extend(line.split_whitespace().map(|t| (ln + 1, t)));
    }
    let mut toks = Tokens { items, pos: 0 };

    let (line, head) = toks.next("OFF header")?;
    let rest = head.strip_prefix("OFF").ok_or_else(|| Error::Parse {
        line,
        msg: format!("missing OFF header, found {head:?}"),
    })?;
    let n_vertices: usize = if rest.is_empty() {
        toks.number("vertex count")?
    } else {
        rest.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("malformed header {head:?}"),
        })?
    };
    let n_faces: usize = toks.number("face count")?;
    let _edges: usize = toks.number("edge count")?;

    let mut vertices = Vec::with_capacity(n_vertices);
    for _ in 0..n_vertices {
        let x: f64 = toks.number("vertex coordinate")?;
        let y: f64 = toks.number("vertex coordinate")?;
        let z: f64 = toks.number("vertex coordinate")?;
        vertices.push([T::of(x), T::of(y), T::of(z)]);
    }

    let mut faces = Vec::with_capacity(n_faces);
    for _ in 0..n_faces {
        let (line, _) = toks.items.get(toks.pos).copied().unwrap_or((0, ""));
        let arity: usize = toks.number("face vertex count")?;
        if arity < 3 {
            return Err(Error::Parse {
                line,
                msg: format!("face with {arity} vertices"),
            });
        }
        let mut poly = Vec::with_capacity(arity);
        for _ in 0..arity {
            let idx: u32 = toks.number("face index")?;
            if idx as usize >= n_vertices {
                return Err(Error::Parse {
                    line,
                    msg: format!("face index {idx} exceeds vertex count {n_vertices}"),
                });
            }
            poly.push(idx);
        }
        // Optional per-face colour values trail the indices on some exporters.
        while let Some(&(l, _)) = toks.items.get(toks.pos) {
            if l != line {
                break;
            }
            toks.pos += 1;
        }
        for w in 1..arity - 1 {
            faces.push([poly[0], poly[w], poly[w + 1]]);
        }
    }
    if toks.pos < toks.items.len() {
        let (line, tok) = toks.items[toks.pos];
        return Err(Error::Parse {
            line,
            msg: format!("trailing data {tok:?} after {n_faces} faces"),
        });
    }
    if faces.is_empty() {
        return Err(Error::EmptyMesh);
    }
    TriangleMesh::new(vertices, faces)
}

/// Serializes a mesh as ASCII OFF with full round-trip precision.
pub fn to_off_string<T: Real>(mesh: &TriangleMesh<T>) -> String {
    let mut s = String::with_capacity(32 * (mesh.vertices.len() + mesh.faces.len()) + 32);
    s.push_str("OFF\n");
    s.push_str(&format!("{} {} 0\n", mesh.vertices.len(), mesh.faces.len()));
    for v in &mesh.vertices {
        s.push_str(&format!(
            "{} {} {}\n",
            v[0].to_f64_lossy(),
            v[1].to_f64_lossy(),
            v[2].to_f64_lossy()
        ));
    }
    for f in &mesh.faces {
        s.push_str(&format!("3 {} {} {}\n", f[0], f[1], f[2]));
    }
    s
}

pub fn write_off<T: Real>(mesh: &TriangleMesh<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(to_off_string(mesh).as_bytes())
        .map_err(|e| Error::io(path, e))
}

/// Closed axis-aligned box as 12 outward-facing triangles.
pub fn box_mesh<T: Real>(lo: [T; 3], hi: [T; 3]) -> TriangleMesh<T> {
    let mut vertices = Vec::with_capacity(8);
    for i in 0..8 {
        vertices.push([
            if i & 1 == 0 { lo[0] } else { hi[0] },
            if i & 2 == 0 { lo[1] } else { hi[1] },
            if i & 4 == 0 { lo[2] } else { hi[2] },
        ]);
    }
    let quads: [[u32; 4]; 6] = [
        [0, 2, 3, 1],
        [4, 5, 7, 6],
        [0, 1, 5, 4],
        [2, 6, 7, 3],
        [0, 4, 6, 2],
        [1, 3, 7, 5],
    ];
    let faces = quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect();
    TriangleMesh {
        vertices,
        faces,
        label: None,
    }
}
