//! Closed primitive meshes: icospheres, surfaces of revolution, tori and box unions.

use std::collections::HashMap;

use crate::mesh::{box_mesh, TriangleMesh};
use crate::scalar::Real;

/// Unit-radius icosphere after `subdivisions` rounds of 4-way splitting.
/// Has `10·4^s + 2` vertices and `20·4^s` faces.
pub fn icosphere<T: Real>(subdivisions: u32) -> TriangleMesh<T> {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<[f64; 3]> = vec![
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
    ];
    for v in &mut verts {
        *v = unit(*v);
    }
    let mut faces: Vec<[u32; 3]> = vec![
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
        let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
        let mut midpoint = |a: u32, b: u32, verts: &mut Vec<[f64; 3]>| -> u32 {
            let key = (a.min(b), a.max(b));
            *mid.entry(key).or_insert_with(|| {
                let (pa, pb) = (verts[a as usize], verts[b as usize]);
                verts.push(unit([0, 1, 2].map(|i| (pa[i] + pb[i]) / 2.0)));
                (verts.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    TriangleMesh {
        vertices: verts.into_iter().map(|v| v.map(T::of)).collect(),
        faces,
        label: None,
    }
}

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    v.map(|c| c / n)
}

/// Closed surface swept by rotating a `(radius, height)` profile about the y axis.
///
/// The profile must start and end on the axis (radius 0); interior points must
/// have positive radius.
pub fn revolve<T: Real>(profile: &[(f64, f64)], segments: usize) -> TriangleMesh<T> {
    assert!(profile.len() >= 3 && segments >= 3);
    let (first, last) = (profile[0], profile[profile.len() - 1]);
    assert!(first.0 == 0.0 && last.0 == 0.0, "profile must start and end on the axis");
    let rings = &profile[1..profile.len() - 1];
    let mut vertices = vec![[0.0, first.1, 0.0]];
    for &(r, y) in rings {
        for s in 0..segments {
            let a = std::f64::consts::TAU * s as f64 / segments as f64;
            vertices.push([r * a.cos(), y, r * a.sin()]);
        }
    }
    let top = vertices.len() as u32;
    vertices.push([0.0, last.1, 0.0]);
    let seg = segments as u32;
    let ring = |k: usize, s: u32| 1 + k as u32 * seg + s % seg;
    let mut faces = Vec::new();
    for s in 0..seg {
        faces.push([0, ring(0, s + 1), ring(0, s)]);
    }
    for k in 0..rings.len() - 1 {
        for s in 0..seg {
            let (a, b, c, d) = (ring(k, s), ring(k, s + 1), ring(k + 1, s + 1), ring(k + 1, s));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    let k = rings.len() - 1;
    for s in 0..seg {
        faces.push([top, ring(k, s), ring(k, s + 1)]);
    }
    TriangleMesh {
        vertices: vertices.into_iter().map(|v| v.map(T::of)).collect(),
        faces,
        label: None,
    }
}

/// Torus around the y axis with the given ring and tube radii.
pub fn torus<T: Real>(ring: f64, tube: f64, ring_segments: usize, tube_segments: usize) -> TriangleMesh<T> {
    let mut vertices = Vec::with_capacity(ring_segments * tube_segments);
    for i in 0..ring_segments {
        let u = std::f64::consts::TAU * i as f64 / ring_segments as f64;
        for j in 0..tube_segments {
            let v = std::f64::consts::TAU * j as f64 / tube_segments as f64;
            let r = ring + tube * v.cos();
            vertices.push([r * u.cos(), tube * v.sin(), r * u.sin()].map(T::of));
        }
    }
    let idx = |i: usize, j: usize| ((i % ring_segments) * tube_segments + j % tube_segments) as u32;
    let mut faces = Vec::with_capacity(2 * ring_segments * tube_segments);
    for i in 0..ring_segments {
        for j in 0..tube_segments {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    TriangleMesh {
        vertices,
        faces,
        label: None,
    }
}

/// Concatenates meshes into one (components are kept as separate shells).
pub fn merge<T: Real>(parts: &[TriangleMesh<T>]) -> TriangleMesh<T> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for p in parts {
        let base = vertices.len() as u32;
        vertices.extend_from_slice(&p.vertices);
        faces.extend(p.faces.iter().map(|f| f.map(|i| i + base)));
    }
    TriangleMesh {
        vertices,
        faces,
        label: None,
    }
}

/// Union of axis-aligned boxes given as `(min, max)` corners. Boxes may only
/// touch along faces perpendicular to y, never overlap.
pub fn box_union<T: Real>(boxes: &[([f64; 3], [f64; 3])]) -> TriangleMesh<T> {
    let parts: Vec<TriangleMesh<T>> = boxes
        .iter()
        .map(|(lo, hi)| box_mesh(lo.map(T::of), hi.map(T::of)))
        .collect();
    merge(&parts)
}

/// Rotates every vertex about the y axis by `angle` radians.
pub fn rotate_y<T: Real>(mesh: &TriangleMesh<T>, angle: f64) -> TriangleMesh<T> {
    let (s, c) = angle.sin_cos();
    let (s, c) = (T::of(s), T::of(c));
    let mut out = mesh.clone();
    for v in &mut out.vertices {
        let (x, z) = (v[0], v[2]);
        v[0] = x * c + z * s;
        v[2] = z * c - x * s;
    }
    out
}

/// Scales each axis independently.
pub fn scale_axes<T: Real>(mesh: &TriangleMesh<T>, s: [f64; 3]) -> TriangleMesh<T> {
    let mut out = mesh.clone();
    for v in &mut out.vertices {
        for a in 0..3 {
            v[a] *= T::of(s[a]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_counts() {
        for s in 0..4 {
            let m: TriangleMesh<f64> = icosphere(s);
            assert_eq!(m.vertices.len(), 10 * 4usize.pow(s) + 2);
            assert_eq!(m.faces.len(), 20 * 4usize.pow(s));
            for v in &m.vertices {
                let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                assert!((n - 1.0).abs() < 1e-12);
            }
        }
    }

    /// Every undirected edge of a closed 2-manifold is shared by exactly two faces.
    fn closed(m: &TriangleMesh<f64>) -> bool {
        let mut edges: HashMap<(u32, u32), usize> = HashMap::new();
        for f in &m.faces {
            for e in 0..3 {
                let (a, b) = (f[e], f[(e + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        edges.values().all(|&c| c == 2)
    }

    #[test]
    fn primitives_are_closed() {
        assert!(closed(&icosphere(2)));
        assert!(closed(&revolve(&[(0.0, 0.0), (1.0, 0.0), (1.0, 2.0), (0.0, 2.0)], 12)));
        assert!(closed(&torus(1.0, 0.3, 16, 8)));
        assert!(closed(&box_union(&[([0.0; 3], [1.0; 3]), ([2.0; 3], [3.0; 3])])));
    }
}
