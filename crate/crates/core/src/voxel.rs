//! Solid voxelization of closed triangle meshes on the fixed cube [-0.5, 0.5]³.
//!
//! Occupancy is decided per voxel center by ray parity: rays run along +x
//! through every (j, k) column center, crossings are sorted, and a center is
//! inside when an odd number of crossings lie before it.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::scalar::Real;

/// Largest grid (in cells) accepted without an explicit cap.
pub const DEFAULT_MAX_CELLS: usize = 512 * 512 * 512;

pub const MIN_RESOLUTION: usize = 8;

const IVOX_MAGIC: &[u8; 4] = b"IVOX";

/// Integer voxel coordinate `(i, j, k)`.
pub type Voxel = [usize; 3];

/// Dense boolean occupancy over an `R³` grid, stored i-fastest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VoxelGrid {
    resolution: usize,
    occupancy: Vec<bool>,
}

impl VoxelGrid {
    pub fn empty(resolution: usize) -> Self {
        Self {
            resolution,
            occupancy: vec![false; resolution.pow(3)],
        }
    }

    pub fn from_occupancy(resolution: usize, occupancy: Vec<bool>) -> Result<Self> {
        if occupancy.len() != resolution.pow(3) {
            return Err(Error::ShapeMismatch(format!(
                "occupancy has {} cells, expected {}",
                occupancy.len(),
                resolution.pow(3)
            )));
        }
        Ok(Self {
            resolution,
            occupancy,
        })
    }

    /// Grid whose occupancy is given by a predicate on voxel indices.
    pub fn from_fn(resolution: usize, mut f: impl FnMut(Voxel) -> bool) -> Self {
        let mut g = Self::empty(resolution);
        for k in 0..resolution {
            for j in 0..resolution {
                for i in 0..resolution {
                    let idx = g.index([i, j, k]);
                    g.occupancy[idx] = f([i, j, k]);
                }
            }
        }
        g
    }

    #[inline]
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Edge length of one voxel in normalized units.
    pub fn voxel_size(&self) -> f64 {
        1.0 / self.resolution as f64
    }

    #[inline]
    pub fn index(&self, [i, j, k]: Voxel) -> usize {
        i + self.resolution * (j + self.resolution * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> Voxel {
        let r = self.resolution;
        [idx % r, (idx / r) % r, idx / (r * r)]
    }

    #[inline]
    pub fn get(&self, v: Voxel) -> bool {
        self.occupancy[self.index(v)]
    }

    pub fn set(&mut self, v: Voxel, occupied: bool) {
        let idx = self.index(v);
        self.occupancy[idx] = occupied;
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupancy
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    /// Center of a voxel in normalized coordinates.
    pub fn center(&self, [i, j, k]: Voxel) -> [f64; 3] {
        let r = self.resolution as f64;
        [i, j, k].map(|c| (c as f64 + 0.5) / r - 0.5)
    }

    /// Whether the voxel is occupied and has an unoccupied (or out-of-grid) 6-neighbour.
    pub fn is_surface(&self, v: Voxel) -> bool {
        if !self.get(v) {
            return false;
        }
        let last = self.resolution - 1;
        for a in 0..3 {
            if v[a] == 0 || v[a] == last {
                return true;
            }
            let mut lo = v;
            lo[a] -= 1;
            let mut hi = v;
            hi[a] += 1;
            if !self.get(lo) || !self.get(hi) {
                return true;
            }
        }
        false
    }

    /// Per-cell surface flags, same layout as the occupancy.
    pub fn surface_mask(&self) -> Vec<bool> {
        (0..self.occupancy.len())
            .map(|idx| self.occupancy[idx] && self.is_surface(self.coords(idx)))
            .collect()
    }

    /// Writes the `IVOX` dump: magic, `u32` resolution, 8 reserved bytes, then
    /// one bit per cell (i-fastest, least significant bit first).
    pub fn write_ivox(&self, path: impl AsRef<Path>, tag: [u8; 8]) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::with_capacity(16 + self.occupancy.len().div_ceil(8));
        buf.extend_from_slice(IVOX_MAGIC);
        buf.extend_from_slice(&(self.resolution as u32).to_le_bytes());
        buf.extend_from_slice(&tag);
        let mut packed = vec![0u8; self.occupancy.len().div_ceil(8)];
        for (idx, &o) in self.occupancy.iter().enumerate() {
            if o {
                packed[idx / 8] |= 1 << (idx % 8);
            }
        }
        buf.extend_from_slice(&packed);
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    /// Reads an `IVOX` dump, returning the grid and its reserved tag bytes.
    pub fn read_ivox(path: impl AsRef<Path>) -> Result<(Self, [u8; 8])> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        if bytes.len() < 16 || &bytes[..4] != IVOX_MAGIC {
            return Err(Error::corrupt(path, "missing IVOX header"));
        }
        let r = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let mut tag = [0u8; 8];
        tag.copy_from_slice(&bytes[8..16]);
        let cells = r.pow(3);
        if bytes.len() != 16 + cells.div_ceil(8) {
            return Err(Error::corrupt(path, "IVOX payload length mismatch"));
        }
        let payload = &bytes[16..];
        let occupancy = (0..cells)
            .map(|idx| payload[idx / 8] & (1 << (idx % 8)) != 0)
            .collect();
        Ok((
            Self {
                resolution: r,
                occupancy,
            },
            tag,
        ))
    }
}

/// Occupied voxels with at least one unoccupied 6-neighbour, in index order.
/// Neighbours outside the grid count as unoccupied.
pub fn surface_voxels(grid: &VoxelGrid) -> Vec<Voxel> {
    (0..grid.occupancy.len())
        .filter(|&idx| grid.occupancy[idx])
        .map(|idx| grid.coords(idx))
        .filter(|&v| grid.is_surface(v))
        .collect()
}

/// Solid voxelization with the default memory cap.
pub fn voxelize_solid<T: Real>(mesh: &TriangleMesh<T>, resolution: usize) -> Result<VoxelGrid> {
    voxelize_solid_capped(mesh, resolution, DEFAULT_MAX_CELLS)
}

/// Marks voxel `(i, j, k)` occupied iff its center lies inside the mesh.
///
/// The mesh is expected to be normalized into [-0.5, 0.5]³; geometry outside
/// the cube is simply not sampled.
pub fn voxelize_solid_capped<T: Real>(
    mesh: &TriangleMesh<T>,
    resolution: usize,
    max_cells: usize,
) -> Result<VoxelGrid> {
    if resolution < MIN_RESOLUTION {
        return Err(Error::ResolutionTooSmall(resolution));
    }
    let cells = resolution
        .checked_pow(3)
        .filter(|&c| c <= max_cells)
        .ok_or(Error::ResolutionTooLarge {
            resolution,
            cap: max_cells,
        })?;
    if mesh.faces.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let r = resolution;
    let rf = r as f64;
    // Triangles in voxel-index space, where voxel i spans [i, i+1).
    let tris: Vec<[[f64; 3]; 3]> = (0..mesh.faces.len())
        .map(|f| mesh.triangle(f).map(|p| p.map(|c| (c.to_f64_lossy() + 0.5) * rf)))
        .collect();
    if tris.iter().all(|t| projected_area(t) == 0.0) && extent_zero(&tris) {
        return Err(Error::DegenerateMesh("all triangles degenerate".into()));
    }

    // Bin triangles by the (j, k) column centers their yz-bounding box covers.
    let mut columns: Vec<Vec<u32>> = vec![Vec::new(); r * r];
    for (t, tri) in tris.iter().enumerate() {
        let (lo_y, hi_y) = column_span(tri[0][1], tri[1][1], tri[2][1], r);
        let (lo_z, hi_z) = column_span(tri[0][2], tri[1][2], tri[2][2], r);
        for k in lo_z..hi_z {
            for j in lo_y..hi_y {
                columns[j + r * k].push(t as u32);
            }
        }
    }

    let rows: Vec<Vec<bool>> = columns
        .par_iter()
        .enumerate()
        .map(|(col, cands)| {
            let j = col % r;
            let k = col / r;
            fill_column(&tris, cands, j as f64 + 0.5, k as f64 + 0.5, r)
        })
        .collect();

    let mut occupancy = Vec::with_capacity(cells);
    for row in rows {
        occupancy.extend(row);
    }
    Ok(VoxelGrid {
        resolution: r,
        occupancy,
    })
}

fn extent_zero(tris: &[[[f64; 3]; 3]]) -> bool {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in tris.iter().flatten() {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    (0..3).all(|a| hi[a] - lo[a] == 0.0)
}

fn projected_area(t: &[[f64; 3]; 3]) -> f64 {
    (t[1][1] - t[0][1]) * (t[2][2] - t[0][2]) - (t[1][2] - t[0][2]) * (t[2][1] - t[0][1])
}

/// Column indices `c` in `[lo, hi)` whose centers `c + 0.5` fall in the closed span of the values.
fn column_span(a: f64, b: f64, c: f64, r: usize) -> (usize, usize) {
    let lo = a.min(b).min(c);
    let hi = a.max(b).max(c);
    let first = (lo - 0.5).ceil().max(0.0);
    let last = (hi - 0.5).floor().min(r as f64 - 1.0);
    if last < first {
        return (0, 0);
    }
    (first as usize, last as usize + 1)
}

enum Hit {
    Miss,
    Cross(f64),
    Degenerate,
}

/// Intersection of the +x ray through `(y, z)` with a triangle.
fn ray_hit(t: &[[f64; 3]; 3], y: f64, z: f64) -> Hit {
    let area = projected_area(t);
    if area == 0.0 {
        // Parallel to the ray; neighbouring triangles carry the crossing.
        return Hit::Miss;
    }
    let edge = |a: &[f64; 3], b: &[f64; 3]| (b[1] - a[1]) * (z - a[2]) - (b[2] - a[2]) * (y - a[1]);
    let w0 = edge(&t[1], &t[2]);
    let w1 = edge(&t[2], &t[0]);
    let w2 = edge(&t[0], &t[1]);
    if w0 == 0.0 || w1 == 0.0 || w2 == 0.0 {
        let inside_closed = (w0 >= 0.0 && w1 >= 0.0 && w2 >= 0.0) || (w0 <= 0.0 && w1 <= 0.0 && w2 <= 0.0);
        return if inside_closed { Hit::Degenerate } else { Hit::Miss };
    }
    let same = (w0 > 0.0) == (w1 > 0.0) && (w1 > 0.0) == (w2 > 0.0);
    if !same {
        return Hit::Miss;
    }
    let sum = w0 + w1 + w2;
    let x = (w0 * t[0][0] + w1 * t[1][0] + w2 * t[2][0]) / sum;
    Hit::Cross(x)
}

fn fill_column(tris: &[[[f64; 3]; 3]], cands: &[u32], y: f64, z: f64, r: usize) -> Vec<bool> {
    let mut row = vec![false; r];
    if cands.is_empty() {
        return row;
    }
    let mut crossings = Vec::with_capacity(cands.len());
    // Rays grazing an edge or vertex are nudged off the lattice line and recast.
    let mut offset = 0.0;
    'retry: for attempt in 0..8 {
        crossings.clear();
        let (yy, zz) = (y + offset, z + offset * std::f64::consts::SQRT_2);
        for &t in cands {
            match ray_hit(&tris[t as usize], yy, zz) {
                Hit::Miss => {}
                Hit::Cross(x) => crossings.push(x),
                Hit::Degenerate => {
                    offset = 1e-7 * (attempt + 1) as f64 * 0.5;
                    continue 'retry;
                }
            }
        }
        break;
    }
    crossings.sort_by(f64::total_cmp);
    if crossings.len() % 2 == 1 {
        // Open surface: no enclosed run is defined, keep only the cells the sheet passes through.
        for &x in &crossings {
            let i = x.floor();
            if i >= 0.0 && (i as usize) < r {
                row[i as usize] = true;
            }
        }
        return row;
    }
    let mut inside = false;
    let mut next = 0;
    for (i, cell) in row.iter_mut().enumerate() {
        let cx = i as f64 + 0.5;
        while next < crossings.len() && crossings[next] < cx {
            inside = !inside;
            next += 1;
        }
        // Centers lying exactly on the surface count as occupied.
        let on_surface = next < crossings.len() && crossings[next] == cx;
        *cell = inside || on_surface;
    }
    row
}
