//! Signed distance fields over voxel grids.
//!
//! Distances are measured between voxel centers in voxel units, from every
//! voxel to the nearest surface voxel, so squared distances are exact
//! integers. Values are only defined inside the external sphere of radius
//! `R/2` around the grid center.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::voxel::{surface_voxels, Voxel, VoxelGrid};

/// Squared distance stored for cells outside the external sphere.
pub const INVALID_SQ: u32 = u32::MAX;

/// Largest resolution the brute-force reference accepts.
pub const BRUTE_FORCE_MAX_RESOLUTION: usize = 64;

const ISDF_MAGIC: &[u8; 4] = b"ISDF";
const QUIET_NAN_BITS: u32 = 0x7FC0_0000;

/// Signed distance per voxel, with the validity mask of the external sphere.
#[derive(Clone, Debug)]
pub struct SdfGrid<T: Real> {
    resolution: usize,
    squared: Vec<u32>,
    values: Vec<T>,
    valid: Vec<bool>,
    occupied: Vec<bool>,
    surface: Vec<bool>,
}

/// Whether the center of voxel `v` lies within the external sphere of an `R³` grid.
///
/// Works in doubled coordinates so the test is exact: the center of index `i`
/// sits at `2i + 1` and the grid center at `R`.
#[inline]
pub fn in_external_sphere(v: Voxel, resolution: usize) -> bool {
    let r = resolution as i64;
    let d2: i64 = v.iter().map(|&c| (2 * c as i64 + 1 - r).pow(2)).sum();
    d2 <= r * r
}

impl<T: Real> SdfGrid<T> {
    fn assemble(grid: &VoxelGrid, squared: Vec<u32>, surface: Vec<bool>) -> Self {
        let r = grid.resolution();
        let occupied = grid.occupancy().to_vec();
        let values = squared
            .iter()
            .zip(&occupied)
            .map(|(&sq, &occ)| {
                if sq == INVALID_SQ {
                    T::nan()
                } else {
                    let d = T::of((sq as f64).sqrt());
                    if occ && sq > 0 {
                        -d
                    } else {
                        d
                    }
                }
            })
            .collect();
        let valid = squared.iter().map(|&sq| sq != INVALID_SQ).collect();
        Self {
            resolution: r,
            squared,
            values,
            valid,
            occupied,
            surface,
        }
    }

    #[inline]
    pub fn resolution(&self) -> usize {
        self.resolution
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

    /// Signed distance at `v`, `None` outside the external sphere.
    #[inline]
    pub fn value(&self, v: Voxel) -> Option<T> {
        let idx = self.index(v);
        self.valid[idx].then(|| self.values[idx])
    }

    /// Exact squared distance to the nearest surface voxel, `None` when invalid.
    #[inline]
    pub fn squared(&self, v: Voxel) -> Option<u32> {
        let idx = self.index(v);
        self.valid[idx].then(|| self.squared[idx])
    }

    /// Raw squared distances; invalid cells hold [`INVALID_SQ`].
    pub fn squared_distances(&self) -> &[u32] {
        &self.squared
    }

    /// Raw signed values; invalid cells hold NaN.
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn occupied(&self) -> &[bool] {
        &self.occupied
    }

    pub fn surface_mask(&self) -> &[bool] {
        &self.surface
    }

    pub fn is_surface(&self, v: Voxel) -> bool {
        self.surface[self.index(v)]
    }

    /// Surface voxels in index order.
    pub fn surface_voxels(&self) -> Vec<Voxel> {
        self.surface
            .iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(|(idx, _)| self.coords(idx))
            .collect()
    }

    /// Writes the `ISDF` dump: magic, `u32` resolution, then `R³` little-endian
    /// `f32` values with invalid cells as the quiet-NaN bit pattern.
    pub fn write_isdf(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::with_capacity(8 + 4 * self.values.len());
        buf.extend_from_slice(ISDF_MAGIC);
        buf.extend_from_slice(&(self.resolution as u32).to_le_bytes());
        for (v, &ok) in self.values.iter().zip(&self.valid) {
            let bits = if ok {
                v.to_f32_lossy().to_bits()
            } else {
                QUIET_NAN_BITS
            };
            buf.extend_from_slice(&bits.to_le_bytes());
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }
}

/// Reads the values of an `ISDF` dump as `(resolution, values)`; invalid cells are NaN.
pub fn read_isdf(path: impl AsRef<Path>) -> Result<(usize, Vec<f32>)> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 8 || &bytes[..4] != ISDF_MAGIC {
        return Err(Error::corrupt(path, "missing ISDF header"));
    }
    let r = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if bytes.len() != 8 + 4 * r.pow(3) {
        return Err(Error::corrupt(path, "ISDF payload length mismatch"));
    }
    let values = bytes[8..]
        .chunks_exact(4)
        .map(|c| f32::from_bits(u32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    Ok((r, values))
}

/// Exact signed Euclidean distance transform by three separable passes.
///
/// Each pass takes the lower envelope of the parabolas `(x - i)² + f(i)` along
/// one axis, so the result is exact in integer squared distance.
pub fn compute_sdf<T: Real>(grid: &VoxelGrid) -> Result<SdfGrid<T>> {
    if grid.occupied_count() == 0 {
        return Err(Error::EmptyGrid);
    }
    let r = grid.resolution();
    let surface = grid.surface_mask();
    let mut sq: Vec<u32> = surface
        .iter()
        .map(|&s| if s { 0 } else { INVALID_SQ })
        .collect();

    for axis in 0..3 {
        transform_axis(&mut sq, r, axis);
    }
    for (idx, d) in sq.iter_mut().enumerate() {
        let v = [idx % r, (idx / r) % r, idx / (r * r)];
        if !in_external_sphere(v, r) {
            *d = INVALID_SQ;
        }
    }
    Ok(SdfGrid::assemble(grid, sq, surface))
}

fn transform_axis(sq: &mut [u32], r: usize, axis: usize) {
    let stride = r.pow(axis as u32);
    // Lines along `axis` are addressed by their first cell.
    let starts: Vec<usize> = (0..r * r)
        .map(|l| {
            let (a, b) = (l % r, l / r);
            match axis {
                0 => r * a + r * r * b,
                1 => a + r * r * b,
                _ => a + r * b,
            }
        })
        .collect();
    let src: &[u32] = sq;
    let lines: Vec<Vec<u32>> = starts
        .par_iter()
        .map_init(
            || (vec![0u32; r], vec![0usize; r], vec![0usize; r]),
            |(line, sites, bounds), &start| {
                for (x, slot) in line.iter_mut().enumerate() {
                    *slot = src[start + x * stride];
                }
                lower_envelope(line, sites, bounds)
            },
        )
        .collect();
    for (start, line) in starts.iter().zip(lines) {
        for (x, d) in line.into_iter().enumerate() {
            sq[start + x * stride] = d;
        }
    }
}

/// One-dimensional squared distance transform of `f`, where [`INVALID_SQ`]
/// marks cells with no feature (infinite cost).
fn lower_envelope(f: &[u32], sites: &mut [usize], bounds: &mut [usize]) -> Vec<u32> {
    let n = f.len();
    let cost = |x: usize, i: usize| -> i64 {
        let dx = x as i64 - i as i64;
        dx * dx + f[i] as i64
    };
    // First x at which parabola `u` is no worse than parabola `i` (i < u).
    let sep = |i: usize, u: usize| -> i64 {
        let (ii, uu) = (i as i64, u as i64);
        let num = uu * uu - ii * ii + f[u] as i64 - f[i] as i64;
        num.div_euclid(2 * (uu - ii)) + 1
    };

    let mut q: isize = -1;
    for u in 0..n {
        if f[u] == INVALID_SQ {
            continue;
        }
        while q >= 0 {
            let qi = q as usize;
            if cost(bounds[qi], sites[qi]) > cost(bounds[qi], u) {
                q -= 1;
            } else {
                break;
            }
        }
        if q < 0 {
            q = 0;
            sites[0] = u;
            bounds[0] = 0;
        } else {
            let w = sep(sites[q as usize], u);
            if w < n as i64 {
                q += 1;
                sites[q as usize] = u;
                bounds[q as usize] = w.max(0) as usize;
            }
        }
    }
    if q < 0 {
        return vec![INVALID_SQ; n];
    }
    let mut out = vec![0u32; n];
    for x in (0..n).rev() {
        let qi = q as usize;
        out[x] = cost(x, sites[qi]) as u32;
        if x == bounds[qi] && q > 0 {
            q -= 1;
        }
    }
    out
}

/// Reference SDF by direct minimization over every surface voxel. `O(R³ · |surface|)`.
pub fn brute_force_sdf<T: Real>(grid: &VoxelGrid) -> Result<SdfGrid<T>> {
    let r = grid.resolution();
    if r > BRUTE_FORCE_MAX_RESOLUTION {
        return Err(Error::ResolutionTooLarge {
            resolution: r,
            cap: BRUTE_FORCE_MAX_RESOLUTION,
        });
    }
    let surface_list = surface_voxels(grid);
    if surface_list.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let surface = grid.surface_mask();
    let sq = (0..r.pow(3))
        .map(|idx| {
            let v = grid.coords(idx);
            if !in_external_sphere(v, r) {
                return INVALID_SQ;
            }
            surface_list
                .iter()
                .map(|s| {
                    (0..3)
                        .map(|a| (v[a] as i64 - s[a] as i64).pow(2))
                        .sum::<i64>() as u32
                })
                .min()
                .unwrap()
        })
        .collect();
    Ok(SdfGrid::assemble(grid, sq, surface))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube_grid() -> VoxelGrid {
        VoxelGrid::from_fn(64, |v| v.iter().all(|&c| (16..48).contains(&c)))
    }

    #[test]
    fn cube_center_depth() {
        let g = cube_grid();
        let sdf: SdfGrid<f64> = compute_sdf(&g).unwrap();
        assert_eq!(sdf.value([31, 31, 31]), Some(-15.0));
        assert_eq!(sdf.value([16, 31, 31]), Some(0.0));
        assert_eq!(sdf.value([0, 0, 0]), None);
        assert!(sdf.values()[0].is_nan());
    }

    #[test]
    fn matches_brute_force_on_cube() {
        let g = cube_grid();
        let fast: SdfGrid<f32> = compute_sdf(&g).unwrap();
        let slow: SdfGrid<f32> = brute_force_sdf(&g).unwrap();
        assert_eq!(fast.squared_distances(), slow.squared_distances());
    }

    #[test]
    fn lone_voxel_distances() {
        let g = VoxelGrid::from_fn(16, |v| v == [8, 8, 8]);
        let sdf: SdfGrid<f64> = brute_force_sdf(&g).unwrap();
        for d in 1..8 {
            assert_eq!(sdf.value([8 + d, 8, 8]), Some(d as f64));
        }
        let fast: SdfGrid<f64> = compute_sdf(&g).unwrap();
        assert_eq!(fast.squared_distances(), sdf.squared_distances());
    }

    #[test]
    fn empty_grid_errors() {
        let g = VoxelGrid::empty(8);
        assert!(matches!(compute_sdf::<f32>(&g), Err(Error::EmptyGrid)));
        assert!(matches!(brute_force_sdf::<f32>(&g), Err(Error::EmptyGrid)));
    }

    #[test]
    fn brute_force_caps_resolution() {
        let g = VoxelGrid::from_fn(65, |v| v == [1, 1, 1]);
        assert!(matches!(
            brute_force_sdf::<f32>(&g),
            Err(Error::ResolutionTooLarge { .. })
        ));
    }

    #[test]
    fn external_sphere_is_exact() {
        // Index 0 and 63 centers sit at ±31.5 from the center of a 64 grid.
        assert!(in_external_sphere([0, 32, 32], 64));
        assert!(!in_external_sphere([0, 0, 0], 64));
        assert!(!in_external_sphere([0, 20, 32], 64));
    }

    #[test]
    fn isdf_dump() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.isdf");
        let g = VoxelGrid::from_fn(10, |v| v.iter().all(|&c| (3..7).contains(&c)));
        let sdf: SdfGrid<f64> = compute_sdf(&g).unwrap();
        sdf.write_isdf(&p).unwrap();
        let (r, vals) = read_isdf(&p).unwrap();
        assert_eq!(r, 10);
        assert_eq!(vals[0].to_bits(), QUIET_NAN_BITS);
        let idx = sdf.index([5, 5, 5]);
        assert_eq!(vals[idx], sdf.values()[idx] as f32);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn grid_strategy() -> impl Strategy<Value = VoxelGrid> {
            (8usize..20, prop::collection::vec(any::<u64>(), 1..6)).prop_map(|(r, seeds)| {
                let shapes: Vec<([i64; 3], i64)> = seeds
                    .iter()
                    .map(|s| {
                        let c = [s % r as u64, (s >> 8) % r as u64, (s >> 16) % r as u64].map(|x| x as i64);
                        (c, ((s >> 24) % 5) as i64 + 1)
                    })
                    .collect();
                VoxelGrid::from_fn(r, |v| {
                    shapes.iter().any(|(c, rad)| {
                        (0..3).map(|a| (v[a] as i64 - c[a]).pow(2)).sum::<i64>() <= rad * rad
                    })
                })
            })
        }

        proptest! {
            #[test]
            fn oracle_equivalence(g in grid_strategy()) {
                let fast: SdfGrid<f64> = compute_sdf(&g).unwrap();
                let slow: SdfGrid<f64> = brute_force_sdf(&g).unwrap();
                prop_assert_eq!(fast.squared_distances(), slow.squared_distances());
            }

            #[test]
            fn lipschitz_and_sign(g in grid_strategy()) {
                let sdf: SdfGrid<f64> = compute_sdf(&g).unwrap();
                let r = g.resolution();
                for idx in 0..r.pow(3) {
                    let v = sdf.coords(idx);
                    let Some(val) = sdf.value(v) else { continue };
                    prop_assert!(val.abs() <= r as f64 * 3f64.sqrt());
                    if !sdf.is_surface(v) {
                        prop_assert_eq!(val < 0.0, g.get(v));
                    } else {
                        prop_assert_eq!(val, 0.0);
                    }
                    for a in 0..3 {
                        let mut n = v;
                        n[a] += 1;
                        if n[a] >= r { continue; }
                        if let Some(nv) = sdf.value(n) {
                            prop_assert!((nv - val).abs() <= 1.0 + 1e-12);
                        }
                    }
                }
            }
        }
    }
}
