//! Greedy construction of infilling spheres from a signed distance field.
//!
//! Every valid voxel defines a candidate sphere centered at the voxel with
//! radius equal to its absolute SDF value. Candidates are visited from large to
//! small, and a candidate is accepted only when it keeps a separation gap `d`
//! to every sphere accepted so far. The gap shrinks over a schedule of passes
//! (coarse to fine), and a candidate that overlaps an accepted sphere is
//! discarded for good.

use std::cmp::Ordering;
use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sdf::SdfGrid;
use crate::voxel::Voxel;

/// Half a voxel: a surface voxel touches a sphere when its center lies within
/// this distance of the sphere boundary.
pub const CONTACT_TOLERANCE: f64 = 0.5;

/// Resolution at which the reference separation schedule is expressed.
pub const REFERENCE_RESOLUTION: usize = 512;

/// Reference separation gaps, in voxels at [`REFERENCE_RESOLUTION`].
pub const REFERENCE_SCHEDULE: [f64; 3] = [10.0, 5.0, 0.0];

const ISPH_MAGIC: &[u8; 4] = b"ISPH";

/// Which part of space a sphere (or sphere set) fills.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Interior,
    Exterior,
    /// Interior spheres followed by exterior spheres.
    Mixed,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Interior => "interior",
            Side::Exterior => "exterior",
            Side::Mixed => "mixed",
        }
    }

    fn code(self) -> u8 {
        match self {
            Side::Interior => 0,
            Side::Exterior => 1,
            Side::Mixed => 2,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Side::Interior),
            1 => Some(Side::Exterior),
            2 => Some(Side::Mixed),
            _ => None,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interior" => Ok(Side::Interior),
            "exterior" => Ok(Side::Exterior),
            "mixed" => Ok(Side::Mixed),
            _ => Err(Error::InvalidArgument(format!("unknown side {s:?}"))),
        }
    }
}

/// Separation gaps (voxel units) for the successive greedy passes.
#[derive(Clone, Debug, PartialEq)]
pub struct DSchedule(Vec<f64>);

impl DSchedule {
    /// Validates a schedule: non-empty, strictly decreasing, ending at 0.
    pub fn new(gaps: Vec<f64>) -> Result<Self> {
        let ok = !gaps.is_empty()
            && gaps.iter().all(|d| d.is_finite() && *d >= 0.0)
            && gaps.windows(2).all(|w| w[0] > w[1])
            && *gaps.last().unwrap() == 0.0;
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "separation schedule must be strictly decreasing and end at 0, got {gaps:?}"
            )));
        }
        Ok(Self(gaps))
    }

    /// Gaps given at [`REFERENCE_RESOLUTION`] rescaled to `resolution`.
    pub fn scaled(reference: &[f64], resolution: usize) -> Result<Self> {
        let s = resolution as f64 / REFERENCE_RESOLUTION as f64;
        Self::new(reference.iter().map(|d| (d * s).max(0.0)).collect())
    }

    /// The 10, 5, 0 schedule rescaled to `resolution`.
    pub fn reference(resolution: usize) -> Self {
        Self::scaled(&REFERENCE_SCHEDULE, resolution).expect("reference schedule is valid")
    }

    pub fn gaps(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InfillingSphere<T: Real> {
    pub center: Voxel,
    /// `|SDF|` at the center, in voxels.
    pub radius: T,
    /// Exact squared radius (integer in voxel units).
    pub squared_radius: u32,
    pub side: Side,
    pub contact_count: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SphereSet<T: Real> {
    /// Construction order: big to small within each pass.
    pub spheres: Vec<InfillingSphere<T>>,
    pub n_requested: usize,
    pub resolution: usize,
    pub side: Side,
    pub d_schedule: Vec<f64>,
    /// Set when the candidates ran out before `n_requested` spheres were placed.
    pub exhausted: bool,
}

impl<T: Real> SphereSet<T> {
    pub fn len(&self) -> usize {
        self.spheres.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spheres.is_empty()
    }

    /// First `k` spheres, which form a valid coarse-to-fine set on their own.
    pub fn prefix(&self, k: usize) -> Self {
        let mut out = self.clone();
        out.spheres.truncate(k);
        out.n_requested = k.min(self.n_requested);
        out.exhausted = self.exhausted && k >= self.spheres.len();
        out
    }

    /// Writes the `ISPH` cache: magic, `u32` R, `u8` side, `u32` count, then
    /// per sphere `u16 i, j, k`, `f32` radius, `u16` contact count (little-endian).
    pub fn to_isph_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(13 + 12 * self.spheres.len());
        buf.extend_from_slice(ISPH_MAGIC);
        buf.extend_from_slice(&(self.resolution as u32).to_le_bytes());
        buf.push(self.side.code());
        buf.extend_from_slice(&(self.spheres.len() as u32).to_le_bytes());
        for s in &self.spheres {
            for c in s.center {
                buf.extend_from_slice(&(c as u16).to_le_bytes());
            }
            buf.extend_from_slice(&s.radius.to_f32_lossy().to_le_bytes());
            buf.extend_from_slice(&(s.contact_count.min(u16::MAX as u32) as u16).to_le_bytes());
        }
        buf
    }

    pub fn write_isph(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_isph_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

/// Contents of an `ISPH` cache file.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereCache {
    pub resolution: usize,
    pub side: Side,
    pub centers: Vec<[u16; 3]>,
    pub radii: Vec<f32>,
    pub contacts: Vec<u16>,
}

impl SphereCache {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < 13 || &bytes[..4] != ISPH_MAGIC {
            return Err(Error::corrupt(path, "missing ISPH header"));
        }
        let resolution = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let side = Side::from_code(bytes[8]).ok_or_else(|| Error::corrupt(path, "bad side byte"))?;
        let count = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
        if bytes.len() != 13 + 12 * count {
            return Err(Error::corrupt(path, "ISPH record count mismatch"));
        }
        let mut centers = Vec::with_capacity(count);
        let mut radii = Vec::with_capacity(count);
        let mut contacts = Vec::with_capacity(count);
        for rec in bytes[13..].chunks_exact(12) {
            let u = |o: usize| u16::from_le_bytes([rec[o], rec[o + 1]]);
            let c = [u(0), u(2), u(4)];
            let radius = f32::from_le_bytes(rec[6..10].try_into().unwrap());
            if c.iter().any(|&x| x as usize >= resolution) || !radius.is_finite() || radius < 0.0 {
                return Err(Error::corrupt(path, "sphere record out of range"));
            }
            centers.push(c);
            radii.push(radius);
            contacts.push(u(10));
        }
        Ok(Self {
            resolution,
            side,
            centers,
            radii,
            contacts,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

#[inline]
fn sq_dist(a: Voxel, b: Voxel) -> u64 {
    (0..3)
        .map(|x| {
            let d = a[x] as i64 - b[x] as i64;
            (d * d) as u64
        })
        .sum()
}

/// Whether a surface point at squared distance `d2` lies on the sphere boundary
/// within `tolerance`.
#[inline]
pub fn touches(d2: u64, radius: f64, tolerance: f64) -> bool {
    ((d2 as f64).sqrt() - radius).abs() <= tolerance
}

/// Number of surface voxels within half a voxel of the sphere boundary.
pub fn contact_count(center: Voxel, radius: f64, surface: &[Voxel]) -> usize {
    contact_count_with_tolerance(center, radius, surface, CONTACT_TOLERANCE)
}

pub fn contact_count_with_tolerance(
    center: Voxel,
    radius: f64,
    surface: &[Voxel],
    tolerance: f64,
) -> usize {
    surface
        .iter()
        .filter(|&&s| touches(sq_dist(center, s), radius, tolerance))
        .count()
}

/// Counts contacts by walking the lattice shell around the center on the
/// surface mask instead of scanning the whole surface list.
struct ShellCounter<'a> {
    surface: &'a [bool],
    resolution: usize,
}

impl ShellCounter<'_> {
    fn count(&self, c: Voxel, squared_radius: u32) -> u32 {
        let r = self.resolution as i64;
        let radius = (squared_radius as f64).sqrt();
        let outer = radius + CONTACT_TOLERANCE;
        let inner = radius - CONTACT_TOLERANCE;
        let outer2 = outer * outer;
        let inner2 = if inner > 0.0 { inner * inner } else { 0.0 };
        let h = outer.floor() as i64 + 1;
        let [cx, cy, cz] = c.map(|x| x as i64);
        let mut n = 0u32;
        for dx in -h..=h {
            let x = cx + dx;
            if x < 0 || x >= r {
                continue;
            }
            let ax = (dx * dx) as f64;
            if ax > outer2 + 1.0 {
                continue;
            }
            for dy in -h..=h {
                let y = cy + dy;
                if y < 0 || y >= r {
                    continue;
                }
                let axy = ax + (dy * dy) as f64;
                if axy > outer2 + 1.0 {
                    continue;
                }
                // |dz| range from the shell bounds, widened by one and filtered exactly below.
                let hi = ((outer2 - axy).max(0.0)).sqrt().floor() as i64 + 1;
                let lo = ((inner2 - axy).max(0.0)).sqrt().ceil() as i64 - 1;
                let lo = lo.max(0);
                let row = (x + r * y) as usize;
                for adz in lo..=hi {
                    let d2 = (axy as i64 + adz * adz) as u64;
                    if !touches(d2, radius, CONTACT_TOLERANCE) {
                        continue;
                    }
                    let both = [adz, -adz];
                    let dzs = if adz == 0 { &both[..1] } else { &both[..] };
                    for &dz in dzs {
                        let z = cz + dz;
                        if z >= 0 && z < r && self.surface[row + (r * r * z) as usize] {
                            n += 1;
                        }
                    }
                }
            }
        }
        n
    }
}

/// A voxel eligible to become a sphere center.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Candidate {
    pub voxel: Voxel,
    pub squared_radius: u32,
    pub contact_count: u32,
}

impl Candidate {
    pub fn radius(&self) -> f64 {
        (self.squared_radius as f64).sqrt()
    }
}

/// Candidate order: larger radius first, then more contacts, then `(i, j, k)` ascending.
pub fn candidate_order(a: &Candidate, b: &Candidate) -> Ordering {
    b.squared_radius
        .cmp(&a.squared_radius)
        .then(b.contact_count.cmp(&a.contact_count))
        .then(a.voxel.cmp(&b.voxel))
}

/// An exterior sphere must stay inside the external sphere, i.e.
/// `radius + |center - grid center| <= R/2`, tested exactly in integers.
fn fits_external_sphere(v: Voxel, squared_radius: u32, resolution: usize) -> bool {
    let r = resolution as i128;
    // Doubled coordinates: 2·radius = sqrt(a), 2·|offset| = sqrt(b).
    let a = 4 * squared_radius as i128;
    let b: i128 = v.iter().map(|&c| (2 * c as i128 + 1 - r).pow(2)).sum();
    let slack = r * r - a - b;
    slack >= 0 && slack * slack >= 4 * a * b
}

fn require_single_side(side: Side) -> Result<()> {
    if side == Side::Mixed {
        return Err(Error::InvalidArgument(
            "mixed sets are built with build_mixed".into(),
        ));
    }
    Ok(())
}

/// Valid voxels on `side`, grouped by descending squared radius; contact
/// counts are left at zero.
fn eligible<T: Real>(sdf: &SdfGrid<T>, side: Side) -> Vec<Candidate> {
    let r = sdf.resolution();
    let sq = sdf.squared_distances();
    let mut out: Vec<Candidate> = (0..sq.len())
        .filter(|&idx| sdf.valid()[idx] && sq[idx] > 0)
        .filter(|&idx| match side {
            Side::Interior => sdf.occupied()[idx],
            _ => {
                !sdf.occupied()[idx] && fits_external_sphere(sdf.coords(idx), sq[idx], r)
            }
        })
        .map(|idx| Candidate {
            voxel: sdf.coords(idx),
            squared_radius: sq[idx],
            contact_count: 0,
        })
        .collect();
    out.sort_by(|a, b| b.squared_radius.cmp(&a.squared_radius).then(a.voxel.cmp(&b.voxel)));
    out
}

/// All candidates of one side in greedy visiting order, with contact counts.
///
/// Interior candidates are occupied voxels with negative SDF; exterior ones are
/// unoccupied valid voxels whose sphere fits inside the external sphere.
pub fn sort_candidates<T: Real>(sdf: &SdfGrid<T>, side: Side) -> Result<Vec<Candidate>> {
    require_single_side(side)?;
    let counter = ShellCounter {
        surface: sdf.surface_mask(),
        resolution: sdf.resolution(),
    };
    let mut cands = eligible(sdf, side);
    if cands.is_empty() {
        return Err(Error::NoCandidates(side.as_str()));
    }
    for c in &mut cands {
        c.contact_count = counter.count(c.voxel, c.squared_radius);
    }
    cands.sort_by(candidate_order);
    Ok(cands)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Status {
    Empty,
    Taken,
    Rejected,
}

enum Verdict {
    Accept,
    Reject,
    Defer,
}

/// Whether two spheres with squared radii `a`, `b` whose centers are `d2` apart
/// overlap, i.e. `sqrt(d2) < sqrt(a) + sqrt(b)`, decided exactly in integers.
pub fn overlaps(d2: u64, a: u32, b: u32) -> bool {
    let (a, b) = (a as i128, b as i128);
    let s = d2 as i128 - a - b;
    s < 0 || s * s < 4 * a * b
}

fn judge(c: &Candidate, accepted: &[(Voxel, u32, f64)], gap: f64) -> Verdict {
    let ri = c.radius();
    let mut far = true;
    for &(center, sq, rj) in accepted {
        let d2 = sq_dist(c.voxel, center);
        if overlaps(d2, c.squared_radius, sq) {
            return Verdict::Reject;
        }
        if gap > 0.0 && (d2 as f64).sqrt() < ri + rj + gap {
            far = false;
        }
    }
    if far {
        Verdict::Accept
    } else {
        Verdict::Defer
    }
}

/// Builds up to `n` spheres on one side with the given separation schedule.
///
/// Contact counts are only evaluated for candidates that survive the overlap
/// test against the spheres placed before their radius group, which yields the
/// same visiting order as sorting every candidate up front.
pub fn build_spheres<T: Real>(
    sdf: &SdfGrid<T>,
    side: Side,
    n: usize,
    schedule: &DSchedule,
) -> Result<SphereSet<T>> {
    require_single_side(side)?;
    if n == 0 {
        return Err(Error::InvalidArgument("sphere count must be at least 1".into()));
    }
    let mut cands = eligible(sdf, side);
    if cands.is_empty() {
        return Err(Error::NoCandidates(side.as_str()));
    }
    let counter = ShellCounter {
        surface: sdf.surface_mask(),
        resolution: sdf.resolution(),
    };

    // Radius groups as [start, end) ranges over `cands`.
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=cands.len() {
        if i == cands.len() || cands[i].squared_radius != cands[start].squared_radius {
            groups.push((start, i));
            start = i;
        }
    }

    let mut status = vec![Status::Empty; cands.len()];
    let mut ordered = vec![false; groups.len()];
    let mut accepted: Vec<(Voxel, u32, f64)> = Vec::with_capacity(n);
    let mut spheres = Vec::with_capacity(n);

    'passes: for &gap in schedule.gaps() {
        for (g, &(lo, hi)) in groups.iter().enumerate() {
            if spheres.len() == n {
                break 'passes;
            }
            // Overlap with an earlier sphere rejects regardless of order within the group.
            for i in lo..hi {
                if status[i] == Status::Empty {
                    if let Verdict::Reject = judge(&cands[i], &accepted, f64::INFINITY) {
                        status[i] = Status::Rejected;
                    }
                }
            }
            if !ordered[g] {
                for i in lo..hi {
                    if status[i] == Status::Empty {
                        cands[i].contact_count = counter.count(cands[i].voxel, cands[i].squared_radius);
                    }
                }
                // Rejected entries keep their slot; only the relative order of live ones matters.
                let mut live: Vec<(Candidate, Status)> =
                    (lo..hi).map(|i| (cands[i], status[i])).collect();
                live.sort_by(|a, b| candidate_order(&a.0, &b.0));
                for (off, (c, s)) in live.into_iter().enumerate() {
                    cands[lo + off] = c;
                    status[lo + off] = s;
                }
                ordered[g] = true;
            }
            for i in lo..hi {
                if status[i] != Status::Empty {
                    continue;
                }
                match judge(&cands[i], &accepted, gap) {
                    Verdict::Accept => {
                        let c = cands[i];
                        status[i] = Status::Taken;
                        accepted.push((c.voxel, c.squared_radius, c.radius()));
                        spheres.push(InfillingSphere {
                            center: c.voxel,
                            radius: T::of(c.radius()),
                            squared_radius: c.squared_radius,
                            side,
                            contact_count: c.contact_count,
                        });
                        if spheres.len() == n {
                            break 'passes;
                        }
                    }
                    Verdict::Reject => status[i] = Status::Rejected,
                    Verdict::Defer => {}
                }
            }
        }
    }

    let exhausted = spheres.len() < n;
    Ok(SphereSet {
        spheres,
        n_requested: n,
        resolution: sdf.resolution(),
        side,
        d_schedule: schedule.gaps().to_vec(),
        exhausted,
    })
}

/// Interior build followed by an exterior build on the same field.
pub fn build_mixed<T: Real>(
    sdf: &SdfGrid<T>,
    n_interior: usize,
    n_exterior: usize,
    schedule: &DSchedule,
) -> Result<SphereSet<T>> {
    if n_interior == 0 && n_exterior == 0 {
        return Err(Error::InvalidArgument("mixed build needs at least one sphere".into()));
    }
    if n_exterior == 0 {
        return build_spheres(sdf, Side::Interior, n_interior, schedule);
    }
    if n_interior == 0 {
        return build_spheres(sdf, Side::Exterior, n_exterior, schedule);
    }
    let inner = build_spheres(sdf, Side::Interior, n_interior, schedule)?;
    let outer = build_spheres(sdf, Side::Exterior, n_exterior, schedule)?;
    let mut spheres = inner.spheres;
    spheres.extend(outer.spheres);
    Ok(SphereSet {
        spheres,
        n_requested: n_interior + n_exterior,
        resolution: sdf.resolution(),
        side: Side::Mixed,
        d_schedule: schedule.gaps().to_vec(),
        exhausted: inner.exhausted || outer.exhausted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdf::compute_sdf;
    use crate::voxel::{surface_voxels, VoxelGrid};

    fn ball(r: usize, radius: f64) -> VoxelGrid {
        let c = (r as f64 - 1.0) / 2.0;
        VoxelGrid::from_fn(r, |v| {
            v.iter().map(|&x| (x as f64 - c).powi(2)).sum::<f64>() <= radius * radius
        })
    }

    fn plane(z: usize, half: i64) -> Vec<Voxel> {
        let mut out = Vec::new();
        for x in -half..=half {
            for y in -half..=half {
                out.push([(x + 50) as usize, (y + 50) as usize, z]);
            }
        }
        out
    }

    #[test]
    fn single_plane_contact() {
        let surface = plane(0, 20);
        // The lattice point directly below is the only exact contact; the
        // half-voxel band also admits its eight neighbours at distance √10, √11.
        assert_eq!(contact_count_with_tolerance([50, 50, 3], 3.0, &surface, 0.0), 1);
        assert_eq!(contact_count([50, 50, 3], 3.0, &surface), 9);
    }

    #[test]
    fn two_planes_contact_both() {
        let mut surface = plane(0, 20);
        surface.extend(plane(8, 20));
        let n = contact_count_with_tolerance([50, 50, 4], 4.0, &surface, 0.0);
        assert!(n >= 2);
        assert!(contact_count([50, 50, 4], 4.0, &surface) >= 2);
    }

    #[test]
    fn overlap_is_exact_at_irrational_tangency() {
        // √2 + √8 = √18 exactly.
        assert!(!overlaps(18, 2, 8));
        assert!(overlaps(17, 2, 8));
        assert!(!overlaps(9, 1, 4));
        assert!(overlaps(0, 0, 1));
        assert!(!overlaps(1, 0, 1));
    }

    #[test]
    fn zero_radius_touches_itself() {
        let surface = vec![[3, 3, 3], [9, 9, 9]];
        assert!(contact_count([3, 3, 3], 0.0, &surface) >= 1);
    }

    #[test]
    fn shell_counter_matches_scan() {
        let g = ball(24, 8.3);
        let sdf: SdfGrid<f64> = compute_sdf(&g).unwrap();
        let surface = surface_voxels(&g);
        let counter = ShellCounter {
            surface: sdf.surface_mask(),
            resolution: 24,
        };
        for idx in (0..24usize.pow(3)).step_by(7) {
            let v = sdf.coords(idx);
            let Some(sq) = sdf.squared(v) else { continue };
            let fast = counter.count(v, sq);
            let slow = contact_count(v, (sq as f64).sqrt(), &surface);
            assert_eq!(fast as usize, slow, "at {v:?}");
        }
    }

    #[test]
    fn ball_center_first() {
        let g = ball(33, 12.0);
        let sdf: SdfGrid<f32> = compute_sdf(&g).unwrap();
        let cands = sort_candidates(&sdf, Side::Interior).unwrap();
        assert_eq!(cands[0].voxel, [16, 16, 16]);
        let depth = sdf.value([16, 16, 16]).unwrap();
        assert_eq!(cands[0].radius() as f32, -depth);
        // Discrete boundary sits slightly inside the continuous one.
        assert!((-12.0..-11.0).contains(&depth));
        assert!(!sort_candidates(&sdf, Side::Exterior).unwrap().is_empty());
    }

    #[test]
    fn contact_count_breaks_ties() {
        let a = Candidate { voxel: [5, 5, 5], squared_radius: 9, contact_count: 1 };
        let b = Candidate { voxel: [7, 7, 7], squared_radius: 9, contact_count: 3 };
        let mut v = vec![a, b];
        v.sort_by(candidate_order);
        assert_eq!(v[0], b);
        let c = Candidate { voxel: [1, 9, 9], ..b };
        v.push(c);
        v.sort_by(candidate_order);
        assert_eq!(v[0], c);
    }

    #[test]
    fn mixed_side_is_rejected_by_single_builders() {
        let g = ball(16, 5.0);
        let sdf: SdfGrid<f32> = compute_sdf(&g).unwrap();
        assert!(sort_candidates(&sdf, Side::Mixed).is_err());
        assert!(build_spheres(&sdf, Side::Mixed, 3, &DSchedule::reference(16)).is_err());
    }

    #[test]
    fn first_sphere_is_first_candidate() {
        let g = ball(33, 12.0);
        let sdf: SdfGrid<f64> = compute_sdf(&g).unwrap();
        for side in [Side::Interior, Side::Exterior] {
            let set = build_spheres(&sdf, side, 1, &DSchedule::reference(33)).unwrap();
            let first = sort_candidates(&sdf, side).unwrap()[0];
            assert_eq!(set.spheres[0].center, first.voxel);
            assert_eq!(set.spheres[0].contact_count, first.contact_count);
        }
    }

    #[test]
    fn full_grid_has_no_exterior() {
        let g = VoxelGrid::from_fn(8, |_| true);
        let sdf: SdfGrid<f32> = compute_sdf(&g).unwrap();
        assert!(matches!(
            build_spheres(&sdf, Side::Exterior, 2, &DSchedule::reference(8)),
            Err(Error::NoCandidates("exterior"))
        ));
    }

    #[test]
    fn capsule_spheres_are_strictly_separate() {
        // Bottle-like capsule along x.
        let g = VoxelGrid::from_fn(48, |[i, j, k]| {
            let x = (i as f64).clamp(14.0, 34.0);
            let d2 = (i as f64 - x).powi(2) + (j as f64 - 23.5).powi(2) + (k as f64 - 23.5).powi(2);
            d2 <= 9.0f64.powi(2)
        });
        let sdf: SdfGrid<f64> = compute_sdf(&g).unwrap();
        let schedule = DSchedule::new(vec![10.0, 5.0, 0.0]).unwrap();
        let set = build_spheres(&sdf, Side::Interior, 3, &schedule).unwrap();
        assert_eq!(set.len(), 3);
        for a in 0..3 {
            for b in a + 1..3 {
                let (sa, sb) = (&set.spheres[a], &set.spheres[b]);
                let d = (sq_dist(sa.center, sb.center) as f64).sqrt();
                assert!(d > sa.radius + sb.radius, "{sa:?} {sb:?}");
            }
        }
    }

    #[test]
    fn mixed_concatenates() {
        let g = ball(32, 9.0);
        let sdf: SdfGrid<f32> = compute_sdf(&g).unwrap();
        let s = DSchedule::reference(32);
        let inner = build_spheres(&sdf, Side::Interior, 6, &s).unwrap();
        let outer = build_spheres(&sdf, Side::Exterior, 5, &s).unwrap();
        let mixed = build_mixed(&sdf, 6, 5, &s).unwrap();
        assert_eq!(mixed.side, Side::Mixed);
        assert_eq!(&mixed.spheres[..6], &inner.spheres[..]);
        assert_eq!(&mixed.spheres[6..], &outer.spheres[..]);
        assert_eq!(build_mixed(&sdf, 6, 0, &s).unwrap(), inner);
        assert_eq!(build_mixed(&sdf, 0, 5, &s).unwrap(), outer);
        assert!(build_mixed(&sdf, 0, 0, &s).is_err());
    }

    #[test]
    fn shortfall_is_flagged_not_an_error() {
        let g = ball(16, 2.0);
        let sdf: SdfGrid<f32> = compute_sdf(&g).unwrap();
        let set = build_spheres(&sdf, Side::Interior, 50, &DSchedule::reference(16)).unwrap();
        assert!(set.len() < 50);
        assert!(set.exhausted);
    }

    #[test]
    fn schedule_validation() {
        assert!(DSchedule::new(vec![10.0, 5.0, 0.0]).is_ok());
        assert!(DSchedule::new(vec![5.0, 10.0, 0.0]).is_err());
        assert!(DSchedule::new(vec![10.0, 5.0]).is_err());
        assert!(DSchedule::new(vec![]).is_err());
        assert_eq!(DSchedule::reference(64).gaps(), &[1.25, 0.625, 0.0]);
        assert_eq!(DSchedule::reference(512).gaps(), &REFERENCE_SCHEDULE);
    }

    #[test]
    fn exterior_fit_is_exact() {
        // R = 9: voxel 4 is the exact grid center, leaving room for radius 4.5.
        assert!(fits_external_sphere([4, 4, 4], 20, 9));
        assert!(!fits_external_sphere([4, 4, 4], 21, 9));
        // R = 8: every central voxel is 0.5·√3 off center.
        assert!(fits_external_sphere([3, 4, 4], 9, 8));
        assert!(!fits_external_sphere([4, 4, 4], 16, 8));
    }

    #[test]
    fn isph_round_trip() {
        let g = ball(32, 9.0);
        let sdf: SdfGrid<f32> = compute_sdf(&g).unwrap();
        let set = build_mixed(&sdf, 4, 3, &DSchedule::reference(32)).unwrap();
        let bytes = set.to_isph_bytes();
        assert_eq!(bytes.len(), 13 + 12 * 7);
        let cache = SphereCache::from_bytes(&bytes, Path::new("mem")).unwrap();
        assert_eq!(cache.side, Side::Mixed);
        assert_eq!(cache.resolution, 32);
        for (s, (c, r)) in set.spheres.iter().zip(cache.centers.iter().zip(&cache.radii)) {
            assert_eq!(s.center, c.map(|x| x as usize));
            assert_eq!(s.radius, *r);
        }
        assert!(SphereCache::from_bytes(&bytes[..20], Path::new("mem")).is_err());
    }
}
