//! Sphere sets as renderable meshes: one icosphere per sphere, in the same
//! normalized coordinates the network sees.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::shapes::icosphere;
use crate::spheres::SphereCache;

/// Subdivision level of the per-sphere icosphere (42 vertices, 80 faces).
pub const ICOSPHERE_SUBDIVISIONS: u32 = 1;

pub const SPHERE_COLOR: [u8; 3] = [170, 170, 170];
pub const CRITICAL_COLOR: [u8; 3] = [220, 40, 40];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportFormat {
    Ply,
    Obj,
}

impl ExportFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        ext.to_ascii_lowercase().parse()
    }
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ply" => Ok(ExportFormat::Ply),
            "obj" => Ok(ExportFormat::Obj),
            other => Err(Error::UnsupportedFormat(format!("{other:?} (expected ply or obj)"))),
        }
    }
}

/// Normalized `(center, radius)` per sphere.
pub fn normalized_spheres(cache: &SphereCache) -> Vec<([f64; 3], f64)> {
    let r = cache.resolution as f64;
    cache
        .centers
        .iter()
        .zip(&cache.radii)
        .map(|(c, &rad)| (c.map(|i| (2.0 * i as f64 + 1.0 - r) / r), 2.0 * rad as f64 / r))
        .collect()
}

/// Renders every sphere of `cache`; indices in `critical` get the highlight color.
/// `comment` (e.g. the config hash) goes into the file header.
pub fn export_spheres(
    cache: &SphereCache,
    critical: &[usize],
    format: ExportFormat,
    comment: &str,
) -> Result<String> {
    if let Some(&bad) = critical.iter().find(|&&i| i >= cache.len()) {
        return Err(Error::InvalidArgument(format!(
            "critical index {bad} outside a set of {}",
            cache.len()
        )));
    }
    let unit = icosphere::<f64>(ICOSPHERE_SUBDIVISIONS);
    let spheres = normalized_spheres(cache);
    let mut is_critical = vec![false; spheres.len()];
    for &i in critical {
        is_critical[i] = true;
    }
    let highlighted = is_critical.iter().filter(|&&c| c).count();
    let nv = unit.vertices.len();
    let mut s = String::new();
    match format {
        ExportFormat::Ply => {
            s.push_str("ply\nformat ascii 1.0\n");
            for line in comment.lines() {
                writeln!(s, "comment {line}").unwrap();
            }
            writeln!(s, "comment spheres {} critical {highlighted}", spheres.len()).unwrap();
            writeln!(s, "element vertex {}", nv * spheres.len()).unwrap();
            s.push_str("property float x\nproperty float y\nproperty float z\n");
            s.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
            writeln!(s, "element face {}", unit.faces.len() * spheres.len()).unwrap();
            s.push_str("property list uchar int vertex_indices\nend_header\n");
            for ((c, r), &crit) in spheres.iter().zip(&is_critical) {
                let [cr, cg, cb] = if crit { CRITICAL_COLOR } else { SPHERE_COLOR };
                for v in &unit.vertices {
                    writeln!(
                        s,
                        "{} {} {} {cr} {cg} {cb}",
                        c[0] + r * v[0],
                        c[1] + r * v[1],
                        c[2] + r * v[2]
                    )
                    .unwrap();
                }
            }
            for si in 0..spheres.len() {
                let base = (si * nv) as u64;
                for f in &unit.faces {
                    writeln!(
                        s,
                        "3 {} {} {}",
                        base + f[0] as u64,
                        base + f[1] as u64,
                        base + f[2] as u64
                    )
                    .unwrap();
                }
            }
        }
        ExportFormat::Obj => {
            for line in comment.lines() {
                writeln!(s, "# {line}").unwrap();
            }
            writeln!(s, "# spheres {} critical {highlighted}", spheres.len()).unwrap();
            s.push_str("mtllib spheres.mtl\n");
            for (si, ((c, r), &crit)) in spheres.iter().zip(&is_critical).enumerate() {
                writeln!(s, "o sphere_{si}").unwrap();
                writeln!(s, "usemtl {}", if crit { "critical" } else { "sphere" }).unwrap();
                for v in &unit.vertices {
                    writeln!(s, "v {} {} {}", c[0] + r * v[0], c[1] + r * v[1], c[2] + r * v[2]).unwrap();
                }
                let base = si * nv + 1;
                for f in &unit.faces {
                    writeln!(
                        s,
                        "f {} {} {}",
                        base + f[0] as usize,
                        base + f[1] as usize,
                        base + f[2] as usize
                    )
                    .unwrap();
                }
            }
        }
    }
    Ok(s)
}

/// Material library referenced by OBJ exports.
pub fn obj_materials() -> String {
    let rgb = |c: [u8; 3]| c.map(|v| format!("{:.4}", v as f64 / 255.0)).join(" ");
    format!(
        "newmtl sphere\nKd {}\nnewmtl critical\nKd {}\n",
        rgb(SPHERE_COLOR),
        rgb(CRITICAL_COLOR)
    )
}

/// Writes the export to `path`; OBJ output also gets `spheres.mtl` next to it.
pub fn write_export(
    cache: &SphereCache,
    critical: &[usize],
    format: ExportFormat,
    comment: &str,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let text = export_spheres(cache, critical, format, comment)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    if format == ExportFormat::Obj {
        let mtl = path.with_file_name("spheres.mtl");
        fs::write(&mtl, obj_materials()).map_err(|e| Error::io(&mtl, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spheres::Side;

    fn cache(n: usize) -> SphereCache {
        SphereCache {
            resolution: 32,
            side: Side::Interior,
            centers: (0..n).map(|i| [i as u16, 16, 16]).collect(),
            radii: vec![2.0; n],
            contacts: vec![1; n],
        }
    }

    #[test]
    fn ply_counts() {
        let text = export_spheres(&cache(64), &[], ExportFormat::Ply, "config_hash=ab").unwrap();
        assert!(text.contains("element vertex 2688\n"));
        assert!(text.contains("element face 5120\n"));
        assert!(text.contains("comment config_hash=ab\n"));
        assert!(text.contains("critical 0\n"));
        let body = text.split("end_header\n").nth(1).unwrap();
        assert_eq!(body.lines().count(), 2688 + 5120);
        assert!(!body.contains("220 40 40"));
    }

    #[test]
    fn critical_spheres_are_colored() {
        let text = export_spheres(&cache(3), &[1], ExportFormat::Ply, "").unwrap();
        assert_eq!(text.matches(" 220 40 40\n").count(), 42);
        let obj = export_spheres(&cache(3), &[1], ExportFormat::Obj, "").unwrap();
        assert_eq!(obj.matches("usemtl critical").count(), 1);
        assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), 126);
        assert!(export_spheres(&cache(3), &[3], ExportFormat::Ply, "").is_err());
    }

    #[test]
    fn vertices_lie_on_normalized_spheres() {
        let c = cache(1);
        let [(center, r)] = normalized_spheres(&c)[..] else { panic!() };
        assert_eq!(center, [-31.0 / 32.0, 1.0 / 32.0, 1.0 / 32.0]);
        assert_eq!(r, 0.125);
        let obj = export_spheres(&c, &[], ExportFormat::Obj, "").unwrap();
        for l in obj.lines().filter(|l| l.starts_with("v ")) {
            let p: Vec<f64> = l[2..].split(' ').map(|t| t.parse().unwrap()).collect();
            let d = ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2) + (p[2] - center[2]).powi(2)).sqrt();
            assert!((d - r).abs() < 1e-9);
        }
    }

    #[test]
    fn format_names() {
        assert_eq!(ExportFormat::from_path(Path::new("a/b.PLY")).unwrap(), ExportFormat::Ply);
        assert!(matches!(
            ExportFormat::from_path(Path::new("a.stl")),
            Err(Error::UnsupportedFormat(_))
        ));
    }
}
