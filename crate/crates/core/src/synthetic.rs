//! Procedural ModelNet-style corpus for desk-scale runs.
//!
//! Writes `root/<class>/{train,test}/<class>_NNNN.off` with watertight shapes
//! whose proportions and orientation about the up (y) axis vary per sample.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mesh::{write_off, TriangleMesh};
use crate::shapes::{box_union, revolve, rotate_y, scale_axes, torus};

/// Every class the generator knows, sorted.
pub const CLASSES: [&str; 5] = ["bottle", "chair", "cone", "table", "torus"];

/// The four classes used by the desk-scale benchmark.
pub const DESK_CLASSES: [&str; 4] = ["bottle", "cone", "table", "torus"];

/// One random instance of `class`.
pub fn sample_shape(class: &str, rng: &mut impl Rng) -> Result<TriangleMesh<f64>> {
    let mesh = match class {
        "bottle" => {
            let body = rng.random_range(0.28..0.4);
            let neck = rng.random_range(0.08..0.14);
            let h1 = rng.random_range(0.9..1.3);
            let h2 = h1 + rng.random_range(0.2..0.4);
            let h3 = h2 + rng.random_range(0.3..0.5);
            revolve(
                &[(0.0, 0.0), (body, 0.0), (body, h1), (neck, h2), (neck, h3), (0.0, h3)],
                24,
            )
        }
        "cone" => {
            let r = rng.random_range(0.35..0.6);
            let h = rng.random_range(0.8..1.4);
            revolve(&[(0.0, 0.0), (r, 0.0), (0.0, h)], 32)
        }
        "torus" => {
            let tube = rng.random_range(0.15..0.35);
            torus(1.0, tube, 40, 16)
        }
        "table" => {
            let w = rng.random_range(0.8..1.2);
            let d = rng.random_range(0.5..0.9);
            let h = rng.random_range(0.5..0.8);
            let top = rng.random_range(0.09..0.14);
            let leg = rng.random_range(0.08..0.12);
            let mut boxes = vec![([-w, h, -d], [w, h + top, d])];
            for sx in [-1.0, 1.0] {
                for sz in [-1.0, 1.0] {
                    let cx = sx * (w - 1.5 * leg);
                    let cz = sz * (d - 1.5 * leg);
                    boxes.push(([cx - leg, 0.0, cz - leg], [cx + leg, h, cz + leg]));
                }
            }
            box_union(&boxes)
        }
        "chair" => {
            let w = rng.random_range(0.4..0.55);
            let h = rng.random_range(0.4..0.55);
            let seat = rng.random_range(0.08..0.12);
            let leg = rng.random_range(0.06..0.09);
            let back = rng.random_range(0.5..0.8);
            let mut boxes = vec![
                ([-w, h, -w], [w, h + seat, w]),
                ([-w, h + seat, w - 2.0 * seat], [w, h + seat + back, w]),
            ];
            for sx in [-1.0, 1.0] {
                for sz in [-1.0, 1.0] {
                    let cx = sx * (w - 1.5 * leg);
                    let cz = sz * (w - 1.5 * leg);
                    boxes.push(([cx - leg, 0.0, cz - leg], [cx + leg, h, cz + leg]));
                }
            }
            box_union(&boxes)
        }
        other => return Err(Error::InvalidArgument(format!("unknown synthetic class {other:?}"))),
    };
    let stretch = [
        rng.random_range(0.85..1.15),
        rng.random_range(0.85..1.15),
        rng.random_range(0.85..1.15),
    ];
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    Ok(rotate_y(&scale_axes(&mesh, stretch), angle).with_label(class))
}

/// Writes a train/test corpus for `classes` and returns the number of files written.
pub fn write_dataset(
    root: impl AsRef<Path>,
    classes: &[&str],
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> Result<usize> {
    let root = root.as_ref();
    let mut written = 0;
    for (ci, class) in classes.iter().enumerate() {
        for (split, count) in [("train", n_train), ("test", n_test)] {
            let dir = root.join(class).join(split);
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let stream = if split == "train" { 0 } else { 1 };
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((ci as u64) << 32) ^ (stream << 48));
            for i in 0..count {
                let mesh = sample_shape(class, &mut rng)?;
                write_off(&mesh, dir.join(format!("{class}_{:04}.off", i + 1)))?;
                written += 1;
            }
        }
    }
    Ok(written)
}
