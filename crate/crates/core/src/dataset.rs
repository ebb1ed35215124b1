//! ModelNet-style directory ingestion into cached sphere sets, and loading of
//! normalized `(x, y, z, r)` feature rows.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::mesh::{load_off, normalize};
use crate::scalar::Real;
use crate::sdf::compute_sdf;
use crate::spheres::{build_mixed, SphereCache, SphereSet};
use crate::voxel::voxelize_solid;

pub const MANIFEST_FILE: &str = "manifest.txt";
const MANIFEST_HEADER: &str = "# insphere manifest v1";

/// Standard deviation of the per-coordinate training jitter.
pub const JITTER_SIGMA: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(Error::InvalidArgument(format!("unknown split {s:?}"))),
        }
    }
}

/// One object as `n` rows of `(x, y, z, r)`: centers in [-1, 1]³ and radii
/// divided by the external-sphere radius `R/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereSample<T: Real> {
    pub features: Vec<[T; 4]>,
    pub label: usize,
    /// Rows that repeat the last sphere because the builder returned fewer than `n`.
    pub padded: usize,
}

impl<T: Real> SphereSample<T> {
    pub fn n(&self) -> usize {
        self.features.len()
    }

    /// Normalized rows for a cached set, padded by repetition to `n` rows.
    pub fn from_cache(cache: &SphereCache, n: usize, label: usize) -> Self {
        let r = cache.resolution as f64;
        let mut features: Vec<[T; 4]> = cache
            .centers
            .iter()
            .zip(&cache.radii)
            .take(n)
            .map(|(c, &rad)| {
                let [x, y, z] = c.map(|i| T::of((2.0 * i as f64 + 1.0 - r) / r));
                [x, y, z, T::of(2.0 * rad as f64 / r)]
            })
            .collect();
        let padded = n.saturating_sub(features.len());
        if let Some(&last) = features.last() {
            features.resize(n, last);
        }
        Self {
            features,
            label,
            padded,
        }
    }

    pub fn from_spheres(set: &SphereSet<T>, n: usize, label: usize) -> Self {
        let cache = SphereCache::from_bytes(&set.to_isph_bytes(), Path::new("<memory>"))
            .expect("freshly encoded sphere set");
        Self::from_cache(&cache, n, label)
    }

    /// First `k` rows (prefix truncation of a coarse-to-fine set).
    pub fn prefix(&self, k: usize) -> Self {
        let k = k.min(self.features.len());
        Self {
            features: self.features[..k].to_vec(),
            label: self.label,
            padded: self.padded.saturating_sub(self.features.len() - k),
        }
    }

    /// Random rotation about the up (y) axis and Gaussian jitter on the
    /// centers; radii are left untouched.
    pub fn augmented(&self, rng: &mut impl Rng) -> Self {
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let (s, c) = angle.sin_cos();
        let jitter = Normal::new(0.0, JITTER_SIGMA).expect("valid sigma");
        let one = T::one();
        let features = self
            .features
            .iter()
            .map(|f| {
                let (x, y, z) = (f[0].to_f64_lossy(), f[1].to_f64_lossy(), f[2].to_f64_lossy());
                let rot = [x * c + z * s, y, z * c - x * s];
                let [x, y, z] = rot.map(|v| T::of(v + jitter.sample(rng)).max(-one).min(one));
                [x, y, z, f[3]]
            })
            .collect();
        Self {
            features,
            label: self.label,
            padded: self.padded,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub source: PathBuf,
    /// Cache path relative to the manifest directory.
    pub cache: PathBuf,
    pub split: Split,
    pub label: usize,
    /// Spheres actually built (≤ `n`).
    pub found: usize,
}

/// Index of a cached dataset. Serialized as a line-delimited text file.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub config_hash: String,
    pub resolution: usize,
    pub n: usize,
    pub side: crate::spheres::Side,
    pub d_schedule: Vec<f64>,
    pub classes: Vec<String>,
    pub entries: Vec<ManifestEntry>,
    /// Directory holding the manifest; cache paths resolve against it.
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn k(&self) -> usize {
        self.classes.len()
    }

    pub fn split(&self, split: Split) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.split == split).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{MANIFEST_HEADER}").unwrap();
        writeln!(s, "config\t{}", self.config_hash).unwrap();
        writeln!(s, "resolution\t{}", self.resolution).unwrap();
        writeln!(s, "spheres\t{}", self.n).unwrap();
        writeln!(s, "side\t{}", self.side).unwrap();
        let d: Vec<String> = self.d_schedule.iter().map(|d| format!("{d}")).collect();
        writeln!(s, "d_schedule\t{}", d.join(",")).unwrap();
        for c in &self.classes {
            writeln!(s, "class\t{c}").unwrap();
        }
        for e in &self.entries {
            writeln!(
                s,
                "sample\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                e.split.as_str(),
                e.label,
                self.side,
                self.n,
                self.resolution,
                e.found,
                e.cache.display(),
                e.source.display()
            )
            .unwrap();
        }
        s
    }

    pub fn parse(text: &str, root: impl Into<PathBuf>) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::Parse {
            line,
            msg: format!("manifest: {msg}"),
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, MANIFEST_HEADER)) => {}
            _ => return Err(bad(1, "missing header")),
        }
        let mut m = DatasetManifest {
            config_hash: String::new(),
            resolution: 0,
            n: 0,
            side: crate::spheres::Side::Interior,
            d_schedule: Vec::new(),
            classes: Vec::new(),
            entries: Vec::new(),
            root: root.into(),
        };
        for (ln, line) in lines {
            let ln = ln + 1;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let num = |s: &str| s.parse::<usize>().map_err(|_| bad(ln, "bad number"));
            match (fields[0], fields.len()) {
                ("config", 2) => m.config_hash = fields[1].to_string(),
                ("resolution", 2) => m.resolution = num(fields[1])?,
                ("spheres", 2) => m.n = num(fields[1])?,
                ("side", 2) => m.side = fields[1].parse()?,
                ("d_schedule", 2) => {
                    m.d_schedule = fields[1]
                        .split(',')
                        .map(|d| d.parse::<f64>().map_err(|_| bad(ln, "bad gap")))
                        .collect::<Result<_>>()?
                }
                ("class", 2) => m.classes.push(fields[1].to_string()),
                ("sample", 9) => {
                    let label = num(fields[2])?;
                    if label >= m.classes.len() {
                        return Err(bad(ln, "label out of range"));
                    }
                    m.entries.push(ManifestEntry {
                        split: fields[1].parse()?,
                        label,
                        found: num(fields[6])?,
                        cache: PathBuf::from(fields[7]),
                        source: PathBuf::from(fields[8]),
                    })
                }
                _ => return Err(bad(ln, "unrecognized line")),
            }
        }
        if m.config_hash.is_empty() || m.resolution == 0 || m.n == 0 {
            return Err(bad(1, "incomplete header"));
        }
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Self::parse(&text, root)
    }

    pub fn save(&self) -> Result<PathBuf> {
        let path = self.root.join(MANIFEST_FILE);
        fs::write(&path, self.to_text()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn cache_path(&self, e: &ManifestEntry) -> PathBuf {
        self.root.join(&e.cache)
    }

    fn read_entry(&self, e: &ManifestEntry) -> Result<SphereCache> {
        let path = self.cache_path(e);
        let cache = match SphereCache::read(&path) {
            Err(Error::Io { source, .. }) => {
                return Err(Error::corrupt(&path, format!("unreadable: {source}")))
            }
            other => other?,
        };
        if cache.resolution != self.resolution || cache.side != self.side || cache.is_empty() {
            return Err(Error::corrupt(&path, "cache does not match manifest"));
        }
        Ok(cache)
    }

    /// Feature rows for entries of `split` at the given positions within that split.
    /// Augmentation is applied only when an RNG is supplied.
    pub fn load_batch<T: Real, R: Rng>(
        &self,
        split: Split,
        indices: &[usize],
        mut augment: Option<&mut R>,
    ) -> Result<Vec<SphereSample<T>>> {
        let entries = self.split(split);
        indices
            .iter()
            .map(|&i| {
                let e = entries.get(i).ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "index {i} outside {} split of {}",
                        split.as_str(),
                        entries.len()
                    ))
                })?;
                let sample = SphereSample::from_cache(&self.read_entry(e)?, self.n, e.label);
                Ok(match augment.as_deref_mut() {
                    Some(rng) => sample.augmented(rng),
                    None => sample,
                })
            })
            .collect()
    }

    /// Every sample of a split, unaugmented.
    pub fn load_split<T: Real>(&self, split: Split) -> Result<Vec<SphereSample<T>>> {
        let n = self.split(split).len();
        let idx: Vec<usize> = (0..n).collect();
        self.load_batch::<T, rand_chacha::ChaCha8Rng>(split, &idx, None)
    }
}

#[derive(Debug)]
pub struct IngestReport {
    pub manifest: DatasetManifest,
    pub converted: usize,
    pub reused: usize,
    pub failed: Vec<(PathBuf, String)>,
}

struct Job {
    source: PathBuf,
    cache: PathBuf,
    split: Split,
    label: usize,
}

fn list_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    out.sort();
    Ok(out)
}

/// Voxelizes, builds spheres for, and caches every `root/<class>/{train,test}/*.off`.
///
/// Existing caches are reused; meshes that fail are logged and skipped.
pub fn ingest(
    root: impl AsRef<Path>,
    cache_root: impl AsRef<Path>,
    config: &PipelineConfig,
) -> Result<IngestReport> {
    let root = root.as_ref();
    let cache_root = cache_root.as_ref();
    config.validate()?;
    let hash = config.hash();

    let manifest_path = cache_root.join(MANIFEST_FILE);
    if manifest_path.exists() {
        let old = DatasetManifest::load(&manifest_path)?;
        if old.config_hash != hash {
            return Err(Error::ConfigMismatch {
                expected: hash,
                found: old.config_hash,
            });
        }
    }

    let mut classes = BTreeSet::new();
    let mut jobs = Vec::new();
    for class_dir in list_dir(root)?.into_iter().filter(|p| p.is_dir()) {
        let class = class_dir.file_name().unwrap().to_string_lossy().into_owned();
        for split in [Split::Train, Split::Test] {
            let dir = class_dir.join(split.as_str());
            if !dir.is_dir() {
                continue;
            }
            for file in list_dir(&dir)? {
                let is_off = file
                    .extension()
                    .is_some_and(|x| x.eq_ignore_ascii_case("off"));
                if !is_off {
                    continue;
                }
                classes.insert(class.clone());
                let stem = file.file_stem().unwrap().to_string_lossy().into_owned();
                jobs.push((class.clone(), split, file, stem));
            }
        }
    }
    let classes: Vec<String> = classes.into_iter().collect();
    if jobs.is_empty() || classes.len() < 2 {
        return Err(Error::EmptyDataset(format!(
            "{} has {} classes with OFF files under train/ or test/ (need at least 2)",
            root.display(),
            classes.len()
        )));
    }
    let cache_dir = PathBuf::from(format!("spheres-{hash}"));
    let jobs: Vec<Job> = jobs
        .into_iter()
        .map(|(class, split, source, stem)| Job {
            label: classes.binary_search(&class).unwrap(),
            cache: cache_dir
                .join(&class)
                .join(split.as_str())
                .join(format!("{stem}.isph")),
            split,
            source,
        })
        .collect();

    let (n_int, n_ext) = config.side_counts();
    let schedule = config.schedule()?;
    let results: Vec<(usize, Result<(usize, bool)>)> = jobs
        .par_iter()
        .enumerate()
        .map(|(i, job)| {
            let path = cache_root.join(&job.cache);
            if let Ok(c) = SphereCache::read(&path) {
                if c.resolution == config.resolution && c.side == config.side && !c.is_empty() {
                    return (i, Ok((c.len(), false)));
                }
            }
            let built = (|| -> Result<usize> {
                let mesh = normalize(&load_off::<f64>(&job.source)?)?;
                let grid = voxelize_solid(&mesh, config.resolution)?;
                let sdf = compute_sdf::<f64>(&grid)?;
                let set = build_mixed(&sdf, n_int, n_ext, &schedule)?;
                let dir = path.parent().unwrap();
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                set.write_isph(&path)?;
                Ok(set.len())
            })();
            (i, built.map(|n| (n, true)))
        })
        .collect();

    let mut entries = Vec::new();
    let mut converted = 0;
    let mut reused = 0;
    let mut failed = Vec::new();
    for (i, res) in results {
        let job = &jobs[i];
        match res {
            Ok((found, fresh)) => {
                if fresh {
                    converted += 1;
                } else {
                    reused += 1;
                }
                entries.push(ManifestEntry {
                    source: job.source.clone(),
                    cache: job.cache.clone(),
                    split: job.split,
                    label: job.label,
                    found,
                });
            }
            Err(e) => {
                log::warn!("skipping {}: {e}", job.source.display());
                failed.push((job.source.clone(), e.to_string()));
            }
        }
    }
    if entries.is_empty() {
        return Err(Error::EmptyDataset("every mesh failed to convert".into()));
    }
    let manifest = DatasetManifest {
        config_hash: hash,
        resolution: config.resolution,
        n: config.spheres,
        side: config.side,
        d_schedule: config.d_schedule.clone(),
        classes,
        entries,
        root: cache_root.to_path_buf(),
    };
    fs::create_dir_all(cache_root).map_err(|e| Error::io(cache_root, e))?;
    manifest.save()?;
    Ok(IngestReport {
        manifest,
        converted,
        reused,
        failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spheres::Side;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cache(centers: Vec<[u16; 3]>, radii: Vec<f32>) -> SphereCache {
        SphereCache {
            resolution: 32,
            side: Side::Interior,
            contacts: vec![1; centers.len()],
            centers,
            radii,
        }
    }

    #[test]
    fn features_are_normalized_and_padded() {
        let c = cache(vec![[0, 31, 16], [10, 10, 10]], vec![16.0, 2.0]);
        let s: SphereSample<f32> = SphereSample::from_cache(&c, 4, 1);
        assert_eq!(s.n(), 4);
        assert_eq!(s.padded, 2);
        assert_eq!(s.features[0], [-31.0 / 32.0, 31.0 / 32.0, 1.0 / 32.0, 1.0]);
        assert_eq!(s.features[3], s.features[1]);
        let t: SphereSample<f32> = SphereSample::from_cache(&c, 1, 1);
        assert_eq!((t.n(), t.padded), (1, 0));
    }

    #[test]
    fn augmentation_keeps_radii_and_range() {
        let c = cache(vec![[0, 16, 16], [31, 31, 16], [5, 9, 30]], vec![3.0, 1.0, 2.0]);
        let s: SphereSample<f64> = SphereSample::from_cache(&c, 3, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a = s.augmented(&mut rng);
            for (x, y) in a.features.iter().zip(&s.features) {
                assert_eq!(x[3], y[3]);
                assert!(x[..3].iter().all(|c| c.abs() <= 1.0));
                // The up axis only sees jitter.
                assert!((x[1] - y[1]).abs() < 0.1);
            }
        }
    }

    #[test]
    fn prefix_tracks_padding() {
        let c = cache(vec![[1, 1, 1], [2, 2, 2]], vec![1.0, 1.0]);
        let s: SphereSample<f32> = SphereSample::from_cache(&c, 6, 0);
        assert_eq!(s.prefix(3).padded, 1);
        assert_eq!(s.prefix(2).padded, 0);
        assert_eq!(s.prefix(3).features, s.features[..3]);
    }

    #[test]
    fn manifest_text_round_trip() {
        let m = DatasetManifest {
            config_hash: "00ff".into(),
            resolution: 64,
            n: 32,
            side: Side::Exterior,
            d_schedule: vec![10.0, 5.0, 0.0],
            classes: vec!["a".into(), "b c".into()],
            entries: vec![ManifestEntry {
                source: "x/a/train/a 1.off".into(),
                cache: "spheres/a/train/a 1.isph".into(),
                split: Split::Train,
                label: 1,
                found: 30,
            }],
            root: "/tmp".into(),
        };
        assert_eq!(DatasetManifest::parse(&m.to_text(), "/tmp").unwrap(), m);
        assert!(DatasetManifest::parse("garbage", "/tmp").is_err());
    }

    #[test]
    fn empty_root_is_empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig::default();
        assert!(matches!(
            ingest(dir.path(), out.path(), &cfg),
            Err(Error::EmptyDataset(_))
        ));
    }
}
