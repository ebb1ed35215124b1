//! Pipeline settings shared by ingestion, training and the command line.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::net::NetPreset;
use crate::spheres::{DSchedule, Side, REFERENCE_SCHEDULE};

/// Everything needed to reproduce a run. Loaded from a TOML file; every field
/// has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub resolution: usize,
    /// Spheres per object (for `mixed`, split evenly, interior first).
    pub spheres: usize,
    pub side: Side,
    /// Separation gaps in voxels at 512³; rescaled to `resolution`.
    pub d_schedule: Vec<f64>,
    pub net: NetPreset,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub augment: bool,
    pub data_root: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            resolution: 64,
            spheres: 64,
            side: Side::Interior,
            d_schedule: REFERENCE_SCHEDULE.to_vec(),
            net: NetPreset::T2_256,
            seed: 0,
            epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            augment: true,
            data_root: None,
            cache_dir: None,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution < crate::voxel::MIN_RESOLUTION {
            return Err(Error::Config(format!("resolution {} below 8", self.resolution)));
        }
        if self.resolution > u16::MAX as usize {
            return Err(Error::Config("resolution exceeds 16-bit sphere coordinates".into()));
        }
        if self.spheres == 0 {
            return Err(Error::Config("sphere count must be positive".into()));
        }
        if self.side == Side::Mixed && self.spheres < 2 {
            return Err(Error::Config("mixed sets need at least two spheres".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        self.schedule().map(|_| ())
    }

    /// Separation schedule in voxels at this resolution.
    pub fn schedule(&self) -> Result<DSchedule> {
        DSchedule::scaled(&self.d_schedule, self.resolution)
            .map_err(|e| Error::Config(e.to_string()))
    }

    /// `(interior, exterior)` sphere counts.
    pub fn side_counts(&self) -> (usize, usize) {
        match self.side {
            Side::Interior => (self.spheres, 0),
            Side::Exterior => (0, self.spheres),
            Side::Mixed => (self.spheres.div_ceil(2), self.spheres / 2),
        }
    }

    /// Canonical description of the fields that change cached geometry.
    pub fn geometry_key(&self) -> String {
        let d: Vec<String> = self.d_schedule.iter().map(|d| format!("{d}")).collect();
        format!(
            "resolution={};spheres={};side={};d_schedule={}",
            self.resolution,
            self.spheres,
            self.side,
            d.join(",")
        )
    }

    /// Short hex digest of [`Self::geometry_key`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.geometry_key().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Hash prefix as the 8 tag bytes used in binary headers.
    pub fn hash_tag(&self) -> [u8; 8] {
        let digest = Sha256::digest(self.geometry_key().as_bytes());
        digest[..8].try_into().unwrap()
    }
}

impl FromStr for PipelineConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let cfg = PipelineConfig {
            side: Side::Mixed,
            net: NetPreset::T2_1024,
            seed: 17,
            ..Default::default()
        };
        let back: PipelineConfig = cfg.to_toml().parse().unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file_uses_defaults() {
        let cfg: PipelineConfig = "resolution = 32\nside = \"exterior\"\nnet = \"t2-512\"\n"
            .parse()
            .unwrap();
        assert_eq!(cfg.resolution, 32);
        assert_eq!(cfg.side, Side::Exterior);
        assert_eq!(cfg.net, NetPreset::T2_512);
        assert_eq!(cfg.spheres, 64);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!("resolutoin = 32".parse::<PipelineConfig>().is_err());
        assert!("resolution = 4".parse::<PipelineConfig>().is_err());
    }

    #[test]
    fn hash_covers_geometry_only() {
        let base = PipelineConfig::default();
        let h = base.hash();
        assert_eq!(h.len(), 16);
        let seeded = PipelineConfig { seed: 99, epochs: 3, ..base.clone() };
        assert_eq!(seeded.hash(), h);
        for changed in [
            PipelineConfig { resolution: 32, ..base.clone() },
            PipelineConfig { spheres: 32, ..base.clone() },
            PipelineConfig { side: Side::Exterior, ..base.clone() },
            PipelineConfig { d_schedule: vec![8.0, 0.0], ..base.clone() },
        ] {
            assert_ne!(changed.hash(), h);
        }
    }

    #[test]
    fn mixed_counts_split_evenly() {
        let cfg = PipelineConfig { side: Side::Mixed, spheres: 1024, ..Default::default() };
        assert_eq!(cfg.side_counts(), (512, 512));
    }
}
