//! Glue between a cached dataset and the network: training from a manifest,
//! evaluation reports, and accuracy-versus-sphere-count sweeps.

use std::fmt::Write as _;

use crate::config::PipelineConfig;
use crate::dataset::{DatasetManifest, SphereSample, Split};
use crate::error::{Error, Result};
use crate::net::{evaluate, train, Evaluation, SphereNet, TrainConfig, TrainingLog};
use crate::scalar::Real;

pub fn train_config(config: &PipelineConfig) -> TrainConfig {
    TrainConfig {
        epochs: config.epochs,
        batch_size: config.batch_size,
        learning_rate: config.learning_rate,
        augment: config.augment,
        seed: config.seed,
        ..TrainConfig::default()
    }
}

/// Samples of a split, truncated to the first `n` spheres when given.
pub fn load_samples<T: Real>(
    manifest: &DatasetManifest,
    split: Split,
    n: Option<usize>,
) -> Result<Vec<SphereSample<T>>> {
    let samples = manifest.load_split::<T>(split)?;
    Ok(match n {
        Some(k) => samples.iter().map(|s| s.prefix(k)).collect(),
        None => samples,
    })
}

/// Checkpoint metadata: config hash and class names.
pub fn checkpoint_meta(config_hash: &str, classes: &[String]) -> String {
    format!("config_hash={config_hash}\nclasses={}", classes.join("\t"))
}

/// Inverse of [`checkpoint_meta`].
pub fn parse_checkpoint_meta(meta: &str) -> (Option<String>, Vec<String>) {
    let mut hash = None;
    let mut classes = Vec::new();
    for line in meta.lines() {
        if let Some(h) = line.strip_prefix("config_hash=") {
            hash = Some(h.to_string());
        } else if let Some(c) = line.strip_prefix("classes=") {
            classes = c.split('\t').filter(|s| !s.is_empty()).map(String::from).collect();
        }
    }
    (hash, classes)
}

/// Builds the configured network for the manifest's classes and trains it.
pub fn train_on_manifest<T: Real>(
    manifest: &DatasetManifest,
    config: &PipelineConfig,
    on_epoch: impl FnMut(&crate::net::EpochLog),
) -> Result<(SphereNet<T>, TrainingLog)> {
    if manifest.config_hash != config.hash() {
        return Err(Error::ConfigMismatch {
            expected: config.hash(),
            found: manifest.config_hash.clone(),
        });
    }
    let train_set = load_samples::<T>(manifest, Split::Train, None)?;
    let test_set = load_samples::<T>(manifest, Split::Test, None)?;
    let mut net = SphereNet::new(config.net.config(manifest.k())?, config.seed)?;
    let log = train(&mut net, &train_set, &test_set, &train_config(config), on_epoch)?;
    Ok((net, log))
}

/// `class,correct,total,accuracy` rows plus an `overall` row.
pub fn evaluation_csv(eval: &Evaluation, classes: &[String], comment: Option<&str>) -> String {
    let mut s = String::new();
    if let Some(c) = comment {
        writeln!(s, "# {c}").unwrap();
    }
    s.push_str("class,correct,total,accuracy\n");
    for (i, &(c, t)) in eval.per_class.iter().enumerate() {
        let name = classes.get(i).map(String::as_str).unwrap_or("?");
        let acc = if t == 0 { 0.0 } else { c as f64 / t as f64 };
        writeln!(s, "{name},{c},{t},{acc:.6}").unwrap();
    }
    writeln!(s, "overall,{},{},{:.6}", eval.correct, eval.total, eval.accuracy()).unwrap();
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    pub accuracy: f64,
    pub mean_class_accuracy: f64,
}

/// Test accuracy for each sphere count, evaluated on prefixes of the cached sets.
pub fn sweep<T: Real>(net: &SphereNet<T>, samples: &[SphereSample<T>], counts: &[usize]) -> Result<Vec<SweepRow>> {
    let cached = samples.iter().map(|s| s.n()).min().unwrap_or(0);
    counts
        .iter()
        .map(|&n| {
            if n == 0 || n > cached {
                return Err(Error::InvalidArgument(format!(
                    "sphere count {n} outside 1..={cached}"
                )));
            }
            let truncated: Vec<SphereSample<T>> = samples.iter().map(|s| s.prefix(n)).collect();
            let e = evaluate(net, &truncated)?;
            Ok(SweepRow {
                n,
                accuracy: e.accuracy(),
                mean_class_accuracy: e.mean_class_accuracy(),
            })
        })
        .collect()
}

/// `n,accuracy,mean_class_accuracy`, followed by a trend comment.
pub fn sweep_csv(rows: &[SweepRow], comment: Option<&str>) -> String {
    let mut s = String::new();
    if let Some(c) = comment {
        writeln!(s, "# {c}").unwrap();
    }
    s.push_str("n,accuracy,mean_class_accuracy\n");
    for r in rows {
        writeln!(s, "{},{:.6},{:.6}", r.n, r.accuracy, r.mean_class_accuracy).unwrap();
    }
    let mut by_n: Vec<&SweepRow> = rows.iter().collect();
    by_n.sort_by_key(|r| std::cmp::Reverse(r.n));
    let monotone = by_n.windows(2).all(|w| w[1].accuracy <= w[0].accuracy);
    writeln!(
        s,
        "# trend: {}",
        if monotone { "non-increasing as n decreases" } else { "not monotone" }
    )
    .unwrap();
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::NetConfig;

    #[test]
    fn meta_round_trip() {
        let classes = vec!["a".to_string(), "night stand".to_string()];
        let (h, c) = parse_checkpoint_meta(&checkpoint_meta("0123", &classes));
        assert_eq!(h.as_deref(), Some("0123"));
        assert_eq!(c, classes);
    }

    #[test]
    fn equal_counts_give_identical_rows() {
        let net = SphereNet::<f64>::new(NetConfig::new(vec![8], vec![], 2).unwrap(), 1).unwrap();
        let samples: Vec<_> = (0..6)
            .map(|i| SphereSample {
                features: (0..8).map(|j| [0.1 * j as f64, -0.05 * i as f64, 0.0, 0.2]).collect(),
                label: i % 2,
                padded: 0,
            })
            .collect();
        let rows = sweep(&net, &samples, &[8, 8, 4]).unwrap();
        assert_eq!(rows[0], rows[1]);
        assert!(sweep(&net, &samples, &[9]).is_err());
        let csv = sweep_csv(&rows, Some("config_hash=x"));
        assert!(csv.starts_with("# config_hash=x\nn,accuracy,mean_class_accuracy\n8,"));
    }
}
