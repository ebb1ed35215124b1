use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use insphere::config::PipelineConfig;
use insphere::dataset::{ingest, DatasetManifest, Split, MANIFEST_FILE};
use insphere::mesh::{box_mesh, write_off};
use insphere::net::{evaluate, NetPreset};
use insphere::pipeline::{load_samples, train_on_manifest};
use insphere::shapes::icosphere;
use insphere::spheres::Side;
use insphere::synthetic::write_dataset;
use insphere::{Error, MeshF64};

fn small_config() -> PipelineConfig {
    PipelineConfig {
        resolution: 32,
        spheres: 32,
        epochs: 3,
        batch_size: 8,
        ..Default::default()
    }
}

#[test]
fn ingest_reuses_caches_and_rejects_other_configs() {
    let data = tempfile::tempdir().unwrap();
    let cache = tempfile::tempdir().unwrap();
    write_dataset(data.path(), &["cone", "torus"], 3, 2, 5).unwrap();
    let cfg = small_config();
    let first = ingest(data.path(), cache.path(), &cfg).unwrap();
    assert_eq!((first.converted, first.reused), (10, 0));
    assert_eq!(first.manifest.classes, ["cone", "torus"]);
    let second = ingest(data.path(), cache.path(), &cfg).unwrap();
    assert_eq!((second.converted, second.reused), (0, 10));
    assert_eq!(second.manifest, first.manifest);

    let other = PipelineConfig { spheres: 16, ..cfg.clone() };
    assert!(matches!(
        ingest(data.path(), cache.path(), &other),
        Err(Error::ConfigMismatch { .. })
    ));

    let reread = DatasetManifest::load(cache.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(reread, first.manifest);
    let test: Vec<insphere::SphereSampleF32> = load_samples(&reread, Split::Test, Some(8)).unwrap();
    assert_eq!(test.len(), 4);
    assert!(test.iter().all(|s| s.n() == 8));
}

#[test]
fn broken_meshes_are_skipped_and_corrupt_caches_reported() {
    let data = tempfile::tempdir().unwrap();
    let cache = tempfile::tempdir().unwrap();
    write_dataset(data.path(), &["bottle", "cone"], 2, 1, 2).unwrap();
    let bad = data.path().join("cone/train/broken.off");
    fs::write(&bad, "OFF\n3 1 0\n0 0 0\n1 0 0\n").unwrap();
    let report = ingest(data.path(), cache.path(), &small_config()).unwrap();
    assert_eq!(report.failed.len(), 1);
    assert_eq!(report.failed[0].0, bad);
    assert_eq!(report.manifest.entries.len(), 6);

    let entry = &report.manifest.split(Split::Train)[0];
    fs::write(report.manifest.cache_path(entry), b"ISPH").unwrap();
    let err = report.manifest.load_split::<f32>(Split::Train).unwrap_err();
    assert!(matches!(err, Error::CacheCorrupt { .. }), "{err}");
}

#[test]
fn single_class_root_is_empty_dataset() {
    let data = tempfile::tempdir().unwrap();
    let cache = tempfile::tempdir().unwrap();
    write_dataset(data.path(), &["cone"], 2, 1, 2).unwrap();
    assert!(matches!(
        ingest(data.path(), cache.path(), &small_config()),
        Err(Error::EmptyDataset(_))
    ));
}

fn write_balls_and_boxes(root: &Path, per_class: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for class in ["ball", "box"] {
        let dir = root.join(class).join("train");
        fs::create_dir_all(&dir).unwrap();
        for i in 0..per_class {
            let mesh: MeshF64 = if class == "ball" {
                let r = rng.random_range(0.5..1.5);
                icosphere::<f64>(3).transformed(r, [0.0; 3])
            } else {
                let hi = [0; 3].map(|_| rng.random_range(0.2..1.0));
                box_mesh(hi.map(|h| -h), hi)
            };
            write_off(&mesh, dir.join(format!("{class}_{i:02}.off"))).unwrap();
        }
    }
}

/// Mean-radius and radius-spread features.
fn radius_features(s: &insphere::SphereSampleF64) -> [f64; 2] {
    let r: Vec<f64> = s.features.iter().map(|f| f[3]).collect();
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    let var = r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / r.len() as f64;
    [mean, var.sqrt()]
}

/// Plain gradient-descent logistic regression; returns training accuracy.
fn logistic_oracle(x: &[[f64; 2]], y: &[usize]) -> f64 {
    let mut w = [0.0; 3];
    for _ in 0..20_000 {
        let mut g = [0.0; 3];
        for (xi, &yi) in x.iter().zip(y) {
            let z = w[0] * xi[0] + w[1] * xi[1] + w[2];
            let p = 1.0 / (1.0 + (-z).exp());
            let e = p - yi as f64;
            g[0] += e * xi[0];
            g[1] += e * xi[1];
            g[2] += e;
        }
        for k in 0..3 {
            w[k] -= 5.0 * g[k] / x.len() as f64;
        }
    }
    let hits = x
        .iter()
        .zip(y)
        .filter(|(xi, &yi)| ((w[0] * xi[0] + w[1] * xi[1] + w[2] > 0.0) as usize) == yi)
        .count();
    hits as f64 / x.len() as f64
}

#[test]
fn balls_versus_boxes_is_learned() {
    let data = tempfile::tempdir().unwrap();
    let cache = tempfile::tempdir().unwrap();
    write_balls_and_boxes(data.path(), 20, 3);
    let cfg = PipelineConfig {
        resolution: 32,
        spheres: 32,
        side: Side::Interior,
        net: NetPreset::T2_256,
        epochs: 50,
        batch_size: 8,
        seed: 1,
        ..Default::default()
    };
    let m = ingest(data.path(), cache.path(), &cfg).unwrap().manifest;
    assert_eq!(m.split(Split::Train).len(), 40);

    let train64: Vec<insphere::SphereSampleF64> = load_samples(&m, Split::Train, None).unwrap();
    let x: Vec<[f64; 2]> = train64.iter().map(radius_features).collect();
    let y: Vec<usize> = train64.iter().map(|s| s.label).collect();
    let oracle = logistic_oracle(&x, &y);
    assert!(oracle >= 0.95, "radius statistics do not separate the classes: {oracle}");

    let (net, log) = train_on_manifest::<f32>(&m, &cfg, |_| {}).unwrap();
    let train: Vec<insphere::SphereSampleF32> = load_samples(&m, Split::Train, None).unwrap();
    let acc = evaluate(&net, &train).unwrap().accuracy();
    assert!(acc >= 0.95, "train accuracy {acc}");
    assert_eq!(log.epochs.len(), 50);
    assert!(log.epochs[49].train_loss < log.epochs[0].train_loss);
}
