use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use insphere::config::PipelineConfig;
use insphere::dataset::{ingest, DatasetManifest, Split, MANIFEST_FILE};
use insphere::export::{write_export, ExportFormat};
use insphere::mesh::{load_off, normalize};
use insphere::net::{
    evaluate, load_checkpoint, model_stats, save_checkpoint, NetPreset, SphereNet,
};
use insphere::pipeline::{
    checkpoint_meta, evaluation_csv, load_samples, parse_checkpoint_meta, sweep, sweep_csv,
    train_on_manifest,
};
use insphere::sdf::compute_sdf;
use insphere::spheres::{build_mixed, Side, SphereCache};
use insphere::synthetic::{write_dataset, CLASSES, DESK_CLASSES};
use insphere::voxel::voxelize_solid;
use insphere::{Error, SphereSampleF32};

const DEFAULT_CACHE_DIR: &str = "insphere-cache";

#[derive(Parser)]
#[command(name = "insphere", version, about = "Infilling-sphere shape classification pipeline")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML pipeline config; flags below override its fields.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    resolution: Option<usize>,
    #[arg(long, global = true)]
    spheres: Option<usize>,
    #[arg(long, global = true, value_parser = ["interior", "exterior", "mixed"])]
    side: Option<String>,
    #[arg(long, global = true, value_parser = ["t2-1024", "t2-512", "t2-256"])]
    net: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// Cache root for ingested sphere sets.
    #[arg(long, global = true, env = "INSPHERE_CACHE_DIR", value_name = "DIR")]
    cache_dir: Option<PathBuf>,
    /// Output file (or directory for `synth`).
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solid-voxelize an OFF mesh into an IVOX file.
    Voxelize { mesh: PathBuf },
    /// Signed distance field of an OFF mesh into an ISDF file.
    Sdf { mesh: PathBuf },
    /// Infilling spheres of an OFF mesh into an ISPH file.
    Spheres { mesh: PathBuf },
    /// Convert a ModelNet-style directory into cached sphere sets.
    Ingest { root: PathBuf },
    /// Train on the ingested cache; writes a checkpoint and a CSV log.
    Train,
    /// Per-class and overall accuracy of a checkpoint.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Evaluate on the first N spheres of each set.
        #[arg(long)]
        prefix: Option<usize>,
    },
    /// Indices of the spheres that reach the global max pool.
    Critical {
        #[arg(long)]
        model: PathBuf,
        sample: PathBuf,
    },
    /// Render a sphere cache as PLY or OBJ, optionally highlighting critical spheres.
    Export {
        sample: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        /// ply or obj; defaults to the output extension.
        #[arg(long)]
        format: Option<String>,
    },
    /// Parameter and FLOP counts.
    Stats {
        #[arg(long, default_value_t = 40)]
        classes: usize,
    },
    /// Accuracy versus sphere count by prefix truncation.
    Sweep {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        counts: Vec<usize>,
    },
    /// Write a procedural ModelNet-style corpus.
    Synth {
        root: PathBuf,
        #[arg(long, value_delimiter = ',')]
        classes: Option<Vec<String>>,
        #[arg(long, default_value_t = 20)]
        train: usize,
        #[arg(long, default_value_t = 10)]
        test: usize,
    },
}

/// Exit status by error category.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. }
        | Error::InvalidArgument(_)
        | Error::Config(_)
        | Error::ConfigMismatch { .. }
        | Error::UnsupportedFormat(_)
        | Error::ResolutionTooLarge { .. }
        | Error::ResolutionTooSmall(_) => 1,
        Error::Parse { .. }
        | Error::EmptyMesh
        | Error::DegenerateMesh(_)
        | Error::EmptyGrid
        | Error::NoCandidates(_)
        | Error::EmptyDataset(_)
        | Error::CacheCorrupt { .. }
        | Error::ShapeMismatch(_) => 2,
        Error::DivergedTraining { .. } => 3,
    }
}

impl Global {
    fn pipeline_config(&self) -> Result<PipelineConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(r) = self.resolution {
            cfg.resolution = r;
        }
        if let Some(n) = self.spheres {
            cfg.spheres = n;
        }
        if let Some(s) = &self.side {
            cfg.side = s.parse::<Side>()?;
        }
        if let Some(n) = &self.net {
            cfg.net = n.parse::<NetPreset>()?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(c) = &self.cache_dir {
            cfg.cache_dir = Some(c.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_or(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }
}

fn cache_root(cfg: &PipelineConfig) -> PathBuf {
    cfg.cache_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR))
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })?;
    }
    fs::write(path, text).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn stem_with(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

/// Checkpoint plus its class names; refuses checkpoints from another geometry config.
fn load_model(path: &Path, manifest: Option<&DatasetManifest>) -> Result<(SphereNet<f32>, Vec<String>), Error> {
    let (net, meta) = load_checkpoint::<f32>(path)?;
    let (hash, classes) = parse_checkpoint_meta(&meta);
    if let (Some(m), Some(h)) = (manifest, hash) {
        if m.config_hash != h {
            return Err(Error::ConfigMismatch { expected: m.config_hash.clone(), found: h });
        }
    }
    Ok((net, classes))
}

fn load_manifest(cfg: &PipelineConfig) -> Result<DatasetManifest, Error> {
    let path = cache_root(cfg).join(MANIFEST_FILE);
    if !path.exists() {
        return Err(Error::InvalidArgument(format!(
            "no manifest at {}; run `insphere ingest` first",
            path.display()
        )));
    }
    DatasetManifest::load(path)
}

fn run(cli: Cli) -> Result<(), Error> {
    let g = &cli.global;
    let cfg = g.pipeline_config()?;
    let hash_line = format!("config_hash={}", cfg.hash());
    match &cli.command {
        Command::Voxelize { mesh } => {
            let m = normalize(&load_off::<f64>(mesh)?)?;
            let grid = voxelize_solid(&m, cfg.resolution)?;
            let out = g.out_or("out.ivox");
            grid.write_ivox(&out, cfg.hash_tag())?;
            println!("{} occupied voxels at {}³ -> {}", grid.occupied_count(), cfg.resolution, out.display());
        }
        Command::Sdf { mesh } => {
            let m = normalize(&load_off::<f64>(mesh)?)?;
            let sdf = compute_sdf::<f32>(&voxelize_solid(&m, cfg.resolution)?)?;
            let out = g.out_or("out.isdf");
            sdf.write_isdf(&out)?;
            println!("{} surface voxels -> {}", sdf.surface_voxels().len(), out.display());
        }
        Command::Spheres { mesh } => {
            let m = normalize(&load_off::<f64>(mesh)?)?;
            let sdf = compute_sdf::<f32>(&voxelize_solid(&m, cfg.resolution)?)?;
            let (ni, ne) = cfg.side_counts();
            let set = build_mixed(&sdf, ni, ne, &cfg.schedule()?)?;
            let out = g.out_or("out.isph");
            set.write_isph(&out)?;
            println!("{} of {} spheres -> {}", set.len(), cfg.spheres, out.display());
        }
        Command::Ingest { root } => {
            let report = ingest(root, cache_root(&cfg), &cfg)?;
            println!(
                "{} samples in {} classes ({} converted, {} reused, {} failed); {}",
                report.manifest.entries.len(),
                report.manifest.k(),
                report.converted,
                report.reused,
                report.failed.len(),
                hash_line
            );
            for (path, msg) in &report.failed {
                eprintln!("failed: {}: {msg}", path.display());
            }
        }
        Command::Train => {
            let manifest = load_manifest(&cfg)?;
            let (net, log) = train_on_manifest::<f32>(&manifest, &cfg, |e| {
                log::info!("epoch {} loss {:.4} test {:.3}", e.epoch, e.train_loss, e.test_acc)
            })?;
            let out = g.out_or("model.inet");
            save_checkpoint(&net, &checkpoint_meta(&manifest.config_hash, &manifest.classes), &out)?;
            let log_path = stem_with(&out, "_log.csv");
            write_text(&log_path, &log.to_csv(Some(&hash_line)))?;
            let last = log.last().map(|e| e.test_acc).unwrap_or(0.0);
            println!("test accuracy {:.4}; checkpoint {}; log {}", last, out.display(), log_path.display());
        }
        Command::Eval { model, split, prefix } => {
            let manifest = load_manifest(&cfg)?;
            let (net, _) = load_model(model, Some(&manifest))?;
            let samples = load_samples::<f32>(&manifest, split.parse::<Split>()?, *prefix)?;
            let e = evaluate(&net, &samples)?;
            let csv = evaluation_csv(&e, &manifest.classes, Some(&hash_line));
            match &g.out {
                Some(p) => write_text(p, &csv)?,
                None => print!("{csv}"),
            }
        }
        Command::Critical { model, sample } => {
            let (net, _) = load_model(model, None)?;
            let cache = SphereCache::read(sample)?;
            let s = SphereSampleF32::from_cache(&cache, cache.len(), 0);
            let idx = net.critical_spheres(&s)?;
            let list: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
            println!("{} critical of {}: {}", idx.len(), cache.len(), list.join(","));
        }
        Command::Export { sample, model, format } => {
            let cache = SphereCache::read(sample)?;
            let out = g.out_or("spheres.ply");
            let fmt = match format {
                Some(f) => f.parse()?,
                None => ExportFormat::from_path(&out)?,
            };
            let critical = match model {
                Some(m) => {
                    let (net, _) = load_model(m, None)?;
                    net.critical_spheres(&SphereSampleF32::from_cache(&cache, cache.len(), 0))?
                }
                None => vec![],
            };
            write_export(&cache, &critical, fmt, &hash_line, &out)?;
            println!("{} spheres ({} critical) -> {}", cache.len(), critical.len(), out.display());
        }
        Command::Stats { classes } => {
            let presets = match &g.net {
                Some(_) => vec![cfg.net],
                None => NetPreset::ALL.to_vec(),
            };
            println!("net,layout,params,running_stats,flops,n");
            for p in presets {
                let c = p.config(*classes)?;
                let s = model_stats(&c, cfg.spheres);
                println!(
                    "{p},\"{}\",{},{},{},{}",
                    c.describe(),
                    s.trainable_params,
                    s.running_stats,
                    s.flops(),
                    s.n
                );
            }
        }
        Command::Sweep { model, counts } => {
            let manifest = load_manifest(&cfg)?;
            let (net, _) = load_model(model, Some(&manifest))?;
            let samples = load_samples::<f32>(&manifest, Split::Test, None)?;
            let rows = sweep(&net, &samples, counts)?;
            let csv = sweep_csv(&rows, Some(&hash_line));
            match &g.out {
                Some(p) => write_text(p, &csv)?,
                None => print!("{csv}"),
            }
        }
        Command::Synth { root, classes, train, test } => {
            let names: Vec<&str> = match classes {
                Some(c) => c.iter().map(String::as_str).collect(),
                None => DESK_CLASSES.to_vec(),
            };
            if let Some(bad) = names.iter().find(|c| !CLASSES.contains(c)) {
                return Err(Error::InvalidArgument(format!(
                    "unknown class {bad:?}; available: {}",
                    CLASSES.join(",")
                )));
            }
            let n = write_dataset(root, &names, *train, *test, cfg.seed)?;
            println!("{n} meshes -> {}", root.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // Usage errors are user errors; help and version exit cleanly.
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(_) => ExitCode::from(3),
    }
}
