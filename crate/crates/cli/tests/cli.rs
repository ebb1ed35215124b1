use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn insphere(args: &[&str], cache: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_insphere"));
    cmd.args(args).env_remove("INSPHERE_CACHE_DIR");
    if let Some(c) = cache {
        cmd.env("INSPHERE_CACHE_DIR", c);
    }
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&insphere(&["--help"], None)), 0);
    assert_eq!(code(&insphere(&["stats", "--side", "sideways"], None)), 1);
    assert_eq!(code(&insphere(&["frobnicate"], None)), 1);
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.off");
    assert_eq!(code(&insphere(&["voxelize", missing.to_str().unwrap()], None)), 1);
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "resolutoin = 64\n").unwrap();
    assert_eq!(code(&insphere(&["stats", "--config", cfg.to_str().unwrap()], None)), 1);
}

#[test]
fn malformed_inputs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let off = dir.path().join("bad.off");
    fs::write(&off, "OFF\n3 1 0\n0 0 0\n1 0 zero\n0 1 0\n3 0 1 2\n").unwrap();
    assert_eq!(code(&insphere(&["voxelize", off.to_str().unwrap()], None)), 2);
    let isph = dir.path().join("bad.isph");
    fs::write(&isph, b"nope").unwrap();
    let out = dir.path().join("x.ply");
    let o = insphere(&["export", isph.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert_eq!(code(&o), 2);
}

#[test]
fn stats_reports_exact_counts() {
    let o = insphere(&["stats"], None);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.contains("t2-256,\"mlp(4,64,128,256), fc(256,40)\",52840,896,"), "{text}");
    assert!(text.contains("t2-1024,"));
    let one = stdout(&insphere(&["stats", "--net", "t2-512", "--classes", "10"], None));
    assert_eq!(one.lines().count(), 2);
}

#[test]
fn single_mesh_commands() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let d = |p: &str| dir.path().join(p).to_str().unwrap().to_string();
    assert_eq!(code(&insphere(&["synth", data.to_str().unwrap(), "--classes", "torus", "--train", "1", "--test", "0"], None)), 0);
    let mesh = data.join("torus/train/torus_0001.off");
    let mesh = mesh.to_str().unwrap();
    for (cmd, file) in [("voxelize", "t.ivox"), ("sdf", "t.isdf"), ("spheres", "t.isph")] {
        let o = insphere(&[cmd, mesh, "--resolution", "32", "--spheres", "16", "--out", &d(file)], None);
        assert_eq!(code(&o), 0, "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(fs::metadata(d(file)).unwrap().len() > 8);
    }
    let o = insphere(&["export", &d("t.isph"), "--out", &d("t.obj")], None);
    assert_eq!(code(&o), 0);
    let obj = fs::read_to_string(d("t.obj")).unwrap();
    assert_eq!(obj.matches("\no sphere_").count(), 16);
    assert!(fs::read_to_string(d("spheres.mtl")).unwrap().contains("newmtl critical"));
    let o = insphere(&["export", &d("t.isph"), "--out", &d("t.stl")], None);
    assert_eq!(code(&o), 1);
}

fn pipeline(work: &Path) -> (String, String, String) {
    let data = work.join("data");
    let cache = work.join("cache");
    let model = work.join("model.inet");
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let common = ["--resolution", "32", "--spheres", "16", "--epochs", "3", "--seed", "4"];
    let run = |args: &[&str]| {
        let mut all: Vec<&str> = args.to_vec();
        all.extend_from_slice(&common);
        let o = insphere(&all, Some(&cache));
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        stdout(&o)
    };
    run(&["synth", &s(&data), "--classes", "cone,torus", "--train", "4", "--test", "2"]);
    run(&["ingest", &s(&data)]);
    assert!(cache.join("manifest.txt").exists());
    run(&["train", "--out", &s(&model)]);
    let eval = run(&["eval", "--model", &s(&model)]);
    let sweep = run(&["sweep", "--model", &s(&model), "--counts", "16,8"]);
    let isph = fs::read_dir(fs::read_dir(&cache).unwrap().flatten().find(|e| e.path().is_dir()).unwrap().path().join("cone/test"))
        .unwrap()
        .flatten()
        .next()
        .unwrap()
        .path();
    let crit = run(&["critical", "--model", &s(&model), &s(&isph)]);
    assert!(crit.contains("critical of 16"));
    run(&["export", &s(&isph), "--model", &s(&model), "--out", &s(&work.join("c.ply"))]);
    let ply = fs::read_to_string(work.join("c.ply")).unwrap();
    assert!(ply.contains("comment config_hash="));
    assert!(ply.contains(" 220 40 40\n"));
    let log = fs::read_to_string(work.join("model_log.csv")).unwrap();
    (eval, sweep, log)
}

#[test]
fn end_to_end_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (eval_a, sweep_a, log_a) = pipeline(a.path());
    let (eval_b, sweep_b, log_b) = pipeline(b.path());
    assert!(eval_a.starts_with("# config_hash="));
    assert!(eval_a.contains("\noverall,"));
    assert_eq!(log_a.lines().count(), 5);
    assert!(sweep_a.lines().nth(1) == Some("n,accuracy,mean_class_accuracy"));
    assert_eq!((eval_a, sweep_a, log_a), (eval_b, sweep_b, log_b));
}

#[test]
fn train_without_ingest_is_user_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = insphere(&["train"], Some(&dir.path().join("nothing")));
    assert_eq!(code(&o), 1);
}
