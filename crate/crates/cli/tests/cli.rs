use std::collections::HashSet;
use std::path::Path;
use std::process::{Command, Output};

use slsim::config::Config;
use slsim::dataset::{Job, Manifest, MANIFEST_FILE};
use slsim::scene::AcceleratedScene;

fn slsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slsim"))
        .args(args)
        .env("RUST_LOG", "info")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, edit: impl FnOnce(&mut Config)) -> String {
    let mut cfg = Config::default();
    edit(&mut cfg);
    let path = dir.join("run.toml");
    std::fs::write(&path, cfg.to_toml_string().unwrap()).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn default_config_parses_back() {
    let out = slsim(&["default-config"]);
    assert!(out.status.success());
    let cfg = Config::from_toml_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(cfg, Config::default());
}

#[test]
fn simulate_writes_complete_reproducible_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), |c| c.scene.floor = true);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let run_a = slsim(&["simulate", "--config", &cfg, "--out", a.to_str().unwrap(), "--jobs", "2"]);
    assert!(run_a.status.success(), "{}", stderr(&run_a));
    assert!(stderr(&run_a).contains("frames/s"));

    let manifest = Manifest::read(&a.join(MANIFEST_FILE)).unwrap();
    assert_eq!(manifest.frames.len(), 12);
    assert_eq!(manifest.frame_count, 12);
    // every emitted file is listed exactly once
    let mut listed = HashSet::new();
    for f in &manifest.frames {
        assert!(listed.insert(f.depth.clone()));
        assert!(listed.insert(f.ir.clone().unwrap()));
    }
    let on_disk: HashSet<String> = std::fs::read_dir(a.join("frames"))
        .unwrap()
        .map(|e| format!("frames/{}", e.unwrap().file_name().to_string_lossy()))
        .collect();
    assert_eq!(listed, on_disk);

    let run_b = slsim(&["simulate", "--config", &cfg, "--out", b.to_str().unwrap(), "--jobs", "1"]);
    assert!(run_b.status.success(), "{}", stderr(&run_b));
    assert_eq!(Manifest::read(&b.join(MANIFEST_FILE)).unwrap(), manifest);
    for name in &on_disk {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap(),
            "{name} differs between runs"
        );
    }

    // re-render one frame from its manifest record
    let rec = &manifest.frames[5];
    let job = Job::prepare(Config::load(Path::new(&cfg)).unwrap(), dir.path()).unwrap();
    let accel = AcceleratedScene::build(&job.scene);
    let frame = job.render(&accel, rec.index, &rec.pose.pose(), rec.seed).unwrap();
    let again = dir.path().join("again.png");
    frame.depth.write_png(&again).unwrap();
    assert_eq!(std::fs::read(&again).unwrap(), std::fs::read(a.join(&rec.depth)).unwrap());
}

#[test]
fn interrupted_runs_resume() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), |c| c.output.write_ir = false);
    let out = dir.path().join("ds");
    let args = ["simulate", "--config", &cfg, "--out", out.to_str().unwrap(), "--count", "3"];
    assert!(slsim(&args).status.success());
    let first = std::fs::read(out.join("frames/000002_depth.png")).unwrap();
    std::fs::remove_file(out.join("frames/000002_depth.png")).unwrap();
    let again = slsim(&args);
    assert!(again.status.success());
    assert!(String::from_utf8_lossy(&again.stdout).contains("1 frames written, 2 skipped"));
    assert_eq!(std::fs::read(out.join("frames/000002_depth.png")).unwrap(), first);

    // a different config must not resume into the same directory
    let other = write_config(dir.path(), |c| c.noise.gaussian_sigma = 0.01);
    let clash = slsim(&["simulate", "--config", &other, "--out", out.to_str().unwrap(), "--count", "3"]);
    assert_eq!(clash.status.code(), Some(3), "{}", stderr(&clash));
}

#[test]
fn benchmark_overrides_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench");
    let run = slsim(&[
        "benchmark", "--out", out.to_str().unwrap(), "--distances", "1.0", "--seeds", "1",
    ]);
    assert!(run.status.success(), "{}", stderr(&run));
    let csv = std::fs::read_to_string(out.join("benchmark.csv")).unwrap();
    assert!(csv.starts_with("distance_m,tilt_deg,seed,valid_fraction,std_error_mm,bin0,"));
    assert_eq!(csv.lines().count(), 1 + 9);
    for svg in ["error_vs_distance.svg", "error_vs_tilt.svg", "error_vs_radius.svg"] {
        assert!(out.join(svg).exists());
    }

    let bad = slsim(&["benchmark", "--out", out.to_str().unwrap(), "--tilts", "95"]);
    assert_eq!(bad.status.code(), Some(6));
    assert!(stderr(&bad).contains("tilt 95"));
}

#[test]
fn default_benchmark_grid_size() {
    let s = Config::default().benchmark_settings();
    assert_eq!(s.distances.len() * s.tilts.len() * s.seeds as usize, 7 * 9 * 5);
}

#[test]
fn inspect_and_pattern_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("inspect");
    let run = slsim(&["inspect", "--out", out.to_str().unwrap(), "--frame", "2"]);
    assert!(run.status.success(), "{}", stderr(&run));
    for f in ["ir.png", "ir_noisy.png", "disparity.pfm", "depth_raw.png", "depth.png"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let bad = slsim(&["inspect", "--out", out.to_str().unwrap(), "--frame", "99"]);
    assert_eq!(bad.status.code(), Some(6));

    let png = dir.path().join("pattern.png");
    assert!(slsim(&["pattern", "--out", png.to_str().unwrap()]).status.success());
    assert!(png.exists());
}

#[test]
fn missing_assets_exit_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = slsim(&["simulate", "--config", "/no/such/run.toml", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr(&out).contains("/no/such/run.toml"));

    let cfg = write_config(dir.path(), |c| {
        c.scene.target = slsim::config::TargetKind::Mesh;
        c.scene.mesh_path = "meshes/missing.ply".into();
    });
    let out = slsim(&["simulate", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr(&out).contains("meshes/missing.ply"));
}
