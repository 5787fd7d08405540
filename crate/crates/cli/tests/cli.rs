use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn repo_configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn pourkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pourkit"))
        .args(args)
        .output()
        .expect("spawn pourkit")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// The bundled config cut down to a handful of pours, written next to
/// copies of the meshes.
fn small_config(dir: &Path) -> PathBuf {
    let configs = repo_configs();
    let meshes = dir.join("meshes");
    std::fs::create_dir_all(&meshes).unwrap();
    for entry in std::fs::read_dir(configs.join("meshes")).unwrap() {
        let entry = entry.unwrap();
        std::fs::copy(entry.path(), meshes.join(entry.file_name())).unwrap();
    }
    let text = std::fs::read_to_string(configs.join("default.toml"))
        .unwrap()
        .replace("collect_pours = 60", "collect_pours = 9")
        .replace("eval_pours_per_container = 10", "eval_pours_per_container = 1");
    let path = dir.join("small.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn mesh_path(name: &str) -> String {
    repo_configs().join("meshes").join(name).to_string_lossy().into_owned()
}

#[test]
fn mesh_volume_of_unit_cube() {
    let o = pourkit(&["mesh", "volume", &mesh_path("unit_cube.obj")]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "1000000.000 ml");
}

#[test]
fn mesh_fill_height_of_cylinder() {
    // r = 4 cm, 48-gon: area = 24 r² sin(2π/48)
    let area = 24.0 * 0.04f64.powi(2) * (std::f64::consts::TAU / 48.0).sin();
    let want = 100e-6 / area * 1000.0;
    let o = pourkit(&["mesh", "fill-height", &mesh_path("cylinder.obj"), "100"]);
    assert!(o.status.success());
    let got: f64 = stdout(&o).trim().trim_end_matches(" mm").parse().unwrap();
    assert!((got - want).abs() < 1e-3, "{got} vs {want}");
}

#[test]
fn volume_beyond_capacity_is_invalid_input() {
    let o = pourkit(&["mesh", "fill-height", &mesh_path("cylinder.obj"), "5000"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn usage_error_exits_2() {
    assert_eq!(pourkit(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(pourkit(&["--estimator", "oracle", "collect"]).status.code(), Some(2));
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let text = std::fs::read_to_string(&cfg)
        .unwrap()
        .replace("train_fraction = 0.75", "train_fraction = 1.5");
    std::fs::write(&cfg, text).unwrap();
    let out = dir.path().join("out");
    let o = pourkit(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "collect"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn missing_config_is_a_runtime_error() {
    let o = pourkit(&["--config", "/nonexistent/pourkit.toml", "collect"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn relabel_empty_dataset_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let dataset = dir.path().join("empty");
    std::fs::create_dir_all(&dataset).unwrap();
    let manifest = serde_manifest_without_pours(&cfg, dir.path());
    std::fs::write(dataset.join("manifest.json"), manifest).unwrap();
    let o = pourkit(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
        "relabel",
        "--dataset",
        dataset.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

/// Collect a tiny real dataset, then strip its pour list.
fn serde_manifest_without_pours(cfg: &Path, dir: &Path) -> String {
    let out = dir.join("seed_run");
    let o = pourkit(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "collect"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("dataset/manifest.json")).unwrap();
    let start = text.find("\"pours\"").expect("pours field");
    let open = start + text[start..].find('[').unwrap();
    let close = text.rfind(']').unwrap();
    format!("{}[]{}", &text[..open], &text[close + 1..])
}

fn pipeline(cfg: &Path, out: &Path, seed: &str) {
    let base = ["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", seed];
    for step in [
        vec!["collect"],
        vec!["fit-transition"],
        vec!["fit-regressor"],
        vec!["relabel"],
        vec!["evaluate"],
        vec!["--estimator", "pixel-count", "evaluate"],
    ] {
        let args: Vec<&str> = base.iter().copied().chain(step.iter().copied()).collect();
        let o = pourkit(&args);
        assert!(o.status.success(), "{step:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn pipeline_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    pipeline(&cfg, &a, "7");
    pipeline(&cfg, &b, "7");

    for est in ["model-based", "pixel-count"] {
        let ra = std::fs::read(a.join("eval").join(est).join("results.csv")).unwrap();
        let rb = std::fs::read(b.join("eval").join(est).join("results.csv")).unwrap();
        assert_eq!(ra, rb, "{est} results differ between identical runs");
        let text = String::from_utf8(ra).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("target_ml,final_ml,abs_err_ml,container,estimator"));
        assert_eq!(lines.count(), 3);
        assert!(a.join("eval").join(est).join("summary.json").is_file());
    }
    assert_eq!(
        std::fs::read(a.join("transition.json")).unwrap(),
        std::fs::read(b.join("transition.json")).unwrap()
    );

    let relabeled = std::fs::read_to_string(a.join("dataset/train/pour_0000.csv")).unwrap();
    assert!(relabeled.lines().next().unwrap().contains("gt_ml"));
}

#[test]
fn evaluate_without_transition_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let o = pourkit(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
        "evaluate",
    ]);
    assert!(!o.status.success());
}
