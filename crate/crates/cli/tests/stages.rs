//! End-to-end runs of the `pdkl` binary on a small 2D plate.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL_PLATE: &str = r#"
seed = 3

[microstructure]
layout = "plate2d_center_square_inclusion"
domain_length_m = 1.0
n_cells_per_side = 10
E_s_pa = 200e9
E_c_pa = 5e9
rho_s_kg_m3 = 8000.0
rho_c_kg_m3 = 8000.0

[mesh]
elements_per_cell = 3

[drive]
profile = "polynomial_pulse"
component = "x"
u0_m = 1e-3
duration_s = 7.85e-5

[time]
end_time_s = 2e-4
output_interval_s = 2e-6

[fit]
horizon_cells = 2
train_end_s = 1e-4
sweep_train_end_s = [1.2e-4]

[validation.drive]
profile = "polynomial_pulse"
component = "y"
u0_m = 1e-3
duration_s = 7.85e-5
"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn pdkl(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdkl"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .env("PDKL_THREADS", "2")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    names
}

#[test]
fn staged_run_matches_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), SMALL_PLATE);
    let fused = tmp.path().join("fused");
    let staged = tmp.path().join("staged");
    let o = pdkl(&["pipeline"], &config, &fused);
    assert!(o.status.success(), "{}", stderr(&o));
    for stage in ["simulate", "coarsen", "fit", "predict", "report"] {
        let o = pdkl(&[stage], &config, &staged);
        assert!(o.status.success(), "{stage}: {}", stderr(&o));
    }
    let fused_files = files(&fused);
    assert!(fused_files.iter().any(|f| f == "errors.json"));
    assert!(fused_files
        .iter()
        .any(|f| f.starts_with("kernel_equality_constrained_tt100us")));
    for name in &fused_files {
        let a = std::fs::read(fused.join(name)).unwrap();
        let b = std::fs::read(staged.join(name)).unwrap_or_else(|_| panic!("{name} missing from the staged run"));
        assert!(a == b, "{name} differs");
    }
}

#[test]
fn stages_read_from_a_separate_input_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), SMALL_PLATE);
    let first = tmp.path().join("first");
    let second = tmp.path().join("second");
    assert!(pdkl(&["pipeline"], &config, &first).status.success());
    let o = pdkl(&["fit", "--stage-input", first.to_str().unwrap()], &config, &second);
    assert!(o.status.success(), "{}", stderr(&o));
    for name in files(&second) {
        assert_eq!(
            std::fs::read(first.join(&name)).unwrap(),
            std::fs::read(second.join(&name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn repeated_pipelines_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), SMALL_PLATE);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(pdkl(&["pipeline"], &config, &a).status.success());
    let o = Command::new(env!("CARGO_BIN_EXE_pdkl"))
        .args(["pipeline", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&b)
        .env("PDKL_THREADS", "5")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(files(&a), files(&b));
    for name in files(&a) {
        assert!(
            std::fs::read(a.join(&name)).unwrap() == std::fs::read(b.join(&name)).unwrap(),
            "{name} differs"
        );
    }
}

#[test]
fn fit_without_coarsened_data_names_the_missing_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), SMALL_PLATE);
    let out = tmp.path().join("out");
    std::fs::create_dir(&out).unwrap();
    let o = pdkl(&["fit"], &config, &out);
    assert!(!o.status.success());
    let msg = stderr(&o);
    assert!(msg.starts_with("pdkl: error:"), "{msg}");
    assert!(msg.contains("macro"), "{msg}");
    assert_eq!(msg.trim_end().lines().count(), 1, "{msg}");
}

#[test]
fn training_window_past_the_run_is_rejected_before_any_work() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        &SMALL_PLATE.replace("train_end_s = 1e-4", "train_end_s = 3e-4"),
    );
    let out = tmp.path().join("out");
    let o = pdkl(&["pipeline"], &config, &out);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("train_end_s"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn bad_invocations_fail() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), SMALL_PLATE);
    let out = tmp.path().join("out");
    assert!(!pdkl(&["bogus"], &config, &out).status.success());
    assert!(!pdkl(&["pipeline"], &tmp.path().join("absent.toml"), &out)
        .status
        .success());
    let o = Command::new(env!("CARGO_BIN_EXE_pdkl"))
        .args(["pipeline", "--config"])
        .arg(&config)
        .env("PDKL_THREADS", "0")
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(stderr(&o).contains("PDKL_THREADS"));
}
