use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mocam_core::io::{hash_file, read_manifests, read_tensor};

const TINY: &str = r#"schema = "mocam-config/v1"
seed = 3

[dataset]
width = 8
height = 8
frames = 2

[train]
steps = 2
batch_size = 1

[train.model]
hidden = 4
embed_dim = 4

[sampler]
n_steps = 4

[eval]
n_steps = 2
motion_factors = [1.0, 2.0]
depth_strengths = [0.0, 0.1]

[eval.eval_seeds]
start = 1000000
count = 2

[eval.ssim]
window = 4

[ablation]
modes = ["structured", "scaffold_only"]
"#;

fn mocam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mocam"))
        .args(args)
        .env("MOCAM_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// `top` holds root keys, which TOML requires before the first table.
fn write_config(dir: &Path, name: &str, top: &str, tables: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, format!("{top}{TINY}{tables}")).unwrap();
    p
}

fn run_ok(args: &[&str]) -> Output {
    let o = mocam(args);
    assert_eq!(o.status.code(), Some(0), "{args:?} failed: {}", stderr(&o));
    o
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let o = mocam(&["render", "--config", "x.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).to_lowercase().contains("usage"));
}

#[test]
fn missing_config_names_the_path() {
    let o = mocam(&["train", "--config", "/no/such/dir/run.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/no/such/dir/run.toml"));
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "", "\n[gen]\ncount = 1\nlimit = 3\n");
    let o = mocam(&["gen-data", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("limit"));
}

#[test]
fn bad_thread_count_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "", "");
    let o = Command::new(env!("CARGO_BIN_EXE_mocam"))
        .args(["render-scaffold", "--config", s(&cfg)])
        .env("MOCAM_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("MOCAM_THREADS"));
}

#[test]
fn render_scaffold_writes_tensors_previews_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "", "");
    let out = dir.path().join("scaffold");
    run_ok(&["render-scaffold", "--config", s(&cfg), "--out", s(&out)]);
    for name in [
        "scaffold.mct",
        "scaffold.ppm",
        "scaffold_validity.mct",
        "scaffold_validity.ppm",
        "scaffold_depth.mct",
        "source.mct",
        "source.ppm",
    ] {
        assert!(out.join(name).is_file(), "{name} missing");
    }
    assert_eq!(read_tensor(&out.join("scaffold.mct")).unwrap().dims(), &[2, 8, 8, 3]);
    assert_eq!(read_tensor(&out.join("scaffold_validity.mct")).unwrap().dims(), &[2, 8, 8]);
    let ppm = fs::read(out.join("scaffold.ppm")).unwrap();
    assert!(ppm.starts_with(b"P6\n16 8\n255\n"));

    let manifests = read_manifests(&out).unwrap();
    assert_eq!(manifests.len(), 1);
    let m = &manifests[0];
    assert_eq!(m.outputs.len(), 8);
    for a in &m.outputs {
        assert_eq!(a.sha256, hash_file(Path::new(&a.path)).unwrap());
    }
    assert_eq!(m.inputs.len(), 1);
    assert_eq!(m.seeds["seed"], 3);
}

#[test]
fn manifests_are_appended() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "", "");
    let out = dir.path().join("o");
    run_ok(&["render-scaffold", "--config", s(&cfg), "--out", s(&out)]);
    run_ok(&["render-scaffold", "--config", s(&cfg), "--out", s(&out), "--seed", "9"]);
    let manifests = read_manifests(&out).unwrap();
    assert_eq!(manifests.len(), 2);
    assert_eq!(manifests[1].seeds["seed"], 9);
    assert_ne!(manifests[0].config_sha256, manifests[1].config_sha256);
}

#[test]
fn gen_data_writes_each_example() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "", "\n[gen]\ncount = 2\n");
    let out = dir.path().join("data");
    run_ok(&["gen-data", "--config", s(&cfg), "--out", s(&out)]);
    for i in 0..2 {
        for part in ["source", "target", "scaffold"] {
            assert!(out.join(format!("example_{i:04}_{part}.ppm")).is_file());
            assert!(out.join(format!("example_{i:04}_{part}.mct")).is_file());
        }
        assert!(out.join(format!("example_{i:04}_source_depth.mct")).is_file());
    }
}

#[test]
fn train_then_sample_checks_the_mode() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "train.toml", "", "");
    let run = dir.path().join("run");
    run_ok(&["train", "--config", s(&cfg), "--out", s(&run)]);
    let log = fs::read_to_string(run.join("train_log.txt")).unwrap();
    assert_eq!(log.lines().next(), Some("# step loss grad_norm"));
    assert_eq!(log.lines().count(), 3);

    let good = write_config(dir.path(), "sample.toml", "checkpoints = [\"run/checkpoint\"]\n", "");
    let out = dir.path().join("sample");
    run_ok(&["sample", "--config", s(&good), "--out", s(&out)]);
    let trace = fs::read_to_string(out.join("sample.trace.txt")).unwrap();
    assert_eq!(trace.lines().count(), 5);
    assert!(out.join("sample.ppm").is_file());
    let inputs = &read_manifests(&out).unwrap()[0].inputs;
    assert!(inputs.iter().any(|a| a.path.ends_with("params.mct")));

    let bad = write_config(
        dir.path(),
        "other.toml",
        "checkpoints = [\"run/checkpoint\"]\n",
        "\n[schedule]\nmode = \"scaffold_only\"\n",
    );
    let o = mocam(&["sample", "--config", s(&bad), "--out", s(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("trained with mode structured"), "{}", stderr(&o));
    assert!(stderr(&o).contains("scaffold_only"));
}

#[test]
fn corrupt_checkpoint_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "train.toml", "", "");
    run_ok(&["train", "--config", s(&cfg), "--out", s(&dir.path().join("run"))]);
    let params = dir.path().join("run/checkpoint/params.mct");
    let mut bytes = fs::read(&params).unwrap();
    bytes.truncate(bytes.len() - 8);
    fs::write(&params, bytes).unwrap();
    let sample = write_config(dir.path(), "sample.toml", "checkpoints = [\"run/checkpoint\"]\n", "");
    let o = mocam(&["sample", "--config", s(&sample), "--out", s(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("truncated"), "{}", stderr(&o));
}

#[test]
fn ablate_eval_and_sweep_produce_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "", "");
    let ab = dir.path().join("ablate");
    let o = run_ok(&["ablate", "--config", s(&cfg), "--out", s(&ab)]);
    let csv = String::from_utf8(o.stdout).unwrap();
    assert!(csv.starts_with("factor_or_strength,mode,psnr,masked_psnr,ssim,rot_err,trans_err"));
    assert_eq!(csv.lines().count(), 3);
    for f in [
        "ablation_report.json",
        "checkpoint_structured/params.mct",
        "checkpoint_scaffold_only/checkpoint.json",
        "train_log_structured.txt",
        "train_log_scaffold_only.txt",
    ] {
        assert!(ab.join(f).is_file(), "{f} missing");
    }

    let with_cks = write_config(
        dir.path(),
        "eval.toml",
        "checkpoints = [\"ablate/checkpoint_structured\", \"ablate/checkpoint_scaffold_only\"]\n",
        "",
    );
    let ev = dir.path().join("eval");
    run_ok(&["eval", "--config", s(&with_cks), "--out", s(&ev)]);
    assert_eq!(
        fs::read(ev.join("ablation_report.json")).unwrap(),
        fs::read(ab.join("ablation_report.json")).unwrap()
    );

    let sw = dir.path().join("sweep");
    let o = run_ok(&["sweep", "--config", s(&with_cks), "--out", s(&sw)]);
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 2 * (1 + 4));
    assert!(sw.join("motion_sweep_series.csv").is_file());
    assert!(sw.join("depth_sweep_report.json").is_file());
}

#[test]
fn eval_without_checkpoints_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "", "");
    let o = mocam(&["eval", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no checkpoints"));
}
