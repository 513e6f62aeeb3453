use std::path::Path;
use std::process::{Command, Output};

fn lfdepth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lfdepth"))
        .args(args)
        .env("LFDEPTH_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = lfdepth(args);
    assert!(
        out.status.success(),
        "{args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn plane(dir: &Path, size: &str, d: &str) -> std::path::PathBuf {
    let lf = dir.join("lf");
    ok(&["synth", "--out", s(&lf), "--preset", "plane", "--size", size, "--disparity", d, "--seed", "3"]);
    lf
}

#[test]
fn synth_estimate_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let lf = plane(dir.path(), "40", "1");
    assert!(lf.join("occlusion").join("mask_00_00.png").exists());
    assert!(lf.join("scene.toml").exists());
    let est = dir.path().join("est.pfm");
    let png = dir.path().join("est.png");
    ok(&["estimate", "--lf", s(&lf), "--oracle", "--out", s(&est), "--falsecolor", s(&png)]);
    assert!(png.exists());
    assert!(dir.path().join("est.config.toml").exists());

    let gt = lf.join("gt_disparity.pfm");
    let out = ok(&["eval", "--gt", s(&gt), "--est", s(&est), "--method", "oracle", "--border", "2"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "scene,method,mse_x100,bpr_a,bpr_b,bpr_c,border_margin");
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[1], "oracle");
    let mse: f64 = row[2].parse().unwrap();
    assert!(mse < 1.0, "mse x100 {mse}");
    assert_eq!(row[6], "2");
}

#[test]
fn estimate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let lf = plane(dir.path(), "24", "-1");
    let (a, b) = (dir.path().join("a.pfm"), dir.path().join("b.pfm"));
    ok(&["estimate", "--lf", s(&lf), "--oracle", "--out", s(&a)]);
    ok(&["estimate", "--lf", s(&lf), "--oracle", "--out", s(&b)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn sparse_mode_uses_adjacent_views_and_min_error() {
    let dir = tempfile::tempdir().unwrap();
    let lf = plane(dir.path(), "24", "0.5");
    let out = dir.path().join("d.pfm");
    let cands = dir.path().join("cands");
    ok(&["estimate", "--lf", s(&lf), "--oracle", "--mode", "sparse", "--out", s(&out), "--candidates", s(&cands)]);
    let mut names: Vec<String> = std::fs::read_dir(&cands)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names, ["col1.pfm", "row1.pfm"]);
    let echo = std::fs::read_to_string(dir.path().join("d.config.toml")).unwrap();
    assert!(echo.contains("mode = \"sparse\""), "{echo}");
    assert!(echo.contains("min-error"), "{echo}");

    // the written candidates feed the standalone fuse command
    let refused = dir.path().join("r.pfm");
    let c: Vec<String> = ["row1.pfm", "col1.pfm"].iter().map(|n| s(&cands.join(n)).to_string()).collect();
    ok(&["fuse", "--lf", s(&lf), "--mode", "sparse", "--candidates", &c[0], &c[1], "--out", s(&refused)]);
    assert!(refused.exists());
}

#[test]
fn learned_network_needs_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let lf = plane(dir.path(), "16", "0");
    let out = lfdepth(&["estimate", "--lf", s(&lf), "--out", s(&dir.path().join("d.pfm"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--checkpoint"));
}

#[test]
fn train_then_estimate_with_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(
        &cfg,
        "[sampling]\ncoarse = { min = -3.0, max = 3.0, interval = 1.0 }\nresidual = { min = -0.5, max = 0.5, interval = 0.1 }\n\n\
         [inference]\noffsets = [1]\n\n\
         [dispnet]\nchannels = 4\nresidual_blocks = 1\nfilter_channels = 4\nhead_channels = 4\n\n\
         [occnet]\nbase_channels = 4\nmax_channels = 8\n\n\
         [train]\nepochs = 2\ncrop = 12\n",
    )
    .unwrap();
    let run = dir.path().join("run");
    ok(&["train", "--synthetic", "1", "--size", "20", "--config", s(&cfg), "--out-dir", s(&run)]);
    assert!(run.join("config.toml").exists());
    let csv = std::fs::read_to_string(run.join("loss.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let ckpt = run.join("epoch-0002.lfdw");
    assert!(ckpt.exists());

    let lf = plane(dir.path(), "16", "1");
    let est = dir.path().join("d.pfm");
    ok(&["estimate", "--lf", s(&lf), "--config", s(&cfg), "--checkpoint", s(&ckpt), "--out", s(&est)]);
    assert!(est.exists());
}

#[test]
fn gradcheck_passes() {
    let out = ok(&["gradcheck", "--trials", "2"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() > 20);
    assert!(!text.contains("FAIL"));
}

#[test]
fn unknown_flag_is_rejected() {
    let out = lfdepth(&["estimate", "--bogus"]);
    assert!(!out.status.success());
    assert!(!lfdepth(&["no-such-command"]).status.success());
}

#[test]
fn config_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let lf = plane(dir.path(), "16", "0");
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[dispnet]\nchannels = 4\nwidth = 3\n").unwrap();
    let out = lfdepth(&["estimate", "--lf", s(&lf), "--oracle", "--config", s(&cfg), "--out", s(&dir.path().join("d.pfm"))]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("width"), "{err}");
}

#[test]
fn bad_thread_count_is_reported() {
    let out = Command::new(env!("CARGO_BIN_EXE_lfdepth"))
        .args(["gradcheck", "--trials", "1"])
        .env("LFDEPTH_THREADS", "many")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("LFDEPTH_THREADS"));
}
