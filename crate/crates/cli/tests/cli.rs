use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn maapnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maapnn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_errors(dir: &Path) -> Vec<(f64, f64)> {
    let mut r = csv::Reader::from_path(dir.join("errors.csv")).unwrap();
    assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), ["snapshot", "l2_rel"]);
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            (rec[0].parse().unwrap(), rec[1].parse().unwrap())
        })
        .collect()
}

/// A small ex_4_1_3 configuration that trains in a second or two.
fn small_config(dir: &Path) -> std::path::PathBuf {
    let o = maapnn(&["config", "ex_4_1_3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let text = text
        .replace("hidden = [24, 24, 24]", "hidden = [6]")
        .replace("interior = 1000", "interior = 40")
        .replace("boundary_per_face = 200", "boundary_per_face = 10")
        .replace("initial = 200", "initial = 10")
        .replace("cells = 200", "cells = 40")
        .replace("time_steps = 2000", "time_steps = 400");
    let path = dir.join("small.toml");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn unknown_example_lists_valid_ids() {
    let o = maapnn(&["reproduce", "ex_9_9", "--max-steps", "0"]);
    assert_eq!(code(&o), 2);
    let e = stderr(&o);
    assert!(e.contains("ex_4_1_3") && e.contains("uq_problem_1"), "{e}");
    let o = maapnn(&["reference", "nope"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn config_echo_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("run");
    let o = maapnn(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--max-steps",
        "3",
        "--quiet",
        "--no-plot",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let echo = fs::read_to_string(out.join("config.echo")).unwrap();
    let o2 = maapnn(&[
        "train",
        "--config",
        out.join("config.echo").to_str().unwrap(),
        "--quiet",
        "--no-plot",
        "--out",
        dir.path().join("run2").to_str().unwrap(),
    ]);
    assert_eq!(code(&o2), 0, "{}", stderr(&o2));
    assert_eq!(fs::read_to_string(dir.path().join("run2/config.echo")).unwrap(), echo);
    assert!(echo.contains("max_steps = 3"));
}

#[test]
fn artifacts_and_deterministic_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = maapnn(&[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--max-steps",
            "5",
            "--seed",
            seed,
            "--deterministic",
            "--quiet",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let stdout = String::from_utf8(o.stdout).unwrap();
        assert!(stdout.contains("l2_rel"), "{stdout}");
        out
    };
    let a = run("a", "1");
    for f in [
        "result.csv",
        "errors.csv",
        "telemetry.csv",
        "config.echo",
        "prediction.csv",
        "reference.csv",
        "model.ckpt",
        "plot.svg",
    ] {
        assert!(a.join(f).exists(), "{f} missing");
    }
    let head = fs::read_to_string(a.join("result.csv")).unwrap();
    assert!(head.starts_with("t,x,rho_pred,rho_ref,abs_err\n"));
    let errs = read_errors(&a);
    assert_eq!(errs.iter().map(|e| e.0).collect::<Vec<_>>(), [0.01, 0.05, 0.15, 2.0]);
    assert!(errs.iter().all(|e| e.1.is_finite() && e.1 >= 0.0));

    let b = run("b", "1");
    for f in ["result.csv", "errors.csv", "telemetry.csv", "prediction.csv", "model.ckpt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    // A new seed moves the network but not the deterministic reference.
    let c = run("c", "2");
    assert_eq!(fs::read(a.join("reference.csv")).unwrap(), fs::read(c.join("reference.csv")).unwrap());
    assert_ne!(fs::read(a.join("prediction.csv")).unwrap(), fs::read(c.join("prediction.csv")).unwrap());
}

#[test]
fn evaluate_against_own_prediction_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("run");
    let o = maapnn(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--max-steps",
        "2",
        "--quiet",
        "--no-plot",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let ev = dir.path().join("eval");
    let o = maapnn(&[
        "evaluate",
        "--config",
        out.join("config.echo").to_str().unwrap(),
        "--checkpoint",
        out.join("model.ckpt").to_str().unwrap(),
        "--reference",
        out.join("prediction.csv").to_str().unwrap(),
        "--out",
        ev.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(read_errors(&ev).iter().all(|e| e.1 == 0.0));
    assert!(ev.join("plot.svg").exists());
}

#[test]
fn checkpoint_of_another_network_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("run");
    let o = maapnn(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--max-steps",
        "1",
        "--quiet",
        "--no-plot",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let wide = dir.path().join("wide.toml");
    fs::write(&wide, fs::read_to_string(&cfg).unwrap().replace("hidden = [6]", "hidden = [7]")).unwrap();
    let o = maapnn(&[
        "evaluate",
        "--config",
        wide.to_str().unwrap(),
        "--checkpoint",
        out.join("model.ckpt").to_str().unwrap(),
        "--out",
        dir.path().join("eval").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("does not match"), "{}", stderr(&o));
}

#[test]
fn missing_reference_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = maapnn(&["reference", "ex_4_2_kinetic", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    let cfg = small_config(dir.path());
    let text = fs::read_to_string(&cfg).unwrap().replace(
        "reference = \"auto\"",
        "reference = \"file\"\nreference_file = \"/nonexistent/ref.csv\"",
    );
    fs::write(&cfg, text).unwrap();
    let o = maapnn(&["train", "--config", cfg.to_str().unwrap(), "--quiet", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let text = fs::read_to_string(&cfg).unwrap().replace("learning_rate", "learning_rat");
    fs::write(&cfg, text).unwrap();
    let o = maapnn(&["train", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("learning_rat"), "{}", stderr(&o));
}

#[test]
fn divergence_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let text = fs::read_to_string(&cfg).unwrap().replace("learning_rate = 0.001", "learning_rate = 1e300");
    fs::write(&cfg, text).unwrap();
    let o = maapnn(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--max-steps",
        "5",
        "--quiet",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn reference_dispatch_and_regime_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = maapnn(&["reference", "ex_4_1_3", "--cells", "50", "--out", out]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("reference.csv")).unwrap();
    let times: std::collections::BTreeSet<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(times.into_iter().collect::<Vec<_>>(), ["0.01", "0.05", "0.15", "2"]);
    assert!(fs::read_to_string(dir.path().join("reference.csv.meta.toml")).unwrap().contains("Crank"));
    let o = maapnn(&["reference", "ex_4_1_3", "--solver", "transport", "--out", out]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("diffusion solver"), "{}", stderr(&o));
}

#[test]
fn plot_rejects_empty_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("empty.csv");
    fs::write(&csv, "t,x,rho\n").unwrap();
    let svg = dir.path().join("p.svg");
    let o = maapnn(&["plot", csv.to_str().unwrap(), "--out", svg.to_str().unwrap()]);
    assert_ne!(code(&o), 0);
    assert!(!svg.exists());
}
