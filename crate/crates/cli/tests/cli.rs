use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn otto(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_otto")).args(args).output().expect("run otto")
}

fn presets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets")
}

fn preset(name: &str) -> String {
    presets().join(name).to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn summary_value(o: &Output, key: &str) -> String {
    let line = stdout(o);
    line.split_whitespace()
        .find_map(|kv| kv.strip_prefix(&format!("{key}=")).map(str::to_string))
        .unwrap_or_else(|| panic!("no `{key}` in {line}"))
}

fn hash_dir(dir: &Path) -> String {
    fn walk(dir: &Path, root: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(&p, root, out);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()));
            }
        }
    }
    let mut files = Vec::new();
    walk(dir, dir, &mut files);
    files.sort();
    let mut h = Sha256::new();
    for (name, bytes) in files {
        h.update(name.as_bytes());
        h.update([0]);
        h.update(&bytes);
        h.update([0]);
    }
    format!("{:x}", h.finalize())
}

fn command_for(file: &str) -> &'static str {
    match file.split('_').next().unwrap().trim_end_matches(".conf") {
        "analyze" => "analyze",
        "optimize" => "optimize",
        "engine" => "simulate",
        "selfdriven" => "selfdriven",
        other => panic!("no command for preset prefix `{other}`"),
    }
}

fn run_presets(filter: impl Fn(&str) -> bool) -> usize {
    let tmp = tempfile::tempdir().unwrap();
    let mut names: Vec<String> = fs::read_dir(presets())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".conf") && filter(n))
        .collect();
    names.sort();
    for n in &names {
        let out = tmp.path().join(n);
        let o = otto(&[command_for(n), "--config", &preset(n), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{n}: {}", stderr(&o));
        assert!(out.join("summary.txt").exists() && out.join("effective_config.conf").exists());
    }
    names.len()
}

const SLOW: [&str; 3] = ["engine.conf", "engine_tuned.conf", "selfdriven.conf"];

#[test]
fn quick_presets_pass_their_expectations() {
    assert!(run_presets(|n| !SLOW.contains(&n)) >= 8);
}

#[test]
fn full_presets_pass_their_expectations() {
    assert_eq!(run_presets(|n| SLOW.contains(&n)), SLOW.len());
}

#[test]
fn analyze_reports_sudden_and_adiabatic_values() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let o = otto(&["analyze", "-c", &preset("analyze_sudden.conf"), "-o", out]);
    assert!(o.status.success());
    assert_eq!(summary_value(&o, "qstar_compression").parse::<f64>().unwrap(), 1.25);

    let o = otto(&[
        "analyze",
        "-o",
        out,
        "--set",
        "omega1=3 Mrad_s",
        "--set",
        "omega2=4.5 Mrad_s",
        "--set",
        "bath_cold=20 mK",
        "--set",
        "bath_hot=100 mK",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let eta: f64 = summary_value(&o, "eta").parse().unwrap();
    assert!((eta - (1.0 - 3.0 / 4.5)).abs() <= 1e-12);
    let stages = fs::read_to_string(tmp.path().join("stages.tsv")).unwrap();
    assert!(stages.starts_with("# ") && stages.contains("corner\tomega_rad_s\tenergy_j"));
}

#[test]
fn outside_the_window_is_reported_not_failed() {
    let tmp = tempfile::tempdir().unwrap();
    let o = otto(&[
        "analyze",
        "-c",
        &preset("analyze_sudden.conf"),
        "-o",
        tmp.path().to_str().unwrap(),
        "--set",
        "omega2=20 Mrad_s",
        "--set",
        "expect.is_engine=false",
        "--set",
        "expect.eta=nan",
        "--set",
        "expect.qstar_compression=10.025 +- 1e-12",
        "--set",
        "expect.qstar_expansion=10.025 +- 1e-12",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(summary_value(&o, "is_engine"), "false");
}

#[test]
fn optimize_single_ratio_row() {
    let tmp = tempfile::tempdir().unwrap();
    let o = otto(&["optimize", "-c", &preset("optimize_single.conf"), "-o", tmp.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = fs::read_to_string(tmp.path().join("curves.tsv")).unwrap();
    let row: Vec<f64> = table
        .lines()
        .find(|l| l.starts_with("2.5e-1"))
        .unwrap()
        .split('\t')
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(&row[..4], &[0.25, 0.75, 0.5, 0.2]);
}

#[test]
fn validation_errors_exit_two_and_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("x");
    let out = out.to_str().unwrap();
    let cases: [(&str, &[&str], &str); 7] = [
        ("analyze", &["--set", "omega1=1", "--set", "omega2=2 rad_s"], "omega1"),
        ("analyze", &["--set", "omega1=1 furlong", "--set", "omega2=2 rad_s"], "omega1"),
        ("analyze", &["--set", "omega1=1 rad_s"], "omega2"),
        ("simulate", &["--set", "radial_frequency=6 Mrad_s"], "radial_frequency"),
        ("simulate", &["--set", "n_trajectories=0"], "n_trajectories"),
        ("selfdriven", &["--set", "beam.x.role=warm"], "beam.x.role"),
        ("optimize", &["--set", "ratios=0.5, 1.5"], "ratios"),
    ];
    for (cmd, extra, field) in cases {
        let mut args = vec![cmd, "-o", out];
        args.extend_from_slice(extra);
        let o = otto(&args);
        assert_eq!(o.status.code(), Some(2), "{cmd} {extra:?}: {}", stderr(&o));
        assert!(stderr(&o).contains(field), "{cmd} {extra:?}: {}", stderr(&o));
    }
}

#[test]
fn empty_ratio_list_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("empty.conf");
    fs::write(&cfg, "ratios = ,\n").unwrap();
    let o = otto(&["optimize", "-c", cfg.to_str().unwrap(), "-o", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("ratios"));
}

#[test]
fn unmet_expectation_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let o = otto(&[
        "analyze",
        "-c",
        &preset("analyze_adiabatic.conf"),
        "-o",
        tmp.path().to_str().unwrap(),
        "--set",
        "expect.eta=0.4 +- 0.01",
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("eta"));
    // outputs are still written
    assert!(tmp.path().join("summary.txt").exists());
}

#[test]
fn simulate_prints_the_final_summary_line() {
    let tmp = tempfile::tempdir().unwrap();
    let o = otto(&[
        "simulate",
        "-c",
        &preset("engine_smoke.conf"),
        "-o",
        tmp.path().to_str().unwrap(),
        "--set",
        "n_trajectories=32",
        "--set",
        "expect.eta=0.3 +- 0.1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for key in ["eta", "power_w", "alpha", "t_cold_k", "t_hot_k"] {
        summary_value(&o, key).parse::<f64>().unwrap();
    }
    for f in ["corners.tsv", "axial_trace.tsv", "histograms/axial_A.tsv", "histograms/radial_D.tsv"] {
        assert!(tmp.path().join(f).exists(), "{f}");
    }
}

#[test]
fn output_does_not_depend_on_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    let mut sums = Vec::new();
    for threads in ["1", "4", "8", "4"] {
        let out = tmp.path().join(format!("t{}", sums.len()));
        let o = otto(&[
            "simulate",
            "-c",
            &preset("engine_smoke.conf"),
            "-o",
            out.to_str().unwrap(),
            "--seed",
            "7",
            "--threads",
            threads,
            "--set",
            "n_trajectories=48",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        sums.push(hash_dir(&out));
    }
    assert!(sums.iter().all(|s| *s == sums[0]), "{sums:?}");

    let other = tmp.path().join("seed8");
    let o = otto(&["simulate", "-c", &preset("engine_smoke.conf"), "-o", other.to_str().unwrap(), "--seed", "8", "--set", "n_trajectories=48"]);
    assert!(o.status.success());
    assert_ne!(hash_dir(&other), sums[0]);
}

#[test]
fn echoed_configuration_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let runs: [(&str, &[&str]); 4] = [
        ("analyze", &["-c", "analyze_linear.conf"]),
        ("optimize", &["--set", "ratios=0.2, 0.3", "--set", "speed=sudden"]),
        ("simulate", &["-c", "engine_explicit_beams.conf", "--set", "n_trajectories=24", "--set", "radial_freq=5.5 Mrad_s"]),
        ("selfdriven", &["--set", "n_trajectories=16", "--set", "cycles=8", "--set", "focus_separation=150 um"]),
    ];
    for (i, (cmd, args)) in runs.iter().enumerate() {
        let first = tmp.path().join(format!("a{i}"));
        let second = tmp.path().join(format!("b{i}"));
        let mut a: Vec<String> = vec![cmd.to_string(), "-o".into(), first.to_string_lossy().into_owned()];
        for (j, v) in args.iter().enumerate() {
            let v = if j > 0 && args[j - 1] == "-c" { preset(v) } else { v.to_string() };
            a.push(v);
        }
        let refs: Vec<&str> = a.iter().map(String::as_str).collect();
        let o = otto(&refs);
        assert!(o.status.success(), "{cmd}: {}", stderr(&o));
        let echo = first.join("effective_config.conf");
        let o2 = otto(&[cmd, "-c", echo.to_str().unwrap(), "-o", second.to_str().unwrap()]);
        assert!(o2.status.success(), "{cmd} echo: {}", stderr(&o2));
        assert_eq!(stdout(&o), stdout(&o2), "{cmd}");
        assert_eq!(hash_dir(&first), hash_dir(&second), "{cmd}");
    }
}
