use std::f64::consts::FRAC_PI_2;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pmm_core::render::{orientation_distance, petal_analysis, read_pgm, IntensityImage, PetalAnalysis};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.scenario"))
}

fn out_dir(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("pmm-cli-test-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    d
}

fn pmm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pmm")).args(args).output().expect("binary runs")
}

fn run_to(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["--out-dir", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    pmm(&args)
}

fn csv(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn image(path: &Path) -> IntensityImage {
    let (side, px) = read_pgm(&std::fs::read(path).unwrap()).unwrap();
    let max = px.iter().copied().max().unwrap_or(0);
    IntensityImage {
        side,
        pixels: px.iter().map(|&p| p as f64 / 65535.0).collect(),
        max_value: if max > 0 { 1.0 } else { 0.0 },
    }
}

fn petals(path: &Path) -> PetalAnalysis {
    petal_analysis(&image(path), Some(1)).unwrap()
}

#[test]
fn fig3_images_show_the_petal_turn() {
    let dir = out_dir("fig3");
    let o = run_to(&dir, &["run", scenario("fig3").to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let input = petals(&dir.join("fig3_input.pgm"));
    let baseline = petals(&dir.join("fig3_baseline.pgm"));
    let port1 = petals(&dir.join("fig3_port1.pgm"));
    assert_eq!((input.petal_count, baseline.petal_count, port1.petal_count), (2, 2, 2));
    let tol = input.angular_resolution();
    assert!(orientation_distance(input.orientation, 0.0, 2) <= tol);
    assert!(orientation_distance(baseline.orientation, FRAC_PI_2, 2) <= tol);
    assert!(orientation_distance(port1.orientation, input.orientation, 2) <= tol);
    // everything reaches port 1
    assert!(image(&dir.join("fig3_port2.pgm")).pixels.iter().all(|&p| p == 0.0));

    let fid = csv(&dir.join("fig3_fidelity.csv"));
    let get = |k: &str| fid.iter().find(|r| r[0] == k).unwrap()[1].parse::<f64>().unwrap();
    assert!((get("oam_overlap") - 1.0).abs() < 1e-12);
    assert!(get("baseline_oam_overlap") < 1e-12);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn parity_csv_matches_the_parity_rule() {
    let dir = out_dir("parity");
    assert!(run_to(&dir, &["run", scenario("parity").to_str().unwrap()]).status.success());
    let rows = csv(&dir.join("parity_ports.csv"));
    assert_eq!(rows.len(), 12);
    for r in &rows[..11] {
        let l: i32 = r[0].parse().unwrap();
        let (p1, p2): (f64, f64) = (r[1].parse().unwrap(), r[2].parse().unwrap());
        let bright = if l % 2 != 0 { p1 } else { p2 };
        assert!((bright - 1.0).abs() < 1e-12, "{r:?}");
        assert!((p1 + p2 - 1.0).abs() < 1e-12);
    }
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn sweep_command_writes_law_and_monte_carlo() {
    let dir = out_dir("errors");
    let o = run_to(&dir, &["sweep", scenario("errors").to_str().unwrap()]);
    assert!(o.status.success());
    let rows = csv(&dir.join("errors_sweep.csv"));
    assert_eq!(rows.len(), 10 * 11);
    for r in rows {
        let l: f64 = r[0].parse().unwrap();
        let delta = r[1].parse::<f64>().unwrap().to_radians();
        let law = (1.0 + (4.0 * l * delta).cos()) / 2.0;
        assert!((r[2].parse::<f64>().unwrap() - law).abs() < 1e-14);
        assert!((r[3].parse::<f64>().unwrap() - law).abs() < 1e-12);
    }
    let mc = csv(&dir.join("errors_montecarlo.csv"));
    assert_eq!(mc.len(), 10);
    assert!(mc.iter().all(|r| r[3] == "2000"));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn identical_runs_are_byte_identical() {
    let (a, b) = (out_dir("det-a"), out_dir("det-b"));
    for d in [&a, &b] {
        let o = run_to(d, &["run", scenario("cascade").to_str().unwrap(), scenario("errors").to_str().unwrap()]);
        assert!(o.status.success());
    }
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 7);
    for n in names {
        assert_eq!(std::fs::read(a.join(&n)).unwrap(), std::fs::read(b.join(&n)).unwrap(), "{n:?}");
    }
    // a different seed changes the Monte-Carlo table
    let c = out_dir("det-c");
    assert!(run_to(&c, &["--seed", "5", "sweep", scenario("errors").to_str().unwrap()]).status.success());
    assert_ne!(
        std::fs::read(a.join("errors_montecarlo.csv")).unwrap(),
        std::fs::read(c.join("errors_montecarlo.csv")).unwrap()
    );
    for d in [a, b, c] {
        std::fs::remove_dir_all(d).unwrap();
    }
}

#[test]
fn gate_check_exit_codes() {
    let dir = out_dir("gate");
    let o = run_to(&dir, &["gate-check", scenario("gate").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(csv(&dir.join("gate_gate.csv")).len(), 21);

    let bad = dir.join("bad_gate.scenario");
    let text = std::fs::read_to_string(scenario("gate")).unwrap().replace("name = gate", "name = bad_gate")
        .replace("alpha = pi/4", "alpha = pi/4\ntheta3 = 0.2");
    std::fs::write(&bad, text).unwrap();
    let o = run_to(&dir, &["gate-check", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn parse_and_runtime_errors() {
    let dir = out_dir("errors-exit");
    std::fs::create_dir_all(&dir).unwrap();
    let f = dir.join("big.scenario");
    std::fs::write(&f, "name = big\noutputs = ports-csv\n[circuit]\nkind = pmm\nalpha = pi/4\n[input]\npolarization = H\nmodes = 11\n").unwrap();
    let o = run_to(&dir, &["run", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("big.scenario:8:"), "{err}");

    // raising the truncation makes the same file valid
    assert_eq!(run_to(&dir, &["--lmax", "11", "run", f.to_str().unwrap()]).status.code(), Some(0));

    // the gate scenario has nothing to render
    assert_eq!(run_to(&dir, &["render", scenario("gate").to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run_to(&dir, &["run", dir.join("missing.scenario").to_str().unwrap()]).status.code(), Some(3));
    std::fs::remove_dir_all(dir).unwrap();
}
