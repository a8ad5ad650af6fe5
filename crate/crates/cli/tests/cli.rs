use std::path::Path;
use std::process::{Command, Output};

use exolimits::coronagraph::image::Raster;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_exolimits"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .env_remove("EXOLIMITS_CONFIG")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let o = run(dir, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    o
}

/// Data rows of a CSV written by the tool (comment and header skipped).
fn rows(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# exolimits "));
    lines.next().expect("header");
    lines.map(|l| l.split(',').map(String::from).collect()).collect()
}

fn col(path: &Path, name: &str) -> Vec<f64> {
    let text = std::fs::read_to_string(path).unwrap();
    let header: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap();
    rows(path).iter().map(|r| r[k].parse().unwrap()).collect()
}

fn read_raster(path: &Path) -> Raster {
    Raster::read_from(&mut std::fs::File::open(path).unwrap(), 1.0).unwrap()
}

#[test]
fn detection_budget_point() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["bounds", "--target", "budget-map", "--r-delta-over-sigma", "0.1", "--contrast-b", "1e-9"]);
    let s = col(&d.path().join("bounds_budget_map.csv"), "seconds");
    assert_eq!(s.len(), 1);
    assert!((s[0] / 3220.0 - 1.0).abs() < 0.02, "{}", s[0]);
}

#[test]
fn contrast_map_grid() {
    let d = tempfile::tempdir().unwrap();
    ok(
        d.path(),
        &["bounds", "--target", "budget-map", "--r-delta-over-sigma", "0.1:2:5", "--contrast-b", "log:1e-10:1e-5:6", "--rel-loc-error", "0.1"],
    );
    let r = rows(&d.path().join("bounds_budget_map.csv"));
    assert_eq!(r.len(), 30);
}

#[test]
fn outputs_are_reproducible_and_listed() {
    let d = tempfile::tempdir().unwrap();
    let args = ["bounds", "--systems", "quantum_bound,spade,vortex", "--r-delta-over-sigma", "0.2,0.6", "--contrast-b", "1e-9,1e-4"];
    ok(d.path(), &args);
    let first = std::fs::read(d.path().join("bounds_qce.csv")).unwrap();
    ok(d.path(), &args);
    assert_eq!(first, std::fs::read(d.path().join("bounds_qce.csv")).unwrap());
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("bounds.manifest.json")).unwrap()).unwrap();
    let outs = m["outputs"].as_array().unwrap();
    assert_eq!(outs.len(), 2);
    for o in outs {
        assert!(Path::new(o.as_str().unwrap()).exists());
    }
    assert_eq!(m["command"], "bounds");
}

#[test]
fn fisher_and_mode_information() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["bounds", "--target", "qfim", "--systems", "quantum_bound,spade", "--r-delta-over-sigma", "0.3"]);
    let k = col(&d.path().join("bounds_qfim.csv"), "k_rr");
    assert!((k[1] / k[0] - 1.0).abs() < 0.01);
    ok(d.path(), &["bounds", "--target", "mode-info", "--r-delta-over-sigma", "0.2", "--n-max", "12"]);
    assert_eq!(rows(&d.path().join("bounds_mode_info.csv")).len(), 13);
}

#[test]
fn config_errors_exit_with_2() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("bad.toml");
    let full = exolimits::optics::TelescopePrescription::default().to_config_string();
    std::fs::write(&cfg, full.replace("photon_flux_hz = 6e7", "photon_flux_hz = -1")).unwrap();
    let o = run(d.path(), &["--config", cfg.to_str().unwrap(), "tables", "--table", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("photon_flux_hz"));
    std::fs::write(&cfg, "diameter_m = 6.5\n").unwrap();
    let o = run(d.path(), &["--config", cfg.to_str().unwrap(), "tables", "--table", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("center_wavelength_m"));

    let o = run(d.path(), &["coronagraph", "--design", "lyot"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(d.path(), &["bounds", "--r-delta-over-sigma", "1:x"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_from_environment() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("scope.toml");
    // twice the default flux halves every time
    std::fs::write(
        &cfg,
        "diameter_m = 6.5\ncenter_wavelength_m = 1.29e-6\nbandwidth_m = 1.3e-8\nstar_vmag = 5.357\nreference_flux_si = 1.589e-23\nphoton_flux_hz = 1.2e8\n",
    )
    .unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_exolimits"))
        .args(["--out-dir", d.path().to_str().unwrap(), "bounds", "--target", "budget-map"])
        .args(["--r-delta-over-sigma", "0.1", "--contrast-b", "1e-9"])
        .env("EXOLIMITS_CONFIG", &cfg)
        .output()
        .unwrap();
    assert!(o.status.success());
    let s = col(&d.path().join("bounds_budget_map.csv"), "seconds");
    assert!((s[0] / 1610.0 - 1.0).abs() < 0.02, "{}", s[0]);
}

#[test]
fn tables_agree_with_bound_rows() {
    let d = tempfile::tempdir().unwrap();
    let o = ok(d.path(), &["tables", "--table", "2"]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("piaacmc"));
    let r = rows(&d.path().join("table2.csv"));
    let get = |s: &str| r.iter().find(|x| x[0] == s).unwrap()[1..].iter().map(|v| v.parse::<f64>().unwrap()).collect::<Vec<_>>();
    for (a, b) in get("quantum_bound").iter().zip(get("perfect")) {
        assert!((a / b - 1.0).abs() < 1e-6);
    }
    for (a, b) in get("quantum_bound").iter().zip(get("spade")) {
        assert!((a / b - 1.0).abs() < 1e-6);
    }
}

#[test]
fn star_alone_is_dark() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["coronagraph", "--design", "perfect", "--r-delta-over-sigma", "0", "--pixels", "64"]);
    let img = read_raster(&d.path().join("coronagraph_perfect_image.raw"));
    assert_eq!(img.n, 64);
    assert!(img.data.iter().all(|v| *v == 0.0));
}

#[test]
fn piaacmc_shows_two_lobes_below_diffraction() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["coronagraph", "--design", "piaacmc", "--r-delta-over-sigma", "0.2", "--phi-delta", "0"]);
    assert_eq!(col(&d.path().join("coronagraph_piaacmc_image.csv"), "maxima"), vec![2.0]);
    ok(d.path(), &["coronagraph", "--design", "vortex", "--r-delta-over-sigma", "0.2", "--phi-delta", "0"]);
    assert_eq!(col(&d.path().join("coronagraph_vortex_image.csv"), "maxima"), vec![1.0]);
}

#[test]
fn eigenmode_spectrum_sorted() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["coronagraph", "--design", "vortex", "--output", "eigenmodes", "--n-max", "6", "--modes", "28", "--pixels", "32"]);
    let t = col(&d.path().join("coronagraph_vortex_spectrum.csv"), "transmission");
    assert_eq!(t.len(), 28);
    assert!(t.windows(2).all(|w| w[0] <= w[1] + 1e-12));
    assert!(d.path().join("coronagraph_vortex_mode027.raw").exists());
    let text = std::fs::read_to_string(d.path().join("coronagraph_vortex_operator.json")).unwrap();
    let (op, dec) = exolimits::coronagraph::CoronagraphOperator::from_json(&text).unwrap();
    assert_eq!((op.n_max, dec.truncation()), (6, 28));
    assert!((dec.transmissions[27].norm_sqr() - t[27]).abs() < 1e-12);
}

#[test]
fn grid_route_throughput() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["coronagraph", "--design", "perfect", "--route", "grid", "--output", "throughput", "--separations", "0,1"]);
    let t = col(&d.path().join("coronagraph_perfect_throughput.csv"), "throughput");
    assert!(t[0] < 1e-3 && (t[1] - 0.8).abs() < 0.2, "{t:?}");
}

#[test]
fn montecarlo_runs_are_seeded() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["montecarlo", "--trials", "1"]);
    assert_eq!(rows(&d.path().join("montecarlo_trials.csv")).len(), 1);
    assert!(!d.path().join("montecarlo_summary.csv").exists());

    let args = ["montecarlo", "--trials", "40", "--seed", "9", "--spiral", "2", "--spiral-min", "0.3", "--spiral-max", "0.6"];
    ok(d.path(), &args);
    let a = std::fs::read(d.path().join("montecarlo_summary.csv")).unwrap();
    ok(d.path(), &args);
    assert_eq!(a, std::fs::read(d.path().join("montecarlo_summary.csv")).unwrap());
    assert_eq!(rows(&d.path().join("montecarlo_summary.csv")).len(), 2);
    let text = std::fs::read_to_string(d.path().join("montecarlo_trials.csv")).unwrap();
    assert!(text.starts_with("# exolimits 0.1.0 seed=9"));
}
