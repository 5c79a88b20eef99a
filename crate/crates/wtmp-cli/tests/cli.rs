use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use wtmp::channel::{GeneratorSpec, PathParams};
use wtmp::config::{ArraySpec, RunConfig};
use wtmp::io::{read_dump_header, Manifest, DUMP_HEADER_LEN};
use wtmp::numerics::C64;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wtmp"))
}

fn tiny() -> RunConfig {
    let mut r = RunConfig::desk();
    r.array = ArraySpec { n_h: 1, n_v: 32, spacing: 0.5 };
    r.scenario.n_s = 8;
    r.algorithm.predictor.pencil.n_predict = 4;
    r.algorithm.grid.m_theta = 128;
    r.algorithm.grid.m_r = 4;
    r.generator = Some(GeneratorSpec { n_clusters: 2, rays_per_cluster: 1, ..GeneratorSpec::default() });
    r.experiment.n_ue = 2;
    r.experiment.n_seeds = 2;
    r.experiment.n_t_axis = vec![16, 32, 64];
    r.experiment.distance_axis = vec![10.0, 20.0, 40.0];
    r
}

fn write_config(dir: &Path, run: &RunConfig) -> PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, run.to_toml()).unwrap();
    p
}

fn exec(config: &Path, out: &Path, args: &[&str]) -> Output {
    bin()
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

/// Header and rows of a CSV file; our tables never quote fields.
fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn manifest(out: &Path, command: &str) -> Manifest {
    let text = std::fs::read_to_string(out.join(format!("manifest_{command}.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn synth_writes_dumps_matching_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let run = tiny();
    let cfg = write_config(dir.path(), &run);
    let out = dir.path().join("a");
    ok(&exec(&cfg, &out, &["synth"]));
    for u in 0..2 {
        let bytes = std::fs::read(out.join(format!("channel_ue{u}.bin"))).unwrap();
        let h = read_dump_header(&bytes).unwrap();
        assert_eq!((h.n_ports, h.n_samples, h.n_t, h.n_f), (2, 12, 32, 12));
        assert_eq!(h.t_sample, run.scenario.t_sample);
        assert_eq!(bytes.len(), DUMP_HEADER_LEN + 2 * 12 * 32 * 12 * 16);
        assert!(out.join(format!("paths_ue{u}.json")).exists());
    }
    let m = manifest(&out, "synth");
    assert_eq!(m.seeds, run.experiment.seeds());
    assert_eq!(m.config_sha256.len(), 64);
    assert!(m.outputs.contains(&"channel_ue1.bin".to_string()));

    // same seed, same bytes; another seed differs
    let again = dir.path().join("b");
    ok(&exec(&cfg, &again, &["synth"]));
    let other = dir.path().join("c");
    ok(&exec(&cfg, &other, &["--seed", "99", "synth"]));
    let read = |d: &Path| std::fs::read(d.join("channel_ue0.bin")).unwrap();
    assert_eq!(read(&out), read(&again));
    assert_ne!(read(&out), read(&other));
    assert_eq!(manifest(&out, "synth").config_sha256, manifest(&again, "synth").config_sha256);
}

#[test]
fn paper_generator_records_180_paths() {
    let dir = tempfile::tempdir().unwrap();
    let mut run = RunConfig::paper();
    run.experiment.n_ue = 1;
    run.scenario.n_s = 3;
    run.algorithm.predictor.pencil.n_predict = 1;
    let cfg = write_config(dir.path(), &run);
    let out = dir.path().join("p");
    ok(&exec(&cfg, &out, &["synth"]));
    let paths: Vec<PathParams> =
        serde_json::from_str(&std::fs::read_to_string(out.join("paths_ue0.json")).unwrap()).unwrap();
    assert_eq!(paths.len(), 180);
    let m = manifest(&out, "synth");
    assert!(m.notes[0].contains("180 paths"), "{:?}", m.notes);
}

fn single_path() -> RunConfig {
    let mut run = tiny();
    run.array = ArraySpec { n_h: 1, n_v: 64, spacing: 0.5 };
    run.scenario.n_s = 16;
    run.algorithm.predictor.pencil.n_predict = 8;
    run.algorithm.grid.m_theta = 256;
    run.algorithm.grid.r_range = (10.0, 1000.0);
    run.experiment.n_ue = 1;
    run.experiment.srs_snr_db = None;
    run.paths = Some(vec![PathParams {
        theta: 1.234,
        phi: 0.0,
        r: 1e5,
        tau0: 1e-7,
        doppler: 200.0,
        gains: vec![C64::new(0.8, -0.6)],
        theta_eoa: 0.0,
        phi_aoa: 0.0,
    }]);
    run
}

fn summary_errors(out: &Path) -> Vec<f64> {
    let (header, rows) = csv_rows(&out.join("prediction_summary.csv"));
    let col = header.iter().position(|h| h == "relative_error").unwrap();
    rows.iter().map(|r| r[col].parse().unwrap()).collect()
}

#[test]
fn predict_noise_free_single_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &single_path());
    let out = dir.path().join("p");
    ok(&exec(&cfg, &out, &["predict"]));
    let e = summary_errors(&out);
    assert_eq!(e.len(), 1);
    assert!(e[0] < 1e-4, "error {}", e[0]);
    let (header, rows) = csv_rows(&out.join("prediction.csv"));
    assert_eq!(header, ["ue", "port", "antenna", "subcarrier", "re", "im"]);
    assert_eq!(rows.len(), 64 * 12);

    // from dumps written by synth
    ok(&exec(&cfg, &out, &["synth"]));
    let out2 = dir.path().join("q");
    let o = exec(&cfg, &out2, &["predict", "--input", out.to_str().unwrap()]);
    ok(&o);
    assert!(summary_errors(&out2)[0] < 1e-4);
    assert!(String::from_utf8_lossy(&o.stdout).contains("mean relative prediction error"));
}

#[test]
fn difference_variant_is_routed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &single_path());
    let out = dir.path().join("d");
    ok(&exec(&cfg, &out, &["--variant", "difference", "predict"]));
    assert!(summary_errors(&out)[0] < 1e-4);
    // floor(N_s/2) lies inside both admissible ranges, so only the config differs
    let (header, rows) = csv_rows(&out.join("prediction_summary.csv"));
    let q = header.iter().position(|h| h == "pencil_size").unwrap();
    let std_out = dir.path().join("s");
    ok(&exec(&cfg, &std_out, &["predict"]));
    let (_, std_rows) = csv_rows(&std_out.join("prediction_summary.csv"));
    assert_eq!(rows[0][q], std_rows[0][q]);
    let toml = std::fs::read_to_string(&cfg).unwrap();
    assert!(!toml.contains("difference"));
    assert_ne!(manifest(&out, "predict").config_sha256, manifest(&std_out, "predict").config_sha256);
}

#[test]
fn missing_input_fails_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &tiny());
    let o = exec(&cfg, &dir.path().join("o"), &["predict", "--input", dir.path().join("nowhere").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("channel_ue0.bin"));
}

#[test]
fn bad_config_fails_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, tiny().to_toml().replace("gamma1 = 0.99", "gamma1 = 2.0")).unwrap();
    let o = exec(&cfg, &dir.path().join("o"), &["synth"]);
    assert_eq!(o.status.code(), Some(2));
    let missing = exec(&dir.path().join("absent.toml"), &dir.path().join("o"), &["synth"]);
    assert_eq!(missing.status.code(), Some(4));
}

#[test]
fn figure_six_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &tiny());
    let out = dir.path().join("f");
    ok(&exec(&cfg, &out, &["figure", "6"]));
    let (header, rows) = csv_rows(&out.join("fig6.csv"));
    assert_eq!(header, ["series", "axis", "mean", "stderr", "n"]);
    let mut names: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    names.dedup();
    assert_eq!(names, ["with", "without"]);
    let axis: Vec<f64> = rows.iter().filter(|r| r[0] == "with").map(|r| r[1].parse().unwrap()).collect();
    assert!(axis.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn figure_three_error_falls_with_antennas() {
    let dir = tempfile::tempdir().unwrap();
    let mut run = tiny();
    run.experiment.srs_snr_db = None;
    run.experiment.n_seeds = 6;
    run.algorithm.oracle_transform = true;
    let cfg = write_config(dir.path(), &run);
    let out = dir.path().join("f");
    ok(&exec(&cfg, &out, &["figure", "3"]));
    let (_, rows) = csv_rows(&out.join("fig3.csv"));
    let wtmp: Vec<f64> = rows.iter().filter(|r| r[0] == "wtmp").map(|r| r[2].parse().unwrap()).collect();
    assert_eq!(wtmp.len(), 3);
    // least-squares slope of log error against log N_t
    let x: Vec<f64> = [16.0f64, 32.0, 64.0].iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = wtmp.iter().map(|v| v.ln()).collect();
    let (mx, my) = (x.iter().sum::<f64>() / 3.0, y.iter().sum::<f64>() / 3.0);
    let slope = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>()
        / x.iter().map(|a| (a - mx) * (a - mx)).sum::<f64>();
    assert!(slope < 0.0, "{wtmp:?}");
}

#[test]
fn invalid_figure_id_is_a_usage_error() {
    let o = bin().args(["figure", "9"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = bin().args(["figure", "six"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn evaluate_and_the_parameter_commands() {
    let dir = tempfile::tempdir().unwrap();
    let mut run = tiny();
    run.experiment.n_seeds = 1;
    let cfg = write_config(dir.path(), &run);
    let out = dir.path().join("e");
    ok(&exec(&cfg, &out, &["evaluate", "--baseline", "stationary", "--baseline", "no_prediction"]));
    let (_, rows) = csv_rows(&out.join("se.csv"));
    assert_eq!(rows.len(), 2 * run.experiment.snr_axis.len());
    assert!(bin().args(["evaluate", "--baseline", "pad"]).output().unwrap().status.code() == Some(2));

    ok(&exec(&cfg, &out, &["estimate"]));
    let (header, rows) = csv_rows(&out.join("estimates.csv"));
    assert_eq!(header, ["ue", "path", "theta", "phi", "r"]);
    assert!(!rows.is_empty());
    ok(&exec(&cfg, &out, &["transform"]));
    let (_, rows) = csv_rows(&out.join("transform_phases.csv"));
    assert_eq!(rows.len(), 2 * 32);
    let (header, _) = csv_rows(&out.join("transform_nmse.csv"));
    assert_eq!(header, ["ue", "with", "without"]);
}

#[test]
fn thread_variable_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &tiny());
    let o = bin()
        .env("WTMP_THREADS", "many")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("t"))
        .arg("synth")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = bin()
        .env("WTMP_THREADS", "1")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("t"))
        .arg("synth")
        .output()
        .unwrap();
    ok(&o);
}
