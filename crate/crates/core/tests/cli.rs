use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use recool::io::{read_json, read_table, Manifest};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn recool() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_recool"));
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("RECOOL_")) {
        c.env_remove(k);
    }
    c
}

fn run(args: &[&str], out: &Path) -> i32 {
    run_with(recool(), args, out)
}

fn run_with(mut cmd: Command, args: &[&str], out: &Path) -> i32 {
    let o = cmd.args(args).arg("--out-dir").arg(out).output().expect("binary runs");
    o.status.code().expect("exit code")
}

fn json(path: impl AsRef<Path>) -> serde_json::Value {
    read_json(path).unwrap()
}

fn column(path: impl AsRef<Path>, name: &str) -> Vec<f64> {
    let (h, rows) = read_table(path).unwrap();
    let i = h.iter().position(|c| c == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[i]).collect()
}

fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0
}

#[test]
fn rates_maxima_match_critical_energies() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(&["rates", "--delta", "-1", "--r", "0.0018", "--eps-max", "20"], d.path()), 0);
    let s = json(d.path().join("rates.json"));
    let (ec, es) = (s["eps_c_r"].as_f64().unwrap(), s["eps_s_r"].as_f64().unwrap());
    let csv = d.path().join("rates.csv");
    let eps = column(&csv, "eps_r");
    let cooling: Vec<f64> = column(&csv, "de_dtau").iter().map(|v| -v).collect();
    let dn = column(&csv, "dn_dtau");
    let ic = argmax(&cooling);
    assert!((eps[ic] / ec).ln().abs() < 0.05, "{} vs {ec}", eps[ic]);
    let peaks: Vec<usize> = (1..dn.len() - 1).filter(|&i| dn[i] > dn[i - 1] && dn[i] > dn[i + 1]).collect();
    assert_eq!(peaks.len(), 1);
    let is = peaks[0];
    assert!((eps[is] / es).ln().abs() < 0.05, "{} vs {es}", eps[is]);
}

#[test]
fn rates_near_resonance_has_no_scattering_peak() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(&["rates", "--delta", "-0.3", "--r", "0.0018"], d.path()), 0);
    let s = json(d.path().join("rates.json"));
    assert!(s.get("eps_s_r").is_none());
    assert!(s.get("peak_scattering_ratio").is_none());
    let dn = column(d.path().join("rates.csv"), "dn_dtau");
    assert!(dn.windows(2).all(|w| w[1] <= w[0] + 1e-15));
}

#[test]
fn rates_at_zero_energy_is_one_steady_row() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(&["rates", "--delta", "-1", "--r", "0.0018", "--eps-max", "0"], d.path()), 0);
    let (_, rows) = read_table(d.path().join("rates.csv")).unwrap();
    assert_eq!(rows, vec![vec![0.0, 0.0, 0.5]]);
}

#[test]
fn usage_errors_exit_2() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(&["rates", "--points", "many"], d.path()), 2);
    assert_eq!(run(&["rates", "--delta", "0.5"], d.path()), 2);
    assert_eq!(run(&["average", "--mean-eps", "hot"], d.path()), 2);
    assert_eq!(run(&["fit", "/does/not/exist.csv"], d.path()), 2);
    assert_eq!(run(&[], d.path()), 2);
    assert_eq!(run(&["--set", "bogus=1", "rates"], d.path()), 2);
}

#[test]
fn fit_fixture_recovers_temperature() {
    let d = tempfile::tempdir().unwrap();
    let trace = fixture("mg_recool_5p1.csv");
    assert_eq!(run(&["fit", trace.to_str().unwrap()], d.path()), 0);
    let f = json(d.path().join("fit.json"));
    assert_eq!(f["outcome"], "estimate");
    let (t, s) = (f["temperature_K"].as_f64().unwrap(), f["sigma_K"].as_f64().unwrap());
    assert!((t - 4.02).abs() < 0.01, "{t}");
    assert!((t - 3.9).abs() < 2.0 * s, "{t} ± {s}");
    for key in ["mean_energy_scaled", "mean_energy_r_units", "A", "B", "nll"] {
        assert!(f.get(key).is_some(), "missing {key}");
    }
    let h = json(d.path().join("heating.json"));
    assert!((h["rate_k_per_s"].as_f64().unwrap() - t / 25.0).abs() < 1e-9);
}

#[test]
fn flat_trace_exits_no_signal() {
    let d = tempfile::tempdir().unwrap();
    let trace = fixture("flat.csv");
    assert_eq!(run(&["fit", trace.to_str().unwrap()], d.path()), 3);
    let f = json(d.path().join("fit.json"));
    assert_eq!(f["outcome"], "below_sensitivity");
    assert!(f["upper_bound_K"].as_f64().unwrap() < 1.0);
}

#[test]
fn drifting_tail_exits_numerical() {
    let d = tempfile::tempdir().unwrap();
    let (_, rows) = read_table(fixture("mg_recool_5p1.csv")).unwrap();
    let n = rows.len();
    let mut text = String::from("bin_start_s,bin_width_s,counts\n");
    for (i, r) in rows.iter().enumerate() {
        let c = if i >= n - n / 10 { 2.0 * r[2] } else { r[2] };
        text.push_str(&format!("{},{},{}\n", r[0], r[1], c));
    }
    let trace = d.path().join("drift.csv");
    std::fs::write(&trace, text).unwrap();
    std::fs::copy(fixture("mg_recool_5p1.json"), d.path().join("drift.json")).unwrap();
    assert_eq!(run(&["fit", trace.to_str().unwrap()], &d.path().join("out")), 4);
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn manifest_rerun_is_bitwise() {
    let d = tempfile::tempdir().unwrap();
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    let args = ["average", "--mean-eps", "2ec", "--trace-bins", "50", "--bin-width-s", "2e-5", "--seed", "9", "--save-cache"];
    assert_eq!(run(&args, &a), 0);
    let first = files(&a);
    let manifest = a.join(Manifest::file_name("average"));
    let m: Manifest = read_json(&manifest).unwrap();
    for out in &m.outputs {
        assert!(first.contains_key(out), "manifest lists missing {out}");
    }

    let o = recool().arg("--from-manifest").arg(&manifest).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(files(&a) == first, "rerun in place changed the outputs");

    assert_eq!(run_with({
        let mut c = recool();
        c.arg("--from-manifest").arg(&manifest);
        c
    }, &[], &b), 0);
    let second = files(&b);
    for out in &m.outputs {
        assert!(second[out] == first[out], "{out} differs");
    }
}

#[test]
fn config_from_environment() {
    let d = tempfile::tempdir().unwrap();
    let conf = d.path().join("alt.conf");
    let text = std::fs::read_to_string(fixture("mg25.conf")).unwrap().replace("saturation = 0.9", "saturation = 0.5");
    std::fs::write(&conf, text).unwrap();

    let mut c = recool();
    c.env("RECOOL_CONFIG", &conf);
    assert_eq!(run_with(c, &["rates"], &d.path().join("a")), 0);
    let m = json(d.path().join("a/rates.manifest.json"));
    assert_eq!(m["config"]["params"]["saturation"], 0.5);

    let mut c = recool();
    c.env("RECOOL_CONFIG", &conf).env("RECOOL_SATURATION", "0.25");
    assert_eq!(run_with(c, &["rates"], &d.path().join("b")), 0);
    let m = json(d.path().join("b/rates.manifest.json"));
    assert_eq!(m["config"]["params"]["saturation"], 0.25);

    let mut c = recool();
    c.env("RECOOL_CONFIG", d.path().join("missing.conf"));
    assert_eq!(run_with(c, &["rates"], &d.path().join("c")), 2);
}

#[test]
fn far_detuned_hot_ensemble_starts_bright() {
    let d = tempfile::tempdir().unwrap();
    let args = ["average", "--mean-eps", "2ec", "--delta", "-1.7321", "--r", "0.0018"];
    assert_eq!(run(&args, d.path()), 0);
    let s = json(d.path().join("average.json"));
    assert!(s["initial_rate"].as_f64().unwrap() > s["steady_rate"].as_f64().unwrap());
    let rate = column(d.path().join("average.csv"), "rate");
    let steady = s["steady_rate"].as_f64().unwrap();
    assert!((rate.last().unwrap() / steady - 1.0).abs() < 1e-3);
}

#[test]
fn design_trends() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(&["design", "--delta-points", "4", "--mean-points", "5"], d.path()), 0);
    let (h, rows) = read_table(d.path().join("design.csv")).unwrap();
    assert_eq!(h, ["delta", "mean_eps_r", "relative_measurement_time"]);
    let at = |delta_idx: usize, mean_idx: usize| rows[delta_idx * 5 + mean_idx][2];
    // Hot ensembles are measured faster closer to resonance.
    for i in 1..4 {
        assert!(at(i, 4) < at(i - 1, 4));
    }
    // Near resonance the time falls with energy across the whole range.
    for j in 1..5 {
        assert!(at(3, j) < at(3, j - 1));
    }
}

#[test]
fn micromotion_stable_point() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(&["modes3d", "--omega-tilde", "6", "--delta", "-1"], d.path()), 0);
    let s = json(d.path().join("modes3d.json"));
    let pts: Vec<f64> = s["stable_points_r"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(pts.len(), 1);
    assert!((12.0..18.0).contains(&pts[0]), "{pts:?}");
    let csv = d.path().join("modes3d.csv");
    let (eps, de) = (column(&csv, "target_eps_r"), column(&csv, "de_r_dtau_x"));
    // Heating just below the stable point, cooling just above it.
    let below = eps.iter().rposition(|e| *e < 0.8 * pts[0]).unwrap();
    let above = eps.iter().position(|e| *e > 1.3 * pts[0]).unwrap();
    assert!(de[below] > 0.0 && de[above] < 0.0);
}

#[test]
fn spectrum_profiles() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(&["spectrum", "--dmax-x", "0", "--dmax-y", "4", "--points", "201"], d.path()), 0);
    let r = column(d.path().join("spectrum.csv"), "response");
    assert_eq!(r.len(), 201);
    for i in 0..100 {
        assert!((r[i] - r[200 - i]).abs() < 1e-12);
    }
    assert!(r[100] < r[argmax(&r)]);

    let e = tempfile::tempdir().unwrap();
    assert_eq!(run(&["spectrum", "--beta", "0", "--omega-tilde", "3", "--points", "21"], e.path()), 0);
    let (x, y) = (column(e.path().join("spectrum.csv"), "delta_eff"), column(e.path().join("spectrum.csv"), "response"));
    for (x, y) in x.iter().zip(&y) {
        assert!((y - 1.0 / (1.0 + x * x)).abs() < 1e-12);
    }
}

#[test]
fn short_monte_carlo_run() {
    let d = tempfile::tempdir().unwrap();
    let args = ["mc", "--mean-eps", "1", "--n-traj", "4", "--duration-s", "1e-6", "--bins", "5", "--seed", "3"];
    assert_eq!(run(&args, d.path()), 0);
    let rate = column(d.path().join("mc.csv"), "mean_rate_hz");
    assert_eq!(rate.len(), 5);
    assert!(rate.iter().all(|r| r.is_finite() && *r > 0.0));
    let ez = column(d.path().join("mc_energy.csv"), "energy_z_K");
    assert!(ez.iter().all(|e| *e > 0.0));
    let m = json(d.path().join("mc.manifest.json"));
    assert_eq!(m["config"]["command"]["seed"], 3);
}

#[test]
fn trajectory_in_lab_units() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(&["trajectory", "--eps0", "3.9K", "--points", "50"], d.path()), 0);
    let csv = d.path().join("trajectory.csv");
    let k = column(&csv, "energy_K");
    assert!((k[0] - 3.9).abs() < 1e-9);
    assert!(k.windows(2).all(|w| w[1] <= w[0]));
    assert!(column(&csv, "t_s").iter().all(|t| t.is_finite()));
}
