// Copyright 2026 The qoc Authors
// SPDX-License-Identifier: Apache-2.0

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const QUBIT: &str = r#"
[system]
levels = [3]
essential = [2]
freq_ghz = [4.8]
self_kerr_ghz = [0.22]

[controls]
splines_per_carrier = 8
carriers_ghz = [[0.0, -0.22]]
alpha_max_mhz = 20.0
pin_boundary = true

[gate]
name = "swap"
swap_level = 1

[sim]
T_ns = 40.0
cp = 20.0

[optimizer]
max_iters = 60
infidelity_target = 1e-4
seed = 3

[risk]
eps_max_mhz = 5.0
quad_order = 3
"#;

fn qoc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qoc")).args(args).env_remove("QOC_THREADS").output().expect("spawn qoc")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|x| x.parse::<f64>().unwrap()).collect())
        .collect();
    (header, rows)
}

fn params_file(dir: &Path, name: &str, header: Value, alpha_mhz: Vec<f64>) -> PathBuf {
    let doc = serde_json::json!({ "header": header, "alpha_mhz": alpha_mhz });
    write(dir, name, &doc.to_string())
}

/// Optimize the qubit problem once and hand back its output directory.
fn optimized(tmp: &TempDir) -> PathBuf {
    let cfg = write(tmp.path(), "qubit.toml", QUBIT);
    let out = tmp.path().join("opt");
    let o = qoc(&["optimize", s(&cfg), "--out", s(&out), "--reproducible"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn resonances_of_a_plain_qubit_is_zero() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "q.toml",
        "[system]\nlevels = [2]\nessential = [2]\nfreq_ghz = [5.0]\nself_kerr_ghz = [0.3]\n",
    );
    let o = qoc(&["resonances", s(&cfg)]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["resonances_ghz"], serde_json::json!([[0.0]]));
}

#[test]
fn resonances_of_coupled_pair_over_all_levels() {
    let tmp = TempDir::new().unwrap();
    let (d1, d2, x1, x2, x12) = (0.003, -0.002, 0.2198, 0.2252, 0.01);
    let text = format!(
        "[system]\nlevels = [3, 3]\nessential = [2, 2]\nfreq_ghz = [{}, {}]\nself_kerr_ghz = [{x1}, {x2}]\n\
         rot_freq_ghz = [4.1, 4.8]\ncross_kerr_ghz = [[0.0, {x12}], [{x12}, 0.0]]\n",
        4.1 + d1,
        4.8 + d2
    );
    let cfg = write(tmp.path(), "pair.toml", &text);
    let o = qoc(&["resonances", s(&cfg), "--all-levels"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    // Δ − ξ j_k − ξ₁₂ j_p for j_k ∈ {0, 1}, j_p ∈ {0, 1, 2}.
    for (k, (d, x)) in [(d1, x1), (d2, x2)].into_iter().enumerate() {
        let mut expect: Vec<f64> = (0..2)
            .flat_map(|jk| (0..3).map(move |jp| d - x * jk as f64 - x12 * jp as f64))
            .collect();
        expect.sort_by(|a, b| b.total_cmp(a));
        let got: Vec<f64> = v["resonances_ghz"][k].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        assert_eq!(got.len(), 6);
        for (g, e) in got.iter().zip(&expect) {
            assert!((g - e).abs() < 1e-9, "{got:?} vs {expect:?}");
        }
    }
}

#[test]
fn malformed_config_names_the_key() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "bad.toml", &QUBIT.replace("alpha_max_mhz", "alpha_max_ghz"));
    let o = qoc(&["optimize", s(&cfg), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("alpha_max_ghz"));
}

/// `(u, v)` of one level after `steps` Störmer-Verlet steps of `ψ' = −iκψ` from `ψ = 1`.
fn discrete_rotation(kappa: f64, h: f64, steps: usize) -> (f64, f64) {
    let (mut u, mut v) = (1.0, 0.0);
    for _ in 0..steps {
        let v1 = v + 0.5 * h * kappa * u;
        let u2 = u - h * kappa * v1;
        v += 0.5 * h * kappa * (u + u2);
        u = u2;
    }
    (u, v)
}

#[test]
fn zero_controls_give_the_diagonal_infidelity() {
    let tmp = TempDir::new().unwrap();
    let (freq, rot, horizon, steps) = (4.83, 4.79, 20.0, 400);
    let text = QUBIT
        .replace("freq_ghz = [4.8]", &format!("freq_ghz = [{freq}]\nrot_freq_ghz = [{rot}]"))
        .replace("T_ns = 40.0", &format!("T_ns = {horizon}\nM = {steps}"))
        .replace("name = \"swap\"\nswap_level = 1", "name = \"identity\"");
    let cfg = write(tmp.path(), "det.toml", &text);
    let header = serde_json::json!({
        "format_version": 1, "num_subsystems": 1, "splines_per_carrier": 8, "carriers_per_subsystem": 2,
        "carriers_ghz": [[0.0, -0.22]], "T_ns": horizon, "layout": "subsystem-major, carrier, re/im, spline"
    });
    let params = params_file(tmp.path(), "zero.json", header, vec![0.0; 32]);
    let out = tmp.path().join("sim");
    let o = qoc(&["simulate", s(&cfg), "--params", s(&params), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    // Level j has κ_j = Δ j on the essential block; the target is R(T) = diag(e^{i ω_r j T}).
    let detuning = 2.0 * PI * (freq - rot);
    let omega_r = 2.0 * PI * rot;
    let h = horizon / steps as f64;
    let overlap: num_complex_free::C = (0..2)
        .map(|j| {
            let (u, v) = discrete_rotation(detuning * j as f64, h, steps);
            // conj(ψ) τ with ψ = u − iv.
            num_complex_free::C(u, v).mul(num_complex_free::C::polar(omega_r * j as f64 * horizon))
        })
        .fold(num_complex_free::C(0.0, 0.0), num_complex_free::C::add);
    let expect = 1.0 - overlap.norm_sqr() / 4.0;
    let continuous = 1.0 - (0.5 * (detuning + omega_r) * horizon).cos().powi(2);
    assert!((expect - continuous).abs() < 1e-4);
    let j1 = json(&out.join("report.json"))["j1"].as_f64().unwrap();
    assert!((j1 - expect).abs() < 1e-12, "{j1} vs {expect}");
}

/// Minimal complex arithmetic for the oracle above.
mod num_complex_free {
    #[derive(Clone, Copy)]
    pub struct C(pub f64, pub f64);

    impl C {
        pub fn polar(theta: f64) -> Self {
            C(theta.cos(), theta.sin())
        }
        pub fn mul(self, o: C) -> C {
            C(self.0 * o.0 - self.1 * o.1, self.0 * o.1 + self.1 * o.0)
        }
        pub fn add(self, o: C) -> C {
            C(self.0 + o.0, self.1 + o.1)
        }
        pub fn norm_sqr(self) -> f64 {
            self.0 * self.0 + self.1 * self.1
        }
    }
}

#[test]
fn optimize_writes_consistent_artifacts() {
    let tmp = TempDir::new().unwrap();
    let out = optimized(&tmp);
    let report = json(&out.join("report.json"));
    assert_eq!(report["status"], "infidelity_target");
    assert!(report["j1"].as_f64().unwrap() <= 1e-4);
    assert!(report["wall_time_s"].is_null());
    let steps = report["M"].as_u64().unwrap() as usize;
    assert_eq!(report["config"]["sim"]["M"].as_u64().unwrap() as usize, steps);

    let (header, rows) = csv_rows(&out.join("populations.csv"));
    assert_eq!(header.len(), 1 + 2 * 3);
    assert_eq!(rows.last().unwrap()[0], 40.0);
    let (header, rows) = csv_rows(&out.join("controls.csv"));
    assert_eq!(header[0], "t_ns");
    assert_eq!(header.len(), 1 + 4 + 3);
    // Pinned boundary splines: the drive starts and ends at zero.
    for row in [&rows[0], rows.last().unwrap()] {
        assert!(row[1..].iter().all(|x| x.abs() < 1e-12), "{row:?}");
    }
    let (header, _) = csv_rows(&out.join("convergence.csv"));
    assert_eq!(header, ["iter", "j1", "j2", "total", "pg_norm", "step", "evaluations"]);
    let (header, rows) = csv_rows(&out.join("spectrum.csv"));
    assert_eq!(header, ["freq_ghz", "magnitude_s0"]);
    assert_eq!(rows.len(), steps / 2 + 1);
}

#[test]
fn populations_stay_normalized_on_a_fine_grid() {
    let tmp = TempDir::new().unwrap();
    let out = optimized(&tmp);
    let fine = write(tmp.path(), "fine.toml", &QUBIT.replace("cp = 20.0", "cp = 160.0"));
    let sim = tmp.path().join("fine");
    let o = qoc(&["simulate", s(&fine), "--params", s(&out.join("params.json")), "--out", s(&sim)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, rows) = csv_rows(&sim.join("populations.csv"));
    assert!(rows.len() > 100);
    for row in &rows {
        for col in row[1..].chunks(3) {
            assert!((col.iter().sum::<f64>() - 1.0).abs() <= 1e-6, "{row:?}");
        }
    }
}

#[test]
fn reproducible_runs_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "qubit.toml", QUBIT);
    let runs: Vec<PathBuf> = (0..2)
        .map(|i| {
            let out = tmp.path().join(format!("run{i}"));
            let o = qoc(&["optimize", s(&cfg), "--out", s(&out), "--reproducible", "--threads", "1"]);
            assert_eq!(o.status.code(), Some(0));
            out
        })
        .collect();
    for name in ["report.json", "params.json", "convergence.csv", "controls.csv", "populations.csv", "spectrum.csv"] {
        let a = std::fs::read(runs[0].join(name)).unwrap();
        let b = std::fs::read(runs[1].join(name)).unwrap();
        assert!(a == b, "{name} differs");
    }
}

#[test]
fn simulate_reproduces_optimized_objective() {
    let tmp = TempDir::new().unwrap();
    let out = optimized(&tmp);
    let cfg = tmp.path().join("qubit.toml");
    let sim = tmp.path().join("sim");
    let o = qoc(&["simulate", s(&cfg), "--params", s(&out.join("params.json")), "--out", s(&sim)]);
    assert_eq!(o.status.code(), Some(0));
    let a = json(&out.join("report.json"))["j1"].as_f64().unwrap();
    let b = json(&sim.join("report.json"))["j1"].as_f64().unwrap();
    assert!((a - b).abs() <= 1e-12);

    // The embedded config is enough to re-run without the original file.
    let again = tmp.path().join("again");
    let o = qoc(&["simulate", s(&out.join("report.json")), "--params", s(&out.join("params.json")), "--out", s(&again)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let c = json(&again.join("report.json"))["j1"].as_f64().unwrap();
    assert_eq!(b, c);
}

#[test]
fn simulate_rejects_wrong_length() {
    let tmp = TempDir::new().unwrap();
    let out = optimized(&tmp);
    let mut params = json(&out.join("params.json"));
    params["alpha_mhz"].as_array_mut().unwrap().pop();
    let bad = write(tmp.path(), "short.json", &params.to_string());
    let o = qoc(&["simulate", s(&tmp.path().join("qubit.toml")), "--params", s(&bad), "--out", s(&tmp.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn restarts_write_one_history_each_and_keep_the_best() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "qubit.toml", &QUBIT.replace("max_iters = 60", "max_iters = 5"));
    let out = tmp.path().join("r");
    let o = qoc(&["optimize", s(&cfg), "--restarts", "3", "--out", s(&out)]);
    assert!(matches!(o.status.code(), Some(0) | Some(3)), "{}", String::from_utf8_lossy(&o.stderr));
    let finals: Vec<f64> = (0..3)
        .map(|r| *csv_rows(&out.join(format!("convergence_r{r}.csv"))).1.last().unwrap().get(3).unwrap())
        .collect();
    let best = json(&out.join("report.json"))["best_restart"].as_u64().unwrap() as usize;
    let min = finals.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(finals[best], min);
    assert_eq!(std::fs::read(out.join("convergence.csv")).unwrap(), std::fs::read(out.join(format!("convergence_r{best}.csv"))).unwrap());
}

#[test]
fn vacuous_problem_reports_its_status() {
    let tmp = TempDir::new().unwrap();
    let text = QUBIT
        .replace("name = \"swap\"\nswap_level = 1", "name = \"identity\"")
        .replace("alpha_max_mhz = 20.0", "alpha_max_mhz = 1e-6");
    let cfg = write(tmp.path(), "id.toml", &text);
    let out = tmp.path().join("id");
    let o = qoc(&["optimize", s(&cfg), "--out", s(&out)]);
    let report = json(&out.join("report.json"));
    let status = report["status"].as_str().unwrap().to_string();
    let expected_code = if status == "stalled" { 3 } else { 0 };
    assert_eq!(o.status.code(), Some(expected_code));
    assert!(report["iterations"].as_u64().unwrap() <= 60);
    assert!(report["j1"].as_f64().unwrap() < 1e-6);
}

#[test]
fn spectrum_peaks_sit_at_drive_frequencies() {
    let tmp = TempDir::new().unwrap();
    let (rot, shift, horizon) = (4.0, -0.3, 50.0);
    let text = format!(
        "[system]\nlevels = [2]\nessential = [2]\nfreq_ghz = [{rot}]\nself_kerr_ghz = [0.0]\n\
         [controls]\nsplines_per_carrier = 10\ncarriers_ghz = [[0.0, {shift}]]\nalpha_max_mhz = 5.0\n\
         [gate]\nname = \"identity\"\n[sim]\nT_ns = {horizon}\nM = 2000\n"
    );
    let cfg = write(tmp.path(), "tone.toml", &text);
    let header = serde_json::json!({
        "format_version": 1, "num_subsystems": 1, "splines_per_carrier": 10, "carriers_per_subsystem": 2,
        "carriers_ghz": [[0.0, shift]], "T_ns": horizon, "layout": "subsystem-major, carrier, re/im, spline"
    });
    let peaks = |alpha: Vec<f64>, name: &str| -> Vec<f64> {
        let params = params_file(tmp.path(), &format!("{name}.json"), header.clone(), alpha);
        let out = tmp.path().join(name);
        let o = qoc(&["spectrum", s(&cfg), "--params", s(&params), "--out", s(&out)]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let (_, rows) = csv_rows(&out.join("spectrum.csv"));
        let mut local: Vec<(f64, f64)> = rows
            .windows(3)
            .filter(|w| w[1][1] > w[0][1] && w[1][1] >= w[2][1])
            .map(|w| (w[1][1], w[1][0]))
            .collect();
        local.sort_by(|a, b| b.0.total_cmp(&a.0));
        local.into_iter().map(|(_, f)| f).collect()
    };
    let bin = 1.0 / horizon;
    // Real coefficients on the first carrier only: a single tone at ω_r.
    let mut one = vec![0.0; 40];
    one[..10].iter_mut().for_each(|a| *a = 1.0);
    let p = peaks(one.clone(), "one");
    assert!((p[0] - rot).abs() <= bin, "{p:?}");
    // Equal weight on the shifted carrier adds a peak at ω_r + Ω.
    one[20..30].iter_mut().for_each(|a| *a = 1.0);
    let p = peaks(one, "two");
    let mut top = [p[0], p[1]];
    top.sort_by(f64::total_cmp);
    assert!((top[0] - (rot + shift)).abs() <= bin && (top[1] - rot).abs() <= bin, "{p:?}");
}

#[test]
fn gradcheck_passes_and_skips_pinned() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "qubit.toml", QUBIT);
    let o = qoc(&["gradcheck", s(&cfg), "--steps", "60"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["max_rel_error"].as_f64().unwrap() <= 1e-5);
    // 2 carriers x re/im x 2 boundary splines at each end.
    assert_eq!(v["checked"].as_u64().unwrap(), 32 - 16);
}

#[test]
fn gradcheck_risk_objective() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "rn.toml", &QUBIT.replace("eps_max_mhz", "enabled = true\neps_max_mhz"));
    let o = qoc(&["gradcheck", s(&cfg), "--steps", "60"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn gradcheck_failure_exits_four() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "qubit.toml", QUBIT);
    let o = qoc(&["gradcheck", s(&cfg), "--steps", "60", "--tol", "1e-300", "--abs-floor", "1e-300"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("failing indices"));
}

#[test]
fn risk_sweep_zero_row_matches_simulation() {
    let tmp = TempDir::new().unwrap();
    let out = optimized(&tmp);
    let cfg = tmp.path().join("qubit.toml");
    let sweep = tmp.path().join("sweep");
    let params = out.join("params.json");
    let o = qoc(&[
        "risk-sweep", s(&cfg), "--params", s(&params), "--eps-min-mhz", "-10", "--eps-max-mhz", "10", "--eps-count", "5",
        "--out", s(&sweep),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(sweep.join("risk_sweep.csv")).unwrap();
    assert_eq!(r.headers().unwrap(), vec!["params", "eps_mhz", "j1", "j2"]);
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 5);
    let zero = rows.iter().find(|rec| rec[1].parse::<f64>().unwrap() == 0.0).unwrap();
    let nominal = json(&out.join("report.json"))["j1"].as_f64().unwrap();
    assert!((zero[2].parse::<f64>().unwrap() - nominal).abs() <= 1e-12);
}

#[test]
fn thread_flag_overrides_environment() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "qubit.toml", QUBIT);
    let run = |args: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_qoc")).args(args).env("QOC_THREADS", "not-a-number").output().unwrap()
    };
    assert_eq!(run(&["gradcheck", s(&cfg), "--steps", "60"]).status.code(), Some(2));
    assert_eq!(run(&["gradcheck", s(&cfg), "--steps", "60", "--threads", "2"]).status.code(), Some(0));
}
