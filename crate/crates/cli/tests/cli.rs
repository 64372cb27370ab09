use std::f64::consts::{E, PI};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use approx::assert_relative_eq;
use serde_json::Value;

fn entrolab(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_entrolab"))
        .args(args)
        .current_dir(cwd)
        .env_remove("ENTROLAB_OUT")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn rows<'a>(report: &'a Value, name: &str) -> Vec<&'a Value> {
    report["rows"].as_array().unwrap().iter().filter(|r| r["name"] == name).collect()
}

/// Rows of sweep.csv as (value, name, lhs, rhs, margin).
fn sweep_rows(dir: &Path) -> Vec<(f64, String, f64, f64, f64)> {
    let mut r = csv::Reader::from_path(dir.join("sweep.csv")).unwrap();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            let num = |i: usize| rec[i].parse::<f64>().unwrap();
            (num(0), rec[1].to_string(), num(4), num(5), num(6))
        })
        .collect()
}

const GAUSSIANS: &str = r#"
schema = 1
[space]
kind = "euclidean"
N = 2
[measures]
families = ["gaussian(0.25)", "gaussian(1)", "gaussian(t=4, center=(0,0))"]
[checks]
run = ["shannon", "log_sobolev", "uncertainty"]
[output]
dir = "out"
"#;

#[test]
fn gaussians_are_equality_cases() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "g.toml", GAUSSIANS);
    let out = entrolab(tmp.path(), &["verify", "g.toml"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = report(&tmp.path().join("out"));
    assert_eq!(rep["run_id"], "g");
    assert_eq!(rep["space"]["kind"], "euclidean");
    assert_eq!(rep["rows"].as_array().unwrap().len(), 9);
    for row in rep["rows"].as_array().unwrap() {
        assert_eq!(row["pass"], true);
        assert!(row["margin"].as_f64().unwrap().abs() < 1e-6, "{row}");
    }
    for name in ["margins.csv", "timing.txt"] {
        assert!(tmp.path().join("out").join(name).exists(), "{name}");
    }
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = GAUSSIANS.replace("[checks]", "[grid]\nt_min = 0.01\nt_max = 1\npoints_per_decade = 5\n[checks]").replace(
        "run = [",
        r#"run = ["second_moment_bound", "monotonicity", "c0", "rigidity", "#,
    );
    write(tmp.path(), "g.toml", &cfg);
    let read = |f: &str| fs::read(tmp.path().join("out").join(f)).unwrap();
    assert!(entrolab(tmp.path(), &["verify", "g.toml"]).status.success());
    let first: Vec<_> = ["report.json", "margins.csv", "trace.csv"].map(read).into();
    assert!(entrolab(tmp.path(), &["verify", "g.toml"]).status.success());
    let second: Vec<_> = ["report.json", "margins.csv", "trace.csv"].map(read).into();
    assert_eq!(first, second);
}

#[test]
fn empty_check_list_passes_with_no_rows() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "e.toml", "schema = 1\n[space]\nkind = \"euclidean\"\nN = 3\n");
    let out = entrolab(tmp.path(), &["verify", "e.toml"]);
    assert!(out.status.success());
    let rep = report(&tmp.path().join("entrolab-out"));
    assert_eq!(rep["rows"], Value::Array(vec![]));
    assert_eq!(rep["pass"], true);
}

#[test]
fn output_dir_follows_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "g.toml", GAUSSIANS);
    let elsewhere = tmp.path().join("elsewhere");
    let out = Command::new(env!("CARGO_BIN_EXE_entrolab"))
        .args(["verify", "g.toml"])
        .current_dir(tmp.path())
        .env("ENTROLAB_OUT", &elsewhere)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(elsewhere.join("report.json").exists());
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn bad_configs_exit_with_the_offending_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        (GAUSSIANS.replace("gaussian(1)", "gaussian(1"), "measures.families[1]"),
        (GAUSSIANS.replace("schema = 1", "schema = 2"), "schema"),
        (GAUSSIANS.replace("N = 2", "N = 2\nradius = 1"), "unknown field"),
        (GAUSSIANS.replace("\"shannon\"", "\"shanon\""), "unknown variant"),
        (GAUSSIANS.replace("[measures]", "[measures]\nbeta = -1"), "measures.beta"),
        (GAUSSIANS.replace("\"uncertainty\"", "\"uncertainty\", \"monotonicity\""), "checks.run"),
        (GAUSSIANS.replace("[checks]", "[ot]\nlevels = 4\n[checks]"), "ot.levels"),
        (GAUSSIANS.replace("[checks]", "[grid]\nt_min = 1\nt_max = 0.1\npoints_per_decade = 4\n[checks]"), "grid"),
    ];
    for (i, (text, key)) in cases.iter().enumerate() {
        write(tmp.path(), "bad.toml", text);
        let out = entrolab(tmp.path(), &["verify", "bad.toml"]);
        let err = String::from_utf8_lossy(&out.stderr);
        assert_eq!(out.status.code(), Some(2), "case {i}: {err}");
        assert!(err.contains(key), "case {i}: `{key}` not in {err}");
    }
    let out = entrolab(tmp.path(), &["verify", "missing.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

/// Exact Euclidean heat trace from the origin: Ent = −(N/2)·log(4πt) − N/2, θ² = 2Nt.
fn euclidean_trace_csv(n: f64, corrupt: Option<usize>) -> String {
    let mut text = String::from("t,ent,theta_sq\n");
    for k in 0..25 {
        let t = 10f64.powf(-2.0 + k as f64 / 8.0);
        let mut ent = -(n / 2.0) * (4.0 * PI * t).ln() - n / 2.0;
        if corrupt == Some(k) {
            ent -= 0.5;
        }
        text.push_str(&format!("{t:e},{ent:e},{:e}\n", 2.0 * n * t));
    }
    text
}

const EXTERNAL: &str = r#"
schema = 1
[space]
kind = "euclidean"
N = 2
[grid]
trace_csv = "trace_in.csv"
[checks]
run = ["monotonicity", "rigidity", "second_moment_bound", "c0"]
"#;

#[test]
fn clean_external_trace_is_euclidean() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "trace_in.csv", &euclidean_trace_csv(2.0, None));
    write(tmp.path(), "x.toml", EXTERNAL);
    let out = entrolab(tmp.path(), &["verify", "x.toml"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let rep = report(&tmp.path().join("entrolab-out"));
    let rig = rows(&rep, "rigidity");
    assert!(rig[0]["note"].as_str().unwrap().contains("class=euclidean"), "{}", rig[0]);
    assert_eq!(rows(&rep, "monotonicity").len(), 4);
}

#[test]
fn corrupted_external_trace_fails() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "trace_in.csv", &euclidean_trace_csv(2.0, Some(12)));
    write(tmp.path(), "x.toml", EXTERNAL);
    let out = entrolab(tmp.path(), &["verify", "x.toml"]);
    assert_eq!(out.status.code(), Some(1));
    let rep = report(&tmp.path().join("entrolab-out"));
    let mono = rows(&rep, "monotonicity");
    assert!(mono.iter().any(|r| r["pass"] == false));
    let failing = mono.iter().find(|r| r["pass"] == false).unwrap();
    assert!(failing["note"].as_str().unwrap().contains("violations at t"));
    assert!(rows(&rep, "rigidity")[0]["note"].as_str().unwrap().contains("class=none"));
}

#[test]
fn malformed_external_trace_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "trace_in.csv", "t,entropy,theta_sq\n0.1,0,0.4\n");
    write(tmp.path(), "x.toml", EXTERNAL);
    let out = entrolab(tmp.path(), &["verify", "x.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid.trace_csv"));
}

const CONE: &str = r#"
schema = 1
[space]
kind = "cone"
N = 2
rho = 0.5
[measures]
families = ["heat_kernel(0.3)", "bump((0, 0), 0.8)"]
[grid]
t_min = 0.01
t_max = 1
points_per_decade = 6
[checks]
run = ["uncertainty", "c0", "shannon"]
"#;

#[test]
fn uncertainty_is_time_invariant_along_the_flow() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "c.toml", &CONE.replace(", \"bump((0, 0), 0.8)\"", ""));
    let out = entrolab(tmp.path(), &["sweep", "c.toml", "--axis", "t", "--values", "0.05,0.3,1,4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lhs: Vec<f64> = sweep_rows(&tmp.path().join("entrolab-out"))
        .into_iter()
        .filter(|r| r.1 == "uncertainty")
        .map(|r| r.2)
        .collect();
    assert_eq!(lhs.len(), 4);
    for v in &lhs {
        assert_relative_eq!(*v, lhs[0], max_relative = 1e-9);
    }
}

#[test]
fn beta_sweep_keeps_relative_margins() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "c.toml", CONE);
    let out = entrolab(tmp.path(), &["sweep", "c.toml", "--axis", "beta", "--values", "0.5,1,3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = sweep_rows(&tmp.path().join("entrolab-out"));
    for name in ["shannon", "uncertainty"] {
        let rel: Vec<f64> = rows.iter().filter(|r| r.1 == name).map(|r| r.4 / r.3).collect();
        assert_eq!(rel.len(), 6, "{name}");
        for pair in rel.chunks(2).skip(1) {
            assert_relative_eq!(pair[0], rel[0], max_relative = 1e-8);
            assert_relative_eq!(pair[1], rel[1], max_relative = 1e-8);
        }
    }
}

#[test]
fn rho_sweep_scales_the_sharp_constant() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "c.toml", CONE);
    let rhos = [0.2, 0.5, 0.9, 1.0];
    let out = entrolab(tmp.path(), &["sweep", "c.toml", "--axis", "rho", "--values", "0.2,0.5,0.9,1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let c0: Vec<(f64, f64)> = sweep_rows(&tmp.path().join("entrolab-out"))
        .into_iter()
        .filter(|r| r.1 == "c0")
        .map(|r| (r.0, r.2))
        .collect();
    assert_eq!(c0.len(), rhos.len());
    for ((rho, est), want) in c0.iter().zip(rhos) {
        assert_eq!(*rho, want);
        assert_relative_eq!(*est, (PI * E).powf(-0.5) * rho.powf(-0.5), max_relative = 1e-6);
    }
}

#[test]
fn c0_verb_reports_every_closed_form() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "h.toml",
        "schema = 1\n[space]\nkind = \"weighted_half_line\"\nN = 3\n[grid]\nt_min = 0.01\nt_max = 1\npoints_per_decade = 6\n",
    );
    let out = entrolab(tmp.path(), &["c0", "h.toml"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let c0: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("entrolab-out/c0.json")).unwrap()).unwrap();
    let est = c0["estimate"].as_f64().unwrap();
    assert_relative_eq!(est, c0["closed_form"].as_f64().unwrap(), max_relative = 1e-6);
    assert_relative_eq!(est, c0["from_kernel_constant"].as_f64().unwrap(), max_relative = 1e-6);
    let variant = c0["half_line_variant"].as_f64().unwrap();
    assert!((variant / est - 1.0).abs() > 1e-3);
}

#[test]
fn trace_verb_writes_the_trace() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "c.toml", CONE);
    let out = entrolab(tmp.path(), &["trace", "c.toml"]);
    assert!(out.status.success());
    let text = fs::read_to_string(tmp.path().join("entrolab-out/trace.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,ent,u_n,theta_sq,F,F_over_sqrt_t"));
    assert_eq!(lines.count(), 13);
}

#[test]
fn numerical_failures_become_failing_rows() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "g.toml", &GAUSSIANS.replace("gaussian(1)", "gaussian(t=1, center=(0,0,0))"));
    let out = entrolab(tmp.path(), &["verify", "g.toml"]);
    assert_eq!(out.status.code(), Some(1));
    let rep = report(&tmp.path().join("out"));
    let failed: Vec<_> = rep["rows"].as_array().unwrap().iter().filter(|r| r["pass"] == false).collect();
    assert_eq!(failed.len(), 3);
    assert!(failed.iter().all(|r| r["note"].as_str().unwrap().starts_with("error:")));
    assert_eq!(rep["summary"]["passed"], 6);
}

#[test]
fn shipped_configs_run() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for (name, code, failing) in [("cone.toml", 0, 0), ("interval.toml", 1, 1)] {
        let tmp = tempfile::tempdir().unwrap();
        let out = Command::new(env!("CARGO_BIN_EXE_entrolab"))
            .args(["verify".as_ref(), configs.join(name).as_os_str()])
            .env("ENTROLAB_OUT", tmp.path())
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(code), "{name}");
        let rep = report(tmp.path());
        assert_eq!(rep["summary"]["failed"], failing, "{name}");
    }
}
