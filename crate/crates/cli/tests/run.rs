use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn fbp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fbp")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run_config(text: &str, extra: &[&str]) -> (TempDir, Output) {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "scenario.toml", text);
    let out = dir.path().join("out");
    let mut args = vec!["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = fbp(&args);
    (dir, o)
}

fn report(dir: &TempDir) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap()
}

fn table(dir: &TempDir, name: &str) -> Vec<String> {
    fs::read_to_string(dir.path().join("out").join(name))
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect()
}

const ROUNDTRIP: &str = r#"
kind = "roundtrip"
[grid]
d = 1
n = 32
m = 32
mz = 64
[data.rho0]
modes = [{ k = [1], amplitude = 0.05, phase = 0.3 }]
[data.rho1]
modes = [{ k = [2], amplitude = 0.05, phase = 1.1 }]
"#;

#[test]
fn roundtrip_succeeds_with_a_residual_report() {
    let (dir, o) = run_config(ROUNDTRIP, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&dir);
    assert_eq!(r["status"], "ok");
    assert!(r["results"]["roundtrip_distance"].as_f64().unwrap() < 1e-2);
    assert!(r["checks"].as_array().unwrap().iter().all(|c| c["pass"] == true));
    let theta = table(&dir, "theta.csv");
    assert_eq!(theta[0], "x1,z,value");
    assert_eq!(theta.len(), 1 + 32 * 65);
    assert_eq!(table(&dir, "phi.csv")[0], "x1,t,value");
}

#[test]
fn missing_config_exits_2() {
    let o = fbp(&["run", "/nonexistent/scenario.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot read"));
}

#[test]
fn unnormalized_density_exits_2() {
    let (_dir, o) = run_config(
        "kind = \"solve-phi\"\n[grid]\nn = 16\nm = 8\n[data.rho0]\nmodes = [{ k = [0], amplitude = 0.1 }]\n",
        &[],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("normalization violated"));
}

#[test]
fn unknown_keys_exit_2() {
    for text in [
        "kind = \"curvature\"\ncolour = 3\n",
        "kind = \"curvature\"\n[grid]\nd = 2\nsize = 8\n",
        "kind = \"teleport\"\n",
    ] {
        let (_dir, o) = run_config(text, &[]);
        assert_eq!(o.status.code(), Some(2), "{text}");
    }
}

#[test]
fn unwritable_output_exits_1() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "kind = \"nahm-forward\"\n[nahm]\npole = 1.0\nspan = 0.1\n",
    );
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let o = fbp(&[
        "run",
        cfg.to_str().unwrap(),
        "--out",
        blocker.join("sub").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

const CURVATURE: &str = "kind = \"curvature\"\n[grid]\nd = 2\nn = 16\n[curvature]\ntrials = 12\n";

#[test]
fn curvature_table_is_nonpositive_and_byte_stable() {
    let (a, oa) = run_config(CURVATURE, &["--seed", "5", "--threads", "2"]);
    let (b, ob) = run_config(CURVATURE, &["--seed", "5", "--threads", "2"]);
    assert_eq!(oa.status.code(), Some(0));
    assert_eq!(ob.status.code(), Some(0));
    let ta = table(&a, "curvature.csv");
    assert_eq!(ta[0], "trial,K");
    assert_eq!(ta.len(), 13);
    for row in &ta[1..] {
        let k: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert!(k <= 1e-12);
    }
    for f in ["curvature.csv", "report.json"] {
        assert_eq!(
            fs::read(a.path().join("out").join(f)).unwrap(),
            fs::read(b.path().join("out").join(f)).unwrap()
        );
    }
    let (c, _) = run_config(CURVATURE, &["--seed", "6"]);
    assert_ne!(table(&a, "curvature.csv"), table(&c, "curvature.csv"));
}

#[test]
fn conserve_table_has_one_column_per_mode() {
    let (dir, o) = run_config(
        r#"
kind = "conserve"
[grid]
n = 32
[data.rho]
modes = [{ k = [1], amplitude = 0.01 }]
[data.phi_dot]
modes = [{ k = [2], amplitude = 0.01 }]
[flow]
dt = 1e-3
steps = 20
record_every = 5
modes = [[1], [2]]
drift_tol = 1e-2
"#,
        &[],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let t = table(&dir, "conserve.csv");
    assert_eq!(t[0], "t,Q_1,Q_2");
    assert_eq!(t.len(), 1 + 5);
}

#[test]
fn obstacle_report_has_free_boundaries_and_complementarity() {
    let (dir, o) = run_config("kind = \"solve-obstacle\"\n[grid]\nn = 8\nmz = 64\nM = 1.0\n", &[]);
    assert_eq!(o.status.code(), Some(0));
    let r = report(&dir);
    let res = &r["results"];
    assert!(res["complementarity_residual"].as_f64().unwrap() <= 1e-10);
    for (key, target) in [("h0", -0.5), ("h1", 0.5)] {
        for v in res[key].as_array().unwrap() {
            assert!((v.as_f64().unwrap() - target).abs() < 1e-2);
        }
    }
    assert_eq!(table(&dir, "free_boundary.csv")[0], "x1,H0,H1");
}

#[test]
fn nahm_bvp_without_b_follows_the_geodesic() {
    let (dir, o) = run_config(
        r#"
kind = "nahm-bvp"
[grid]
m = 32
[nahm]
h0 = { re = [[2.0, 0.3], [0.3, 1.0]], im = [[0.0, 0.2], [-0.2, 0.0]] }
h1 = { re = [[1.0, 0.0], [0.0, 3.0]] }
"#,
        &[],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&dir);
    assert!(r["results"]["geodesic_error"].as_f64().unwrap() < 1e-4);
    assert_eq!(table(&dir, "h.csv")[0], "t,i,j,re,im");
}

#[test]
fn non_positive_endpoint_is_a_config_error() {
    let (_dir, o) = run_config(
        "kind = \"nahm-bvp\"\n[nahm]\nh0 = { re = [[1.0, 0.0], [0.0, -1.0]] }\nh1 = { re = [[1.0, 0.0], [0.0, 1.0]] }\n",
        &[],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn solver_failure_exits_1_with_a_diagnostic_report() {
    // the slab is far too thin for these boundary data
    let (dir, o) = run_config("kind = \"solve-obstacle\"\n[grid]\nn = 8\nmz = 16\nM = 0.3\n", &[]);
    assert_eq!(o.status.code(), Some(1));
    let r = report(&dir);
    assert_eq!(r["status"], "failed");
    assert_eq!(r["error"]["kind"], "FreeBoundaryTouchesSlab");
}
