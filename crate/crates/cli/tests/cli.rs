//! End-to-end runs of the `dpinn` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dpinn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpinn"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs")
}

fn last_stderr_line(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr)
        .lines()
        .last()
        .unwrap_or_default()
        .to_string()
}

fn assert_failure(out: &Output, code: i32, kind: &str) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let line = last_stderr_line(out);
    let prefix = format!("dpinn-error exit={code} kind={kind} message=\"");
    assert!(
        line.starts_with(&prefix) && line.ends_with('"'),
        "last stderr line: {line}"
    );
    assert_eq!(line.matches('"').count(), 2, "message must be one quoted token: {line}");
}

const SMALL: &str = r#"
[material]
youngs_modulus = "3 GPa"
poisson_ratio = 0.3

[network]
width = 16
depth = 2
rff_count = 8
output_scale = "30 mm"

[train]
epochs = 15
log_every = 0

[[subdomain]]
generate = { origin = [0, 0], extents = [1, 1], divisions = [4, 3] }
dirichlet = [{ set = "left" }]

[[subdomain]]
generate = { origin = ["1 m", 0], extents = ["1000 mm", 1], divisions = [5, 4] }
load = [{ set = "right", resultant = ["0 N", "-1 MN"] }]

[[interface]]
slave = 1
slave_set = "left"
master = 0
"#;

fn small_spec(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, SMALL).unwrap();
    path
}

#[test]
fn preset_pair_fem_and_self_compare() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let out = dpinn(d, &["mesh-gen", "--preset", "nonconforming", "--out", "case"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(d.join("case/run.toml").exists() && d.join("case/a.mesh").exists());

    let out = dpinn(d, &["pair", "case/run.toml"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("max_resid"));
    assert!(d.join("case/out/constraints.txt").exists());

    assert!(dpinn(d, &["fem", "case/run.toml"]).status.success());
    let reference = d.join("case/out/reference.csv");
    let first = fs::read(&reference).unwrap();
    // Rerunning overwrites with identical bytes.
    assert!(dpinn(d, &["fem", "case/run.toml"]).status.success());
    assert_eq!(fs::read(&reference).unwrap(), first);
    assert!(fs::read_to_string(d.join("case/out/reference.vtk"))
        .unwrap()
        .starts_with("# vtk DataFile"));

    let r = reference.to_str().unwrap();
    let out = dpinn(d, &["compare", r, r, "--out", "cmp"]);
    assert!(out.status.success());
    let report = fs::read_to_string(d.join("cmp/report.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(lines.next(), Some("component,max_abs,max_rel,l2_rel"));
    for line in lines {
        let values: Vec<f64> = line.split(',').skip(1).map(|v| v.parse().unwrap()).collect();
        assert_eq!(values, vec![0.0; 3], "{line}");
    }
}

#[test]
fn compare_reports_injected_offset() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let spec = small_spec(d);
    assert!(dpinn(d, &["fem", spec.to_str().unwrap()]).status.success());
    let reference = d.join("out/reference.csv");
    let text = fs::read_to_string(&reference).unwrap();
    let offset = 2.5e-3;
    let mut shifted = String::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            shifted.push_str(line);
        } else {
            let mut cols: Vec<String> = line.split(',').map(str::to_string).collect();
            let ux: f64 = cols[3].parse().unwrap();
            cols[3] = format!("{:.16e}", ux + offset);
            shifted.push_str(&cols.join(","));
        }
        shifted.push('\n');
    }
    fs::write(d.join("shifted.csv"), shifted).unwrap();
    let out = dpinn(d, &["compare", "shifted.csv", "out/reference.csv", "--out", "cmp"]);
    assert!(out.status.success());
    let report = fs::read_to_string(d.join("cmp/report.csv")).unwrap();
    let row = |name: &str| -> Vec<f64> {
        report
            .lines()
            .find(|l| l.starts_with(&format!("{name},")))
            .unwrap()
            .split(',')
            .skip(1)
            .map(|v| v.parse().unwrap())
            .collect()
    };
    assert!((row("ux")[0] - offset).abs() < 1e-15, "{report}");
    assert_eq!(row("uy")[0], 0.0);
}

#[test]
fn compare_rejects_fields_on_different_meshes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let spec = small_spec(d);
    assert!(dpinn(d, &["fem", spec.to_str().unwrap()]).status.success());
    let text = fs::read_to_string(d.join("out/reference.csv")).unwrap();
    let moved = text.replacen(
        "0.0000000000000000e0,0.0000000000000000e0",
        "1.0000000000000000e-2,0.0000000000000000e0",
        1,
    );
    assert_ne!(moved, text);
    fs::write(d.join("moved.csv"), moved).unwrap();
    assert_failure(
        &dpinn(d, &["compare", "moved.csv", "out/reference.csv"]),
        2,
        "validation",
    );
}

#[test]
fn short_solve_is_repeatable_and_worker_independent() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let spec = small_spec(d);
    let s = spec.to_str().unwrap();
    let run = |out: &str, workers: &str| {
        let o = dpinn(d, &["solve", s, "--seed", "5", "--workers", workers, "--out", out]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(d.join(out).join("field.csv")).unwrap()
    };
    let a = run("a", "1");
    assert_eq!(a, run("b", "1"));
    assert_eq!(a, run("c", "2"));
    for f in ["network_0.ckpt", "network_1.ckpt", "history.csv", "field.vtk"] {
        assert!(d.join("a").join(f).exists(), "{f} missing");
    }
    let history = fs::read_to_string(d.join("a/history.csv")).unwrap();
    assert_eq!(history.lines().count(), 16);
    let other = dpinn(d, &["solve", s, "--seed", "6", "--out", "e"]);
    assert!(other.status.success());
    assert_ne!(a, fs::read(d.join("e/field.csv")).unwrap());
}

#[test]
fn invalid_inputs_exit_with_validation_code() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("typo.toml"), SMALL.replace("[network]", "[network]\nwidht = 3")).unwrap();
    assert_failure(&dpinn(d, &["fem", "typo.toml"]), 2, "validation");

    fs::write(
        d.join("unknown_set.toml"),
        SMALL.replace("set = \"left\"", "set = \"west\""),
    )
    .unwrap();
    let out = dpinn(d, &["fem", "unknown_set.toml"]);
    assert_failure(&out, 2, "validation");
    assert!(last_stderr_line(&out).contains("west"));

    fs::write(d.join("bad_unit.toml"), SMALL.replace("\"3 GPa\"", "\"3 furlongs\"")).unwrap();
    assert_failure(&dpinn(d, &["pair", "bad_unit.toml"]), 2, "validation");

    fs::write(d.join("bad_master.toml"), SMALL.replace("master = 0", "master = 7")).unwrap();
    assert_failure(&dpinn(d, &["pair", "bad_master.toml"]), 2, "validation");

    assert_failure(&dpinn(d, &["solve", "missing.toml"]), 2, "validation");
    assert_failure(&dpinn(d, &["frobnicate"]), 2, "validation");

    let spec = small_spec(d);
    assert_failure(
        &dpinn(d, &["solve", spec.to_str().unwrap(), "--workers", "3"]),
        2,
        "validation",
    );
}

#[test]
fn unsupported_model_exits_with_numerical_code() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(
        d.join("floating.toml"),
        SMALL.replace("dirichlet = [{ set = \"left\" }]", ""),
    )
    .unwrap();
    let out = dpinn(d, &["fem", "floating.toml"]);
    assert_failure(&out, 3, "numerical");
}

#[test]
fn mesh_gen_block_writes_a_loadable_mesh() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let out = dpinn(
        d,
        &[
            "mesh-gen",
            "--origin",
            "-1,0,0",
            "--extents",
            "2,1,1",
            "--divisions",
            "2,1,1",
            "--name",
            "b.mesh",
            "--out",
            "m",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mesh = dpinn::mesh::load_mesh(d.join("m/b.mesh")).unwrap();
    assert_eq!((mesh.node_count(), mesh.element_count()), (12, 2));
    assert_failure(
        &dpinn(
            d,
            &[
                "mesh-gen",
                "--origin",
                "0,0",
                "--extents",
                "1,1,1",
                "--divisions",
                "1,1",
            ],
        ),
        2,
        "validation",
    );
}
