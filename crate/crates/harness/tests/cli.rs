//! End-to-end runs of the binary: exit codes, CSV layout and determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn harness(args: &[&str], threads: Option<usize>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_stokes-harness"));
    cmd.args(args);
    if let Some(t) = threads {
        cmd.env("RAYON_NUM_THREADS", t.to_string());
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Row {
    params: serde_json::Map<String, serde_json::Value>,
    quantity: String,
    value: f64,
    pass: String,
}

/// Splits one CSV line, honouring double-quoted fields with `""` escapes.
fn fields(line: &str) -> Vec<String> {
    let mut out = vec![String::new()];
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match (c, quoted) {
            ('"', true) if chars.peek() == Some(&'"') => {
                chars.next();
                out.last_mut().unwrap().push('"');
            }
            ('"', _) => quoted = !quoted,
            (',', false) => out.push(String::new()),
            (c, _) => out.last_mut().unwrap().push(c),
        }
    }
    out
}

fn parse(csv: &str) -> Vec<Row> {
    let mut lines = csv.split('\n');
    assert_eq!(lines.next(), Some("experiment,param_json,quantity,value,tolerance,pass"));
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f = fields(l);
            assert_eq!(f.len(), 6, "{l}");
            Row {
                params: serde_json::from_str(&f[1]).unwrap(),
                quantity: f[2].clone(),
                value: f[3].parse().unwrap(),
                pass: f[5].clone(),
            }
        })
        .collect()
}

#[test]
fn ratio_of_default_ball_is_one() {
    let out = harness(&["ratio"], None);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(!text.contains('\r'));
    let rows = parse(&text);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].quantity, "ratio");
    assert_eq!(rows[0].value, 1.0);
    assert_eq!(rows[0].pass, "true");
}

#[test]
fn ratio_of_cube_and_seed_are_recorded() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "cube.toml", "[domain]\nshape = \"cube\"\ndim = 3\nscale = 2.5\ncenter = [1.0, -2.0, 0.5]\n");
    let out = harness(&["ratio", "--config", s(&cfg), "--seed", "17"], None);
    assert_eq!(out.status.code(), Some(0));
    let rows = parse(&String::from_utf8(out.stdout).unwrap());
    assert!((rows[0].value - 3f64.sqrt()).abs() <= 1e-12);
    for key in ["resolution", "dt", "seed"] {
        assert!(rows[0].params.contains_key(key), "{key}");
    }
    assert_eq!(rows[0].params["seed"], 17);
}

#[test]
fn invalid_configurations_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let empty = write_config(&dir, "empty.toml", "[experiment]\nresolutions = []\n");
    assert_eq!(harness(&["stokes-run", "--config", s(&empty)], None).status.code(), Some(2));
    let unknown = write_config(&dir, "unknown.toml", "[stokes]\nspatial_ordr = 2.0\n");
    assert_eq!(harness(&["stokes-run", "--config", s(&unknown)], None).status.code(), Some(2));
    let missing = dir.path().join("absent.toml");
    assert_eq!(harness(&["ratio", "--config", s(&missing)], None).status.code(), Some(2));
    assert_eq!(harness(&["ratio", "--resolution-override", "32,16"], None).status.code(), Some(2));
    let negative = write_config(&dir, "neg.toml", "[helmholtz]\ntolerance = -1.0\n");
    assert_eq!(harness(&["helmholtz-verify", "--config", s(&negative)], None).status.code(), Some(2));
}

#[test]
fn zero_forcing_sweep_exits_with_two() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "zero.toml", "[forcing]\nkind = \"named\"\nnames = [\"zero\"]\n");
    let out = harness(&["estimate-sweep", "--config", s(&cfg), "--resolution-override", "16,24,32"], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("undefined ratio"));
}

#[test]
fn tolerance_failure_exits_with_one() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "tight.toml", "[helmholtz]\ntolerance = 1e-30\n");
    let out = harness(&["helmholtz-verify", "--config", s(&cfg)], None);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("FAIL helmholtz-verify"));
    // the CSV is still written
    assert!(parse(&String::from_utf8(out.stdout).unwrap()).iter().any(|r| r.pass == "false"));
}

#[test]
fn unwritable_output_exits_with_three() {
    let dir = TempDir::new().unwrap();
    let out_path = dir.path().join("no-such-dir").join("out.csv");
    assert_eq!(harness(&["ratio", "--out", s(&out_path)], None).status.code(), Some(3));
}

#[test]
fn output_is_byte_identical_across_runs_and_thread_counts() {
    let dir = TempDir::new().unwrap();
    let runs: [(&[&str], Option<usize>); 3] = [
        (&["estimate-sweep", "--resolution-override", "16,24"], Some(1)),
        (&["estimate-sweep", "--resolution-override", "16,24"], Some(4)),
        (&["estimate-sweep", "--resolution-override", "16,24"], None),
    ];
    let mut outputs = Vec::new();
    for (i, (args, threads)) in runs.iter().enumerate() {
        let p = dir.path().join(format!("sweep{i}.csv"));
        let mut a = args.to_vec();
        a.extend(["--out", s(&p)]);
        let out = harness(&a, *threads);
        assert!(matches!(out.status.code(), Some(0) | Some(1)));
        outputs.push(std::fs::read(&p).unwrap());
    }
    assert!(outputs[0].len() > 100);
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);

    let a = harness(&["helmholtz-verify", "--seed", "5"], None).stdout;
    let b = harness(&["helmholtz-verify", "--seed", "5"], None).stdout;
    let c = harness(&["helmholtz-verify", "--seed", "6"], None).stdout;
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn corrupted_transform_inputs_fail_every_identity() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "corrupt.toml", "[transform]\ncorrupt = true\n");
    let out = harness(&["transform-verify", "--config", s(&cfg)], None);
    assert_eq!(out.status.code(), Some(1));
    let rows = parse(&String::from_utf8(out.stdout).unwrap());
    let judged: Vec<&Row> = rows.iter().filter(|r| !r.pass.is_empty()).collect();
    assert!(judged.len() > 20);
    for r in judged {
        let exempt = r.quantity.starts_with("control_") || r.quantity.starts_with("localized_momentum");
        if !exempt {
            assert_eq!(r.pass, "false", "{} = {} passed on corrupted input", r.quantity, r.value);
        }
    }
}

#[test]
fn flat_chart_suite_passes() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "flat.toml", "[transform]\ncurvature = 0.0\n");
    let out = harness(&["transform-verify", "--config", s(&cfg)], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}
