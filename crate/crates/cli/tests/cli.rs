use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn psvf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_psvf")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Column header and data rows of a CSV with `#` preamble.
fn table(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let head = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (head, rows)
}

fn run_table(args: &[&str]) -> (Vec<String>, Vec<Vec<String>>) {
    let o = psvf(args);
    assert!(o.status.success(), "{args:?}: {}", stderr(&o));
    table(&String::from_utf8(o.stdout).unwrap())
}

fn col(head: &[String], rows: &[Vec<String>], name: &str) -> Vec<f64> {
    let i = head.iter().position(|h| h == name).unwrap();
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

fn sign_changes(v: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut last = (0usize, 0.0f64);
    for (i, &d) in v.iter().enumerate() {
        if d != 0.0 {
            if last.1 != 0.0 && d.signum() != last.1 {
                out.push(last.0);
            }
            last = (i, d.signum());
        }
    }
    out
}

#[test]
fn center_orbit_closes() {
    let (h, rows) = run_table(&["simulate", "--family", "z0", "--start", "0,0.5,0", "--returns", "3"]);
    assert_eq!(h, ["t", "x", "y", "z", "segment", "side"]);
    let last = rows.last().unwrap();
    let end: Vec<f64> = last[1..4].iter().map(|s| s.parse().unwrap()).collect();
    assert!(end[0].abs() < 1e-7 && (end[1] - 0.5).abs() < 1e-7 && end[2].abs() < 1e-7, "{end:?}");
    assert_eq!(last[4], "5");
    let t: Vec<f64> = col(&h, &rows, "t");
    assert!((t.last().unwrap() - 6.0).abs() < 1e-9);
    assert!(t.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn orbit_drifts_toward_attracting_cylinder() {
    let (h, rows) = run_table(&["simulate", "--family", "zrho", "--start", "0,0.3,0", "--returns", "50"]);
    let seg = h.iter().position(|c| c == "segment").unwrap();
    // landing points of the lower arcs, one per full return
    let mut amps = vec![0.3];
    for w in rows.windows(2) {
        if w[0][seg] != w[1][seg] && w[0][5] == "lower" {
            amps.push(w[0][2].parse().unwrap());
        }
    }
    amps.push(rows.last().unwrap()[2].parse().unwrap());
    assert_eq!(amps.len(), 51);
    assert!(amps.windows(2).all(|w| w[1] > w[0] && w[1] < 0.4), "{amps:?}");
}

#[test]
fn time_limited_simulation() {
    let (h, rows) = run_table(&["simulate", "--family", "z0", "--start", "0,0.5,0", "--time", "1.5"]);
    let t = col(&h, &rows, "t");
    assert!((t.last().unwrap() - 1.5).abs() < 1e-12);
    assert_eq!(rows.last().unwrap()[5], "lower");
}

#[test]
fn invalid_parameters_exit_one() {
    let o = psvf(&["simulate", "--family", "zl", "--mu", "0", "--start", "0,0.5,0", "--returns", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("mu"));
    assert_eq!(psvf(&["simulate", "--start", "0,0.5,0"]).status.code(), Some(1));
    assert_eq!(psvf(&["simulate", "--start", "0,0,0", "--returns", "1"]).status.code(), Some(1));
    assert_eq!(psvf(&["analyze", "--bogus"]).status.code(), Some(1));
    assert_eq!(psvf(&["scan", "--eps-list", "0.9"]).status.code(), Some(1));
    assert_eq!(psvf(&["scan"]).status.code(), Some(1));
}

#[test]
fn missing_return_exits_two() {
    let o = psvf(&["simulate", "--family", "z0", "--start", "0,0.5,0", "--returns", "1", "--max-flight-time", "0.1"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn config_file_and_overrides() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# example\nfamily=z_kl\nlambda=0.5\nmu=0.3\nL=2\neps=0.2\nrho=f\nk=3\n").unwrap();
    let out = dir.path().join("out.csv");
    let o = psvf(&["analyze", "--config", cfg.to_str().unwrap(), "--k", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    assert_eq!(stderr(&o).trim(), "planes=2 cylinders=2 cycles=4");
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.contains("# k=2\n") && text.contains("# family=zkl\n"));

    fs::write(&cfg, "family=zkl\ncolour=blue\n").unwrap();
    let o = psvf(&["analyze", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("colour"));
}

#[test]
fn analyze_summaries() {
    let o = psvf(&["analyze"]);
    assert_eq!(stderr(&o).trim(), "planes=2 cylinders=2 cycles=4");
    let o = psvf(&["analyze", "--family", "zrho", "--eps", "-0.2", "--k", "3"]);
    assert!(stderr(&o).contains("cylinders=0"));
    let o = psvf(&["analyze", "--family", "zrho", "--eps", "0"]);
    assert!(stderr(&o).contains("degenerate-continuum"));
    let o = psvf(&["analyze", "--rho", "i", "--eps", "0.5"]);
    assert_eq!(o.status.code(), Some(1), "infinite profile without a cutoff");
    let o = psvf(&["analyze", "--rho", "i", "--eps", "0.5", "--cutoff", "3"]);
    assert!(o.status.success());
    assert!(stderr(&o).contains("cycles=6"));
}

#[test]
fn analyze_verification_confirms_cycles() {
    let (h, rows) = run_table(&["analyze", "--verify"]);
    let c = h.iter().position(|x| x == "confirmed").unwrap();
    let cycles: Vec<_> = rows.iter().filter(|r| r[0] == "cycle").collect();
    assert_eq!(cycles.len(), 4);
    assert!(cycles.iter().all(|r| r[c] == "true"));
}

#[test]
fn poincare_of_center_is_identity() {
    let (h, rows) = run_table(&["poincare", "--family", "z0", "--y-range", "0.05:1", "--grid", "200", "--verify"]);
    assert!(col(&h, &rows, "displacement").iter().all(|d| d.abs() < 1e-13));
    assert!(col(&h, &rows, "numeric_minus_semi").iter().all(|d| d.abs() < 1e-8));
}

#[test]
fn poincare_sign_changes_bracket_roots() {
    let (h, rows) = run_table(&["poincare", "--family", "zrho", "--k", "3", "--y-range", "0.05:1", "--grid", "1000"]);
    let y = col(&h, &rows, "y");
    let d = col(&h, &rows, "displacement");
    let changes = sign_changes(&d);
    assert_eq!(changes.len(), 3);
    for (i, root) in changes.iter().zip([0.2, 0.4, 0.6]) {
        assert!(y[*i] <= root && y[i + 1] >= root);
    }
}

#[test]
fn poincare_sign_changes_accumulate() {
    let (h, rows) = run_table(&[
        "poincare",
        "--family",
        "zrho",
        "--rho",
        "i",
        "--eps",
        "0.5",
        "--y-range",
        "0.03:0.3",
        "--grid",
        "4000",
    ]);
    let y = col(&h, &rows, "y");
    let at: Vec<f64> = sign_changes(&col(&h, &rows, "displacement")).iter().map(|&i| y[i]).collect();
    assert!(at.len() >= 6, "{at:?}");
    let gaps: Vec<f64> = at.windows(2).map(|w| w[1] - w[0]).collect();
    assert!(gaps.windows(2).all(|g| g[1] > g[0]), "{gaps:?}");
}

#[test]
fn scan_rows() {
    let (h, rows) = run_table(&["scan", "--eps-list", "0.1,0.2", "--k", "2"]);
    assert_eq!(h, ["eps", "j", "radius", "multiplier", "stability", "detection"]);
    assert_eq!(rows.len(), 4);
    assert!(run_table(&["scan", "--eps-list", "-0.1"]).1.is_empty());
    let (_, rows) = run_table(&["scan", "--eps-list", "0"]);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][4], "continuum");
}

#[test]
fn output_is_reproducible() {
    let args = ["scan", "--eps-list", "0.2,0.1", "--k", "3", "--format", "json"];
    let a = psvf(&args);
    let b = psvf(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["config"]["eps_list"], "0.2,0.1");
    let records = v["records"].as_array().unwrap();
    assert_eq!(records.len(), 6);
    assert!(records[0]["eps"].as_f64().unwrap() < records[5]["eps"].as_f64().unwrap());
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.contains("\"radius\": 1.0000000000"));
}

#[test]
fn plot_script_is_written() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("orbit.csv");
    let script = dir.path().join("orbit.gp");
    let o = psvf(&[
        "simulate",
        "--start",
        "0.1,0.4,0",
        "--returns",
        "2",
        "--out",
        out.to_str().unwrap(),
        "--plot-script",
        script.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&script).unwrap();
    assert!(text.contains("splot") && text.contains(out.to_str().unwrap()));
    assert!(Path::new(&out).exists());
}
