use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use meshpon_core::scenario::ScenarioConfig;
use meshpon_sim::config::{load_scenario, parse_scenario};
use meshpon_sim::report::{read_rows, DeltaRow};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_meshpon-sim"))
}

fn reference() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/reference.toml")
}

fn sim(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn meshpon-sim")
}

/// Short run into its own results root; returns the summary.csv it wrote.
fn short_run(root: &Path, extra: &[&str]) -> PathBuf {
    let out = root.to_str().unwrap();
    let cfg = reference();
    let mut args = vec!["run", cfg.to_str().unwrap(), "--duration", "0.1", "--seeds", "1", "--out", out];
    args.extend_from_slice(extra);
    let o = sim(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut found = Vec::new();
    for entry in walk(root) {
        if entry.file_name().is_some_and(|n| n == "summary.csv") {
            found.push(entry);
        }
    }
    assert_eq!(found.len(), 1, "{found:?}");
    found.remove(0)
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn reference_file_is_the_default_scenario() {
    assert_eq!(load_scenario(&reference()).unwrap(), ScenarioConfig::default());
    assert_eq!(parse_scenario("").unwrap(), ScenarioConfig::default());
}

#[test]
fn validate_accepts_reference() {
    let o = sim(&["validate", reference().to_str().unwrap()]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).trim_end().ends_with(": ok"));
}

#[test]
fn validate_reports_wavelength_clash() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(reference()).unwrap().replace("wavelength = 0", "wavelength = 1");
    let bad = dir.path().join("clash.toml");
    fs::write(&bad, text).unwrap();
    let o = sim(&["validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("share a fibre span on wavelength 1"), "{err}");
    assert!(err.contains("1 violation(s)"), "{err}");
}

#[test]
fn validate_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("typo.toml");
    fs::write(&bad, "durration_s = 1.0\n").unwrap();
    let o = sim(&["validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_writes_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let summary = short_run(dir.path(), &["--loads", "25,90"]);
    let text = fs::read_to_string(&summary).unwrap();
    assert!(text.starts_with("load,slot_us,class,point,count,mean_us,p50_us,p95_us,p99_us,max_us,seed\n"), "{text}");
    let rows = read_rows(text.as_bytes()).unwrap();
    // 2 loads x 2 classes x 2 points x 1 seed
    assert_eq!(rows.len(), 8);
    let parent = summary.parent().unwrap();
    for f in ["fig2.svg", "fig3.svg", "scenario.toml"] {
        assert!(parent.join(f).is_file(), "missing {f}");
    }
    let echoed = load_scenario(&parent.join("scenario.toml")).unwrap();
    assert_eq!(echoed.loads, vec![0.25, 0.9]);
}

#[test]
fn same_seed_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let sa = fs::read(short_run(a.path(), &["--loads", "50"])).unwrap();
    let sb = fs::read(short_run(b.path(), &["--loads", "50"])).unwrap();
    assert_eq!(sa, sb);
}

#[test]
fn trace_flag_writes_packet_timelines() {
    let dir = tempfile::tempdir().unwrap();
    let summary = short_run(dir.path(), &["--loads", "50", "--trace"]);
    let trace = summary.parent().unwrap().join("traces/load0.50_slot500_seed1.csv");
    let text = fs::read_to_string(trace).unwrap();
    assert!(text.lines().next().unwrap().starts_with("id,ru,class,size_bytes,fh_bytes,t_created_us"));
    assert!(text.lines().count() > 100);
}

#[test]
fn compare_identical_runs_gives_zero_deltas() {
    let dir = tempfile::tempdir().unwrap();
    let s = short_run(dir.path(), &["--loads", "50,75"]);
    let out = dir.path().join("d.csv");
    let o = sim(&["compare", s.to_str().unwrap(), s.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let deltas: Vec<DeltaRow> = csv::Reader::from_path(&out).unwrap().deserialize().map(Result::unwrap).collect();
    assert_eq!(deltas.len(), 8);
    assert!(deltas.iter().all(|d| d.d_mean_us == 0 && d.d_max_us == 0 && d.d_p99_us == 0));
}

#[test]
fn compare_refuses_mismatched_grids() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let sa = short_run(a.path(), &["--loads", "50"]);
    let sb = short_run(b.path(), &["--loads", "75"]);
    let o = sim(&["compare", sa.to_str().unwrap(), sb.to_str().unwrap(), "--out", a.path().join("d.csv").to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("0.50"));
}

#[test]
fn urllc_beats_normal_on_application_latency() {
    let dir = tempfile::tempdir().unwrap();
    let s = short_run(dir.path(), &["--loads", "50,90"]);
    let out = dir.path().join("d.csv");
    let o = sim(&[
        "compare",
        s.to_str().unwrap(),
        s.to_str().unwrap(),
        "--baseline-class",
        "normal",
        "--candidate-class",
        "urllc",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let deltas: Vec<DeltaRow> = csv::Reader::from_path(&out).unwrap().deserialize().map(Result::unwrap).collect();
    let app: Vec<_> = deltas.iter().filter(|d| d.point == "APP").collect();
    assert_eq!(app.len(), 2);
    for d in app {
        assert!(d.d_mean_us <= -1500, "{d:?}");
    }
}

#[test]
fn bad_flag_values_exit_with_usage_error() {
    let cfg = reference();
    for args in [["--loads", "abc"], ["--dba", "fancy"], ["--slot", "0us"]] {
        let mut all = vec!["run", cfg.to_str().unwrap()];
        all.extend_from_slice(&args);
        let o = sim(&all);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
}
