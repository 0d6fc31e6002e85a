mod common;

use std::path::{Path, PathBuf};
use std::process::Command as Process;

use common::*;
use flatplan::io::{
    load_plan, parse_scenario, run, scenario_to_json, trace_times, write_trace, Command, Flags, IoError,
};
use flatplan::flatness::FlatModel;
use flatplan::plan::{plan_unconstrained, Method};

const WALLS: &str = r#"{
  "version": 1,
  "obstacles": [
    { "name": "first top", "vertices": [[2.75, 2.4], [3.25, 2.4], [3.25, 6], [2.75, 6]] },
    { "name": "first bottom", "vertices": [[2.75, -6], [3.25, -6], [3.25, 1.6], [2.75, 1.6]] },
    { "name": "second top", "vertices": [[6.75, -1.6], [7.25, -1.6], [7.25, 6], [6.75, 6]] },
    { "name": "second bottom", "vertices": [[6.75, -6], [7.25, -6], [7.25, -2.4], [6.75, -2.4]] }
  ],
  "agents": [{ "waypoints": [[0, 0], [10, 0]], "timestamps": [0, 10] }],
  "spline": { "n": 8, "d": 4 },
  "bounding_box": { "min": [-1, -5], "max": [11, 5] },
  "planner": { "n_max": 8 }
}"#;

const OPEN: &str = r#"{
  "version": 1,
  "hyperplanes": { "normals": [[1, 0], [0, 1], [0.6, 0.8]], "offsets": [5, 5.5, 6] },
  "agents": [
    { "waypoints": [[0, 0], [5, 3], [10, 0]], "timestamps": [0, 5, 10] },
    { "waypoints": [[0, 8], [10, 8]], "timestamps": [0, 10], "safety": [[-0.2, -0.2], [0.2, -0.2], [0.2, 0.2], [-0.2, 0.2]] }
  ],
  "spline": { "n": 8 },
  "bounding_box": { "min": [-1, -1], "max": [11, 10] },
  "dt": 0.01
}"#;

fn write_scenario(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn fixture_parses() {
    let s = reference_scenario();
    assert_eq!(s.problem.arrangement.num_hyperplanes(), 9);
    assert_eq!(s.problem.arrangement.obstacles.len(), 3);
    assert_eq!(s.problem.agents.len(), 1);
    assert_eq!(s.problem.agents[0].waypoints.len(), 3);
    assert_eq!((s.problem.spline.n, s.problem.spline.d), (12, 6));
    assert_eq!(s.dt, Some(0.01));
}

#[test]
fn order_defaults_to_four() {
    let s = parse_scenario(OPEN).unwrap();
    assert_eq!(s.problem.spline.d, 4);
    assert_eq!(s.problem.agents[1].safety.vertices().len(), 4);
}

#[test]
fn tuple_length_error_names_the_obstacle() {
    let text = std::fs::read_to_string(fixture_path()).unwrap().replace("(+-+-+++++)", "(+-+-++++)");
    let err = parse_scenario(&text).unwrap_err().to_string();
    assert!(err.contains("O2"), "{err}");
    assert!(err.contains("length 8"), "{err}");
}

#[test]
fn unknown_fields_report_their_path() {
    let text = OPEN.replace(r#""n": 8"#, r#""n": 8, "degree": 3"#);
    match parse_scenario(&text) {
        Err(IoError::Schema { path, message }) => {
            assert_eq!(path, "spline.degree");
            assert!(message.contains("degree"), "{message}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn scenario_round_trips() {
    for s in [reference_scenario(), parse_scenario(OPEN).unwrap(), parse_scenario(WALLS).unwrap()] {
        let again = parse_scenario(&scenario_to_json(&s)).unwrap();
        assert_eq!(again, s);
    }
}

#[test]
fn trace_has_one_row_per_sample() {
    let s = parse_scenario(OPEN).unwrap();
    let plans = plan_unconstrained(&s.problem).unwrap();
    for dt in [0.05, 0.3, 0.01] {
        let mut buf = Vec::new();
        write_trace(&mut buf, &plans, &FlatModel::default(), dt).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "agent,t,x,y,psi,va,phi");
        let per_agent = (10.0 / dt + 1e-9).floor() as usize + 1;
        assert_eq!(lines.count(), 2 * per_agent, "dt = {dt}");
        assert_eq!(trace_times(0.0, 10.0, dt).len(), per_agent);
    }
}

#[test]
fn plan_verify_plot_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), "open.json", OPEN);
    let mut flags = Flags::new(&scenario);
    flags.out = dir.path().join("out");

    let planned = run(Command::Plan, &flags).unwrap();
    assert_eq!(planned.exit_code, 0);
    let plan_path = flags.out.join("plan.json");
    assert!(plan_path.exists() && flags.out.join("trace.csv").exists());
    let file = load_plan(&plan_path).unwrap();
    assert_eq!((file.method.as_str(), file.agents.len(), file.n, file.d), ("mip", 2, 8, 4));

    assert_eq!(run(Command::Verify, &flags).unwrap().exit_code, 0);
    let mut from_file = flags.clone();
    from_file.plan = Some(plan_path);
    assert_eq!(run(Command::Verify, &from_file).unwrap().exit_code, 0);
    let report = std::fs::read_to_string(flags.out.join("report.json")).unwrap();
    assert!(report.contains("min_obstacle_clearance"));

    assert_eq!(run(Command::Plot, &from_file).unwrap().exit_code, 0);
    let svg = std::fs::read_to_string(flags.out.join("plot.svg")).unwrap();
    assert_eq!(svg.matches(r#"class="curve""#).count(), 2);
    assert_eq!(svg.matches(r#"class="waypoint""#).count(), 5);

    let mut sweep = flags.clone();
    sweep.n = vec![6, 8];
    assert_eq!(run(Command::Sweep, &sweep).unwrap().exit_code, 0);
    let mut rdr = csv::Reader::from_path(flags.out.join("sweep.csv")).unwrap();
    assert_eq!(rdr.records().count(), 4);

    let mut exact = flags.clone();
    exact.method = Method::Exact;
    exact.out = dir.path().join("exact");
    assert_eq!(run(Command::Plan, &exact).unwrap().exit_code, 0);
    assert_eq!(load_plan(&exact.out.join("plan.json")).unwrap().method, "exact");
}

#[test]
fn infeasible_scenario_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), "walls.json", WALLS);
    let mut flags = Flags::new(&scenario);
    flags.out = dir.path().to_path_buf();
    let summary = run(Command::Plan, &flags).unwrap();
    assert_eq!(summary.exit_code, 2);
    assert_eq!(summary.artifacts, vec![dir.path().join("infeasible.json")]);
    assert!(!dir.path().join("plan.json").exists());
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&summary.artifacts[0]).unwrap()).unwrap();
    assert!(report.is_object());
}

#[test]
fn binary_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), "open.json", OPEN);
    let bin = env!("CARGO_BIN_EXE_flatplan");
    let out = Process::new(bin)
        .args(["plan", scenario.to_str().unwrap(), "--n", "10", "--d", "5", "--dt", "0.1", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let file = load_plan(&dir.path().join("plan.json")).unwrap();
    assert_eq!((file.n, file.d), (10, 5));
    let rows = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 2 * 101);

    let walls = write_scenario(dir.path(), "walls.json", WALLS);
    let out = Process::new(bin).args(["plan", walls.to_str().unwrap(), "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let bad = Process::new(bin).args(["plan", "/nonexistent.json"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
    let bad = Process::new(bin).args(["plan", scenario.to_str().unwrap(), "--method", "fancy"]).output().unwrap();
    assert!(!bad.status.success());
}
