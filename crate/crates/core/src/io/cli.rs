//! `plan`, `verify`, `plot` and `sweep`.
//!
//! Exit codes: 0 success, 2 planner infeasible (an `infeasible.json`
//! report is written), 3 verification failed. Errors before any planning
//! are returned as `Err`.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};

use super::output::{load_plan, write_json, write_sweep, write_trace, PlanFile, SweepRow};
use super::scenario::{load_scenario, Scenario};
use super::svg::render;
use super::IoError;
use crate::flatness::FlatModel;
use crate::plan::{
    plan_exact, plan_multi, plan_with_escalation, AgentPlan, ExactStatus, Method, MultiMode, PlanError,
};
use crate::verify::{self, VerificationReport};

/// Polygon sizes of the default sweep.
pub const DEFAULT_SWEEP: [usize; 5] = [10, 15, 20, 25, 30];
/// Waypoint tolerance for a clean verification (m).
const WAYPOINT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Plan,
    Verify,
    Plot,
    Sweep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Flags {
    pub scenario: PathBuf,
    pub method: Method,
    pub mode: MultiMode,
    /// Polygon sizes; one for `plan`, `verify` and `plot`, any number for
    /// `sweep` (empty: the default sweep).
    pub n: Vec<usize>,
    pub d: Option<usize>,
    pub dt: Option<f64>,
    /// Output directory.
    pub out: PathBuf,
    /// Existing plan file for `verify` and `plot`; planned afresh if absent.
    pub plan: Option<PathBuf>,
}

impl Flags {
    pub fn new(scenario: impl Into<PathBuf>) -> Self {
        Self {
            scenario: scenario.into(),
            method: Method::Mip,
            mode: MultiMode::Simultaneous,
            n: Vec::new(),
            d: None,
            dt: None,
            out: PathBuf::from("."),
            plan: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub exit_code: i32,
    pub artifacts: Vec<PathBuf>,
    pub message: String,
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    File::create(path).map(BufWriter::new).map_err(|e| IoError::Write { path: path.to_path_buf(), source: e })
}

fn load(flags: &Flags) -> Result<Scenario, IoError> {
    let mut s = load_scenario(&flags.scenario)?;
    if let Some(d) = flags.d {
        s.problem.spline.d = d;
    }
    match flags.n.as_slice() {
        [] => {}
        [n] => s.problem.spline.n = *n,
        more => return Err(IoError::Scenario(format!("expected one --n value, got {}", more.len()))),
    }
    if let Some(dt) = flags.dt {
        s.dt = Some(dt);
    }
    s.problem.validate()?;
    Ok(s)
}

fn model(s: &Scenario) -> FlatModel {
    FlatModel { gravity: s.gravity, ..FlatModel::default() }
}

fn dt_for(s: &Scenario) -> f64 {
    let (t0, tn) = s.problem.time_range();
    s.dt.unwrap_or_else(|| verify::default_dt(t0, tn))
}

enum Planned {
    Done { file: PlanFile, plans: Vec<AgentPlan> },
    Infeasible(RunSummary),
}

fn plan_scenario(s: &Scenario, flags: &Flags) -> Result<Planned, IoError> {
    std::fs::create_dir_all(&flags.out).map_err(|e| IoError::Write { path: flags.out.clone(), source: e })?;
    match plan_with_escalation(&s.problem, flags.method, flags.mode) {
        Ok(out) => {
            let (plans, mut file) = match &out.exact {
                Some(ex) => {
                    let status = match ex.status {
                        ExactStatus::Success => "success",
                        ExactStatus::Degraded => "degraded",
                    };
                    if ex.status == ExactStatus::Degraded {
                        warn!("exact planner degraded (largest slack {:e})", ex.max_slack);
                    }
                    let mut f = PlanFile::new("exact", status, &ex.plans);
                    f.rounds = Some(ex.round_objectives.len() - 1);
                    (ex.plans.clone(), f)
                }
                None => {
                    let status = if out.mip.stats.node_limit_hit { "node_limit" } else { "optimal" };
                    (out.mip.plans.clone(), PlanFile::new("mip", status, &out.mip.plans))
                }
            };
            file.nodes = Some(out.mip.stats.nodes);
            Ok(Planned::Done { file, plans })
        }
        Err(e @ (PlanError::Infeasible(_) | PlanError::EscalationExhausted { .. })) => {
            let report = match &e {
                PlanError::Infeasible(r) | PlanError::EscalationExhausted { last: r, .. } => r.clone(),
                _ => unreachable!(),
            };
            let path = flags.out.join("infeasible.json");
            write_json(&path, &report)?;
            eprintln!("{e}");
            Ok(Planned::Infeasible(RunSummary { exit_code: 2, artifacts: vec![path], message: e.to_string() }))
        }
        Err(e) => Err(e.into()),
    }
}

fn plans_for(s: &Scenario, flags: &Flags) -> Result<Planned, IoError> {
    match &flags.plan {
        Some(path) => {
            let file = load_plan(path)?;
            let plans = file.plans()?;
            Ok(Planned::Done { file, plans })
        }
        None => plan_scenario(s, flags),
    }
}

fn report_ok(r: &VerificationReport) -> bool {
    r.is_clean(WAYPOINT_TOL)
}

/// Runs one command.
pub fn run(command: Command, flags: &Flags) -> Result<RunSummary, IoError> {
    match command {
        Command::Plan => {
            let s = load(flags)?;
            let (file, plans) = match plan_scenario(&s, flags)? {
                Planned::Done { file, plans } => (file, plans),
                Planned::Infeasible(summary) => return Ok(summary),
            };
            let plan_path = flags.out.join("plan.json");
            write_json(&plan_path, &file)?;
            let trace_path = flags.out.join("trace.csv");
            let singular = write_trace(create(&trace_path)?, &plans, &model(&s), dt_for(&s))?;
            if singular > 0 {
                warn!("{singular} trace rows with vanishing speed");
            }
            let lengths: Vec<String> = plans.iter().map(|p| format!("{:.4}", p.length)).collect();
            let message = format!(
                "{} plan ({}), n = {}, d = {}, length {}",
                file.method,
                file.status,
                file.n,
                file.d,
                lengths.join(", ")
            );
            info!("{message}");
            Ok(RunSummary { exit_code: 0, artifacts: vec![plan_path, trace_path], message })
        }
        Command::Verify => {
            let s = load(flags)?;
            let plans = match plans_for(&s, flags)? {
                Planned::Done { plans, .. } => plans,
                Planned::Infeasible(summary) => return Ok(summary),
            };
            let report = verify::check(&plans, &s.problem.agents, &s.problem.arrangement, Some(dt_for(&s)), &model(&s))?;
            std::fs::create_dir_all(&flags.out).map_err(|e| IoError::Write { path: flags.out.clone(), source: e })?;
            let path = flags.out.join("report.json");
            write_json(&path, &report)?;
            let clean = report_ok(&report);
            let message = format!(
                "clearance {:.6} m, waypoint error {:.3e} m, {} samples: {}",
                report.min_obstacle_clearance,
                report.max_waypoint_error,
                report.samples,
                if clean { "clean" } else { "FAILED" }
            );
            Ok(RunSummary { exit_code: if clean { 0 } else { 3 }, artifacts: vec![path], message })
        }
        Command::Plot => {
            let s = load(flags)?;
            let plans = match plans_for(&s, flags)? {
                Planned::Done { plans, .. } => plans,
                Planned::Infeasible(summary) => return Ok(summary),
            };
            std::fs::create_dir_all(&flags.out).map_err(|e| IoError::Write { path: flags.out.clone(), source: e })?;
            let path = flags.out.join("plot.svg");
            std::fs::write(&path, render(&s.problem.arrangement, &s.problem.agents, &plans))
                .map_err(|e| IoError::Write { path: path.clone(), source: e })?;
            Ok(RunSummary { exit_code: 0, message: format!("wrote {}", path.display()), artifacts: vec![path] })
        }
        Command::Sweep => {
            let mut sflags = flags.clone();
            sflags.n.clear();
            let s = load(&sflags)?;
            let ns: Vec<usize> = if flags.n.is_empty() { DEFAULT_SWEEP.to_vec() } else { flags.n.clone() };
            let rows = sweep(&s, &ns, flags.mode)?;
            std::fs::create_dir_all(&flags.out).map_err(|e| IoError::Write { path: flags.out.clone(), source: e })?;
            let path = flags.out.join("sweep.csv");
            write_sweep(create(&path)?, &rows)?;
            Ok(RunSummary { exit_code: 0, message: format!("{} sweep rows", rows.len()), artifacts: vec![path] })
        }
    }
}

fn row(n: usize, method: &str, length: Option<f64>, wall: f64, status: &str) -> SweepRow {
    SweepRow {
        n,
        method: method.into(),
        length: length.map_or_else(|| "*".into(), |l| format!("{l:.3}")),
        wall_time: wall,
        status: if length.is_some() { status.into() } else { "*".into() },
    }
}

/// Both methods at every `n`, without escalation. The exact planner starts
/// from the mixed-integer plan when there is one.
pub(crate) fn sweep(s: &Scenario, ns: &[usize], mode: MultiMode) -> Result<Vec<SweepRow>, IoError> {
    let mut rows = Vec::new();
    for &n in ns {
        let problem = s.problem.with_n(n);
        problem.validate()?;
        let start = Instant::now();
        let mip = match plan_multi(&problem, mode) {
            Ok(out) => Some(out),
            Err(PlanError::Infeasible(r)) => {
                info!("sweep n = {n}: mixed-integer infeasible ({r})");
                None
            }
            Err(e) => return Err(e.into()),
        };
        let t_mi = start.elapsed().as_secs_f64();
        let total = |plans: &[AgentPlan]| plans.iter().map(|p| p.length).sum::<f64>();
        let status = mip.as_ref().map_or("*", |m| if m.stats.node_limit_hit { "node_limit" } else { "optimal" });
        rows.push(row(n, "MI", mip.as_ref().map(|m| total(&m.plans)), t_mi, status));

        let start = Instant::now();
        let exact = plan_exact(&problem, mip.as_ref().map(|m| m.plans.as_slice()))?;
        let t_ex = start.elapsed().as_secs_f64();
        let ok = exact.status == ExactStatus::Success;
        rows.push(row(n, "EX", ok.then(|| total(&exact.plans)), t_ex, "success"));
    }
    Ok(rows)
}
