//! Growing the control polygon until the avoidance constraints admit a
//! solution.

use log::info;

use super::{plan_exact, plan_multi, ExactOutcome, InfeasibilityReport, MipOutcome, MultiMode, PlanError, PlanningProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    Mip,
    /// Mixed-integer plan refined by the alternating exact planner.
    Exact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EscalationOutcome {
    /// The problem that was finally solved.
    pub problem: PlanningProblem,
    pub mip: MipOutcome,
    pub exact: Option<ExactOutcome>,
    /// Reports of the infeasible attempts, in order.
    pub attempts: Vec<InfeasibilityReport>,
}

/// Next problem to try after `last` failed: `n + n_step`, or the terminal
/// report past `n_max`. Without a failure the problem is returned as is.
pub fn escalate(problem: &PlanningProblem, last: Option<&InfeasibilityReport>) -> Result<PlanningProblem, PlanError> {
    let Some(report) = last else {
        return Ok(problem.clone());
    };
    let esc = problem.config.escalation;
    let n = problem.spline.n + esc.n_step;
    if n > esc.n_max {
        return Err(PlanError::EscalationExhausted { n_max: esc.n_max, last: report.clone() });
    }
    info!("infeasible at n = {}; retrying with n = {n}", problem.spline.n);
    Ok(problem.with_n(n))
}

pub fn plan_with_escalation(
    problem: &PlanningProblem,
    method: Method,
    mode: MultiMode,
) -> Result<EscalationOutcome, PlanError> {
    let mut current = problem.clone();
    let mut attempts = Vec::new();
    loop {
        match plan_multi(&current, mode) {
            Ok(mip) => {
                let exact = match method {
                    Method::Mip => None,
                    Method::Exact => Some(plan_exact(&current, Some(&mip.plans))?),
                };
                return Ok(EscalationOutcome { problem: current, mip, exact, attempts });
            }
            Err(PlanError::Infeasible(report)) => {
                let next = escalate(&current, Some(&report))?;
                attempts.push(report);
                current = next;
            }
            Err(e) => return Err(e),
        }
    }
}
