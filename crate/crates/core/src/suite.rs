//! Named checks run against a finished trajectory, as used by `pflock check`.

use serde::{Deserialize, Serialize};

use crate::analysis::{
    barrett_constants_estimate, check_asymptotic_flocking, check_exterior_decay, check_limit_bracketing,
    check_norm_invariant_sets, check_norm_type_flocking_condition, check_norm_type_weighted_condition,
    check_positive_convergence_condition, check_positivity, check_trichotomy, check_uniform_bounds,
    check_vector_type_fet_condition, check_weight_lower_bound, classify_terminal_behavior, norm_equivalence_constants,
    regime_entry_time, verify_decay_estimate, AnalysisError, ConditionReport, DecayKind, InvariantReport,
    TerminalBehavior,
};
use crate::integrator::{detect_flocking_time, SimConfig, Trajectory};
use crate::model::{ModelParams, Variant};
use crate::scenarios::Expectation;
use crate::weights::CommWeight;

pub const KNOWN_CHECKS: [&str; 15] = [
    "norm_flocking",
    "norm_flocking_weighted",
    "vector_fet",
    "positive_convergence",
    "weight_lower_bound",
    "flocking_time",
    "uniform_bounds",
    "trichotomy",
    "positivity",
    "limit_bracketing",
    "exterior_decay",
    "norm_invariant_sets",
    "asymptotic_flocking",
    "decay",
    "terminal_limits",
];

/// Slack for sampled invariants.
pub const INVARIANT_TOL: f64 = 1e-6;
/// Tolerance for classifying terminal limits.
pub const CLASSIFY_TOL: f64 = 1e-3;
/// Monte Carlo pairs and seed for the `C1` estimate.
pub const BARRETT_SAMPLES: usize = 20_000;
pub const BARRETT_SEED: u64 = 0x5eed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Fail,
    /// The check's hypotheses do not apply to this run.
    Skipped,
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub id: String,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub conditions: Vec<ConditionReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub invariants: Vec<InvariantReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal: Option<TerminalBehavior>,
    pub message: String,
}

impl CheckResult {
    fn bare(id: &str, outcome: Outcome, message: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            outcome,
            conditions: vec![],
            invariants: vec![],
            terminal: None,
            message: message.into(),
        }
    }

    fn from_error(id: &str, e: AnalysisError) -> Self {
        let outcome = match e {
            AnalysisError::Precondition(_) | AnalysisError::RegimeNotEntered(_) => Outcome::Skipped,
            _ => Outcome::Error,
        };
        Self::bare(id, outcome, e.to_string())
    }

    fn from_conditions(id: &str, conditions: Vec<ConditionReport>) -> Self {
        let ok = conditions.iter().all(|c| c.satisfied);
        let message = conditions
            .iter()
            .map(|c| format!("{}: {:.6e} {} {:.6e}", c.name, c.lhs, c.relation.symbol(), c.rhs))
            .collect::<Vec<_>>()
            .join("; ");
        Self {
            conditions,
            ..Self::bare(id, if ok { Outcome::Pass } else { Outcome::Fail }, message)
        }
    }

    fn from_invariant(id: &str, report: InvariantReport) -> Self {
        let outcome = if report.holds { Outcome::Pass } else { Outcome::Fail };
        Self {
            invariants: vec![report.clone()],
            ..Self::bare(id, outcome, format!("worst {:.3e}; {}", report.worst, report.detail))
        }
    }

    pub fn failed(&self) -> bool {
        matches!(self.outcome, Outcome::Fail | Outcome::Error)
    }
}

/// Everything a check may need about the run that produced `traj`.
pub struct CheckContext<'a> {
    pub params: &'a ModelParams,
    pub weight: &'a CommWeight,
    pub sim: &'a SimConfig,
    pub expected: &'a [Expectation],
}

/// `C_m` for the `p`-norm against the 2-norm on `N × d` matrices.
fn c_m(params: &ModelParams, traj: &Trajectory) -> Result<f64, AnalysisError> {
    let s = &traj.samples[0];
    Ok(norm_equivalence_constants(s.n_agents(), s.dim(), params.p, 2.0)?.1)
}

fn c1(gamma: f64, dim: usize, delta: f64) -> Result<f64, AnalysisError> {
    Ok(barrett_constants_estimate(gamma, dim, delta, BARRETT_SAMPLES, BARRETT_SEED)?.c1)
}

fn conditions(id: &str, r: Result<Vec<ConditionReport>, AnalysisError>) -> CheckResult {
    match r {
        Ok(v) => CheckResult::from_conditions(id, v),
        Err(e) => CheckResult::from_error(id, e),
    }
}

fn invariant(id: &str, r: Result<InvariantReport, AnalysisError>) -> CheckResult {
    match r {
        Ok(v) => CheckResult::from_invariant(id, v),
        Err(e) => CheckResult::from_error(id, e),
    }
}

pub fn run_check(id: &str, traj: &Trajectory, ctx: &CheckContext) -> CheckResult {
    if traj.samples.is_empty() {
        return CheckResult::from_error(id, AnalysisError::EmptyTrajectory);
    }
    let (params, weight) = (ctx.params, ctx.weight);
    let dim = traj.samples[0].dim();
    let tol = INVARIANT_TOL;
    match id {
        "norm_flocking" => conditions(
            id,
            c_m(params, traj)
                .and_then(|cm| check_norm_type_flocking_condition(traj, params, weight, cm).map(|r| vec![r])),
        ),
        "norm_flocking_weighted" => conditions(
            id,
            c_m(params, traj).and_then(|cm| {
                let c1 = c1(params.q, dim, 0.0)?;
                check_norm_type_weighted_condition(traj, params, weight, cm, c1).map(|r| vec![r])
            }),
        ),
        "vector_fet" => conditions(
            id,
            (|| {
                let c1 = if params.q < 2.0 {
                    c1(params.q, 1, 2.0 - params.p)?
                } else {
                    0.0
                };
                (0..dim)
                    .map(|k| check_vector_type_fet_condition(traj, params, weight, c1, k))
                    .collect()
            })(),
        ),
        "positive_convergence" => {
            let reports: Vec<_> = (0..dim)
                .map(|k| check_positive_convergence_condition(traj, params, weight, k))
                .collect();
            if reports.iter().all(Result::is_err) {
                let msg = reports
                    .into_iter()
                    .map(|r| r.unwrap_err().to_string())
                    .collect::<Vec<_>>()
                    .join("; ");
                return CheckResult::bare(id, Outcome::Skipped, msg);
            }
            conditions(id, Ok(reports.into_iter().filter_map(Result::ok).collect()))
        }
        "weight_lower_bound" => invariant(id, check_weight_lower_bound(traj, params, weight, tol)),
        "uniform_bounds" => invariant(id, check_uniform_bounds(traj, params, tol)),
        "trichotomy" => invariant(id, check_trichotomy(traj, params, tol).map(|r| r.0)),
        "positivity" => invariant(id, check_positivity(traj, params, tol)),
        "limit_bracketing" => invariant(id, check_limit_bracketing(traj, params, tol)),
        "exterior_decay" => invariant(id, check_exterior_decay(traj, params, tol)),
        "norm_invariant_sets" => invariant(id, check_norm_invariant_sets(traj, params, tol)),
        "asymptotic_flocking" => invariant(id, check_asymptotic_flocking(traj, ctx.sim.consensus_eps)),
        "flocking_time" => flocking_time(traj, ctx),
        "decay" => decay(traj, params),
        "terminal_limits" => {
            let t = classify_terminal_behavior(traj, params, CLASSIFY_TOL);
            let outcome = if t.all_resolved() { Outcome::Pass } else { Outcome::Fail };
            let msg = if t.settled() {
                "classified every agent".to_string()
            } else {
                "velocities still moving over the last 10% of the horizon".to_string()
            };
            CheckResult {
                terminal: Some(t),
                ..CheckResult::bare(id, outcome, msg)
            }
        }
        other => CheckResult::bare(other, Outcome::Error, format!("unknown check `{other}`")),
    }
}

fn flocking_time(traj: &Trajectory, ctx: &CheckContext) -> CheckResult {
    let id = "flocking_time";
    let Some(t) = traj
        .flocking_event_time()
        .or_else(|| detect_flocking_time(traj, ctx.sim.consensus_eps))
    else {
        return CheckResult::bare(
            id,
            Outcome::Fail,
            format!(
                "velocity diameter stayed above {} up to t = {}",
                ctx.sim.consensus_eps,
                traj.last().time()
            ),
        );
    };
    match ctx.expected.iter().find(|e| e.check == id) {
        Some(e) if (t - e.value).abs() > e.tol => CheckResult::bare(
            id,
            Outcome::Fail,
            format!("flocking at t = {t}, expected {} ± {}", e.value, e.tol),
        ),
        _ => CheckResult::bare(id, Outcome::Pass, format!("flocking at t = {t}")),
    }
}

fn decay(traj: &Trajectory, params: &ModelParams) -> CheckResult {
    let id = "decay";
    let kinds: &[DecayKind] = match params.variant {
        Variant::NormType => &[DecayKind::NormMax, DecayKind::NormMin],
        Variant::VectorType => &[DecayKind::VecMax, DecayKind::VecMin],
    };
    let coords = match params.variant {
        Variant::NormType => 1,
        Variant::VectorType => traj.samples[0].dim(),
    };
    let mut worst = f64::NEG_INFINITY;
    let mut used = Vec::new();
    let mut skipped = Vec::new();
    for &kind in kinds {
        for k in 0..coords {
            let Some(t_start) = regime_entry_time(traj, params, k, kind) else {
                skipped.push(format!("{kind:?}[{}] regime not entered", k + 1));
                continue;
            };
            match verify_decay_estimate(traj, params, k, kind, t_start) {
                Ok(r) => {
                    worst = worst.max(r.max_violation);
                    used.push(format!(
                        "{kind:?}[{}] from t = {} rate {:.3e}",
                        k + 1,
                        r.t_start,
                        r.rate
                    ));
                }
                Err(e) => skipped.push(e.to_string()),
            }
        }
    }
    if used.is_empty() {
        return CheckResult::bare(id, Outcome::Skipped, skipped.join("; "));
    }
    let outcome = if worst <= INVARIANT_TOL {
        Outcome::Pass
    } else {
        Outcome::Fail
    };
    CheckResult::bare(
        id,
        outcome,
        format!("max violation {worst:.3e} over {}", used.join(", ")),
    )
}

pub fn run_checks(ids: &[String], traj: &Trajectory, ctx: &CheckContext) -> Vec<CheckResult> {
    ids.iter().map(|id| run_check(id, traj, ctx)).collect()
}
