use serde::{Deserialize, Serialize};

use super::{require_sub_quadratic_p, velocity_difference_bound, AnalysisError, UniformBounds};
use crate::integrator::Trajectory;
use crate::model::{AgentEnsemble, ModelParams, Variant};
use crate::weights::{psi_min_integral_lower_bound, CommWeight, Horizon, IntegralBound, QRegime, WeightBound};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// Satisfied when `lhs > rhs`.
    Greater,
    /// Satisfied when `lhs < rhs`.
    Less,
}

impl Relation {
    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Relation::Greater => lhs > rhs,
            Relation::Less => lhs < rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Greater => ">",
            Relation::Less => "<",
        }
    }
}

/// Where the `ψ_min` integral in a report came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegralSource {
    /// Trapezoid rule along the simulated trajectory (exact up to quadrature error).
    Trajectory,
    /// Closed-form lower bound for the regular weight (certified).
    AnalyticBound,
    /// Only initial data enters the inequality.
    InitialData,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub relation: Relation,
    pub satisfied: bool,
    pub horizon: Horizon,
    pub source: IntegralSource,
    /// Hypotheses the condition relies on that are not checked numerically.
    pub advisories: Vec<String>,
    pub notes: String,
}

impl ConditionReport {
    fn new(
        name: impl Into<String>,
        lhs: f64,
        relation: Relation,
        rhs: f64,
        horizon: Horizon,
        source: IntegralSource,
    ) -> Self {
        Self {
            name: name.into(),
            lhs,
            rhs,
            relation,
            satisfied: relation.holds(lhs, rhs),
            horizon,
            source,
            advisories: Vec::new(),
            notes: String::new(),
        }
    }
}

const SMALL_A: &str = "requires the friction coefficient a to be sufficiently small; no threshold is known, the check uses the given value";

/// `(t, ∫₀ᵗ ψ_min)` at every sample, from the integrator's running integrals
/// or, for imported trajectories, from the samples themselves.
fn psi_integral_series(traj: &Trajectory, weight: &CommWeight) -> Result<Vec<(f64, f64)>, AnalysisError> {
    if traj.samples.is_empty() {
        return Err(AnalysisError::EmptyTrajectory);
    }
    if traj.running.len() == traj.samples.len() {
        return Ok(traj
            .samples
            .iter()
            .zip(&traj.running)
            .map(|(s, r)| (s.time(), r.psi_min))
            .collect());
    }
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(traj.samples.len());
    let mut prev: Option<(f64, f64)> = None;
    for s in &traj.samples {
        let psi = weight.min_pair_weight(s);
        if let Some((t0, p0)) = prev {
            acc += 0.5 * (s.time() - t0) * (p0 + psi);
        }
        prev = Some((s.time(), psi));
        out.push((s.time(), acc));
    }
    Ok(out)
}

/// `sup_t (scale·∫₀ᵗ ψ_min − drift·t)` over the sampled times, with the time
/// at which it is attained.
fn best_net_integral(series: &[(f64, f64)], scale: f64, drift: f64) -> (f64, f64) {
    series
        .iter()
        .map(|&(t, i)| (scale * i - drift * t, t))
        .fold((0.0, 0.0), |best, cur| if cur.0 > best.0 { cur } else { best })
}

pub(super) fn weight_bound(initial: &AgentEnsemble, params: &ModelParams, weight: &CommWeight) -> Option<WeightBound> {
    match weight {
        CommWeight::Regular { beta, k } => Some(WeightBound {
            psi0_min: weight.min_pair_weight(initial),
            m: velocity_difference_bound(initial, params),
            beta: *beta,
            k: *k,
        }),
        _ => None,
    }
}

/// Evaluates `factor · sup_t ∫₀ᵗ (ψ_min − drift)` first on the trajectory and,
/// when that does not already satisfy the relation, with the analytic bound.
#[allow(clippy::too_many_arguments)]
fn integral_side(
    name: &str,
    traj: &Trajectory,
    params: &ModelParams,
    weight: &CommWeight,
    factor: f64,
    drift: f64,
    initial_side: f64,
    integral_is_lhs: bool,
) -> Result<ConditionReport, AnalysisError> {
    let series = psi_integral_series(traj, weight)?;
    let t_end = series.last().map_or(0.0, |s| s.0);
    let (net, t0) = best_net_integral(&series, 1.0, drift);
    let traj_value = factor * net;
    let make = |value: f64, horizon: Horizon, source: IntegralSource| {
        if integral_is_lhs {
            ConditionReport::new(name, value, Relation::Greater, initial_side, horizon, source)
        } else {
            ConditionReport::new(name, initial_side, Relation::Less, value, horizon, source)
        }
    };
    let mut report = make(traj_value, Horizon::Finite(t_end), IntegralSource::Trajectory);
    report.notes = if drift > 0.0 {
        format!("net integral maximised at t0 = {t0} within the simulated horizon")
    } else {
        format!("trapezoid integral over [0, {t_end}]")
    };
    if report.satisfied {
        return Ok(report);
    }
    let initial = &traj.samples[0];
    if let Some(wb) = weight_bound(initial, params, weight) {
        let regime = if drift > 0.0 {
            QRegime::BelowTwo { drift }
        } else {
            QRegime::AtLeastTwo
        };
        if let Ok(bound) = psi_min_integral_lower_bound(&wb, Horizon::Infinite, regime) {
            let value = match bound {
                IntegralBound::Finite(v) => factor * v,
                IntegralBound::Divergent => f64::INFINITY,
            };
            let mut analytic = make(value, Horizon::Infinite, IntegralSource::AnalyticBound);
            analytic.notes = format!(
                "closed-form lower bound with psi0_min = {}, M = {}, beta = {}; trajectory integral gave {traj_value}",
                wb.psi0_min, wb.m, wb.beta
            );
            if analytic.satisfied || value > traj_value {
                return Ok(analytic);
            }
        }
    }
    Ok(report)
}

/// `4 C_m (1 − p/2) ∫₀^∞ ψ_min dt > ‖v_M(0) − v_m(0)‖₂^{2−p}` (norm type).
pub fn check_norm_type_flocking_condition(
    traj: &Trajectory,
    params: &ModelParams,
    weight: &CommWeight,
    c_m: f64,
) -> Result<ConditionReport, AnalysisError> {
    require_sub_quadratic_p(params)?;
    if params.variant != Variant::NormType {
        return Err(AnalysisError::Precondition("norm-type parameters required".into()));
    }
    let initial = traj.samples.first().ok_or(AnalysisError::EmptyTrajectory)?;
    let p = params.p;
    let rhs = initial.extremal_spread().powf(2.0 - p);
    let mut r = integral_side(
        "norm_flocking",
        traj,
        params,
        weight,
        4.0 * c_m * (1.0 - p / 2.0),
        0.0,
        rhs,
        true,
    )?;
    r.advisories.push(SMALL_A.into());
    Ok(r)
}

/// The weighted form `4 C_m (1 − p/2) ∫₀^∞ ψ_min e^{−κs} ds > ‖v_M(0) − v_m(0)‖₂^{2−p}`
/// with `κ = (2 − p) a C₁ M^{q−2}`, evaluated at the given `a`.
pub fn check_norm_type_weighted_condition(
    traj: &Trajectory,
    params: &ModelParams,
    weight: &CommWeight,
    c_m: f64,
    c1_est: f64,
) -> Result<ConditionReport, AnalysisError> {
    require_sub_quadratic_p(params)?;
    if params.variant != Variant::NormType {
        return Err(AnalysisError::Precondition("norm-type parameters required".into()));
    }
    let initial = traj.samples.first().ok_or(AnalysisError::EmptyTrajectory)?;
    let (p, q) = (params.p, params.q);
    let m = velocity_difference_bound(initial, params);
    let kappa = (2.0 - p) * params.a[0] * c1_est * m.powf(q - 2.0);
    let factor = 4.0 * c_m * (1.0 - p / 2.0);
    let rhs = initial.extremal_spread().powf(2.0 - p);

    let series = weighted_series(traj, weight, kappa)?;
    let t_end = traj.last().time();
    let mut report = ConditionReport::new(
        "norm_flocking_weighted",
        factor * series,
        Relation::Greater,
        rhs,
        Horizon::Finite(t_end),
        IntegralSource::Trajectory,
    );
    report.notes = format!("kappa = {kappa}, M = {m}, C1 = {c1_est} (Monte Carlo estimate)");
    if !report.satisfied {
        if let Some(wb) = weight_bound(initial, params, weight) {
            let v = factor * weighted_analytic(&wb, kappa);
            if v > report.lhs {
                report = ConditionReport::new(
                    "norm_flocking_weighted",
                    v,
                    Relation::Greater,
                    rhs,
                    Horizon::Infinite,
                    IntegralSource::AnalyticBound,
                );
                report.notes = format!(
                    "kappa = {kappa}, M = {m}, C1 = {c1_est} (Monte Carlo estimate); quadrature of the closed-form pointwise bound"
                );
            }
        }
    }
    report
        .advisories
        .push("C1 is a Monte Carlo estimate, not a proven constant".into());
    Ok(report)
}

/// Trapezoid `∫ ψ_min(s) e^{−κ s} ds` over the samples.
fn weighted_series(traj: &Trajectory, weight: &CommWeight, kappa: f64) -> Result<f64, AnalysisError> {
    if traj.samples.is_empty() {
        return Err(AnalysisError::EmptyTrajectory);
    }
    let vals: Vec<(f64, f64)> = traj
        .samples
        .iter()
        .map(|s| (s.time(), weight.min_pair_weight(s) * (-kappa * s.time()).exp()))
        .collect();
    Ok(vals
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
        .sum())
}

/// Lower bound on `∫₀^∞ K[c + Ms]^{−β} e^{−κs} ds`: the integrand decreases,
/// so a right-endpoint sum on a geometric grid never overestimates it.
fn weighted_analytic(wb: &WeightBound, kappa: f64) -> f64 {
    if kappa <= 0.0 {
        return psi_min_integral_lower_bound(wb, Horizon::Infinite, QRegime::AtLeastTwo)
            .map(|b| b.as_f64())
            .unwrap_or(0.0);
    }
    let scale = ((wb.psi0_min / wb.k).powf(-1.0 / wb.beta) / wb.m).min(1.0 / kappa);
    let t_max = 60.0 / kappa;
    let (mut s, mut h, mut acc) = (0.0, 1e-3 * scale, 0.0);
    while s < t_max {
        s += h;
        acc += h * wb.psi_min_at(s) * (-kappa * s).exp();
        h *= 1.002;
    }
    acc
}

/// Finite extinction of `v_{M,k} − v_{m,k}` (vector type):
/// `(v_{M,k}(0) − v_{m,k}(0))^{2−p} < 2(2−p)∫ψ_min` for `q ≥ 2`, or
/// `< (2−p) sup_{t₀} ∫₀^{t₀} (2ψ_min − a_k C₁ B_k^{q−p})` for `1 < q < 2`.
pub fn check_vector_type_fet_condition(
    traj: &Trajectory,
    params: &ModelParams,
    weight: &CommWeight,
    c1_est: f64,
    k: usize,
) -> Result<ConditionReport, AnalysisError> {
    require_sub_quadratic_p(params)?;
    if params.variant != Variant::VectorType {
        return Err(AnalysisError::Precondition("vector-type parameters required".into()));
    }
    if !(params.p < params.q) {
        return Err(AnalysisError::Precondition(format!(
            "need p < q (p = {}, q = {})",
            params.p, params.q
        )));
    }
    let initial = traj.samples.first().ok_or(AnalysisError::EmptyTrajectory)?;
    if k >= initial.dim() {
        return Err(AnalysisError::Precondition(format!("coordinate {k} out of range")));
    }
    let p = params.p;
    let lhs = (initial.velocity_max()[k] - initial.velocity_min()[k]).powf(2.0 - p);
    let name = format!("vector_fet[{}]", k + 1);
    let mut r = if params.q >= 2.0 {
        integral_side(&name, traj, params, weight, 2.0 * (2.0 - p), 0.0, lhs, false)?
    } else {
        let bk = UniformBounds::from_initial(initial, params).widths()[k];
        let drift = params.a[k] * c1_est * bk.powf(params.q - p);
        // (2−p)∫(2ψ − δ) = 2(2−p)∫(ψ − δ/2)
        let mut r = integral_side(&name, traj, params, weight, 2.0 * (2.0 - p), drift / 2.0, lhs, false)?;
        r.advisories
            .push("C1 is a Monte Carlo estimate, not a proven constant".into());
        r.notes = format!("{}; B_k = {bk}, drift a_k C1 B_k^(q-p) = {drift}", r.notes);
        r
    };
    r.advisories.push(SMALL_A.into());
    Ok(r)
}

/// Convergence of coordinate `k` to `+C_k` from straddling data:
/// `|v_{m,k}(0)|^{2−p} < (2−p)∫ψ_min` for `q ≥ 2`, or
/// `< (2−p) sup_{t₀} ∫₀^{t₀}(ψ_min − a_k |B_{m,k}|^{q−p})` for `1 < q < 2`.
pub fn check_positive_convergence_condition(
    traj: &Trajectory,
    params: &ModelParams,
    weight: &CommWeight,
    k: usize,
) -> Result<ConditionReport, AnalysisError> {
    require_sub_quadratic_p(params)?;
    let initial = traj.samples.first().ok_or(AnalysisError::EmptyTrajectory)?;
    if k >= initial.dim() {
        return Err(AnalysisError::Precondition(format!("coordinate {k} out of range")));
    }
    let (lo, hi) = (initial.velocity_min()[k], initial.velocity_max()[k]);
    if !(lo < 0.0 && 0.0 < hi) {
        return Err(AnalysisError::Precondition(format!(
            "coordinate {} does not straddle zero at t = 0 (min {lo}, max {hi})",
            k + 1
        )));
    }
    let p = params.p;
    let lhs = lo.abs().powf(2.0 - p);
    let name = format!("positive_convergence[{}]", k + 1);
    let drift = if params.q >= 2.0 {
        0.0
    } else {
        let bm = UniformBounds::from_initial(initial, params).lower[k];
        params.a_k(k) * bm.abs().powf(params.q - p)
    };
    let mut r = integral_side(&name, traj, params, weight, 2.0 - p, drift, lhs, false)?;
    r.advisories.push(SMALL_A.into());
    r.advisories.push(
        "also requires |v_m,k(0)| to be small enough; no threshold is known, so a satisfied report is not a guarantee"
            .into(),
    );
    Ok(r)
}

/// Which initial-data inequality the β > 1 hypothesis is checked in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "form", content = "coordinate")]
pub enum HypothesisForm {
    /// `2(2−p)/(M(β−1)) ψ_min(0)^{(β−1)/β} > (v_{M,k}(0) − v_{m,k}(0))^{2−p}`.
    Coordinate(usize),
    /// `2 C_m (2−p)/(M(β−1)) ψ_min(0)^{(β−1)/β} > ‖v_M(0) − v_m(0)‖₂^{2−p}`.
    Norm,
    /// `(2−p)/(M(β−1)) ψ_min(0)^{(β−1)/β} > |v_{m,k}(0)|^{2−p}`.
    PositiveConvergence(usize),
}

/// Initial-data hypothesis under which a regular weight with `β > 1`
/// satisfies the finite-time conditions.
pub fn check_regular_weight_hypothesis(
    initial: &AgentEnsemble,
    params: &ModelParams,
    weight: &CommWeight,
    form: HypothesisForm,
    c_m: f64,
) -> Result<ConditionReport, AnalysisError> {
    require_sub_quadratic_p(params)?;
    let wb = match weight_bound(initial, params, weight) {
        Some(wb) if wb.beta > 1.0 => wb,
        _ => {
            return Err(AnalysisError::Precondition(
                "hypothesis applies to the regular weight with beta > 1".into(),
            ))
        }
    };
    let integral = psi_min_integral_lower_bound(&wb, Horizon::Infinite, QRegime::AtLeastTwo)
        .map_err(|e| AnalysisError::Precondition(e.to_string()))?
        .as_f64();
    let p = params.p;
    let (name, factor, rhs) = match form {
        HypothesisForm::Coordinate(k) => {
            if k >= initial.dim() {
                return Err(AnalysisError::Precondition(format!("coordinate {k} out of range")));
            }
            (
                format!("regular_weight_hypothesis[{}]", k + 1),
                2.0 * (2.0 - p),
                (initial.velocity_max()[k] - initial.velocity_min()[k]).powf(2.0 - p),
            )
        }
        HypothesisForm::Norm => (
            "regular_weight_hypothesis[norm]".to_string(),
            2.0 * c_m * (2.0 - p),
            initial.extremal_spread().powf(2.0 - p),
        ),
        HypothesisForm::PositiveConvergence(k) => {
            if k >= initial.dim() {
                return Err(AnalysisError::Precondition(format!("coordinate {k} out of range")));
            }
            (
                format!("regular_weight_hypothesis[positive {}]", k + 1),
                2.0 - p,
                initial.velocity_min()[k].abs().powf(2.0 - p),
            )
        }
    };
    let mut r = ConditionReport::new(
        name,
        factor * integral,
        Relation::Greater,
        rhs,
        Horizon::Infinite,
        IntegralSource::InitialData,
    );
    r.notes = format!(
        "psi0_min = {}, M = {}, beta = {}, K = {}",
        wb.psi0_min, wb.m, wb.beta, wb.k
    );
    r.advisories.push(SMALL_A.into());
    Ok(r)
}
