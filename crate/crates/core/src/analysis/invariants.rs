use serde::{Deserialize, Serialize};

use super::conditions::weight_bound;
use super::{AnalysisError, UniformBounds};
use crate::integrator::{detect_flocking_time, pair_index, Trajectory};
use crate::model::{distance, euclidean, velocity_limit, AgentEnsemble, ModelParams, Variant};
use crate::weights::{psi_min_integral_lower_bound, regular_weight_lower_bound, CommWeight, Horizon, QRegime};

/// Outcome of checking one invariant along a sampled trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub name: String,
    pub holds: bool,
    /// Largest violation margin seen (non-positive when the invariant holds
    /// with room to spare).
    pub worst: f64,
    pub detail: String,
}

impl InvariantReport {
    fn new(name: impl Into<String>, worst: f64, tol: f64, detail: String) -> Self {
        Self {
            name: name.into(),
            holds: worst <= tol,
            worst,
            detail,
        }
    }
}

/// Where the extremal velocities of one coordinate sit relative to `C_k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `v_{M,k} ≤ C_k` from some time on.
    AtMostLimit,
    /// `v_{m,k} ≥ C_k` from some time on.
    AtLeastLimit,
    /// `v_{m,k} < C_k < v_{M,k}` throughout.
    Straddling,
}

fn require_samples(traj: &Trajectory) -> Result<(), AnalysisError> {
    if traj.samples.is_empty() {
        Err(AnalysisError::EmptyTrajectory)
    } else {
        Ok(())
    }
}

fn require_vector(params: &ModelParams) -> Result<(), AnalysisError> {
    if params.variant != Variant::VectorType {
        return Err(AnalysisError::Precondition("needs vector-type parameters".into()));
    }
    Ok(())
}

fn require_nonnegative_data(initial: &AgentEnsemble) -> Result<(), AnalysisError> {
    let v = initial.velocities().as_slice();
    if v.iter().any(|&x| x < 0.0) || v.iter().all(|&x| x == 0.0) {
        return Err(AnalysisError::Precondition(
            "needs non-negative, non-zero initial velocities".into(),
        ));
    }
    Ok(())
}

/// `B_{m,k} ≤ v_{i,k}(t) ≤ B_{M,k}` at every sample, up to `tol`.
pub fn check_uniform_bounds(
    traj: &Trajectory,
    params: &ModelParams,
    tol: f64,
) -> Result<InvariantReport, AnalysisError> {
    require_samples(traj)?;
    let bounds = UniformBounds::from_initial(&traj.samples[0], params);
    let mut worst = f64::NEG_INFINITY;
    let mut at = 0.0;
    for s in &traj.samples {
        for i in 0..s.n_agents() {
            for (k, &v) in s.velocity(i).iter().enumerate() {
                let m = (v - bounds.upper[k]).max(bounds.lower[k] - v);
                if m > worst {
                    worst = m;
                    at = s.time();
                }
            }
        }
    }
    Ok(InvariantReport::new(
        "uniform_bounds",
        worst,
        tol,
        format!(
            "lower {:?}, upper {:?}, worst margin {worst:.3e} at t = {at}",
            bounds.lower, bounds.upper
        ),
    ))
}

/// Once a coordinate enters `v_{M,k} ≤ C_k` or `v_{m,k} ≥ C_k` it must stay
/// there. Returns the regime each coordinate ends in.
pub fn check_trichotomy(
    traj: &Trajectory,
    params: &ModelParams,
    tol: f64,
) -> Result<(InvariantReport, Vec<Regime>), AnalysisError> {
    require_samples(traj)?;
    require_vector(params)?;
    let d = traj.samples[0].dim();
    let mut worst = f64::NEG_INFINITY;
    let mut regimes = Vec::with_capacity(d);
    for k in 0..d {
        let c = velocity_limit(params, k).value();
        let (mut below, mut above) = (false, false);
        for s in &traj.samples {
            let (hi, lo) = (s.velocity_max()[k], s.velocity_min()[k]);
            if below {
                worst = worst.max(hi - c);
            }
            if above {
                worst = worst.max(c - lo);
            }
            below |= hi <= c + tol;
            above |= lo >= c - tol;
        }
        regimes.push(if below {
            Regime::AtMostLimit
        } else if above {
            Regime::AtLeastLimit
        } else {
            Regime::Straddling
        });
    }
    // A coordinate that never leaves the straddling regime has nothing to violate.
    let worst = if worst.is_finite() { worst } else { 0.0 };
    Ok((
        InvariantReport::new("trichotomy", worst, tol, format!("regimes {regimes:?}")),
        regimes,
    ))
}

/// Non-negative initial velocities keep `v_{m,k}(t) > −tol`.
pub fn check_positivity(traj: &Trajectory, params: &ModelParams, tol: f64) -> Result<InvariantReport, AnalysisError> {
    require_samples(traj)?;
    require_vector(params)?;
    require_nonnegative_data(&traj.samples[0])?;
    let worst = traj
        .samples
        .iter()
        .flat_map(|s| s.velocity_min())
        .map(|v| -v)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(InvariantReport::new(
        "positivity",
        worst,
        tol,
        format!("most negative coordinate {:.3e}", -worst),
    ))
}

/// Over the final 10% of the horizon `−C_k − tol ≤ v_{m,k} ≤ v_{M,k} ≤ C_k + tol`.
pub fn check_limit_bracketing(
    traj: &Trajectory,
    params: &ModelParams,
    tol: f64,
) -> Result<InvariantReport, AnalysisError> {
    require_samples(traj)?;
    require_vector(params)?;
    let t0 = traj.samples[0].time();
    let tail = t0 + 0.9 * (traj.last().time() - t0);
    let mut worst = f64::NEG_INFINITY;
    for s in traj.samples.iter().filter(|s| s.time() >= tail) {
        let (hi, lo) = (s.velocity_max(), s.velocity_min());
        for k in 0..s.dim() {
            let c = velocity_limit(params, k).value();
            worst = worst.max(hi[k] - c).max(-c - lo[k]);
        }
    }
    Ok(InvariantReport::new(
        "limit_bracketing",
        worst,
        tol,
        format!("tail from t = {tail}"),
    ))
}

/// Outside `[−C_k, C_k]` the extremal velocity moves monotonically inward
/// between consecutive samples.
pub fn check_exterior_decay(
    traj: &Trajectory,
    params: &ModelParams,
    tol: f64,
) -> Result<InvariantReport, AnalysisError> {
    require_samples(traj)?;
    require_vector(params)?;
    let mut worst = f64::NEG_INFINITY;
    let mut pairs = 0usize;
    for w in traj.samples.windows(2) {
        let (hi0, hi1) = (w[0].velocity_max(), w[1].velocity_max());
        let (lo0, lo1) = (w[0].velocity_min(), w[1].velocity_min());
        for k in 0..w[0].dim() {
            let c = velocity_limit(params, k).value();
            if hi0[k] > c {
                worst = worst.max(hi1[k] - hi0[k]);
                pairs += 1;
            }
            if lo0[k] < -c {
                worst = worst.max(lo0[k] - lo1[k]);
                pairs += 1;
            }
        }
    }
    let worst = if pairs == 0 { 0.0 } else { worst };
    Ok(InvariantReport::new(
        "exterior_decay",
        worst,
        tol,
        format!("{pairs} exterior sample steps"),
    ))
}

/// With non-negative data, `‖v_M‖₂ ≤ C` and `‖v_m‖₂ ≥ C` are absorbing.
pub fn check_norm_invariant_sets(
    traj: &Trajectory,
    params: &ModelParams,
    tol: f64,
) -> Result<InvariantReport, AnalysisError> {
    require_samples(traj)?;
    if params.variant != Variant::NormType {
        return Err(AnalysisError::Precondition("needs norm-type parameters".into()));
    }
    require_nonnegative_data(&traj.samples[0])?;
    let c = velocity_limit(params, 0).value();
    let (mut below, mut above) = (false, false);
    let mut worst = f64::NEG_INFINITY;
    for s in &traj.samples {
        let (hi, lo) = (euclidean(&s.velocity_max()), euclidean(&s.velocity_min()));
        if below {
            worst = worst.max(hi - c);
        }
        if above {
            worst = worst.max(c - lo);
        }
        below |= hi <= c;
        above |= lo >= c;
    }
    let worst = if worst.is_finite() { worst } else { 0.0 };
    Ok(InvariantReport::new(
        "norm_invariant_sets",
        worst,
        tol,
        format!("entered ‖v_M‖ ≤ C: {below}, entered ‖v_m‖ ≥ C: {above}"),
    ))
}

/// After velocities align at `t_c`, the position diameter must not grow by
/// more than 1% over `[5 t_c, 10 t_c]`. Needs `t_end ≥ 10 t_c`.
pub fn check_asymptotic_flocking(traj: &Trajectory, eps: f64) -> Result<InvariantReport, AnalysisError> {
    require_samples(traj)?;
    require_nonnegative_data(&traj.samples[0])?;
    let t_c = traj
        .flocking_event_time()
        .or_else(|| detect_flocking_time(traj, eps))
        .ok_or_else(|| AnalysisError::RegimeNotEntered(format!("velocity diameter never fell below {eps}")))?;
    let t_end = traj.last().time();
    let horizon = if t_c > 0.0 { 10.0 * t_c } else { t_end };
    if t_end < horizon * (1.0 - 1e-12) {
        return Err(AnalysisError::Precondition(format!(
            "horizon {t_end} is shorter than 10 × flocking time {t_c}"
        )));
    }
    let half = traj.at(0.5 * horizon);
    let base = half.position_diameter();
    let peak = traj
        .samples
        .iter()
        .filter(|s| s.time() >= half.time() && s.time() <= horizon * (1.0 + 1e-12))
        .map(AgentEnsemble::position_diameter)
        .fold(base, f64::max);
    let growth = if base > 0.0 { peak / base - 1.0 } else { peak };
    Ok(InvariantReport::new(
        "asymptotic_flocking",
        growth,
        0.01,
        format!("velocity convergence at t = {t_c}, diameter {base} → {peak}"),
    ))
}

/// Regular weight only: each pair's weight dominates the lower bound built
/// from its accumulated relative speed, and the running `∫ψ_min` dominates the
/// closed-form bound. Pointwise slack is `1e−12`; `tol` covers quadrature
/// error in the integral comparison.
pub fn check_weight_lower_bound(
    traj: &Trajectory,
    params: &ModelParams,
    weight: &CommWeight,
    tol: f64,
) -> Result<InvariantReport, AnalysisError> {
    require_samples(traj)?;
    let CommWeight::Regular { beta, k } = *weight else {
        return Err(AnalysisError::Precondition("needs a regular weight".into()));
    };
    if traj.running.len() != traj.samples.len() {
        return Err(AnalysisError::MissingIntegrals);
    }
    let s0 = &traj.samples[0];
    let n = s0.n_agents();
    let bad = |e: crate::weights::WeightError| AnalysisError::Precondition(e.to_string());
    let mut worst_pair = f64::NEG_INFINITY;
    for (s, run) in traj.samples.iter().zip(&traj.running) {
        for i in 0..n {
            for j in i + 1..n {
                let psi0 = weight.eval(distance(s0.position(i), s0.position(j)));
                let lb = regular_weight_lower_bound(psi0, run.pair_vel[pair_index(i, j, n)], beta, k).map_err(bad)?;
                let psi = weight.eval(distance(s.position(i), s.position(j)));
                worst_pair = worst_pair.max(lb - psi);
            }
        }
    }
    let mut worst_int = f64::NEG_INFINITY;
    if n > 1 {
        let wb = weight_bound(s0, params, weight).expect("regular weight");
        for (s, run) in traj.samples.iter().zip(&traj.running) {
            let lb = psi_min_integral_lower_bound(&wb, Horizon::Finite(s.time()), QRegime::AtLeastTwo)
                .map_err(bad)?
                .as_f64();
            worst_int = worst_int.max(lb - run.psi_min);
        }
    }
    let worst_pair = if worst_pair.is_finite() { worst_pair } else { 0.0 };
    let worst_int = if worst_int.is_finite() { worst_int } else { 0.0 };
    let holds = worst_pair <= 1e-12 && worst_int <= tol;
    Ok(InvariantReport {
        name: "weight_lower_bound".into(),
        holds,
        worst: worst_pair.max(worst_int),
        detail: format!("pointwise margin {worst_pair:.3e}, integral margin {worst_int:.3e}"),
    })
}
