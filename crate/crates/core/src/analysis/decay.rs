use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::integrator::Trajectory;
use crate::model::{euclidean, velocity_limit, AgentEnsemble, ModelParams, Variant};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayKind {
    /// `‖v_M(t)‖₂² − C²` from above (norm type, non-negative data).
    NormMax,
    /// `C² − ‖v_m(t)‖₂²` from below (norm type, non-negative data).
    NormMin,
    /// `|v_{M,k}(t) − C_k|` from above (vector type).
    VecMax,
    /// `|v_{m,k}(t) − C_k|` from below, `0 < v_{m,k} < C_k` (vector type).
    VecMin,
}

impl DecayKind {
    pub const ALL: [DecayKind; 4] = [
        DecayKind::NormMax,
        DecayKind::NormMin,
        DecayKind::VecMax,
        DecayKind::VecMin,
    ];

    pub fn variant(self) -> Variant {
        match self {
            DecayKind::NormMax | DecayKind::NormMin => Variant::NormType,
            DecayKind::VecMax | DecayKind::VecMin => Variant::VectorType,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub kind: DecayKind,
    pub coordinate: Option<usize>,
    /// Sample time actually used as `T` (first sample at or after the request).
    pub t_start: f64,
    /// Exponential rate of the bound.
    pub rate: f64,
    pub xi: f64,
    /// `max_t (observed − bound)`; non-positive certifies the estimate.
    pub max_violation: f64,
    pub samples_checked: usize,
}

fn norm_of_max(s: &AgentEnsemble) -> f64 {
    euclidean(&s.velocity_max())
}

fn norm_of_min(s: &AgentEnsemble) -> f64 {
    euclidean(&s.velocity_min())
}

fn in_regime(s: &AgentEnsemble, which: DecayKind, k: usize, c: f64) -> bool {
    match which {
        DecayKind::NormMax => norm_of_max(s) >= c,
        DecayKind::NormMin => norm_of_min(s) <= c,
        DecayKind::VecMax => s.velocity_max()[k] >= c,
        DecayKind::VecMin => {
            let v = s.velocity_min()[k];
            0.0 < v && v <= c
        }
    }
}

/// Earliest sample time from which the regime of `which` holds at every
/// later sample, if the final sample is in it at all.
pub fn regime_entry_time(traj: &Trajectory, params: &ModelParams, k: usize, which: DecayKind) -> Option<f64> {
    let c = velocity_limit(params, k).value();
    let mut entry = None;
    for s in traj.samples.iter().rev() {
        if !in_regime(s, which, k, c) {
            break;
        }
        entry = Some(s.time());
    }
    entry
}

/// Checks one of the exponential decay estimates on `[T, t_end]` along the
/// sampled trajectory.
pub fn verify_decay_estimate(
    traj: &Trajectory,
    params: &ModelParams,
    k: usize,
    which: DecayKind,
    t_start: f64,
) -> Result<DecayReport, AnalysisError> {
    if traj.samples.is_empty() {
        return Err(AnalysisError::EmptyTrajectory);
    }
    if params.variant != which.variant() {
        return Err(AnalysisError::Precondition(format!(
            "{which:?} needs {} parameters",
            which.variant()
        )));
    }
    let first = &traj.samples[0];
    if k >= first.dim() {
        return Err(AnalysisError::Precondition(format!("coordinate {k} out of range")));
    }
    let start = traj
        .samples
        .iter()
        .position(|s| s.time() >= t_start)
        .ok_or_else(|| AnalysisError::RegimeNotEntered(format!("no sample at or after T = {t_start}")))?;
    let window = &traj.samples[start..];
    let t0 = window[0].time();
    let (q, r) = (params.q, params.r);
    let c = velocity_limit(params, k).value();
    let b = params.b_k(k);

    if matches!(which, DecayKind::NormMax | DecayKind::NormMin) {
        let v0 = first.velocities().as_slice();
        if v0.iter().any(|&v| v < 0.0) || v0.iter().all(|&v| v == 0.0) {
            return Err(AnalysisError::Precondition(
                "norm-type estimates need non-negative, non-zero initial velocities".into(),
            ));
        }
    }

    if !window.iter().all(|s| in_regime(s, which, k, c)) {
        return Err(AnalysisError::RegimeNotEntered(format!(
            "{which:?} regime fails somewhere on [{t0}, t_end]"
        )));
    }

    // (observed(t), bound(t)) for each sample in the window.
    let (rate, xi, series): (f64, f64, Vec<(f64, f64)>) = match which {
        DecayKind::NormMax => {
            let n_t = norm_of_max(&window[0]);
            let e = r - q - 2.0;
            let xi = if e >= 0.0 { c.powf(e) } else { n_t.powf(e) };
            let rate = b * xi * c.powf(q) * (r - q);
            let d0 = n_t * n_t - c * c;
            let ser = window
                .iter()
                .map(|s| {
                    let n = norm_of_max(s);
                    (n * n - c * c, d0 * (-rate * (s.time() - t0)).exp())
                })
                .collect();
            (rate, xi, ser)
        }
        DecayKind::NormMin => {
            let n_t = norm_of_min(&window[0]);
            let e = r - q - 2.0;
            let xi = if e >= 0.0 { n_t.powf(e) } else { c.powf(e) };
            let rate = b * xi * n_t.powf(q) * (r - q);
            let d0 = c * c - n_t * n_t;
            let ser = window
                .iter()
                .map(|s| {
                    let n = norm_of_min(s);
                    (c * c - n * n, d0 * (-rate * (s.time() - t0)).exp())
                })
                .collect();
            (rate, xi, ser)
        }
        DecayKind::VecMax => {
            let v_t = window[0].velocity_max()[k];
            let e = r - q - 1.0;
            let xi = if e >= 0.0 { c.powf(e) } else { v_t.powf(e) };
            let rate = b * (r - q) * c.powf(q - 1.0) * xi;
            let d0 = (v_t - c).abs();
            let ser = window
                .iter()
                .map(|s| ((s.velocity_max()[k] - c).abs(), d0 * (-rate * (s.time() - t0)).exp()))
                .collect();
            (rate, xi, ser)
        }
        DecayKind::VecMin => {
            let v_t = window[0].velocity_min()[k];
            let e = r - q - 1.0;
            let xi = if e >= 0.0 { v_t.powf(e) } else { c.powf(e) };
            let rate = b * (r - q) * v_t.powf(q - 1.0) * xi;
            let d0 = (v_t - c).abs();
            let ser = window
                .iter()
                .map(|s| ((s.velocity_min()[k] - c).abs(), d0 * (-rate * (s.time() - t0)).exp()))
                .collect();
            (rate, xi, ser)
        }
    };
    let max_violation = series
        .iter()
        .map(|(obs, bound)| obs - bound)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(DecayReport {
        kind: which,
        coordinate: matches!(which, DecayKind::VecMax | DecayKind::VecMin).then_some(k),
        t_start: t0,
        rate,
        xi,
        max_violation,
        samples_checked: series.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{integrate, OutputSpec, Scheme, SimConfig};
    use crate::weights::CommWeight;

    fn single(v: f64, params: &ModelParams) -> Trajectory {
        let s = AgentEnsemble::from_rows(&[[0.0]], &[[v]]).unwrap();
        let cfg = SimConfig {
            t_end: 30.0,
            scheme: Scheme::AdaptiveRk45 {
                rtol: 1e-12,
                atol: 1e-14,
                dt_min: 1e-14,
                dt_max: 0.2,
            },
            output: OutputSpec::uniform(30.0, 0.25),
            ..SimConfig::default()
        };
        integrate(&s, params, &CommWeight::Constant { c: 1.0 }, &cfg).unwrap()
    }

    #[test]
    fn vector_max_single_agent() {
        let params = ModelParams::vector_type(1.5, 2.5, 3.5, vec![0.1], vec![0.05]);
        let traj = single(3.0, &params);
        let rep = verify_decay_estimate(&traj, &params, 0, DecayKind::VecMax, 0.0).unwrap();
        assert_eq!(rep.xi, 1.0);
        assert!(rep.max_violation <= 1e-6, "{rep:?}");
    }

    #[test]
    fn vector_min_single_agent() {
        let params = ModelParams::vector_type(1.5, 2.5, 3.5, vec![0.1], vec![0.05]);
        let traj = single(1.0, &params);
        let rep = verify_decay_estimate(&traj, &params, 0, DecayKind::VecMin, 0.0).unwrap();
        assert_eq!(rep.xi, 1.0);
        assert!(rep.max_violation <= 1e-6, "{rep:?}");
    }

    #[test]
    fn boundary_start_is_trivial() {
        let params = ModelParams::vector_type(1.5, 2.5, 3.5, vec![0.1], vec![0.05]);
        let traj = single(2.0, &params);
        let rep = verify_decay_estimate(&traj, &params, 0, DecayKind::VecMax, 0.0).unwrap();
        assert!(rep.max_violation.abs() < 1e-12, "{rep:?}");
        assert!(matches!(
            verify_decay_estimate(&single(2.5, &params), &params, 0, DecayKind::VecMin, 0.0),
            Err(AnalysisError::RegimeNotEntered(_))
        ));
    }

    #[test]
    fn norm_estimates_single_agent() {
        let params = ModelParams::norm_type(1.5, 2.5, 3.5, 0.1, 0.05);
        let above = single(3.0, &params);
        let rep = verify_decay_estimate(&above, &params, 0, DecayKind::NormMax, 0.0).unwrap();
        assert!(rep.max_violation <= 1e-6, "{rep:?}");
        let below = single(1.0, &params);
        let rep = verify_decay_estimate(&below, &params, 0, DecayKind::NormMin, 0.0).unwrap();
        assert!(rep.max_violation <= 1e-6, "{rep:?}");
        assert!(verify_decay_estimate(&below, &params, 0, DecayKind::NormMax, 0.0).is_err());
    }

    #[test]
    fn wrong_variant_rejected() {
        let params = ModelParams::norm_type(1.5, 2.5, 3.5, 0.1, 0.05);
        let traj = single(3.0, &params);
        assert!(matches!(
            verify_decay_estimate(&traj, &params, 0, DecayKind::VecMax, 0.0),
            Err(AnalysisError::Precondition(_))
        ));
    }
}
