//! Diagnostics and executable forms of the bounds, conditions and decay
//! estimates for both systems.

mod conditions;
mod decay;
mod diagnostics;
mod invariants;
mod norms;
mod terminal;

pub use conditions::{
    check_norm_type_flocking_condition, check_norm_type_weighted_condition, check_positive_convergence_condition,
    check_regular_weight_hypothesis, check_vector_type_fet_condition, ConditionReport, HypothesisForm, IntegralSource,
    Relation,
};
pub use decay::{regime_entry_time, verify_decay_estimate, DecayKind, DecayReport};
pub use diagnostics::{compute_diagnostics, DiagnosticSeries};
pub use invariants::{
    check_asymptotic_flocking, check_exterior_decay, check_limit_bracketing, check_norm_invariant_sets,
    check_positivity, check_trichotomy, check_uniform_bounds, check_weight_lower_bound, InvariantReport, Regime,
};
pub use norms::{barrett_constants_estimate, norm_equivalence_constants, BarrettEstimate};
pub use terminal::{classify_terminal_behavior, Limit, TerminalBehavior};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{velocity_limit, AgentEnsemble, ModelParams, Variant};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("regime not entered: {0}")]
    RegimeNotEntered(String),
    #[error("every sampled pair was degenerate")]
    DegenerateSamples,
    #[error("trajectory has no samples")]
    EmptyTrajectory,
    #[error("trajectory carries no running integrals (re-run it rather than importing it)")]
    MissingIntegrals,
}

/// Per-coordinate bounds `B_{m,k} ≤ v_{i,k}(t) ≤ B_{M,k}` valid for all `t ≥ 0`.
///
/// Vector type: `B_{m,k} = min{v_{m,k}(0), −C_k}`, `B_{M,k} = max{v_{M,k}(0), C_k}`.
/// Norm type: `±max{C_ab, max_{i,k}|v_{i,k}(0)|}` in every coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl UniformBounds {
    pub fn from_initial(initial: &AgentEnsemble, params: &ModelParams) -> Self {
        let d = initial.dim();
        match params.variant {
            Variant::VectorType => {
                let vmin = initial.velocity_min();
                let vmax = initial.velocity_max();
                let lower = (0..d)
                    .map(|k| vmin[k].min(-velocity_limit(params, k).value()))
                    .collect();
                let upper = (0..d).map(|k| vmax[k].max(velocity_limit(params, k).value())).collect();
                Self { lower, upper }
            }
            Variant::NormType => {
                let b = norm_type_bound(initial, params);
                Self {
                    lower: vec![-b; d],
                    upper: vec![b; d],
                }
            }
        }
    }

    /// `B_k = B_{M,k} − B_{m,k} = |B_{m,k}| + |B_{M,k}|`.
    pub fn widths(&self) -> Vec<f64> {
        self.upper.iter().zip(&self.lower).map(|(u, l)| u - l).collect()
    }
}

/// `max{C_ab, max_{i,k}|v_{i,k}(0)|}`, a bound on every `|v_{i,k}(t)|` for the
/// norm type.
pub fn norm_type_bound(initial: &AgentEnsemble, params: &ModelParams) -> f64 {
    velocity_limit(params, 0).value().max(initial.velocities().max_abs())
}

/// Uniform bound `M ≥ ‖v_j(t) − v_i(t)‖₂` used by the weight lower bounds.
///
/// Vector type: `2 Σ_k B_k`. Norm type: `2√d · max{C_ab, max|v_{i,k}(0)|}`.
pub fn velocity_difference_bound(initial: &AgentEnsemble, params: &ModelParams) -> f64 {
    match params.variant {
        Variant::VectorType => {
            2.0 * UniformBounds::from_initial(initial, params)
                .widths()
                .iter()
                .sum::<f64>()
        }
        Variant::NormType => 2.0 * (initial.dim() as f64).sqrt() * norm_type_bound(initial, params),
    }
}

fn require_sub_quadratic_p(params: &ModelParams) -> Result<(), AnalysisError> {
    if !(params.p > 1.0 && params.p < 2.0) {
        return Err(AnalysisError::Precondition(format!(
            "finite-time conditions need 1 < p < 2, got p = {}",
            params.p
        )));
    }
    Ok(())
}
