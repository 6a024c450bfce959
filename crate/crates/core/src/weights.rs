//! Communication weights and the lower bounds on the smallest pairwise weight.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{distance, AgentEnsemble};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightError {
    #[error("invalid weight: {0}")]
    Invalid(String),
    #[error("invalid bound input `{name}`: {reason}")]
    InvalidBound { name: &'static str, reason: String },
}

/// Non-negative, non-increasing function of inter-agent distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CommWeight {
    /// `ψ(d) = K (1 + d²)^{−β/2}`.
    Regular {
        beta: f64,
        #[serde(default = "one", alias = "K")]
        k: f64,
    },
    Constant {
        c: f64,
    },
    /// Piecewise-linear interpolation through `(breakpoints[i], values[i])`,
    /// held constant outside the table.
    Table {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
}

fn one() -> f64 {
    1.0
}

impl CommWeight {
    pub fn regular(beta: f64) -> Self {
        CommWeight::Regular { beta, k: 1.0 }
    }

    pub fn validate(&self) -> Result<(), WeightError> {
        match self {
            CommWeight::Regular { beta, k } => {
                if !(beta.is_finite() && *beta > 0.0) {
                    return Err(WeightError::Invalid(format!("beta must be positive, got {beta}")));
                }
                if !(k.is_finite() && *k > 0.0) {
                    return Err(WeightError::Invalid(format!("K must be positive, got {k}")));
                }
            }
            CommWeight::Constant { c } => {
                if !(c.is_finite() && *c >= 0.0) {
                    return Err(WeightError::Invalid(format!(
                        "constant weight must be non-negative, got {c}"
                    )));
                }
            }
            CommWeight::Table { breakpoints, values } => {
                if breakpoints.is_empty() || breakpoints.len() != values.len() {
                    return Err(WeightError::Invalid(format!(
                        "table needs matching non-empty breakpoints and values ({} vs {})",
                        breakpoints.len(),
                        values.len()
                    )));
                }
                if breakpoints.iter().chain(values).any(|x| !x.is_finite()) {
                    return Err(WeightError::Invalid("table entries must be finite".into()));
                }
                if breakpoints[0] < 0.0 || breakpoints.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(WeightError::Invalid(
                        "breakpoints must be non-negative and strictly increasing".into(),
                    ));
                }
                if values.iter().any(|&v| v < 0.0) || values.windows(2).any(|w| w[1] > w[0]) {
                    return Err(WeightError::Invalid(
                        "table values must be non-negative and non-increasing".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn eval(&self, d: f64) -> f64 {
        match self {
            CommWeight::Regular { beta, k } => {
                let s = 1.0 + d * d;
                if *beta == 1.0 {
                    k / s.sqrt()
                } else if *beta == 0.5 {
                    k / s.sqrt().sqrt()
                } else {
                    k * s.powf(-0.5 * beta)
                }
            }
            CommWeight::Constant { c } => *c,
            CommWeight::Table { breakpoints, values } => {
                let last = breakpoints.len() - 1;
                if d <= breakpoints[0] {
                    return values[0];
                }
                if d >= breakpoints[last] {
                    return values[last];
                }
                let j = breakpoints.partition_point(|&b| b <= d);
                let (x0, x1) = (breakpoints[j - 1], breakpoints[j]);
                let t = (d - x0) / (x1 - x0);
                values[j - 1] + t * (values[j] - values[j - 1])
            }
        }
    }

    /// `sup ψ`, which is `ψ(0)` for a non-increasing weight.
    pub fn sup(&self) -> f64 {
        self.eval(0.0)
    }

    /// Smallest pairwise weight in the ensemble (`sup ψ` for a single agent).
    pub fn min_pair_weight(&self, state: &AgentEnsemble) -> f64 {
        let n = state.n_agents();
        let mut best = self.sup();
        for i in 0..n {
            for j in i + 1..n {
                best = best.min(self.eval(distance(state.position(i), state.position(j))));
            }
        }
        best
    }
}

/// `ψ(d)`.
pub fn eval_weight(weight: &CommWeight, d: f64) -> f64 {
    weight.eval(d)
}

/// Lower bound on a pair's regular weight after its relative velocity has
/// accumulated `vel_diff_integral = ∫₀ᵗ ‖v_j − v_i‖₂ ds`:
/// `K [(ψ₀/K)^{−1/β} + I]^{−β}`.
pub fn regular_weight_lower_bound(
    psi0_pair: f64,
    vel_diff_integral: f64,
    beta: f64,
    k: f64,
) -> Result<f64, WeightError> {
    if !(k.is_finite() && k > 0.0) {
        return Err(WeightError::InvalidBound {
            name: "K",
            reason: format!("must be positive, got {k}"),
        });
    }
    if !(psi0_pair > 0.0 && psi0_pair <= k * (1.0 + 1e-12)) {
        return Err(WeightError::InvalidBound {
            name: "psi0_pair",
            reason: format!("must lie in (0, {k}], got {psi0_pair}"),
        });
    }
    if !(vel_diff_integral.is_finite() && vel_diff_integral >= 0.0) {
        return Err(WeightError::InvalidBound {
            name: "vel_diff_integral",
            reason: format!("must be finite and non-negative, got {vel_diff_integral}"),
        });
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(WeightError::InvalidBound {
            name: "beta",
            reason: format!("must be positive, got {beta}"),
        });
    }
    let c = (psi0_pair / k).powf(-1.0 / beta);
    Ok(k * (c + vel_diff_integral).powf(-beta))
}

/// Data for the uniform-in-time lower bound `ψ_min(t) ≥ K [c + M t]^{−β}`,
/// `c = (ψ0_min/K)^{−1/β}`, where `M` bounds `Σ_k |v_{j,k} − v_{i,k}|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightBound {
    pub psi0_min: f64,
    pub m: f64,
    pub beta: f64,
    #[serde(default = "one")]
    pub k: f64,
}

impl WeightBound {
    pub fn new(psi0_min: f64, m: f64, beta: f64) -> Self {
        Self {
            psi0_min,
            m,
            beta,
            k: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), WeightError> {
        let bad = |name, reason| Err(WeightError::InvalidBound { name, reason });
        if !(self.k.is_finite() && self.k > 0.0) {
            return bad("K", format!("must be positive, got {}", self.k));
        }
        if !(self.psi0_min > 0.0 && self.psi0_min <= self.k * (1.0 + 1e-12)) {
            return bad(
                "psi0_min",
                format!("must lie in (0, {}], got {}", self.k, self.psi0_min),
            );
        }
        if !(self.m.is_finite() && self.m > 0.0) {
            return bad("M", format!("must be positive, got {}", self.m));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return bad("beta", format!("must be positive, got {}", self.beta));
        }
        Ok(())
    }

    fn offset(&self) -> f64 {
        (self.psi0_min / self.k).powf(-1.0 / self.beta)
    }

    /// Pointwise lower bound on `ψ_min(t)`.
    pub fn psi_min_at(&self, t: f64) -> f64 {
        self.k * (self.offset() + self.m * t).powf(-self.beta)
    }

    /// `∫₀ᵗ K [c + M s]^{−β} ds`.
    pub fn integral_to(&self, t: f64) -> f64 {
        let c = self.offset();
        let (m, beta) = (self.m, self.beta);
        if beta == 1.0 {
            self.k / m * ((c + m * t) / c).ln()
        } else {
            self.k * ((c + m * t).powf(1.0 - beta) - c.powf(1.0 - beta)) / (m * (1.0 - beta))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    Finite(f64),
    Infinite,
}

/// Selects the plain integral (`q ≥ 2`) or the integral net of a constant
/// drift rate (`1 < q < 2`), in which case the bound is a supremum over the
/// upper limit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum QRegime {
    AtLeastTwo,
    BelowTwo { drift: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegralBound {
    Finite(f64),
    Divergent,
}

impl IntegralBound {
    pub fn exceeds(&self, rhs: f64) -> bool {
        match self {
            IntegralBound::Finite(v) => *v > rhs,
            IntegralBound::Divergent => true,
        }
    }

    pub fn as_f64(&self) -> f64 {
        match self {
            IntegralBound::Finite(v) => *v,
            IntegralBound::Divergent => f64::INFINITY,
        }
    }
}

/// Lower bound on `∫₀ᵀ ψ_min(s) ds` (or on `sup_{t ≤ T} ∫₀ᵗ (ψ_min − drift) ds`).
pub fn psi_min_integral_lower_bound(
    bound: &WeightBound,
    horizon: Horizon,
    regime: QRegime,
) -> Result<IntegralBound, WeightError> {
    bound.validate()?;
    if let Horizon::Finite(t) = horizon {
        if !(t.is_finite() && t >= 0.0) {
            return Err(WeightError::InvalidBound {
                name: "horizon",
                reason: format!("must be finite and non-negative, got {t}"),
            });
        }
    }
    let drift = match regime {
        QRegime::AtLeastTwo => 0.0,
        QRegime::BelowTwo { drift } => {
            if !(drift.is_finite() && drift >= 0.0) {
                return Err(WeightError::InvalidBound {
                    name: "drift",
                    reason: format!("must be finite and non-negative, got {drift}"),
                });
            }
            drift
        }
    };
    if drift == 0.0 {
        return Ok(match horizon {
            Horizon::Finite(t) => IntegralBound::Finite(bound.integral_to(t)),
            Horizon::Infinite if bound.beta > 1.0 => IntegralBound::Finite(
                bound.k * (bound.psi0_min / bound.k).powf((bound.beta - 1.0) / bound.beta)
                    / (bound.m * (bound.beta - 1.0)),
            ),
            Horizon::Infinite => IntegralBound::Divergent,
        });
    }
    // The integrand K[c + Ms]^{−β} − drift decreases in s, so the integral
    // peaks where it crosses zero.
    let t_star = if drift >= bound.psi0_min {
        0.0
    } else {
        (((bound.k / drift).powf(1.0 / bound.beta)) - bound.offset()) / bound.m
    };
    let t = match horizon {
        Horizon::Finite(t) => t.min(t_star),
        Horizon::Infinite => t_star,
    };
    Ok(IntegralBound::Finite(bound.integral_to(t) - drift * t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn regular_weight_values() {
        let w = CommWeight::regular(0.5);
        assert_eq!(w.eval(0.0), 1.0);
        assert_relative_eq!(w.eval(1.0), 2f64.powf(-0.25), epsilon = 1e-15);
        let w = CommWeight::Regular { beta: 2.0, k: 3.0 };
        assert_relative_eq!(w.eval(2.0), 3.0 / 5.0, epsilon = 1e-15);
        let w = CommWeight::Regular { beta: 1.0, k: 1.0 };
        assert_relative_eq!(w.eval(3.0), 10f64.powf(-0.5), epsilon = 1e-15);
    }

    #[test]
    fn table_interpolation() {
        let w = CommWeight::Table {
            breakpoints: vec![1.0, 2.0, 4.0],
            values: vec![1.0, 0.5, 0.0],
        };
        w.validate().unwrap();
        assert_eq!(w.eval(0.0), 1.0);
        assert_eq!(w.eval(1.5), 0.75);
        assert_eq!(w.eval(3.0), 0.25);
        assert_eq!(w.eval(10.0), 0.0);
        assert_eq!(w.sup(), 1.0);
    }

    #[test]
    fn invalid_weights() {
        assert!(CommWeight::Regular { beta: 0.0, k: 1.0 }.validate().is_err());
        assert!(CommWeight::Constant { c: -1.0 }.validate().is_err());
        let increasing = CommWeight::Table {
            breakpoints: vec![0.0, 1.0],
            values: vec![0.5, 1.0],
        };
        assert!(increasing.validate().is_err());
    }

    #[test]
    fn pair_bound_is_exact_at_zero_integral() {
        let b = regular_weight_lower_bound(0.3, 0.0, 0.7, 1.0).unwrap();
        assert_relative_eq!(b, 0.3, epsilon = 1e-14);
        let b = regular_weight_lower_bound(1.2, 0.0, 0.7, 2.0).unwrap();
        assert_relative_eq!(b, 1.2, epsilon = 1e-14);
    }

    #[test]
    fn pair_bound_input_checks() {
        assert!(regular_weight_lower_bound(0.0, 1.0, 0.5, 1.0).is_err());
        assert!(regular_weight_lower_bound(1.5, 1.0, 0.5, 1.0).is_err());
        assert!(regular_weight_lower_bound(0.5, -1.0, 0.5, 1.0).is_err());
        assert!(regular_weight_lower_bound(0.5, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn infinite_horizon_closed_form() {
        let wb = WeightBound::new(0.5, 4.0, 2.0);
        let got = psi_min_integral_lower_bound(&wb, Horizon::Infinite, QRegime::AtLeastTwo).unwrap();
        assert_eq!(got, IntegralBound::Finite(0.5f64.sqrt() / 4.0));
        for beta in [0.3, 1.0] {
            let wb = WeightBound::new(0.5, 4.0, beta);
            assert_eq!(
                psi_min_integral_lower_bound(&wb, Horizon::Infinite, QRegime::AtLeastTwo).unwrap(),
                IntegralBound::Divergent
            );
        }
    }

    #[test]
    fn log_case_has_one_over_m() {
        let wb = WeightBound::new(0.25, 2.0, 1.0);
        let got = psi_min_integral_lower_bound(&wb, Horizon::Finite(3.0), QRegime::AtLeastTwo).unwrap();
        // c = 4, (1/M) ln((c + M t)/c) = 0.5 ln(10/4)
        assert_relative_eq!(got.as_f64(), 0.5 * 2.5f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn drift_regime_peak() {
        let wb = WeightBound::new(1.0, 1.0, 2.0);
        // ψ_min bound = (1 + t)^{-2}; with drift 1/4 it crosses at t = 1.
        let got = psi_min_integral_lower_bound(&wb, Horizon::Infinite, QRegime::BelowTwo { drift: 0.25 })
            .unwrap()
            .as_f64();
        assert_relative_eq!(got, 0.5 - 0.25, epsilon = 1e-14);
        let capped = psi_min_integral_lower_bound(&wb, Horizon::Finite(0.5), QRegime::BelowTwo { drift: 0.25 })
            .unwrap()
            .as_f64();
        assert_relative_eq!(capped, (1.0 - 1.0 / 1.5) - 0.125, epsilon = 1e-14);
        let none = psi_min_integral_lower_bound(&wb, Horizon::Infinite, QRegime::BelowTwo { drift: 2.0 })
            .unwrap()
            .as_f64();
        assert_eq!(none, 0.0);
    }

    #[test]
    fn bound_input_checks() {
        let reg = QRegime::AtLeastTwo;
        assert!(psi_min_integral_lower_bound(&WeightBound::new(0.0, 1.0, 1.0), Horizon::Infinite, reg).is_err());
        assert!(psi_min_integral_lower_bound(&WeightBound::new(0.5, 0.0, 1.0), Horizon::Infinite, reg).is_err());
        assert!(psi_min_integral_lower_bound(&WeightBound::new(0.5, 1.0, 1.0), Horizon::Finite(-1.0), reg).is_err());
    }

    #[test]
    fn min_pair_weight_picks_farthest_pair() {
        let s = AgentEnsemble::from_rows(&[[0.0], [1.0], [3.0]], &[[0.0], [0.0], [0.0]]).unwrap();
        let w = CommWeight::regular(2.0);
        assert_relative_eq!(w.min_pair_weight(&s), 0.1, epsilon = 1e-15);
    }
}
