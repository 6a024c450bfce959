use serde::{Deserialize, Serialize};

use crate::integrator::Trajectory;
use crate::weights::CommWeight;

/// Per-sample summary series of a trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticSeries {
    pub times: Vec<f64>,
    /// `v_M(t)`: coordinatewise maximum over agents.
    pub v_max: Vec<Vec<f64>>,
    /// `v_m(t)`: coordinatewise minimum over agents.
    pub v_min: Vec<Vec<f64>>,
    /// `‖v_i(t)‖₂` for each agent.
    pub speed_norms: Vec<Vec<f64>>,
    /// `‖v_M(t) − v_m(t)‖₂`.
    pub vel_diameter_2: Vec<f64>,
    /// `max_{i,j} ‖x_j − x_i‖₂`.
    pub pos_diameter: Vec<f64>,
    /// `min_{i≠j} ψ(‖x_j − x_i‖₂)`.
    pub psi_min: Vec<f64>,
}

impl DiagnosticSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `‖v(t)‖₂ = (Σ_i ‖v_i‖₂²)^{1/2}` over the whole ensemble.
    pub fn total_speed(&self) -> Vec<f64> {
        self.speed_norms
            .iter()
            .map(|s| s.iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect()
    }

    /// Trapezoid integral of `psi_min` over the output samples.
    pub fn psi_min_integral(&self) -> f64 {
        self.times
            .windows(2)
            .zip(self.psi_min.windows(2))
            .map(|(t, p)| 0.5 * (t[1] - t[0]) * (p[0] + p[1]))
            .sum()
    }
}

pub fn compute_diagnostics(traj: &Trajectory, weight: &CommWeight) -> DiagnosticSeries {
    let n = traj.samples.len();
    let mut out = DiagnosticSeries {
        times: Vec::with_capacity(n),
        v_max: Vec::with_capacity(n),
        v_min: Vec::with_capacity(n),
        speed_norms: Vec::with_capacity(n),
        vel_diameter_2: Vec::with_capacity(n),
        pos_diameter: Vec::with_capacity(n),
        psi_min: Vec::with_capacity(n),
    };
    for s in &traj.samples {
        out.times.push(s.time());
        out.v_max.push(s.velocity_max());
        out.v_min.push(s.velocity_min());
        out.speed_norms.push((0..s.n_agents()).map(|i| s.speed(i)).collect());
        out.vel_diameter_2.push(s.extremal_spread());
        out.pos_diameter.push(s.position_diameter());
        out.psi_min.push(weight.min_pair_weight(s));
    }
    out
}
