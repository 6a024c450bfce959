use serde::{Deserialize, Serialize};

use crate::integrator::Trajectory;
use crate::model::{velocity_limit, ModelParams, Variant};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Limit {
    At(f64),
    Unresolved,
}

impl Limit {
    pub fn value(self) -> Option<f64> {
        match self {
            Limit::At(v) => Some(v),
            Limit::Unresolved => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "variant")]
pub enum TerminalBehavior {
    /// Limit of `‖v_i‖₂` per agent, one of `{0, C_ab}`.
    Norm { settled: bool, agents: Vec<Limit> },
    /// Limit of `v_{i,k}` per agent and coordinate, one of `{−C_k, 0, C_k}`.
    Vector { settled: bool, agents: Vec<Vec<Limit>> },
}

impl TerminalBehavior {
    pub fn settled(&self) -> bool {
        match self {
            TerminalBehavior::Norm { settled, .. } | TerminalBehavior::Vector { settled, .. } => *settled,
        }
    }

    pub fn all_resolved(&self) -> bool {
        match self {
            TerminalBehavior::Norm { agents, .. } => agents.iter().all(|l| l.value().is_some()),
            TerminalBehavior::Vector { agents, .. } => agents.iter().flatten().all(|l| l.value().is_some()),
        }
    }
}

fn nearest(x: f64, candidates: &[f64], tol: f64) -> Limit {
    candidates
        .iter()
        .copied()
        .min_by(|a, b| (a - x).abs().total_cmp(&(b - x).abs()))
        .filter(|c| (c - x).abs() <= tol)
        .map_or(Limit::Unresolved, Limit::At)
}

/// Assigns each agent (or agent coordinate) the admissible limit nearest its
/// final value, provided the velocity field has varied by less than `tol`
/// over the last 10% of the horizon.
pub fn classify_terminal_behavior(traj: &Trajectory, params: &ModelParams, tol: f64) -> TerminalBehavior {
    let last = traj.last();
    let t_end = last.time();
    let tail_start = traj.samples[0].time() + 0.9 * (t_end - traj.samples[0].time());
    let settled = traj
        .samples
        .iter()
        .filter(|s| s.time() >= tail_start)
        .all(|s| s.velocities().max_abs_diff(last.velocities()) < tol);
    let n = last.n_agents();
    match params.variant {
        Variant::NormType => {
            let c = velocity_limit(params, 0).value();
            let agents = (0..n)
                .map(|i| {
                    if settled {
                        nearest(last.speed(i), &[0.0, c], tol)
                    } else {
                        Limit::Unresolved
                    }
                })
                .collect();
            TerminalBehavior::Norm { settled, agents }
        }
        Variant::VectorType => {
            let agents = (0..n)
                .map(|i| {
                    (0..last.dim())
                        .map(|k| {
                            let c = velocity_limit(params, k).value();
                            if settled {
                                nearest(last.velocity(i)[k], &[-c, 0.0, c], tol)
                            } else {
                                Limit::Unresolved
                            }
                        })
                        .collect()
                })
                .collect();
            TerminalBehavior::Vector { settled, agents }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::StepStats;
    use crate::model::AgentEnsemble;

    fn steady(v: &[[f64; 2]]) -> Trajectory {
        let x = vec![[0.0, 0.0]; v.len()];
        let s0 = AgentEnsemble::from_rows(&x, v).unwrap();
        Trajectory {
            samples: vec![s0.clone(), s0.with_time(10.0)],
            running: vec![],
            events: vec![],
            stats: StepStats::default(),
        }
    }

    #[test]
    fn norm_limits() {
        let params = ModelParams::norm_type(1.5, 2.5, 3.5, 0.1, 0.05);
        let t = steady(&[[0.0, 2.0], [0.0, 0.0], [1.0, 1.0]]);
        match classify_terminal_behavior(&t, &params, 1e-3) {
            TerminalBehavior::Norm { settled, agents } => {
                assert!(settled);
                assert_eq!(agents, vec![Limit::At(2.0), Limit::At(0.0), Limit::Unresolved]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn vector_limits() {
        let params = ModelParams::vector_type(1.5, 2.5, 3.5, vec![0.1, 0.01], vec![0.05, 0.1]);
        let t = steady(&[[-2.0, 0.1], [2.0004, 0.0]]);
        let TerminalBehavior::Vector { agents, .. } = classify_terminal_behavior(&t, &params, 1e-3) else {
            panic!()
        };
        assert_eq!(agents[0][0], Limit::At(-2.0));
        assert!((agents[0][1].value().unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(agents[1], vec![Limit::At(2.0), Limit::At(0.0)]);
    }

    #[test]
    fn moving_tail_is_unresolved() {
        let params = ModelParams::norm_type(1.5, 2.5, 3.5, 0.1, 0.05);
        let a = AgentEnsemble::from_rows(&[[0.0]], &[[2.0]]).unwrap();
        let b = AgentEnsemble::from_rows(&[[0.0]], &[[2.5]]).unwrap().with_time(10.0);
        let t = Trajectory {
            samples: vec![a.clone(), a.with_time(9.5), b],
            running: vec![],
            events: vec![],
            stats: StepStats::default(),
        };
        let r = classify_terminal_behavior(&t, &params, 1e-3);
        assert!(!r.settled());
        assert!(!r.all_resolved());
    }
}
