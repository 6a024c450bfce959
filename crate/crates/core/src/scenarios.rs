//! Seedable presets: the two numerical examples and the degenerate cases.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::{OutputSpec, Scheme, SimConfig};
use crate::model::{AgentEnsemble, Matrix, ModelError, ModelParams};
use crate::weights::CommWeight;

/// Name of the uniform sampler: ChaCha8 seeded from a `u64`, 53-bit mantissa
/// `u = (next_u64 >> 11)·2⁻⁵³`, all positions row-major then all velocities.
pub const PRNG_ALGORITHM: &str = "chacha8-u53-v1";

pub const SCENARIO_NAMES: [&str; 8] = [
    "ex61_random20",
    "ex61_symmetric4",
    "ex61_modified4",
    "ex62_random20",
    "ex62_capped",
    "single_agent",
    "consensus_start",
    "uncoupled",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("unknown scenario `{0}` (known: {list})", list = SCENARIO_NAMES.join(", "))]
    Unknown(String),
    #[error("invalid initial data: {0}")]
    Initial(#[from] ModelError),
    #[error("invalid generator: {0}")]
    Generator(String),
}

/// Caps one velocity coordinate from above after sampling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocityCap {
    /// 0-based coordinate index.
    pub coordinate: usize,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialSpec {
    Explicit {
        positions: Vec<Vec<f64>>,
        velocities: Vec<Vec<f64>>,
    },
    /// Positions and velocities i.i.d. uniform on `[low, high]`.
    Uniform {
        n_agents: usize,
        dim: usize,
        low: f64,
        high: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cap: Option<VelocityCap>,
    },
}

impl InitialSpec {
    pub fn realize(&self, seed: u64) -> Result<AgentEnsemble, ScenarioError> {
        match self {
            InitialSpec::Explicit { positions, velocities } => Ok(AgentEnsemble::new(
                Matrix::from_rows(positions)?,
                Matrix::from_rows(velocities)?,
                0.0,
            )?),
            InitialSpec::Uniform {
                n_agents,
                dim,
                low,
                high,
                cap,
            } => {
                if *n_agents == 0 || *dim == 0 {
                    return Err(ScenarioError::Generator("need n_agents, dim >= 1".into()));
                }
                if !(low.is_finite() && high.is_finite() && low <= high) {
                    return Err(ScenarioError::Generator(format!(
                        "need finite low <= high, got [{low}, {high}]"
                    )));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut draw = |len: usize| -> Vec<f64> {
                    (0..len)
                        .map(|_| {
                            let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
                            low + (high - low) * u
                        })
                        .collect()
                };
                let nd = n_agents * dim;
                let x = draw(nd);
                let mut v = draw(nd);
                if let Some(cap) = cap {
                    if cap.coordinate >= *dim {
                        return Err(ScenarioError::Generator(format!(
                            "cap coordinate {} out of range for dim {dim}",
                            cap.coordinate
                        )));
                    }
                    for i in 0..*n_agents {
                        let e = &mut v[i * dim + cap.coordinate];
                        *e = e.min(cap.max);
                    }
                }
                Ok(AgentEnsemble::new(
                    Matrix::from_vec(*n_agents, *dim, x)?,
                    Matrix::from_vec(*n_agents, *dim, v)?,
                    0.0,
                )?)
            }
        }
    }
}

/// A check the scenario is expected to pass, with the value it should produce.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Expectation {
    pub check: String,
    pub value: f64,
    pub tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub prng: String,
    pub params: ModelParams,
    pub weight: CommWeight,
    pub initial_spec: InitialSpec,
    pub initial: AgentEnsemble,
    pub sim: SimConfig,
    pub expected: Vec<Expectation>,
    /// Check identifiers evaluated by default for this scenario.
    pub checks: Vec<String>,
    pub notes: Vec<String>,
}

/// Fine output grid over `[0, 10]` (or `t_end` if shorter), coarser beyond.
pub fn output_grid(t_end: f64) -> OutputSpec {
    let fine_end = t_end.min(10.0);
    let OutputSpec::Times(mut ts) = OutputSpec::uniform(fine_end, 0.05) else {
        unreachable!()
    };
    let mut t = 10.0;
    while t + 1.0 <= t_end + 1e-9 {
        t += 1.0;
        ts.push(t.min(t_end));
    }
    if ts.last().is_none_or(|&l| l < t_end) {
        ts.push(t_end);
    }
    OutputSpec::Times(ts)
}

pub fn adaptive_sim(t_end: f64, dt_max: f64) -> SimConfig {
    SimConfig {
        t_end,
        scheme: Scheme::AdaptiveRk45 {
            rtol: 1e-10,
            atol: 1e-12,
            dt_min: 1e-13,
            dt_max,
        },
        output: output_grid(t_end),
        consensus_eps: 1e-9,
        clamp_on_consensus: true,
    }
}

fn ex61_params() -> ModelParams {
    ModelParams::norm_type(1.5, 2.5, 3.5, 0.1, 0.05)
}

fn ex62_params() -> ModelParams {
    ModelParams::vector_type(1.5, 2.5, 3.5, vec![0.1, 0.01], vec![0.05, 0.1])
}

fn exp(check: &str, value: f64, tol: f64) -> Expectation {
    Expectation {
        check: check.into(),
        value,
        tol,
    }
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

const RANDOM20: InitialSpec = InitialSpec::Uniform {
    n_agents: 20,
    dim: 2,
    low: -10.0,
    high: 10.0,
    cap: None,
};

/// Long horizon for the vector-type examples: the second coordinate relaxes
/// to its limit at rate ≈ 3e−3.
pub const EX62_T_END: f64 = 5000.0;

pub fn build_scenario(name: &str, seed: u64) -> Result<Scenario, ScenarioError> {
    let norm_checks = ["norm_flocking", "weight_lower_bound", "flocking_time", "uniform_bounds"];
    let vec_checks = [
        "vector_fet",
        "uniform_bounds",
        "trichotomy",
        "weight_lower_bound",
        "flocking_time",
        "limit_bracketing",
        "exterior_decay",
    ];
    let sym4_x = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0], vec![0.0, -1.0]];
    let sym4_v = vec![vec![-1.0, 0.0], vec![0.0, -1.0], vec![1.0, 0.0], vec![0.0, 1.0]];

    let (params, weight, initial_spec, sim, expected, checks, notes) = match name {
        "ex61_random20" => (
            ex61_params(),
            CommWeight::regular(0.5),
            RANDOM20,
            adaptive_sim(10.0, 0.1),
            vec![exp("terminal_speed", 2.0, 1e-3), exp("flocking_time", 1.0, 2.0)],
            strings(&norm_checks),
            vec![],
        ),
        "ex61_symmetric4" => (
            ex61_params(),
            CommWeight::regular(0.5),
            InitialSpec::Explicit {
                positions: sym4_x,
                velocities: sym4_v,
            },
            adaptive_sim(10.0, 0.1),
            vec![exp("terminal_speed", 0.0, 1e-3)],
            strings(&["uniform_bounds", "terminal_limits", "weight_lower_bound"]),
            vec!["origin-antisymmetric data: the velocities decay to zero and the mean stays at zero".into()],
        ),
        "ex61_modified4" => (
            ex61_params(),
            CommWeight::regular(0.5),
            InitialSpec::Explicit {
                positions: sym4_x,
                velocities: vec![sym4_v[0].clone(), sym4_v[1].clone(), sym4_v[2].clone(), vec![0.0, -0.1]],
            },
            adaptive_sim(10.0, 0.1),
            vec![exp("terminal_speed", 2.0, 1e-3), exp("velocity_diameter", 0.0, 1e-6)],
            strings(&["norm_flocking", "uniform_bounds", "weight_lower_bound", "flocking_time"]),
            vec![],
        ),
        "ex62_random20" => (
            ex62_params(),
            CommWeight::regular(0.5),
            RANDOM20,
            adaptive_sim(EX62_T_END, 1.0),
            vec![
                exp("terminal_velocity_1", 2.0, 1e-3),
                exp("terminal_velocity_2", 0.1, 1e-3),
                exp("flocking_time", 1.0, 2.0),
            ],
            strings(&vec_checks),
            vec![],
        ),
        "ex62_capped" => (
            ex62_params(),
            CommWeight::regular(0.5),
            InitialSpec::Uniform {
                n_agents: 20,
                dim: 2,
                low: -10.0,
                high: 10.0,
                cap: Some(VelocityCap {
                    coordinate: 1,
                    max: 0.5,
                }),
            },
            adaptive_sim(EX62_T_END, 1.0),
            vec![],
            strings(&["vector_fet", "uniform_bounds", "trichotomy", "terminal_limits", "flocking_time"]),
            vec![format!(
                "a published limit of -0.5 for this configuration matches none of the admissible limits {{-2, 0, 2}} x {{-0.1, 0, 0.1}} computed from a = (0.1, 0.01), b = (0.05, 0.1), r - q = 1; the observed limit is reported instead"
            )],
        ),
        "single_agent" => (
            ex61_params(),
            CommWeight::regular(0.5),
            InitialSpec::Explicit {
                positions: vec![vec![0.0, 0.0]],
                velocities: vec![vec![3.0, 0.0]],
            },
            adaptive_sim(50.0, 0.5),
            vec![exp("flocking_time", 0.0, 0.0)],
            strings(&["uniform_bounds", "flocking_time"]),
            vec![],
        ),
        "consensus_start" => (
            ex61_params(),
            CommWeight::regular(0.5),
            InitialSpec::Explicit {
                positions: vec![vec![0.0, 0.0], vec![3.0, -1.0], vec![-2.0, 4.0], vec![5.0, 5.0], vec![-4.0, -3.0]],
                velocities: vec![vec![1.0, 0.5]; 5],
            },
            adaptive_sim(10.0, 0.1),
            vec![exp("velocity_diameter", 0.0, 0.0), exp("flocking_time", 0.0, 0.0)],
            strings(&["norm_flocking", "uniform_bounds", "flocking_time"]),
            vec![],
        ),
        "uncoupled" => (
            ModelParams::vector_type(1.5, 2.5, 3.5, vec![0.1], vec![0.05]),
            CommWeight::Constant { c: 0.0 },
            InitialSpec::Explicit {
                positions: vec![vec![0.0], vec![1.0]],
                velocities: vec![vec![3.0], vec![-1.0]],
            },
            adaptive_sim(100.0, 0.5),
            vec![],
            strings(&["uniform_bounds", "trichotomy", "exterior_decay"]),
            vec!["zero coupling: each agent relaxes to its own signed limit and no flocking occurs".into()],
        ),
        other => return Err(ScenarioError::Unknown(other.to_string())),
    };
    let initial = initial_spec.realize(seed)?;
    Ok(Scenario {
        name: name.to_string(),
        seed,
        prng: PRNG_ALGORITHM.to_string(),
        params,
        weight,
        initial_spec,
        initial,
        sim,
        expected,
        checks,
        notes,
    })
}
