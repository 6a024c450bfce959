//! Browser bindings for the flocking engine. Each operation is a plain Rust
//! function returning a JSON string, wrapped for wasm-bindgen below.

use pflock::analysis::compute_diagnostics;
use pflock::integrator::{detect_flocking_time, integrate, OutputSpec, Scheme};
use pflock::model::{rhs, velocity_limit, AgentEnsemble, ModelParams, Variant};
use pflock::scenarios::build_scenario;
use pflock::weights::{psi_min_integral_lower_bound, Horizon, IntegralBound, QRegime, WeightBound};
use pflock::CommWeight;
use serde::Serialize;
use wasm_bindgen::prelude::*;

const MAX_POINTS: usize = 2000;

#[derive(Serialize)]
struct SimulationView {
    scenario: String,
    variant: Variant,
    times: Vec<f64>,
    /// `speeds[i][s]` is `‖v_i‖₂` at sample `s`.
    speeds: Vec<Vec<f64>>,
    /// `velocities[s][i]` is agent `i`'s velocity at sample `s`.
    velocities: Vec<Vec<Vec<f64>>>,
    positions: Vec<Vec<Vec<f64>>>,
    vel_diameter: Vec<f64>,
    limits: Vec<f64>,
    flocking_time: Option<f64>,
    steps: usize,
}

fn check_points(points: usize) -> Result<(), String> {
    if (2..=MAX_POINTS).contains(&points) {
        Ok(())
    } else {
        Err(format!("points must be in [2, {MAX_POINTS}], got {points}"))
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

fn rows(m: &pflock::model::Matrix) -> Vec<Vec<f64>> {
    m.to_rows()
}

/// Runs a preset up to `t_end` and returns speeds, velocities and positions on
/// `points` evenly spaced samples.
pub fn simulate_scenario(name: &str, seed: u64, t_end: f64, points: usize) -> Result<String, String> {
    check_points(points)?;
    if !(t_end.is_finite() && t_end > 0.0 && t_end <= 200.0) {
        return Err(format!("t_end must be in (0, 200], got {t_end}"));
    }
    let sc = build_scenario(name, seed).map_err(|e| e.to_string())?;
    let mut sim = sc.sim.clone();
    sim.t_end = t_end;
    sim.output = OutputSpec::uniform(t_end, t_end / (points - 1) as f64);
    // Looser than the reference tolerances; plenty for plotting.
    sim.scheme = Scheme::AdaptiveRk45 {
        rtol: 1e-8,
        atol: 1e-10,
        dt_min: 1e-13,
        dt_max: 0.1,
    };
    let traj = integrate(&sc.initial, &sc.params, &sc.weight, &sim).map_err(|e| e.to_string())?;
    let diag = compute_diagnostics(&traj, &sc.weight);
    let n = sc.initial.n_agents();
    let speeds = (0..n)
        .map(|i| diag.speed_norms.iter().map(|s| s[i]).collect())
        .collect();
    let limits = (0..sc.initial.dim())
        .map(|k| velocity_limit(&sc.params, k).value())
        .collect();
    let view = SimulationView {
        scenario: sc.name.clone(),
        variant: sc.params.variant,
        times: diag.times.clone(),
        speeds,
        velocities: traj.samples.iter().map(|s| rows(s.velocities())).collect(),
        positions: traj.samples.iter().map(|s| rows(s.positions())).collect(),
        vel_diameter: diag.vel_diameter_2.clone(),
        limits,
        flocking_time: traj
            .flocking_event_time()
            .or_else(|| detect_flocking_time(&traj, sim.consensus_eps)),
        steps: traj.stats.accepted,
    };
    to_json(&view)
}

#[derive(Serialize)]
struct WeightBoundView {
    t: Vec<f64>,
    psi_min_bound: Vec<f64>,
    integral_bound: Vec<f64>,
    /// `null` when the integral over `[0, ∞)` diverges.
    infinite_horizon: Option<f64>,
}

/// Lower bound on the minimum pair weight and on its running integral for a
/// regular weight `K(1 + d²)^{−β/2}`.
pub fn weight_bound_curves(
    beta: f64,
    k: f64,
    psi0_min: f64,
    m: f64,
    t_max: f64,
    points: usize,
) -> Result<String, String> {
    check_points(points)?;
    if !(t_max.is_finite() && t_max > 0.0) {
        return Err(format!("t_max must be positive, got {t_max}"));
    }
    let bound = WeightBound { psi0_min, m, beta, k };
    bound.validate().map_err(|e| e.to_string())?;
    let t: Vec<f64> = (0..points).map(|i| t_max * i as f64 / (points - 1) as f64).collect();
    let infinite =
        psi_min_integral_lower_bound(&bound, Horizon::Infinite, QRegime::AtLeastTwo).map_err(|e| e.to_string())?;
    let view = WeightBoundView {
        psi_min_bound: t.iter().map(|&s| bound.psi_min_at(s)).collect(),
        integral_bound: t.iter().map(|&s| bound.integral_to(s)).collect(),
        infinite_horizon: match infinite {
            IntegralBound::Finite(v) => Some(v),
            IntegralBound::Divergent => None,
        },
        t,
    };
    to_json(&view)
}

#[derive(Serialize)]
struct FrictionView {
    speed: Vec<f64>,
    /// Rate of change of a lone agent's speed.
    acceleration: Vec<f64>,
    limit: f64,
}

/// Friction acting on a single agent, `a s^{q−1} − b s^{r−1}`, over `[0, s_max]`.
pub fn friction_curve(a: f64, b: f64, q: f64, r: f64, s_max: f64, points: usize) -> Result<String, String> {
    check_points(points)?;
    if !(s_max.is_finite() && s_max > 0.0) {
        return Err(format!("s_max must be positive, got {s_max}"));
    }
    // p does not matter for a lone agent.
    let params = ModelParams::norm_type(1.5, q, r, a, b);
    params.validate(Some(1)).map_err(|e| e.to_string())?;
    let weight = CommWeight::Constant { c: 1.0 };
    let speed: Vec<f64> = (0..points).map(|i| s_max * i as f64 / (points - 1) as f64).collect();
    let acceleration = speed
        .iter()
        .map(|&s| {
            let state = AgentEnsemble::from_rows(&[[0.0]], &[[s]]).map_err(|e| e.to_string())?;
            let (_, dv) = rhs(&state, &params, &weight).map_err(|e| e.to_string())?;
            Ok(dv[(0, 0)])
        })
        .collect::<Result<Vec<f64>, String>>()?;
    to_json(&FrictionView {
        speed,
        acceleration,
        limit: velocity_limit(&params, 0).value(),
    })
}

#[wasm_bindgen(js_name = simulateScenario)]
pub fn simulate_scenario_js(name: &str, seed: u32, t_end: f64, points: usize) -> Result<String, JsError> {
    simulate_scenario(name, seed.into(), t_end, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = weightBoundCurves)]
pub fn weight_bound_curves_js(
    beta: f64,
    k: f64,
    psi0_min: f64,
    m: f64,
    t_max: f64,
    points: usize,
) -> Result<String, JsError> {
    weight_bound_curves(beta, k, psi0_min, m, t_max, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = frictionCurve)]
pub fn friction_curve_js(a: f64, b: f64, q: f64, r: f64, s_max: f64, points: usize) -> Result<String, JsError> {
    friction_curve(a, b, q, r, s_max, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = scenarioNames)]
pub fn scenario_names() -> Vec<String> {
    pflock::scenarios::SCENARIO_NAMES
        .iter()
        .map(|s| s.to_string())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn parse(s: &str) -> Value {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn simulation_view_shapes() {
        let v = parse(&simulate_scenario("ex61_symmetric4", 0, 2.0, 41).unwrap());
        assert_eq!(v["times"].as_array().unwrap().len(), 41);
        assert_eq!(v["speeds"].as_array().unwrap().len(), 4);
        assert_eq!(v["positions"][0].as_array().unwrap().len(), 4);
        assert_eq!(v["limits"][0].as_f64().unwrap(), 2.0);
        assert_eq!(v["variant"], "norm_type");
    }

    #[test]
    fn single_agent_speed_moves_toward_limit() {
        let v = parse(&simulate_scenario("single_agent", 0, 20.0, 21).unwrap());
        let sp: Vec<f64> = v["speeds"][0]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap())
            .collect();
        assert_eq!(sp[0], 3.0);
        assert!(sp.windows(2).all(|w| w[1] < w[0] && w[1] > 2.0));
        assert_eq!(v["flocking_time"].as_f64(), Some(0.0));
    }

    #[test]
    fn bad_inputs_are_reported() {
        assert!(simulate_scenario("nope", 0, 1.0, 10).is_err());
        assert!(simulate_scenario("single_agent", 0, -1.0, 10).is_err());
        assert!(simulate_scenario("single_agent", 0, 1.0, 1).is_err());
        assert!(weight_bound_curves(0.5, 1.0, 2.0, 1.0, 1.0, 10).is_err());
        assert!(friction_curve(0.1, 0.05, 3.0, 2.0, 4.0, 10).is_err());
    }

    #[test]
    fn weight_bounds_match_closed_forms() {
        let v = parse(&weight_bound_curves(2.0, 1.0, 1.0, 4.0, 10.0, 11).unwrap());
        assert!((v["infinite_horizon"].as_f64().unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(v["psi_min_bound"][0].as_f64().unwrap(), 1.0);
        assert_eq!(v["integral_bound"][0].as_f64().unwrap(), 0.0);
        let v = parse(&weight_bound_curves(0.5, 1.0, 1.0, 4.0, 10.0, 11).unwrap());
        assert!(v["infinite_horizon"].is_null());
    }

    #[test]
    fn friction_vanishes_at_the_limit() {
        let v = parse(&friction_curve(0.1, 0.05, 2.5, 3.5, 4.0, 5).unwrap());
        let acc: Vec<f64> = v["acceleration"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap())
            .collect();
        assert_eq!(v["limit"].as_f64().unwrap(), 2.0);
        assert_eq!(acc[0], 0.0);
        assert!(acc[1] > 0.0);
        assert!(acc[2].abs() < 1e-15);
        assert!(acc[3] < 0.0);
        assert!((acc[3] - (0.1 * 3f64.powf(1.5) - 0.05 * 3f64.powf(2.5))).abs() < 1e-12);
    }
}
