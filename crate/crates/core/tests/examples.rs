use approx::assert_relative_eq;
use pflock::analysis::{
    barrett_constants_estimate, check_norm_type_flocking_condition, compute_diagnostics, norm_equivalence_constants,
};
use pflock::integrator::{clamp_to_consensus, detect_flocking_time, integrate, OutputSpec, Scheme, SimConfig};
use pflock::model::{p_laplacian, AgentEnsemble, ModelParams};
use pflock::scenarios::{adaptive_sim, build_scenario};
use pflock::weights::CommWeight;

fn tight(t_end: f64, dt_out: f64) -> SimConfig {
    SimConfig {
        t_end,
        scheme: Scheme::AdaptiveRk45 {
            rtol: 1e-12,
            atol: 1e-14,
            dt_min: 1e-14,
            dt_max: 0.1,
        },
        output: OutputSpec::uniform(t_end, dt_out),
        ..SimConfig::default()
    }
}

/// Classical RK4 on the scalar speed equation `s' = a s^{q-1} - b s^{r-1}`.
fn scalar_reference(s0: f64, a: f64, b: f64, q: f64, r: f64, t_end: f64, steps: usize) -> f64 {
    let f = |s: f64| a * s.powf(q - 1.0) - b * s.powf(r - 1.0);
    let h = t_end / steps as f64;
    let mut s = s0;
    for _ in 0..steps {
        let k1 = f(s);
        let k2 = f(s + 0.5 * h * k1);
        let k3 = f(s + 0.5 * h * k2);
        let k4 = f(s + h * k3);
        s += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    s
}

#[test]
fn single_agent_matches_scalar_reference() {
    let params = ModelParams::norm_type(1.5, 2.5, 3.5, 0.1, 0.05);
    let s = AgentEnsemble::from_rows(&[[0.0]], &[[3.0]]).unwrap();
    let traj = integrate(&s, &params, &CommWeight::Constant { c: 1.0 }, &tight(50.0, 1.0)).unwrap();
    let v50 = traj.last().velocities()[(0, 0)];
    let reference = scalar_reference(3.0, 0.1, 0.05, 2.5, 3.5, 50.0, 200_000);
    assert_relative_eq!(v50, reference, max_relative = 1e-9);
    // The linearised rate at the limit is 0.141, so t = 50 leaves about 1e-3.
    assert!((v50 - 2.0).abs() < 2e-3 && v50 > 2.0, "{v50}");
}

#[test]
fn consensus_is_preserved() {
    let params = ModelParams::norm_type(1.5, 2.5, 3.5, 0.1, 0.05);
    let s = AgentEnsemble::from_rows(&[[0.0, 0.0], [3.0, -1.0], [-2.0, 5.0]], &[[1.0, 0.5]; 3]).unwrap();
    let traj = integrate(
        &s,
        &params,
        &CommWeight::Regular { beta: 0.5, k: 1.0 },
        &tight(5.0, 0.5),
    )
    .unwrap();
    for snap in &traj.samples {
        assert_eq!(snap.velocity_diameter(), 0.0);
        let shift: Vec<f64> = (0..2)
            .map(|k| snap.positions()[(0, k)] - s.positions()[(0, k)])
            .collect();
        for i in 1..3 {
            for (k, sh) in shift.iter().enumerate() {
                let d = snap.positions()[(i, k)] - s.positions()[(i, k)];
                assert_relative_eq!(d, *sh, max_relative = 1e-12, epsilon = 1e-14);
            }
        }
    }
}

#[test]
fn symmetric_pair_converges_to_unit_limit() {
    let params = ModelParams::norm_type(1.5, 2.5, 3.5, 0.3, 0.3);
    let s = AgentEnsemble::from_rows(&[[0.0], [1.0]], &[[0.5], [1.5]]).unwrap();
    let traj = integrate(&s, &params, &CommWeight::Constant { c: 1.0 }, &tight(200.0, 1.0)).unwrap();
    for i in 0..2 {
        assert!((traj.last().velocities()[(i, 0)] - 1.0).abs() < 1e-6);
    }
}

#[test]
fn single_agent_flocks_at_zero() {
    let sc = build_scenario("single_agent", 0).unwrap();
    let traj = integrate(&sc.initial, &sc.params, &sc.weight, &tight(1.0, 0.1)).unwrap();
    assert_eq!(detect_flocking_time(&traj, 1e-9), Some(0.0));
}

#[test]
fn clamp_examples() {
    let same = AgentEnsemble::from_rows(&[[0.0], [1.0]], &[[2.0], [2.0]]).unwrap();
    assert_eq!(clamp_to_consensus(&same, 1e-9).unwrap(), same);

    let (c, delta) = (1.25, 2e-10);
    let near = AgentEnsemble::from_rows(&[[0.0], [1.0]], &[[c - delta], [c + delta]]).unwrap();
    let clamped = clamp_to_consensus(&near, 1e-9).unwrap();
    assert_eq!(clamped.velocities()[(0, 0)], c);
    assert_eq!(clamped.velocities()[(1, 0)], c);
    let lap = p_laplacian(&clamped, &CommWeight::Regular { beta: 0.5, k: 1.0 }, 1.5);
    assert!(lap.as_slice().iter().all(|&x| x == 0.0));
}

#[test]
fn barrett_estimate_is_stable_across_seeds() {
    let runs: Vec<_> = (1..=4)
        .map(|seed| barrett_constants_estimate(2.5, 2, 0.0, 100_000, seed).unwrap())
        .collect();
    for (name, vals) in [
        ("c1", runs.iter().map(|e| e.c1).collect::<Vec<_>>()),
        ("c2", runs.iter().map(|e| e.c2).collect::<Vec<_>>()),
    ] {
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(0.0, f64::max);
        assert!(lo > 0.0, "{name}: {vals:?}");
        assert!(hi / lo <= 1.1, "{name} varies by more than 10%: {vals:?}");
    }
}

#[test]
fn constant_weight_psi_min_series() {
    let params = ModelParams::norm_type(1.5, 2.5, 3.5, 0.1, 0.05);
    let s = AgentEnsemble::from_rows(&[[0.0], [4.0], [-1.0]], &[[1.0], [0.0], [3.0]]).unwrap();
    let w = CommWeight::Constant { c: 0.3 };
    let traj = integrate(&s, &params, &w, &tight(2.0, 0.25)).unwrap();
    let diag = compute_diagnostics(&traj, &w);
    assert!(diag.psi_min.iter().all(|&p| p == 0.3));
}

#[test]
fn flocking_condition_cross_checked_by_quadrature() {
    let sc = build_scenario("ex61_random20", 7).unwrap();
    let sim = adaptive_sim(100.0, 1.0);
    let traj = integrate(&sc.initial, &sc.params, &sc.weight, &sim).unwrap();
    let CommWeight::Regular { beta, k } = sc.weight else {
        panic!("ex61 uses the regular weight");
    };

    // Independent trapezoid over the output samples.
    let psi_min: Vec<f64> = traj
        .samples
        .iter()
        .map(|s| {
            let x = s.positions();
            let mut m = f64::INFINITY;
            for i in 0..x.rows() {
                for j in 0..i {
                    let d2: f64 = (0..x.cols()).map(|c| (x[(i, c)] - x[(j, c)]).powi(2)).sum();
                    m = m.min(k * (1.0 + d2).powf(-beta / 2.0));
                }
            }
            m
        })
        .collect();
    let times = traj.times();
    let trapezoid: f64 = (1..times.len())
        .map(|i| 0.5 * (times[i] - times[i - 1]) * (psi_min[i] + psi_min[i - 1]))
        .sum();
    let running = traj.running.last().unwrap().psi_min;
    assert_relative_eq!(running, trapezoid, max_relative = 1e-3);

    let (n, d) = (sc.initial.n_agents(), sc.initial.dim());
    let c_m = norm_equivalence_constants(n, d, sc.params.p, 2.0).unwrap().1;
    let report = check_norm_type_flocking_condition(&traj, &sc.params, &sc.weight, c_m).unwrap();
    let v = sc.initial.velocities();
    let spread: f64 = (0..d)
        .map(|c| {
            let col: Vec<f64> = (0..n).map(|i| v[(i, c)]).collect();
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            (hi - lo).powi(2)
        })
        .sum::<f64>()
        .sqrt();
    assert_relative_eq!(report.rhs, spread.powf(2.0 - sc.params.p), max_relative = 1e-12);
    assert!(report.satisfied);
    // The finite-horizon quadrature alone already clears the bar.
    let finite_lhs = 4.0 * c_m * (1.0 - sc.params.p / 2.0) * trapezoid;
    assert!(finite_lhs > report.rhs, "{finite_lhs} vs {}", report.rhs);
}
