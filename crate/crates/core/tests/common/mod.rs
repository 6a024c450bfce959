#![allow(dead_code)]

use pflock::analysis::{check_uniform_bounds, check_weight_lower_bound, norm_equivalence_constants};
use pflock::integrator::{integrate, OutputSpec, Scheme, SimConfig};
use pflock::model::{p_laplacian, rhs, AgentEnsemble, Matrix, ModelParams};
use pflock::weights::CommWeight;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

/// Deterministic runner so failures reproduce and nothing is persisted.
pub fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

pub fn ensemble(max_n: usize, max_d: usize, vmax: f64) -> impl Strategy<Value = AgentEnsemble> {
    (1..=max_n, 1..=max_d).prop_flat_map(move |(n, d)| {
        (
            prop::collection::vec(-5.0..5.0f64, n * d),
            prop::collection::vec(-vmax..vmax, n * d),
        )
            .prop_map(move |(x, v)| {
                AgentEnsemble::new(
                    Matrix::from_vec(n, d, x).unwrap(),
                    Matrix::from_vec(n, d, v).unwrap(),
                    0.0,
                )
                .unwrap()
            })
    })
}

pub fn weight() -> impl Strategy<Value = CommWeight> {
    prop_oneof![
        (0.2..2.5f64, 0.5..2.0f64).prop_map(|(beta, k)| CommWeight::Regular { beta, k }),
        (0.1..2.0f64).prop_map(|c| CommWeight::Constant { c }),
    ]
}

pub fn regular_weight() -> impl Strategy<Value = CommWeight> {
    (0.2..2.5f64, 0.5..2.0f64).prop_map(|(beta, k)| CommWeight::Regular { beta, k })
}

/// Parameters of either variant sized for `dim` coordinates, with p drawn from `p_range`.
pub fn params_in(dim: usize, p_range: std::ops::Range<f64>) -> impl Strategy<Value = ModelParams> {
    let norm = (p_range.clone(), 2.0..3.5f64, 0.2..2.0f64, 0.01..0.5f64, 0.01..0.5f64)
        .prop_map(|(p, q, dr, a, b)| ModelParams::norm_type(p, q, q + dr, a, b));
    let vector = (
        p_range,
        1.2..3.5f64,
        0.2..2.0f64,
        prop::collection::vec(0.01..0.5f64, dim),
        prop::collection::vec(0.01..0.5f64, dim),
    )
        .prop_map(|(p, q, dr, a, b)| ModelParams::vector_type(p, q, q + dr, a, b));
    prop_oneof![norm, vector]
}

pub fn params(dim: usize) -> impl Strategy<Value = ModelParams> {
    params_in(dim, 1.1..3.0)
}

/// For p near 1 partial synchronisation makes the flow non-Lipschitz and
/// adaptive stepping crawls, so trajectory properties use p >= 1.5.
pub fn trajectory_instance(
    max_n: usize,
    max_d: usize,
) -> impl Strategy<Value = (AgentEnsemble, ModelParams, CommWeight)> {
    ensemble(max_n, max_d, 3.0).prop_flat_map(|s| {
        let d = s.dim();
        (Just(s), params_in(d, 1.5..3.0), weight())
    })
}

pub fn instance(max_n: usize, max_d: usize) -> impl Strategy<Value = (AgentEnsemble, ModelParams, CommWeight)> {
    ensemble(max_n, max_d, 3.0).prop_flat_map(|s| {
        let d = s.dim();
        (Just(s), params(d), weight())
    })
}

pub fn short_sim(t_end: f64) -> SimConfig {
    SimConfig {
        t_end,
        scheme: Scheme::AdaptiveRk45 {
            rtol: 1e-8,
            atol: 1e-10,
            dt_min: 1e-13,
            dt_max: 0.1,
        },
        output: OutputSpec::uniform(t_end, 0.05),
        ..SimConfig::default()
    }
}

fn close(a: &Matrix, b: &Matrix, tol: f64) -> Result<(), TestCaseError> {
    let scale = 1.0 + a.max_abs().max(b.max_abs());
    let diff = a.max_abs_diff(b);
    prop_assert!(diff <= tol * scale, "difference {diff:e} exceeds {tol:e} x {scale}");
    Ok(())
}

pub fn prop_column_sums(cases: u32) -> Result<(), String> {
    runner(cases)
        .run(&(ensemble(6, 3, 3.0), weight(), 1.05..4.0f64), |(s, w, p)| {
            let lap = p_laplacian(&s, &w, p);
            for k in 0..s.dim() {
                let sum = lap.column_sum(k);
                prop_assert!(sum.abs() <= 1e-12, "column {k} sums to {sum:e}");
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn prop_permutation(cases: u32) -> Result<(), String> {
    let strat = instance(6, 3).prop_flat_map(|(s, p, w)| {
        let n = s.n_agents();
        (
            Just(s),
            Just(p),
            Just(w),
            Just((0..n).collect::<Vec<_>>()).prop_shuffle(),
        )
    });
    runner(cases)
        .run(&strat, |(s, p, w, perm)| {
            let (dx, dv) = rhs(&s, &p, &w).unwrap();
            let (px, pv) = rhs(&s.permuted(&perm), &p, &w).unwrap();
            let permute =
                |m: &Matrix| Matrix::from_rows(&perm.iter().map(|&i| m.row(i).to_vec()).collect::<Vec<_>>()).unwrap();
            close(&px, &permute(&dx), 1e-12)?;
            close(&pv, &permute(&dv), 1e-12)
        })
        .map_err(|e| e.to_string())
}

pub fn prop_translation(cases: u32) -> Result<(), String> {
    let strat = instance(6, 3).prop_flat_map(|(s, p, w)| {
        let d = s.dim();
        (Just(s), Just(p), Just(w), prop::collection::vec(-20.0..20.0f64, d))
    });
    runner(cases)
        .run(&strat, |(s, p, w, shift)| {
            let (_, dv) = rhs(&s, &p, &w).unwrap();
            let (_, tv) = rhs(&s.translated(&shift), &p, &w).unwrap();
            // Distances change in the last few bits under translation.
            close(&tv, &dv, 1e-10)
        })
        .map_err(|e| e.to_string())
}

pub fn prop_odd_symmetry(cases: u32) -> Result<(), String> {
    runner(cases)
        .run(&instance(6, 3), |(s, p, w)| {
            let (dx, dv) = rhs(&s, &p, &w).unwrap();
            let (nx, nv) = rhs(&s.negated(), &p, &w).unwrap();
            let neg =
                |m: &Matrix| Matrix::from_vec(m.rows(), m.cols(), m.as_slice().iter().map(|x| -x).collect()).unwrap();
            close(&nx, &neg(&dx), 1e-12)?;
            close(&nv, &neg(&dv), 1e-12)
        })
        .map_err(|e| e.to_string())
}

pub fn prop_uniform_bounds(cases: u32) -> Result<(), String> {
    runner(cases)
        .run(&trajectory_instance(6, 3), |(s, p, w)| {
            let traj = integrate(&s, &p, &w, &short_sim(2.0)).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let r = check_uniform_bounds(&traj, &p, 1e-6).unwrap();
            prop_assert!(r.holds, "{r:?}");
            Ok(())
        })
        .map_err(|e| e.to_string())
}

fn entrywise_norm(m: &[f64], r: f64) -> f64 {
    m.iter().map(|x| x.abs().powf(r)).sum::<f64>().powf(1.0 / r)
}

/// Each case draws 50 matrices, so 200 cases cover 10⁴ matrices.
pub fn prop_norm_sandwich(cases: u32) -> Result<(), String> {
    let strat = (1usize..=5, 1usize..=5, 1.01..6.0f64, 1.01..6.0f64).prop_flat_map(|(n, d, r, s)| {
        (
            Just((n, d, r, s)),
            prop::collection::vec(prop::collection::vec(-10.0..10.0f64, n * d), 50),
        )
    });
    runner(cases)
        .run(&strat, |((n, d, r, s), mats)| {
            let (cm_big, cm_small) = norm_equivalence_constants(n, d, r, s).unwrap();
            for m in &mats {
                let (nr, ns) = (entrywise_norm(m, r), entrywise_norm(m, s));
                let slack = 1e-12 * (1.0 + nr);
                prop_assert!(cm_small * ns <= nr + slack, "lower: {cm_small} * {ns} > {nr}");
                prop_assert!(nr <= cm_big * ns + slack, "upper: {nr} > {cm_big} * {ns}");
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn prop_weight_lower_bound(cases: u32) -> Result<(), String> {
    let strat = ensemble(6, 3, 3.0).prop_flat_map(|s| {
        let d = s.dim();
        (Just(s), params_in(d, 1.5..3.0), regular_weight())
    });
    runner(cases)
        .run(&strat, |(s, p, w)| {
            let traj = integrate(&s, &p, &w, &short_sim(3.0)).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let r = check_weight_lower_bound(&traj, &p, &w, 1e-6).unwrap();
            prop_assert!(r.holds, "{r:?}");
            Ok(())
        })
        .map_err(|e| e.to_string())
}
