use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::model::euclidean;

/// `(C_M, C_m)` with `C_m ‖A‖_s ≤ ‖A‖_r ≤ C_M ‖A‖_s` for `N × d` matrices
/// under the entrywise norms.
pub fn norm_equivalence_constants(n_agents: usize, dim: usize, r: f64, s: f64) -> Result<(f64, f64), AnalysisError> {
    if !(r > 1.0 && s > 1.0) || n_agents == 0 || dim == 0 {
        return Err(AnalysisError::Precondition(format!(
            "need r, s > 1 and a non-empty shape (r = {r}, s = {s}, N = {n_agents}, d = {dim})"
        )));
    }
    let f = ((n_agents * dim) as f64).powf(1.0 / r - 1.0 / s);
    Ok((f.max(1.0), f.min(1.0)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarrettEstimate {
    /// Largest sampled `‖φ(x) − φ(y)‖ / (‖x − y‖^{1−δ} (‖x‖+‖y‖)^{γ−2+δ})`.
    pub c1: f64,
    /// Smallest sampled `⟨x − y, φ(x) − φ(y)⟩ / (‖x − y‖^{2+δ} (‖x‖+‖y‖)^{γ−2−δ})`.
    pub c2: f64,
    pub pairs_used: usize,
}

fn phi(x: &[f64], gamma: f64) -> Vec<f64> {
    let n = euclidean(x);
    if n == 0.0 {
        return vec![0.0; x.len()];
    }
    let s = n.powf(gamma - 2.0);
    x.iter().map(|v| v * s).collect()
}

/// Monte Carlo estimate of the constants in the two inequalities for
/// `φ(x) = ‖x‖^{γ−2} x` on `R^dim`, from `samples` pairs drawn uniformly in
/// the unit ball. Both ratios are scale invariant, so the ball loses nothing.
pub fn barrett_constants_estimate(
    gamma: f64,
    dim: usize,
    delta: f64,
    samples: usize,
    seed: u64,
) -> Result<BarrettEstimate, AnalysisError> {
    if !(gamma > 1.0) || dim == 0 || !(delta >= 0.0) {
        return Err(AnalysisError::Precondition(format!(
            "need gamma > 1, dim >= 1, delta >= 0 (gamma = {gamma}, dim = {dim}, delta = {delta})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Uniform::new(0.0f64, 1.0).expect("valid range");
    let ball = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let g: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = euclidean(&g);
        let rad = unit.sample(rng).powf(1.0 / dim as f64);
        g.iter().map(|v| v / n * rad).collect()
    };
    let (mut c1, mut c2, mut used) = (0.0f64, f64::INFINITY, 0usize);
    for _ in 0..samples {
        let x = ball(&mut rng);
        let y = ball(&mut rng);
        let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let dn = euclidean(&diff);
        let sum = euclidean(&x) + euclidean(&y);
        if dn == 0.0 || sum == 0.0 {
            continue;
        }
        let (px, py) = (phi(&x, gamma), phi(&y, gamma));
        let dphi: Vec<f64> = px.iter().zip(&py).map(|(a, b)| a - b).collect();
        let r1 = euclidean(&dphi) / (dn.powf(1.0 - delta) * sum.powf(gamma - 2.0 + delta));
        let inner: f64 = diff.iter().zip(&dphi).map(|(a, b)| a * b).sum();
        let r2 = inner / (dn.powf(2.0 + delta) * sum.powf(gamma - 2.0 - delta));
        if r1.is_finite() && r2.is_finite() {
            c1 = c1.max(r1);
            c2 = c2.min(r2);
            used += 1;
        }
    }
    if used == 0 {
        return Err(AnalysisError::DegenerateSamples);
    }
    Ok(BarrettEstimate {
        c1,
        c2,
        pairs_used: used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn equal_exponents_give_unit_constants() {
        assert_eq!(norm_equivalence_constants(7, 3, 1.7, 1.7).unwrap(), (1.0, 1.0));
    }

    #[test]
    fn example_shape_constants() {
        let (cm_big, cm_small) = norm_equivalence_constants(20, 2, 1.5, 2.0).unwrap();
        assert_relative_eq!(cm_big, 40f64.powf(1.0 / 6.0), epsilon = 1e-14);
        assert_relative_eq!(cm_big, 1.8493, epsilon = 1e-4);
        assert_eq!(cm_small, 1.0);
        let (a, b) = norm_equivalence_constants(20, 2, 2.0, 1.5).unwrap();
        assert_eq!(a, 1.0);
        assert_relative_eq!(b, 40f64.powf(-1.0 / 6.0), epsilon = 1e-14);
    }

    #[test]
    fn identity_case_is_exact() {
        let e = barrett_constants_estimate(2.0, 3, 0.0, 2000, 1).unwrap();
        assert!(e.c1 <= 1.0 + 1e-12 && e.c1 >= 1.0 - 1e-12);
        assert!(e.c2 >= 1.0 - 1e-12 && e.c2 <= 1.0 + 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(barrett_constants_estimate(1.0, 2, 0.0, 10, 0).is_err());
        assert!(matches!(
            barrett_constants_estimate(1.5, 2, 0.0, 0, 0),
            Err(AnalysisError::DegenerateSamples)
        ));
        assert!(norm_equivalence_constants(3, 2, 1.0, 2.0).is_err());
    }
}
