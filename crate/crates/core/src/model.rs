//! State, parameters and right-hand sides of the two flocking systems.
//!
//! Both systems share the position equation `dx_i/dt = v_i` and the discrete
//! p-Laplacian coupling
//!
//! ```text
//! Δ_p v_{i,k} = Σ_j ψ(‖x_j − x_i‖₂) |v_{j,k} − v_{i,k}|^{p−2} (v_{j,k} − v_{i,k})
//! ```
//!
//! and differ in the Rayleigh-type friction:
//!
//! * norm type:   `a v_{i,k} ‖v_i‖₂^{q−2} − b v_{i,k} ‖v_i‖₂^{r−2}`
//! * vector type: `a_k φ_q(v_{i,k}) − b_k φ_r(v_{i,k})` with `φ_γ(s) = |s|^{γ−2} s`
//!
//! Matrices are row-per-agent, column-per-coordinate, so entry `(i, k)` is
//! `v_{i,k}`.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::weights::CommWeight;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{what}: expected {expected_rows}x{expected_cols}, got {rows}x{cols}")]
    Shape {
        what: &'static str,
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },
    #[error("{0} contains a non-finite entry")]
    NonFinite(&'static str),
    #[error("ensemble must have at least one agent and one coordinate")]
    Empty,
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },
    #[error("operation requires {expected} parameters, got {got}")]
    WrongVariant { expected: Variant, got: Variant },
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, ModelError> {
        if data.len() != rows * cols {
            return Err(ModelError::Shape {
                what: "matrix data",
                expected_rows: rows,
                expected_cols: cols,
                rows: data.len() / cols.max(1),
                cols,
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, ModelError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(ModelError::Shape {
                    what: "matrix row",
                    expected_rows: rows.len(),
                    expected_cols: cols,
                    rows: rows.len(),
                    cols: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn column_sum(&self, k: usize) -> f64 {
        (0..self.rows).map(|i| self[(i, k)]).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| x.abs()).fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, k): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + k]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, k): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + k]
    }
}

/// Positions and velocities of `N` agents in `d` dimensions at one instant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentEnsemble {
    positions: Matrix,
    velocities: Matrix,
    time: f64,
}

impl AgentEnsemble {
    pub fn new(positions: Matrix, velocities: Matrix, time: f64) -> Result<Self, ModelError> {
        if positions.rows() == 0 || positions.cols() == 0 {
            return Err(ModelError::Empty);
        }
        if velocities.rows() != positions.rows() || velocities.cols() != positions.cols() {
            return Err(ModelError::Shape {
                what: "velocities",
                expected_rows: positions.rows(),
                expected_cols: positions.cols(),
                rows: velocities.rows(),
                cols: velocities.cols(),
            });
        }
        if !positions.is_finite() {
            return Err(ModelError::NonFinite("positions"));
        }
        if !velocities.is_finite() {
            return Err(ModelError::NonFinite("velocities"));
        }
        if !(time.is_finite() && time >= 0.0) {
            return Err(ModelError::InvalidParam {
                name: "time",
                reason: format!("must be finite and non-negative, got {time}"),
            });
        }
        Ok(Self {
            positions,
            velocities,
            time,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(positions: &[R], velocities: &[R]) -> Result<Self, ModelError> {
        Self::new(Matrix::from_rows(positions)?, Matrix::from_rows(velocities)?, 0.0)
    }

    /// Rebuilds an ensemble from the flat integrator state `[x; v]`.
    pub(crate) fn from_flat(n: usize, d: usize, y: &[f64], time: f64) -> Self {
        let nd = n * d;
        Self {
            positions: Matrix {
                rows: n,
                cols: d,
                data: y[..nd].to_vec(),
            },
            velocities: Matrix {
                rows: n,
                cols: d,
                data: y[nd..2 * nd].to_vec(),
            },
            time,
        }
    }

    pub(crate) fn to_flat(&self) -> Vec<f64> {
        let mut y = Vec::with_capacity(2 * self.positions.data.len());
        y.extend_from_slice(self.positions.as_slice());
        y.extend_from_slice(self.velocities.as_slice());
        y
    }

    pub fn n_agents(&self) -> usize {
        self.positions.rows()
    }

    pub fn dim(&self) -> usize {
        self.positions.cols()
    }

    pub fn positions(&self) -> &Matrix {
        &self.positions
    }

    pub fn velocities(&self) -> &Matrix {
        &self.velocities
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub fn position(&self, i: usize) -> &[f64] {
        self.positions.row(i)
    }

    pub fn velocity(&self, i: usize) -> &[f64] {
        self.velocities.row(i)
    }

    pub fn speed(&self, i: usize) -> f64 {
        euclidean(self.velocity(i))
    }

    /// `max_i v_{i,k}` for each coordinate.
    pub fn velocity_max(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|k| {
                (0..self.n_agents())
                    .map(|i| self.velocities[(i, k)])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    }

    /// `min_i v_{i,k}` for each coordinate.
    pub fn velocity_min(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|k| {
                (0..self.n_agents())
                    .map(|i| self.velocities[(i, k)])
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    /// `max_{i,j} ‖v_j − v_i‖₂`.
    pub fn velocity_diameter(&self) -> f64 {
        pairwise_max(&self.velocities)
    }

    /// `max_{i,j} ‖x_j − x_i‖₂`.
    pub fn position_diameter(&self) -> f64 {
        pairwise_max(&self.positions)
    }

    /// `‖v_M − v_m‖₂` where `v_M`, `v_m` are the coordinatewise max/min vectors.
    pub fn extremal_spread(&self) -> f64 {
        let hi = self.velocity_max();
        let lo = self.velocity_min();
        hi.iter().zip(&lo).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    /// Returns the ensemble mirrored through the origin, `(x, v) -> (−x, −v)`.
    pub fn negated(&self) -> Self {
        let neg = |m: &Matrix| Matrix {
            rows: m.rows,
            cols: m.cols,
            data: m.data.iter().map(|x| -x).collect(),
        };
        Self {
            positions: neg(&self.positions),
            velocities: neg(&self.velocities),
            time: self.time,
        }
    }

    /// Reorders agents so that new agent `i` is old agent `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let pick = |m: &Matrix| {
            let mut data = Vec::with_capacity(m.data.len());
            for &j in perm {
                data.extend_from_slice(m.row(j));
            }
            Matrix {
                rows: m.rows,
                cols: m.cols,
                data,
            }
        };
        Self {
            positions: pick(&self.positions),
            velocities: pick(&self.velocities),
            time: self.time,
        }
    }

    /// Shifts every position by `shift`.
    pub fn translated(&self, shift: &[f64]) -> Self {
        let mut out = self.clone();
        for i in 0..self.n_agents() {
            for (x, s) in out.positions.row_mut(i).iter_mut().zip(shift) {
                *x += s;
            }
        }
        out
    }

    pub(crate) fn velocities_mut(&mut self) -> &mut Matrix {
        &mut self.velocities
    }
}

fn pairwise_max(m: &Matrix) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..m.rows() {
        for j in i + 1..m.rows() {
            best = best.max(distance(m.row(i), m.row(j)));
        }
    }
    best
}

pub(crate) fn euclidean(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (y - x) * (y - x)).sum::<f64>().sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Friction acting through the speed `‖v_i‖₂`.
    #[serde(alias = "norm")]
    NormType,
    /// Friction acting coordinatewise through `φ_q`, `φ_r`.
    #[serde(alias = "vector")]
    VectorType,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::NormType => f.write_str("norm-type"),
            Variant::VectorType => f.write_str("vector-type"),
        }
    }
}

/// Exponents and friction coefficients of either system.
///
/// `a` and `b` hold a single entry for the norm type and one entry per
/// coordinate for the vector type. A coordinate with `a_k = b_k = 0` has its
/// friction switched off.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub variant: Variant,
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    #[serde(default = "default_coupling_scale")]
    pub coupling_scale: f64,
}

fn default_coupling_scale() -> f64 {
    1.0
}

impl ModelParams {
    pub fn norm_type(p: f64, q: f64, r: f64, a: f64, b: f64) -> Self {
        Self {
            variant: Variant::NormType,
            p,
            q,
            r,
            a: vec![a],
            b: vec![b],
            coupling_scale: 1.0,
        }
    }

    pub fn vector_type(p: f64, q: f64, r: f64, a: Vec<f64>, b: Vec<f64>) -> Self {
        Self {
            variant: Variant::VectorType,
            p,
            q,
            r,
            a,
            b,
            coupling_scale: 1.0,
        }
    }

    pub fn with_coupling_scale(mut self, scale: f64) -> Self {
        self.coupling_scale = scale;
        self
    }

    /// Checks every parameter invariant; `dim` is checked against the
    /// coefficient vectors when given.
    pub fn validate(&self, dim: Option<usize>) -> Result<(), ModelError> {
        let bad = |name: &'static str, reason: String| Err(ModelError::InvalidParam { name, reason });
        for (name, v) in [("p", self.p), ("q", self.q), ("r", self.r)] {
            if !v.is_finite() {
                return bad(name, format!("must be finite, got {v}"));
            }
        }
        if self.p <= 1.0 {
            return bad("p", format!("must exceed 1, got {}", self.p));
        }
        if self.q <= 1.0 {
            return bad("q", format!("must exceed 1, got {}", self.q));
        }
        if self.r <= self.q {
            return bad("r", format!("r must exceed q (r = {}, q = {})", self.r, self.q));
        }
        if self.variant == Variant::NormType && self.q < 2.0 {
            return bad("q", format!("norm-type friction needs q >= 2, got {}", self.q));
        }
        if !(self.coupling_scale.is_finite() && self.coupling_scale > 0.0) {
            return bad(
                "coupling_scale",
                format!("must be positive, got {}", self.coupling_scale),
            );
        }
        if self.a.len() != self.b.len() {
            return bad(
                "b",
                format!("a has {} entries but b has {}", self.a.len(), self.b.len()),
            );
        }
        match (self.variant, dim) {
            (Variant::NormType, _) if self.a.len() != 1 => {
                return bad("a", format!("norm-type takes a single a, got {}", self.a.len()));
            }
            (Variant::VectorType, Some(d)) if self.a.len() != d => {
                return bad(
                    "a",
                    format!("vector-type needs one a_k per coordinate ({d}), got {}", self.a.len()),
                );
            }
            (Variant::VectorType, _) if self.a.is_empty() => {
                return bad("a", "vector-type needs at least one coefficient".into());
            }
            _ => {}
        }
        for (&ak, &bk) in self.a.iter().zip(&self.b) {
            let off = ak == 0.0 && bk == 0.0;
            if !off && !(ak.is_finite() && ak > 0.0) {
                return bad("a", format!("friction coefficients must be positive, got {ak}"));
            }
            if !off && !(bk.is_finite() && bk > 0.0) {
                return bad("b", format!("friction coefficients must be positive, got {bk}"));
            }
        }
        Ok(())
    }

    pub fn a_k(&self, k: usize) -> f64 {
        match self.variant {
            Variant::NormType => self.a[0],
            Variant::VectorType => self.a[k],
        }
    }

    pub fn b_k(&self, k: usize) -> f64 {
        match self.variant {
            Variant::NormType => self.b[0],
            Variant::VectorType => self.b[k],
        }
    }
}

/// Terminal speed (norm type) or terminal coordinate velocity (vector type),
/// `(a_k / b_k)^{1/(r−q)}`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct VelocityLimit(f64);

impl VelocityLimit {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Limit velocity of coordinate `k`; zero when that coordinate's friction is off.
pub fn velocity_limit(params: &ModelParams, k: usize) -> VelocityLimit {
    let (a, b) = (params.a_k(k), params.b_k(k));
    if a == 0.0 && b == 0.0 {
        return VelocityLimit(0.0);
    }
    VelocityLimit((a / b).powf(1.0 / (params.r - params.q)))
}

/// `φ_γ(s) = |s|^{γ−2} s`, defined as exactly 0 at `s = 0`.
#[inline]
pub fn signed_power(s: f64, gamma: f64) -> f64 {
    if s == 0.0 {
        0.0
    } else if gamma == 2.0 {
        s
    } else {
        abs_pow(s.abs(), gamma - 2.0) * s
    }
}

/// `x^e` for `x > 0`, using `powi`/`sqrt` when `e` is a multiple of 1/2.
#[inline]
pub(crate) fn abs_pow(x: f64, e: f64) -> f64 {
    let twice = 2.0 * e;
    if twice == twice.trunc() && twice.abs() < 64.0 {
        let whole = e.floor();
        let base = x.powi(whole as i32);
        if e == whole {
            base
        } else {
            base * x.sqrt()
        }
    } else {
        x.powf(e)
    }
}

/// Evaluates the full velocity derivative on flat buffers.
///
/// `x`, `v` and `out` are row-major `n × d`. Pairwise terms are accumulated
/// antisymmetrically so the coupling sums to zero over agents up to rounding.
pub(crate) fn accel_into(
    params: &ModelParams,
    weight: &CommWeight,
    n: usize,
    d: usize,
    x: &[f64],
    v: &[f64],
    out: &mut [f64],
) {
    coupling_into(weight, params.p, params.coupling_scale, n, d, x, v, out);
    add_friction(params, n, d, v, out);
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn coupling_into(
    weight: &CommWeight,
    p: f64,
    scale: f64,
    n: usize,
    d: usize,
    x: &[f64],
    v: &[f64],
    out: &mut [f64],
) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for i in 0..n {
        let xi = &x[i * d..(i + 1) * d];
        for j in i + 1..n {
            let w = scale * weight.eval(distance(xi, &x[j * d..(j + 1) * d]));
            if w == 0.0 {
                continue;
            }
            for k in 0..d {
                let t = w * signed_power(v[j * d + k] - v[i * d + k], p);
                out[i * d + k] += t;
                out[j * d + k] -= t;
            }
        }
    }
}

fn add_friction(params: &ModelParams, n: usize, d: usize, v: &[f64], out: &mut [f64]) {
    let (q, r) = (params.q, params.r);
    match params.variant {
        Variant::NormType => {
            let (a, b) = (params.a[0], params.b[0]);
            for i in 0..n {
                let vi = &v[i * d..(i + 1) * d];
                let speed = euclidean(vi);
                if speed == 0.0 {
                    continue;
                }
                let coef = a * abs_pow(speed, q - 2.0) - b * abs_pow(speed, r - 2.0);
                for k in 0..d {
                    out[i * d + k] += coef * vi[k];
                }
            }
        }
        Variant::VectorType => {
            for k in 0..d {
                let (a, b) = (params.a[k], params.b[k]);
                for i in 0..n {
                    let s = v[i * d + k];
                    out[i * d + k] += a * signed_power(s, q) - b * signed_power(s, r);
                }
            }
        }
    }
}

/// Discrete p-Laplacian of the velocity field, entry `(i, k)` = `Δ_p v_{i,k}`.
pub fn p_laplacian(state: &AgentEnsemble, weight: &CommWeight, p: f64) -> Matrix {
    let (n, d) = (state.n_agents(), state.dim());
    let mut out = Matrix::zeros(n, d);
    coupling_into(
        weight,
        p,
        1.0,
        n,
        d,
        state.positions.as_slice(),
        state.velocities.as_slice(),
        out.as_mut_slice(),
    );
    out
}

/// Time derivative `(dx, dv)` of either system, dispatching on the variant.
pub fn rhs(state: &AgentEnsemble, params: &ModelParams, weight: &CommWeight) -> Result<(Matrix, Matrix), ModelError> {
    params.validate(Some(state.dim()))?;
    let (n, d) = (state.n_agents(), state.dim());
    let mut dv = Matrix::zeros(n, d);
    accel_into(
        params,
        weight,
        n,
        d,
        state.positions.as_slice(),
        state.velocities.as_slice(),
        dv.as_mut_slice(),
    );
    Ok((state.velocities.clone(), dv))
}

pub fn rhs_norm_type(
    state: &AgentEnsemble,
    params: &ModelParams,
    weight: &CommWeight,
) -> Result<(Matrix, Matrix), ModelError> {
    if params.variant != Variant::NormType {
        return Err(ModelError::WrongVariant {
            expected: Variant::NormType,
            got: params.variant,
        });
    }
    rhs(state, params, weight)
}

pub fn rhs_vector_type(
    state: &AgentEnsemble,
    params: &ModelParams,
    weight: &CommWeight,
) -> Result<(Matrix, Matrix), ModelError> {
    if params.variant != Variant::VectorType {
        return Err(ModelError::WrongVariant {
            expected: Variant::VectorType,
            got: params.variant,
        });
    }
    rhs(state, params, weight)
}
