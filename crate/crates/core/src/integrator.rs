//! Time integration of either flocking system.
//!
//! Two schemes are provided: classical fixed-step RK4, and adaptive
//! Dormand–Prince 5(4) with FSAL and a PI step-size controller. Along accepted
//! steps the integrator also accumulates, by the trapezoid rule, each pair's
//! `∫‖v_j − v_i‖₂` and `∫ψ_min`, and records events refined by bisection on the
//! step's linear interpolant.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{accel_into, distance, AgentEnsemble, ModelError, ModelParams};
use crate::weights::{CommWeight, WeightError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrateError {
    #[error("step size underflow at t = {t}: proposed h = {h:e} is below dt_min")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("state became non-finite at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("invalid simulation settings: {0}")]
    Config(String),
    #[error("velocity diameter {diameter:e} is not below the consensus threshold {eps:e}")]
    AboveThreshold { diameter: f64, eps: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Weight(#[from] WeightError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scheme {
    Rk4 {
        dt: f64,
    },
    #[serde(alias = "dopri5", alias = "adaptive")]
    AdaptiveRk45 {
        rtol: f64,
        atol: f64,
        dt_min: f64,
        dt_max: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputSpec {
    /// Every `n`-th accepted step, plus the initial and final states.
    Stride(usize),
    /// Exactly these times (the step is shortened to land on each), plus `t = 0`
    /// and `t_end`.
    Times(Vec<f64>),
}

impl OutputSpec {
    /// Uniform grid `dt, 2dt, …` up to `t_end`.
    pub fn uniform(t_end: f64, dt: f64) -> Self {
        let n = (t_end / dt).round() as usize;
        OutputSpec::Times((1..=n).map(|i| t_end * i as f64 / n as f64).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub t_end: f64,
    pub scheme: Scheme,
    pub output: OutputSpec,
    #[serde(default = "default_eps")]
    pub consensus_eps: f64,
    #[serde(default = "default_true")]
    pub clamp_on_consensus: bool,
}

fn default_eps() -> f64 {
    1e-9
}

fn default_true() -> bool {
    true
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            t_end: 10.0,
            scheme: Scheme::AdaptiveRk45 {
                rtol: 1e-10,
                atol: 1e-12,
                dt_min: 1e-13,
                dt_max: 0.1,
            },
            output: OutputSpec::uniform(10.0, 0.05),
            consensus_eps: default_eps(),
            clamp_on_consensus: true,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), IntegrateError> {
        let bad = |m: String| Err(IntegrateError::Config(m));
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return bad(format!("t_end must be positive, got {}", self.t_end));
        }
        if !(self.consensus_eps.is_finite() && self.consensus_eps >= 0.0) {
            return bad(format!(
                "consensus_eps must be non-negative, got {}",
                self.consensus_eps
            ));
        }
        match &self.scheme {
            Scheme::Rk4 { dt } => {
                if !(dt.is_finite() && *dt > 0.0) {
                    return bad(format!("dt must be positive, got {dt}"));
                }
            }
            Scheme::AdaptiveRk45 {
                rtol,
                atol,
                dt_min,
                dt_max,
            } => {
                if !(*rtol >= 0.0 && *atol >= 0.0 && rtol + atol > 0.0) {
                    return bad(format!(
                        "tolerances must be non-negative and not both zero (rtol = {rtol}, atol = {atol})"
                    ));
                }
                if !(*dt_min > 0.0 && dt_max >= dt_min && dt_max.is_finite()) {
                    return bad(format!(
                        "need 0 < dt_min <= dt_max (dt_min = {dt_min}, dt_max = {dt_max})"
                    ));
                }
            }
        }
        match &self.output {
            OutputSpec::Stride(0) => return bad("output stride must be at least 1".into()),
            OutputSpec::Times(ts) => {
                if ts.iter().any(|t| !(t.is_finite() && *t >= 0.0 && *t <= self.t_end)) {
                    return bad("output times must lie in [0, t_end]".into());
                }
                if ts.windows(2).any(|w| w[1] < w[0]) {
                    return bad("output times must be non-decreasing".into());
                }
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    /// Velocity diameter fell below `consensus_eps`.
    FlockingDetected,
    /// Coordinate `k` (0-based) stopped having agents of both signs.
    CoordinateSignExit { coordinate: usize },
    /// Velocities were replaced by their mean.
    ClampApplied,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// Trapezoid-rule integrals accumulated from `t = 0` up to a sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunningIntegrals {
    /// `∫ψ_min ds`.
    pub psi_min: f64,
    /// `∫‖v_j − v_i‖₂ ds` for each pair `i < j`, ordered as [`pair_index`].
    pub pair_vel: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<AgentEnsemble>,
    /// Parallel to `samples` when produced by [`integrate`]; empty when the
    /// trajectory was imported from a format that does not carry it.
    #[serde(default)]
    pub running: Vec<RunningIntegrals>,
    pub events: Vec<Event>,
    #[serde(default)]
    pub stats: StepStats,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.time()).collect()
    }

    pub fn last(&self) -> &AgentEnsemble {
        self.samples.last().expect("trajectory has at least one sample")
    }

    pub fn first_event(&self, pred: impl Fn(&EventKind) -> bool) -> Option<&Event> {
        self.events.iter().find(|e| pred(&e.kind))
    }

    /// Time of the first [`EventKind::FlockingDetected`] event.
    pub fn flocking_event_time(&self) -> Option<f64> {
        self.first_event(|k| matches!(k, EventKind::FlockingDetected))
            .map(|e| e.time)
    }

    /// Sample nearest to `t`.
    pub fn at(&self, t: f64) -> &AgentEnsemble {
        self.samples
            .iter()
            .min_by(|a, b| (a.time() - t).abs().total_cmp(&(b.time() - t).abs()))
            .expect("trajectory has at least one sample")
    }
}

/// Position of pair `(i, j)`, `i < j`, in the flattened upper triangle.
pub fn pair_index(i: usize, j: usize, n: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

struct System<'a> {
    params: &'a ModelParams,
    weight: &'a CommWeight,
    n: usize,
    d: usize,
}

impl System<'_> {
    fn eval(&self, y: &[f64], out: &mut [f64]) {
        let nd = self.n * self.d;
        let (x, v) = y.split_at(nd);
        let (dx, dv) = out.split_at_mut(nd);
        dx.copy_from_slice(v);
        accel_into(self.params, self.weight, self.n, self.d, x, v, dv);
    }

    fn velocities<'y>(&self, y: &'y [f64]) -> &'y [f64] {
        &y[self.n * self.d..]
    }

    fn velocity_diameter(&self, v: &[f64]) -> f64 {
        let d = self.d;
        let mut best: f64 = 0.0;
        for i in 0..self.n {
            for j in i + 1..self.n {
                best = best.max(distance(&v[i * d..(i + 1) * d], &v[j * d..(j + 1) * d]));
            }
        }
        best
    }

    fn straddles(&self, v: &[f64], k: usize) -> bool {
        let (mut neg, mut pos) = (false, false);
        for i in 0..self.n {
            let s = v[i * self.d + k];
            neg |= s < 0.0;
            pos |= s > 0.0;
        }
        neg && pos
    }

    /// `(ψ_min, ‖v_j − v_i‖₂ per pair)` at state `y`.
    fn pair_data(&self, y: &[f64], pair_out: &mut [f64]) -> f64 {
        let d = self.d;
        let nd = self.n * d;
        let (x, v) = y.split_at(nd);
        let mut psi_min = self.weight.sup();
        let mut idx = 0;
        for i in 0..self.n {
            for j in i + 1..self.n {
                let w = self
                    .weight
                    .eval(distance(&x[i * d..(i + 1) * d], &x[j * d..(j + 1) * d]));
                psi_min = psi_min.min(w);
                pair_out[idx] = distance(&v[i * d..(i + 1) * d], &v[j * d..(j + 1) * d]);
                idx += 1;
            }
        }
        psi_min
    }
}

/// Replaces every velocity row with the ensemble mean velocity.
pub fn clamp_to_consensus(state: &AgentEnsemble, eps: f64) -> Result<AgentEnsemble, IntegrateError> {
    let diameter = state.velocity_diameter();
    if diameter >= eps {
        return Err(IntegrateError::AboveThreshold { diameter, eps });
    }
    let mut out = state.clone();
    let (n, d) = (state.n_agents(), state.dim());
    let mean: Vec<f64> = (0..d).map(|k| state.velocities().column_sum(k) / n as f64).collect();
    for i in 0..n {
        out.velocities_mut().row_mut(i).copy_from_slice(&mean);
    }
    Ok(out)
}

fn clamp_flat(v: &mut [f64], n: usize, d: usize) {
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for k in 0..d {
            mean[k] += v[i * d + k];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    for i in 0..n {
        v[i * d..(i + 1) * d].copy_from_slice(&mean);
    }
}

/// Earliest sample time after which the velocity diameter stays below `eps`.
pub fn detect_flocking_time(traj: &Trajectory, eps: f64) -> Option<f64> {
    let last_above = traj.samples.iter().rposition(|s| s.velocity_diameter() >= eps);
    match last_above {
        None => traj.samples.first().map(|s| s.time()),
        Some(i) if i + 1 == traj.samples.len() => None,
        Some(i) => Some(traj.samples[i + 1].time()),
    }
}

const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Fifth-order weights minus embedded fourth-order weights.
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct Recorder<'a> {
    sys: &'a System<'a>,
    cfg: &'a SimConfig,
    traj: Trajectory,
    pair_now: Vec<f64>,
    pair_prev: Vec<f64>,
    pair_int: Vec<f64>,
    psi_prev: f64,
    psi_int: f64,
    diam_prev: f64,
    straddle_prev: Vec<bool>,
    clamped: bool,
    since_output: usize,
    next_out: usize,
    out_times: Vec<f64>,
}

impl<'a> Recorder<'a> {
    fn new(sys: &'a System<'a>, cfg: &'a SimConfig, y0: &[f64]) -> Self {
        let npairs = sys.n * (sys.n - 1) / 2;
        let mut pair_prev = vec![0.0; npairs];
        let psi_prev = sys.pair_data(y0, &mut pair_prev);
        let v0 = sys.velocities(y0);
        let out_times = match &cfg.output {
            OutputSpec::Times(ts) => ts.iter().copied().filter(|&t| t > 0.0).collect(),
            OutputSpec::Stride(_) => Vec::new(),
        };
        let mut rec = Self {
            sys,
            cfg,
            traj: Trajectory {
                samples: Vec::new(),
                running: Vec::new(),
                events: Vec::new(),
                stats: StepStats::default(),
            },
            pair_now: vec![0.0; npairs],
            pair_int: vec![0.0; npairs],
            pair_prev,
            psi_prev,
            psi_int: 0.0,
            diam_prev: sys.velocity_diameter(v0),
            straddle_prev: (0..sys.d).map(|k| sys.straddles(v0, k)).collect(),
            clamped: false,
            since_output: 0,
            next_out: 0,
            out_times,
        };
        rec.push_sample(0.0, y0);
        rec
    }

    fn push_sample(&mut self, t: f64, y: &[f64]) {
        if self.traj.samples.last().is_some_and(|s| s.time() == t) {
            return;
        }
        self.traj
            .samples
            .push(AgentEnsemble::from_flat(self.sys.n, self.sys.d, y, t));
        self.traj.running.push(RunningIntegrals {
            psi_min: self.psi_int,
            pair_vel: self.pair_int.clone(),
        });
    }

    /// Next time the step must land on exactly.
    fn next_stop(&self) -> f64 {
        self.out_times
            .get(self.next_out)
            .copied()
            .unwrap_or(self.cfg.t_end)
            .min(self.cfg.t_end)
    }

    /// Processes an accepted step from `(t0, y0)` to `(t1, y1)`. May clamp `y1`
    /// in place; returns whether it did.
    fn accept(&mut self, t0: f64, y0: &[f64], t1: f64, y1: &mut [f64]) -> bool {
        let sys = self.sys;
        let h = t1 - t0;
        self.traj.stats.accepted += 1;
        let v0 = sys.velocities(y0).to_vec();

        for k in 0..sys.d {
            let now = sys.straddles(sys.velocities(y1), k);
            if self.straddle_prev[k] && !now {
                let v1 = sys.velocities(y1);
                let th = bisect(|th| {
                    let v = lerp(&v0, v1, th);
                    !sys.straddles(&v, k)
                });
                self.traj.events.push(Event {
                    time: t0 + th * h,
                    kind: EventKind::CoordinateSignExit { coordinate: k },
                });
            }
            self.straddle_prev[k] = now;
        }

        let mut clamped_now = false;
        let diam = sys.velocity_diameter(sys.velocities(y1));
        if !self.clamped && self.diam_prev >= self.cfg.consensus_eps && diam < self.cfg.consensus_eps {
            let v1 = sys.velocities(y1).to_vec();
            let eps = self.cfg.consensus_eps;
            let th = bisect(|th| sys.velocity_diameter(&lerp(&v0, &v1, th)) < eps);
            self.traj.events.push(Event {
                time: t0 + th * h,
                kind: EventKind::FlockingDetected,
            });
            if self.cfg.clamp_on_consensus {
                let nd = sys.n * sys.d;
                clamp_flat(&mut y1[nd..], sys.n, sys.d);
                self.clamped = true;
                clamped_now = true;
                self.traj.events.push(Event {
                    time: t1,
                    kind: EventKind::ClampApplied,
                });
            }
        }
        self.diam_prev = if clamped_now { 0.0 } else { diam };

        let psi_now = sys.pair_data(y1, &mut self.pair_now);
        self.psi_int += 0.5 * h * (self.psi_prev + psi_now);
        for ((acc, a), b) in self.pair_int.iter_mut().zip(&self.pair_prev).zip(&self.pair_now) {
            *acc += 0.5 * h * (a + b);
        }
        std::mem::swap(&mut self.pair_prev, &mut self.pair_now);
        self.psi_prev = psi_now;

        let at_end = t1 >= self.cfg.t_end;
        match self.cfg.output {
            OutputSpec::Stride(n) => {
                self.since_output += 1;
                if self.since_output >= n || at_end {
                    self.since_output = 0;
                    self.push_sample(t1, y1);
                }
            }
            OutputSpec::Times(_) => {
                while self.next_out < self.out_times.len() && self.out_times[self.next_out] <= t1 {
                    self.next_out += 1;
                    self.push_sample(t1, y1);
                }
                if at_end {
                    self.push_sample(t1, y1);
                }
            }
        }
        clamped_now
    }
}

fn lerp(a: &[f64], b: &[f64], th: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + th * (y - x)).collect()
}

/// Smallest `θ ∈ (0, 1]` (to within 1e−3) at which `pred` turns true, given
/// `pred(0) = false` and `pred(1) = true`.
fn bisect(pred: impl Fn(f64) -> bool) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > 1e-3 {
        let mid = 0.5 * (lo + hi);
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Integrates `initial` from its own time to `cfg.t_end`.
pub fn integrate(
    initial: &AgentEnsemble,
    params: &ModelParams,
    weight: &CommWeight,
    cfg: &SimConfig,
) -> Result<Trajectory, IntegrateError> {
    params.validate(Some(initial.dim()))?;
    weight.validate()?;
    cfg.validate()?;
    if initial.time() != 0.0 {
        return Err(IntegrateError::Config(format!(
            "initial state must be at t = 0, got {}",
            initial.time()
        )));
    }
    let sys = System {
        params,
        weight,
        n: initial.n_agents(),
        d: initial.dim(),
    };
    let y0 = initial.to_flat();
    match cfg.scheme {
        Scheme::Rk4 { dt } => run_rk4(&sys, cfg, y0, dt),
        Scheme::AdaptiveRk45 {
            rtol,
            atol,
            dt_min,
            dt_max,
        } => run_dopri(&sys, cfg, y0, rtol, atol, dt_min, dt_max),
    }
}

fn run_rk4(sys: &System, cfg: &SimConfig, mut y: Vec<f64>, dt: f64) -> Result<Trajectory, IntegrateError> {
    let len = y.len();
    let mut rec = Recorder::new(sys, cfg, &y);
    let mut k = vec![vec![0.0; len]; 4];
    let mut tmp = vec![0.0; len];
    let mut t = 0.0;
    let mut steps_done: u64 = 0;
    while t < cfg.t_end {
        let stop = rec.next_stop();
        // Nominal grid t = n·dt, shortened only to land on an output time.
        let nominal = (steps_done + 1) as f64 * dt;
        let mut t1 = nominal.min(stop);
        if stop - t1 < 1e-9 * dt {
            t1 = stop;
        }
        let h = t1 - t;
        sys.eval(&y, &mut k[0]);
        for (stage, c) in [(1, 0.5), (2, 0.5), (3, 1.0)] {
            for i in 0..len {
                tmp[i] = y[i] + c * h * k[stage - 1][i];
            }
            sys.eval(&tmp, &mut k[stage]);
        }
        let mut y1: Vec<f64> = (0..len)
            .map(|i| y[i] + h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]))
            .collect();
        if y1.iter().any(|x| !x.is_finite()) {
            return Err(IntegrateError::NonFiniteState { t: t1 });
        }
        rec.accept(t, &y, t1, &mut y1);
        if t1 >= nominal - 1e-12 * dt {
            steps_done += 1;
        }
        t = t1;
        y = y1;
    }
    Ok(rec.traj)
}

#[allow(clippy::too_many_arguments)]
fn run_dopri(
    sys: &System,
    cfg: &SimConfig,
    mut y: Vec<f64>,
    rtol: f64,
    atol: f64,
    dt_min: f64,
    dt_max: f64,
) -> Result<Trajectory, IntegrateError> {
    const SAFETY: f64 = 0.9;
    const ALPHA: f64 = 0.7 / 5.0;
    const BETA: f64 = 0.4 / 5.0;
    const FAC_MIN: f64 = 0.2;
    const FAC_MAX: f64 = 5.0;

    let len = y.len();
    let mut rec = Recorder::new(sys, cfg, &y);
    let mut k = vec![vec![0.0; len]; 7];
    let mut stage = vec![0.0; len];
    let mut y_new = vec![0.0; len];
    sys.eval(&y, &mut k[0]);

    let scale = |y0: &[f64], y1: &[f64], i: usize| atol + rtol * y0[i].abs().max(y1[i].abs());
    let mut h = {
        let d0 = rms(y.iter().enumerate().map(|(i, v)| v / scale(&y, &y, i)));
        let d1 = rms(k[0].iter().enumerate().map(|(i, v)| v / scale(&y, &y, i)));
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0.clamp(dt_min, dt_max)
    };
    let mut err_prev: f64 = 1e-4;
    let mut t = 0.0;

    while t < cfg.t_end {
        let stop = rec.next_stop();
        let mut step = h.min(dt_max);
        let mut landing = false;
        if t + step >= stop - 1e-12 * stop.abs().max(1.0) {
            step = stop - t;
            landing = true;
        }

        for s in 1..7 {
            for i in 0..len {
                let mut acc = 0.0;
                for (j, a) in DP_A[s][..s].iter().enumerate() {
                    acc += a * k[j][i];
                }
                stage[i] = y[i] + step * acc;
            }
            sys.eval(&stage, &mut k[s]);
        }
        // stage now holds the fifth-order solution (row 7 equals b).
        y_new.copy_from_slice(&stage);

        let mut err: f64 = 0.0;
        #[allow(clippy::needless_range_loop)]
        for i in 0..len {
            let mut e = 0.0;
            for (j, c) in DP_E.iter().enumerate() {
                e += c * k[j][i];
            }
            err = err.max((step * e).abs() / scale(&y, &y_new, i));
        }
        if !err.is_finite() || y_new.iter().any(|x| !x.is_finite()) {
            if step <= dt_min {
                return Err(IntegrateError::NonFiniteState { t });
            }
            rec.traj.stats.rejected += 1;
            h = (step * FAC_MIN).max(dt_min);
            continue;
        }

        if err <= 1.0 {
            let t1 = if landing { stop } else { t + step };
            let clamped = rec.accept(t, &y, t1, &mut y_new);
            std::mem::swap(&mut y, &mut y_new);
            if clamped {
                sys.eval(&y, &mut k[0]);
            } else {
                k.swap(0, 6);
            }
            let err_c = err.max(1e-10);
            let fac = (SAFETY * err_c.powf(-ALPHA) * err_prev.powf(BETA)).clamp(FAC_MIN, FAC_MAX);
            err_prev = err.max(1e-4);
            // A landing step was shortened artificially; don't let it shrink h.
            h = if landing { h.max(step * fac) } else { step * fac };
            t = t1;
        } else {
            rec.traj.stats.rejected += 1;
            h = step * (SAFETY * err.powf(-0.2)).max(FAC_MIN);
            if h < dt_min {
                return Err(IntegrateError::StepSizeUnderflow { t, h });
            }
        }
    }
    Ok(rec.traj)
}

fn rms(it: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for x in it {
        s += x * x;
        n += 1;
    }
    (s / n.max(1) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn single(v: f64) -> AgentEnsemble {
        AgentEnsemble::from_rows(&[[0.0]], &[[v]]).unwrap()
    }

    fn adaptive(t_end: f64, rtol: f64) -> SimConfig {
        SimConfig {
            t_end,
            scheme: Scheme::AdaptiveRk45 {
                rtol,
                atol: rtol * 1e-2,
                dt_min: 1e-14,
                dt_max: 0.5,
            },
            output: OutputSpec::uniform(t_end, 0.5),
            consensus_eps: 1e-9,
            clamp_on_consensus: true,
        }
    }

    #[test]
    fn pair_index_is_dense() {
        let n = 5;
        let mut seen = vec![];
        for i in 0..n {
            for j in i + 1..n {
                seen.push(pair_index(i, j, n));
            }
        }
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn linear_friction_matches_exponential() {
        // q = 2, r = 4: v' = a v − b v³, logistic in v²: v² = 1/(b/a + (1/v0² − b/a) e^{−2at})
        let params = ModelParams::norm_type(2.0, 2.0, 4.0, 0.3, 0.3);
        let w = CommWeight::Constant { c: 0.0 };
        let traj = integrate(&single(0.2), &params, &w, &adaptive(6.0, 1e-11)).unwrap();
        for s in &traj.samples {
            let t = s.time();
            let exact = 1.0 / (1.0 + (1.0 / 0.04 - 1.0) * (-0.6 * t).exp());
            assert_relative_eq!(s.velocity(0)[0], exact.sqrt(), epsilon = 1e-9);
        }
        assert!(traj.samples.iter().any(|s| s.time() == 6.0));
    }

    #[test]
    fn rk4_hits_output_times() {
        let params = ModelParams::norm_type(2.0, 2.0, 4.0, 0.3, 0.3);
        let cfg = SimConfig {
            t_end: 1.0,
            scheme: Scheme::Rk4 { dt: 0.03 },
            output: OutputSpec::Times(vec![0.25, 0.5]),
            ..SimConfig::default()
        };
        let traj = integrate(&single(0.5), &params, &CommWeight::Constant { c: 0.0 }, &cfg).unwrap();
        assert_eq!(traj.times(), vec![0.0, 0.25, 0.5, 1.0]);
    }

    #[test]
    fn stride_output_keeps_ends() {
        let params = ModelParams::norm_type(2.0, 2.0, 4.0, 0.3, 0.3);
        let cfg = SimConfig {
            t_end: 1.0,
            scheme: Scheme::Rk4 { dt: 0.1 },
            output: OutputSpec::Stride(3),
            ..SimConfig::default()
        };
        let traj = integrate(&single(0.5), &params, &CommWeight::Constant { c: 0.0 }, &cfg).unwrap();
        let ts = traj.times();
        assert_eq!(ts.len(), 5);
        assert_eq!(ts[0], 0.0);
        assert_relative_eq!(*ts.last().unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn two_agents_reach_consensus_and_clamp() {
        let params = ModelParams::norm_type(1.5, 2.0, 4.0, 0.1, 0.1);
        let s = AgentEnsemble::from_rows(&[[0.0], [0.5]], &[[0.6], [0.9]]).unwrap();
        let traj = integrate(&s, &params, &CommWeight::Constant { c: 1.0 }, &adaptive(5.0, 1e-10)).unwrap();
        let tf = traj.flocking_event_time().expect("flocks");
        // Δ' = −2 Δ^{1/2} (friction differences are second order): Δ^{1/2} hits 0 near t = √0.3
        assert!(tf > 0.3 && tf < 0.8, "tf = {tf}");
        assert!(traj.events.iter().any(|e| matches!(e.kind, EventKind::ClampApplied)));
        for s in traj.samples.iter().filter(|s| s.time() > tf + 0.01) {
            assert_eq!(s.velocity(0), s.velocity(1));
        }
        let det = detect_flocking_time(&traj, 1e-9).unwrap();
        assert!(det >= tf && det <= tf + 0.5 + 1e-12);
    }

    #[test]
    fn sign_exit_event() {
        // Two agents of opposite sign are pulled onto the same side.
        let params = ModelParams::vector_type(1.5, 2.5, 3.5, vec![0.1], vec![0.05]);
        let s = AgentEnsemble::from_rows(&[[0.0], [1.0]], &[[3.0], [-0.5]]).unwrap();
        let traj = integrate(&s, &params, &CommWeight::Constant { c: 1.0 }, &adaptive(5.0, 1e-10)).unwrap();
        let ev = traj
            .first_event(|k| matches!(k, EventKind::CoordinateSignExit { coordinate: 0 }))
            .expect("sign exit");
        assert!(ev.time > 0.0 && ev.time < 5.0);
        let after = traj.samples.iter().find(|s| s.time() > ev.time + 0.01).unwrap();
        assert!(after.velocities().as_slice().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn clamp_rejects_spread_state() {
        let s = AgentEnsemble::from_rows(&[[0.0], [0.0]], &[[0.0], [1.0]]).unwrap();
        assert!(matches!(
            clamp_to_consensus(&s, 1e-3),
            Err(IntegrateError::AboveThreshold { .. })
        ));
        let s = AgentEnsemble::from_rows(&[[0.0], [0.0]], &[[1.0], [1.0 + 1e-12]]).unwrap();
        let c = clamp_to_consensus(&s, 1e-9).unwrap();
        assert_eq!(c.velocity(0), c.velocity(1));
    }

    #[test]
    fn negative_friction_is_rejected() {
        let mut params = ModelParams::norm_type(2.0, 2.0, 4.0, 1.0, 1.0);
        params.b = vec![-1.0];
        assert!(integrate(
            &single(1.0),
            &params,
            &CommWeight::Constant { c: 0.0 },
            &adaptive(1.0, 1e-8)
        )
        .is_err());
    }

    #[test]
    fn underflow_is_reported() {
        let params = ModelParams::norm_type(2.0, 2.0, 4.0, 0.3, 0.3);
        let cfg = SimConfig {
            t_end: 1.0,
            scheme: Scheme::AdaptiveRk45 {
                rtol: 1e-16,
                atol: 0.0,
                dt_min: 0.1,
                dt_max: 0.2,
            },
            output: OutputSpec::Stride(1),
            ..SimConfig::default()
        };
        let err = integrate(&single(3.0), &params, &CommWeight::Constant { c: 0.0 }, &cfg).unwrap_err();
        assert!(matches!(err, IntegrateError::StepSizeUnderflow { .. }), "{err}");
    }

    #[test]
    fn config_validation() {
        let cfg = SimConfig {
            t_end: -1.0,
            ..SimConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = SimConfig {
            output: OutputSpec::Stride(0),
            ..SimConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn running_integrals_for_constant_state() {
        // With friction off and equal velocities nothing changes: ∫ψ_min = ψ·t.
        let params = ModelParams::norm_type(1.5, 2.0, 3.0, 0.0, 0.0);
        let s = AgentEnsemble::from_rows(&[[0.0, 0.0], [3.0, 4.0]], &[[0.0, 0.0], [0.0, 0.0]]).unwrap();
        let w = CommWeight::regular(1.0);
        let traj = integrate(&s, &params, &w, &adaptive(2.0, 1e-9)).unwrap();
        let last = traj.running.last().unwrap();
        assert_relative_eq!(last.psi_min, 2.0 / 26f64.sqrt(), epsilon = 1e-12);
        assert_eq!(last.pair_vel, vec![0.0]);
        assert_eq!(traj.samples.len(), traj.running.len());
    }
}
