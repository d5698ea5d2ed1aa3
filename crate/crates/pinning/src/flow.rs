//! Trajectory integration, limit-cycle detection and measurement, and
//! phase-portrait assembly.
//!
//! Integration uses the Dormand-Prince 5(4) embedded pair with elementary
//! step control and cubic Hermite dense output. Limit cycles are located on
//! a Poincare section: a ray from the origin for the rotating waves of this
//! family (which wind around the origin), or a transversal line segment as
//! fallback for cycles that do not enclose it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibria::{fixed_points, Equilibrium, StabilityClass};
use crate::normalform::{rhs_unchecked, ModelParams, State};
use crate::{Error, Result};

/// Relative/absolute local error tolerances of the embedded pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub rel: f64,
    pub abs: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rel: 1e-10,
            abs: 1e-12,
        }
    }
}

impl Tolerances {
    pub fn new(rel: f64, abs: f64) -> Result<Self> {
        if !(rel > 0.0 && abs > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerances must be positive, got rel = {rel}, abs = {abs}"
            )));
        }
        Ok(Tolerances { rel, abs })
    }
}

/// A stored solution: times, states and derivatives at the accepted steps
/// (the derivatives feed the cubic Hermite dense output).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub derivs: Vec<State>,
    pub params: ModelParams,
}

impl Trajectory {
    pub fn last_state(&self) -> State {
        *self.states.last().expect("trajectory is never empty")
    }

    pub fn last_time(&self) -> f64 {
        *self.times.last().expect("trajectory is never empty")
    }

    /// Cubic Hermite interpolation between stored nodes.
    pub fn sample(&self, t: f64) -> State {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.states[0];
        }
        if t >= self.times[n - 1] {
            return self.states[n - 1];
        }
        let idx = match self.times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(i) => return self.states[i],
            Err(i) => i - 1,
        };
        hermite(
            self.times[idx],
            self.times[idx + 1],
            self.states[idx],
            self.derivs[idx],
            self.states[idx + 1],
            self.derivs[idx + 1],
            t,
        )
    }
}

fn hermite(t0: f64, t1: f64, y0: State, f0: State, y1: State, f1: State, t: f64) -> State {
    let h = t1 - t0;
    let th = (t - t0) / h;
    let th2 = th * th;
    let th3 = th2 * th;
    let h00 = 2.0 * th3 - 3.0 * th2 + 1.0;
    let h10 = th3 - 2.0 * th2 + th;
    let h01 = -2.0 * th3 + 3.0 * th2;
    let h11 = th3 - th2;
    State {
        x: h00 * y0.x + h10 * h * f0.x + h01 * y1.x + h11 * h * f1.x,
        y: h00 * y0.y + h10 * h * f0.y + h01 * y1.y + h11 * h * f1.y,
    }
}

// Dormand-Prince 5(4) tableau.
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B5: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

const MIN_STEP: f64 = 1e-14;

#[derive(Debug, Clone, Copy)]
pub(crate) struct StepRecord {
    pub t0: f64,
    pub y0: State,
    pub f0: State,
    pub t1: f64,
    pub y1: State,
    pub f1: State,
}

impl StepRecord {
    pub fn interp(&self, t: f64) -> State {
        hermite(self.t0, self.t1, self.y0, self.f0, self.y1, self.f1, t)
    }
}

/// Adaptive stepper; `direction = -1` integrates the time-reversed field.
pub(crate) struct Stepper {
    params: ModelParams,
    tol: Tolerances,
    direction: f64,
    h_max: f64,
    pub t: f64,
    pub y: State,
    pub f: State,
    h: f64,
}

impl Stepper {
    pub fn new(
        params: &ModelParams,
        y0: State,
        tol: Tolerances,
        direction: f64,
        h_max: f64,
    ) -> Result<Self> {
        if !y0.is_finite() {
            return Err(Error::NonFinite("initial state must be finite".into()));
        }
        let mut f0 = rhs_unchecked(params, y0);
        f0 = State {
            x: direction * f0.x,
            y: direction * f0.y,
        };
        let speed = f0.x.hypot(f0.y);
        let h0 = (0.01 * (1.0 + y0.r()) / (speed + 1e-8)).min(h_max).max(1e-8);
        Ok(Stepper {
            params: *params,
            tol,
            direction,
            h_max,
            t: 0.0,
            y: y0,
            f: f0,
            h: h0,
        })
    }

    fn eval(&self, y: State) -> State {
        let f = rhs_unchecked(&self.params, y);
        State {
            x: self.direction * f.x,
            y: self.direction * f.y,
        }
    }

    /// Advance one accepted step, no farther than `t_limit`.
    pub fn step(&mut self, t_limit: f64) -> Result<StepRecord> {
        loop {
            let mut h = self.h.min(self.h_max);
            let clipped = self.t + h >= t_limit;
            if clipped {
                h = t_limit - self.t;
            }
            if h < MIN_STEP {
                if clipped && t_limit - self.t < MIN_STEP {
                    // Already at the limit: emit a null step.
                    return Ok(StepRecord {
                        t0: self.t,
                        y0: self.y,
                        f0: self.f,
                        t1: t_limit,
                        y1: self.y,
                        f1: self.f,
                    });
                }
                return Err(Error::Stiffness {
                    t: self.t,
                    x: self.y.x,
                    y: self.y.y,
                });
            }
            let (y0, f0) = (self.y, self.f);
            let add = |y: State, c: f64, k: State| State {
                x: y.x + c * k.x,
                y: y.y + c * k.y,
            };
            let k1 = f0;
            let k2 = self.eval(add(y0, h * A2[0], k1));
            let k3 = self.eval(add(add(y0, h * A3[0], k1), h * A3[1], k2));
            let k4 = self.eval(add(
                add(add(y0, h * A4[0], k1), h * A4[1], k2),
                h * A4[2],
                k3,
            ));
            let k5 = self.eval(add(
                add(add(add(y0, h * A5[0], k1), h * A5[1], k2), h * A5[2], k3),
                h * A5[3],
                k4,
            ));
            let k6 = self.eval(add(
                add(
                    add(add(add(y0, h * A6[0], k1), h * A6[1], k2), h * A6[2], k3),
                    h * A6[3],
                    k4,
                ),
                h * A6[4],
                k5,
            ));
            let ks = [k1, k2, k3, k4, k5, k6];
            let mut y1 = y0;
            for (c, k) in B5.iter().zip(ks.iter()) {
                y1 = add(y1, h * c, *k);
            }
            let k7 = self.eval(y1);
            let ks7 = [k1, k2, k3, k4, k5, k6, k7];
            let mut y4 = y0;
            for (c, k) in B4.iter().zip(ks7.iter()) {
                y4 = add(y4, h * c, *k);
            }
            if !y1.is_finite() {
                return Err(Error::Stiffness {
                    t: self.t,
                    x: self.y.x,
                    y: self.y.y,
                });
            }
            let sc_x = self.tol.abs + self.tol.rel * y0.x.abs().max(y1.x.abs());
            let sc_y = self.tol.abs + self.tol.rel * y0.y.abs().max(y1.y.abs());
            let ex = (y1.x - y4.x) / sc_x;
            let ey = (y1.y - y4.y) / sc_y;
            let err = (0.5 * (ex * ex + ey * ey)).sqrt();
            if err <= 1.0 {
                let rec = StepRecord {
                    t0: self.t,
                    y0,
                    f0,
                    t1: self.t + h,
                    y1,
                    f1: k7,
                };
                self.t += h;
                self.y = y1;
                self.f = k7;
                let factor = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                self.h = (h * factor).min(self.h_max);
                return Ok(rec);
            }
            self.h = h * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
        }
    }
}

/// Integrate from `initial` over `[0, t_end]` with adaptive steps and
/// dense (cubic Hermite) output between the stored nodes.
pub fn integrate(
    params: &ModelParams,
    initial: State,
    t_end: f64,
    tol: Tolerances,
) -> Result<Trajectory> {
    if !(t_end > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "t_end must be > 0, got {t_end}"
        )));
    }
    let h_max = (t_end / 10.0).min(10.0);
    let mut stepper = Stepper::new(params, initial, tol, 1.0, h_max)?;
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![initial],
        derivs: vec![stepper.f],
        params: *params,
    };
    while stepper.t < t_end {
        let rec = stepper.step(t_end)?;
        traj.times.push(rec.t1);
        traj.states.push(rec.y1);
        traj.derivs.push(rec.f1);
    }
    Ok(traj)
}

/// Fixed-step Dormand-Prince run (no adaptivity); used for convergence
/// studies of the pair's order.
pub fn integrate_fixed(
    params: &ModelParams,
    initial: State,
    t_end: f64,
    n_steps: usize,
) -> Result<State> {
    if n_steps == 0 {
        return Err(Error::InvalidParameter("n_steps must be > 0".into()));
    }
    let h = t_end / n_steps as f64;
    let mut y = initial;
    let add = |y: State, c: f64, k: State| State {
        x: y.x + c * k.x,
        y: y.y + c * k.y,
    };
    for _ in 0..n_steps {
        let k1 = rhs_unchecked(params, y);
        let k2 = rhs_unchecked(params, add(y, h * A2[0], k1));
        let k3 = rhs_unchecked(params, add(add(y, h * A3[0], k1), h * A3[1], k2));
        let k4 = rhs_unchecked(
            params,
            add(add(add(y, h * A4[0], k1), h * A4[1], k2), h * A4[2], k3),
        );
        let k5 = rhs_unchecked(
            params,
            add(
                add(add(add(y, h * A5[0], k1), h * A5[1], k2), h * A5[2], k3),
                h * A5[3],
                k4,
            ),
        );
        let k6 = rhs_unchecked(
            params,
            add(
                add(
                    add(add(add(y, h * A6[0], k1), h * A6[1], k2), h * A6[2], k3),
                    h * A6[3],
                    k4,
                ),
                h * A6[4],
                k5,
            ),
        );
        let ks = [k1, k2, k3, k4, k5, k6];
        for (c, k) in B5.iter().zip(ks.iter()) {
            y = add(y, h * c, *k);
        }
        if !y.is_finite() {
            return Err(Error::Stiffness {
                t: 0.0,
                x: y.x,
                y: y.y,
            });
        }
    }
    Ok(y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stability {
    Stable,
    Unstable,
}

/// A closed orbit with period, stability and winding data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitCycle {
    /// One closed loop, `samples.first() == samples.last()` within 1e-8.
    pub samples: Vec<State>,
    /// Sample times relative to the loop start, ending at `period`.
    pub times: Vec<f64>,
    pub period: f64,
    pub stability: Stability,
    /// Turns of the phase around the origin per period (forward time).
    pub winding: i32,
    /// Modulus of the nontrivial Floquet multiplier (forward time).
    pub floquet_magnitude: f64,
    /// Converged crossing point on the section.
    pub section_point: State,
}

impl LimitCycle {
    /// True if `point` lies inside the closed loop (even-odd rule).
    pub fn encloses(&self, point: State) -> bool {
        let mut inside = false;
        let n = self.samples.len();
        let mut j = n - 1;
        for i in 0..n {
            let (pi, pj) = (self.samples[i], self.samples[j]);
            if (pi.y > point.y) != (pj.y > point.y) {
                let x_int = pi.x + (point.y - pi.y) / (pj.y - pi.y) * (pj.x - pi.x);
                if point.x < x_int {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }
}

/// Poincare section used for cycle detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Section {
    /// Ray from the origin at angle `phi`; crossing coordinate is the radius.
    Ray { phi: f64 },
    /// Line through `point` with unit normal `(nx, ny)`; crossing
    /// coordinate runs along the line.
    Plane { point: (f64, f64), nx: f64, ny: f64 },
}

impl Section {
    fn event(&self, s: State) -> f64 {
        match self {
            Section::Ray { phi } => {
                let d = s.y.atan2(s.x) - phi;
                let mut w = d.rem_euclid(std::f64::consts::TAU);
                if w > std::f64::consts::PI {
                    w -= std::f64::consts::TAU;
                }
                w
            }
            Section::Plane { point, nx, ny } => (s.x - point.0) * nx + (s.y - point.1) * ny,
        }
    }

    fn coordinate(&self, s: State) -> f64 {
        match self {
            Section::Ray { .. } => s.r(),
            Section::Plane { point, nx, ny } => -(s.x - point.0) * ny + (s.y - point.1) * nx,
        }
    }

    fn displaced(&self, coord: f64, delta: f64) -> State {
        match self {
            Section::Ray { phi } => State::from_polar(coord + delta, *phi),
            Section::Plane { point, nx, ny } => State {
                x: point.0 - (coord + delta) * ny,
                y: point.1 + (coord + delta) * nx,
            },
        }
    }
}

/// Options for [`find_limit_cycle`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleOptions {
    pub tolerances: Tolerances,
    /// Time discarded before crossings are recorded.
    pub transient: f64,
    /// Total integration budget.
    pub max_time: f64,
    /// Successive crossing coordinates must agree within this.
    pub radius_tol: f64,
    /// Integrate the time-reversed field (locates unstable cycles).
    pub reverse_time: bool,
}

impl Default for CycleOptions {
    fn default() -> Self {
        CycleOptions {
            tolerances: Tolerances::default(),
            transient: 500.0,
            max_time: 1e4,
            radius_tol: 1e-9,
            reverse_time: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum NotFoundReason {
    /// The trajectory settled on a fixed point.
    FixedPointAttractor { state: State },
    /// Budget exhausted with the tail still moving: a cycle with period
    /// beyond the horizon, or a slow transient.
    HorizonExceeded { last_state: State, speed: f64 },
    /// The trajectory left the ball `r < 1e3` (possible only in reversed
    /// time for this family).
    Escaped { state: State },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum CycleSearch {
    Found(LimitCycle),
    NotFound(NotFoundReason),
}

impl CycleSearch {
    pub fn found(&self) -> Option<&LimitCycle> {
        match self {
            CycleSearch::Found(c) => Some(c),
            CycleSearch::NotFound(_) => None,
        }
    }
}

const ESCAPE_RADIUS: f64 = 1e3;
const FIXED_POINT_SPEED: f64 = 1e-10;
const TAIL_SPEED: f64 = 1e-6;
const INTERIOR_CHECKS: usize = 8;
const MAX_CROSSINGS: usize = 400;

struct Crossing {
    t: f64,
    state: State,
    coord: f64,
    orientation: f64,
}

/// State at time `t` inside a step, re-integrated exactly from the step
/// start (the Hermite interpolant is only fourth order, too coarse for the
/// 1e-9 crossing-radius matching).
fn exact_state_at(
    params: &ModelParams,
    tol: Tolerances,
    direction: f64,
    rec: &StepRecord,
    t: f64,
) -> Result<State> {
    let span = t - rec.t0;
    if span <= 0.0 {
        return Ok(rec.y0);
    }
    let mut st = Stepper::new(params, rec.y0, tol, direction, rec.t1 - rec.t0)?;
    while st.t < span {
        st.step(span)?;
    }
    Ok(st.y)
}

/// Locate a crossing inside one step: bisection on the Hermite interpolant
/// for a first guess, then Newton polish on the exactly integrated state.
fn refine_crossing(
    params: &ModelParams,
    tol: Tolerances,
    direction: f64,
    rec: &StepRecord,
    section: &Section,
    mut ta: f64,
    mut tb: f64,
) -> Result<(f64, State)> {
    let ga = section.event(rec.interp(ta));
    let mut sign_a = ga >= 0.0;
    for _ in 0..30 {
        let tm = 0.5 * (ta + tb);
        let gm = section.event(rec.interp(tm));
        if (gm >= 0.0) == sign_a {
            ta = tm;
            sign_a = gm >= 0.0;
        } else {
            tb = tm;
        }
    }
    let mut t_c = 0.5 * (ta + tb);
    let mut y_c = exact_state_at(params, tol, direction, rec, t_c)?;
    for _ in 0..4 {
        let g = section.event(y_c);
        let f = rhs_unchecked(params, y_c);
        let fdir = State {
            x: direction * f.x,
            y: direction * f.y,
        };
        let gdot = match section {
            Section::Ray { .. } => {
                let r_sq = (y_c.x * y_c.x + y_c.y * y_c.y).max(1e-300);
                (y_c.x * fdir.y - y_c.y * fdir.x) / r_sq
            }
            Section::Plane { nx, ny, .. } => fdir.x * nx + fdir.y * ny,
        };
        if gdot.abs() < 1e-300 {
            break;
        }
        let dt = -g / gdot;
        if !dt.is_finite() {
            break;
        }
        let t_new = (t_c + dt).clamp(rec.t0, rec.t1);
        if (t_new - t_c).abs() < 1e-15 * (1.0 + t_c.abs()) {
            t_c = t_new;
            break;
        }
        t_c = t_new;
        y_c = exact_state_at(params, tol, direction, rec, t_c)?;
    }
    Ok((t_c, y_c))
}

fn cycle_search_core(
    params: &ModelParams,
    seed: State,
    section: Section,
    opts: &CycleOptions,
) -> Result<CycleSearch> {
    let direction = if opts.reverse_time { -1.0 } else { 1.0 };
    let h_max = 1.0;
    let mut stepper = Stepper::new(params, seed, opts.tolerances, direction, h_max)?;

    // Transient phase.
    while stepper.t < opts.transient {
        let rec = stepper.step(opts.transient)?;
        let speed = rec.f1.x.hypot(rec.f1.y);
        if speed < FIXED_POINT_SPEED * (1.0 + rec.y1.r()) {
            return Ok(CycleSearch::NotFound(NotFoundReason::FixedPointAttractor {
                state: rec.y1,
            }));
        }
        if rec.y1.r() > ESCAPE_RADIUS {
            return Ok(CycleSearch::NotFound(NotFoundReason::Escaped {
                state: rec.y1,
            }));
        }
    }

    // Crossing-collection phase.
    let mut crossings: Vec<Crossing> = Vec::new();
    let mut reference_orientation: Option<f64> = None;
    let mut matched: Option<(usize, usize)> = None; // (first index, lag)
    'outer: while stepper.t < opts.max_time {
        let rec = stepper.step(opts.max_time)?;
        let speed = rec.f1.x.hypot(rec.f1.y);
        if speed < FIXED_POINT_SPEED * (1.0 + rec.y1.r()) {
            return Ok(CycleSearch::NotFound(NotFoundReason::FixedPointAttractor {
                state: rec.y1,
            }));
        }
        if rec.y1.r() > ESCAPE_RADIUS {
            return Ok(CycleSearch::NotFound(NotFoundReason::Escaped {
                state: rec.y1,
            }));
        }
        // Check the event function on subintervals so wide steps cannot
        // hop over a pair of crossings.
        let dt = (rec.t1 - rec.t0) / INTERIOR_CHECKS as f64;
        let mut t_prev = rec.t0;
        let mut g_prev = section.event(rec.y0);
        for k in 1..=INTERIOR_CHECKS {
            let t_k = if k == INTERIOR_CHECKS {
                rec.t1
            } else {
                rec.t0 + dt * k as f64
            };
            let g_k = section.event(rec.interp(t_k));
            let crossed = g_prev == 0.0
                || (g_prev.signum() != g_k.signum()
                    && g_prev.abs() + g_k.abs() < std::f64::consts::PI);
            if crossed {
                let (tc, sc) =
                    refine_crossing(params, opts.tolerances, direction, &rec, &section, t_prev, t_k)?;
                let f = rhs_unchecked(params, sc);
                let fdir = State {
                    x: direction * f.x,
                    y: direction * f.y,
                };
                let orientation = match section {
                    Section::Ray { .. } => sc.x * fdir.y - sc.y * fdir.x, // sign of phi-dot
                    Section::Plane { nx, ny, .. } => fdir.x * nx + fdir.y * ny,
                };
                let keep = match reference_orientation {
                    None => {
                        reference_orientation = Some(orientation.signum());
                        true
                    }
                    Some(r) => orientation.signum() == r,
                };
                if keep {
                    crossings.push(Crossing {
                        t: tc,
                        state: sc,
                        coord: section.coordinate(sc),
                        orientation: orientation.signum(),
                    });
                    let n = crossings.len();
                    for lag in 1..=6usize {
                        if n > lag {
                            let a = &crossings[n - 1 - lag];
                            let b = &crossings[n - 1];
                            if (a.coord - b.coord).abs() < opts.radius_tol
                                && a.state.dist(&b.state) < 1e-7 * (1.0 + a.state.r())
                            {
                                matched = Some((n - 1 - lag, lag));
                                break 'outer;
                            }
                        }
                    }
                    if n >= MAX_CROSSINGS {
                        break 'outer;
                    }
                }
            }
            t_prev = t_k;
            g_prev = g_k;
        }
    }

    let Some((idx, lag)) = matched else {
        let speed = stepper.f.x.hypot(stepper.f.y);
        let reason = if speed < TAIL_SPEED * (1.0 + stepper.y.r()) {
            NotFoundReason::FixedPointAttractor { state: stepper.y }
        } else {
            NotFoundReason::HorizonExceeded {
                last_state: stepper.y,
                speed,
            }
        };
        return Ok(CycleSearch::NotFound(reason));
    };

    let start = &crossings[idx];
    let period = crossings[idx + lag].t - start.t;
    let orientation = start.orientation;
    let loop_start = start.state;

    // One clean pass around the loop for samples and winding.
    let n_samples = 512usize;
    let mut sampler = Stepper::new(params, loop_start, opts.tolerances, direction, h_max)?;
    let mut samples = Vec::with_capacity(n_samples + 1);
    let mut times = Vec::with_capacity(n_samples + 1);
    let mut total_dphi = 0.0;
    let mut prev_phi = loop_start.y.atan2(loop_start.x);
    let mut next_sample = 0usize;
    while sampler.t < period {
        let rec = sampler.step(period)?;
        while next_sample <= n_samples {
            let ts = period * next_sample as f64 / n_samples as f64;
            if ts > rec.t1 + 1e-15 {
                break;
            }
            let s = rec.interp(ts.min(rec.t1));
            samples.push(s);
            times.push(ts);
            next_sample += 1;
        }
        let phi = rec.y1.y.atan2(rec.y1.x);
        let mut dphi = phi - prev_phi;
        while dphi > std::f64::consts::PI {
            dphi -= std::f64::consts::TAU;
        }
        while dphi < -std::f64::consts::PI {
            dphi += std::f64::consts::TAU;
        }
        total_dphi += dphi;
        prev_phi = phi;
    }
    if samples.len() < n_samples + 1 {
        samples.push(sampler.y);
        times.push(period);
    }
    let winding_signed = (total_dphi / std::f64::consts::TAU).round() as i32;
    let winding = if opts.reverse_time {
        -winding_signed
    } else {
        winding_signed
    };

    // Floquet multiplier from a finite difference of the return map.
    let base_coord = start.coord;
    let delta = 1e-6 * (1.0 + base_coord.abs());
    let perturbed = section.displaced(base_coord, delta);
    let mut ret = Stepper::new(params, perturbed, opts.tolerances, direction, h_max)?;
    let mut found_coord = None;
    let mut count = 0usize;
    let t_budget = 20.0 * period + 100.0;
    'ret: while ret.t < t_budget {
        let rec = ret.step(t_budget)?;
        let dt = (rec.t1 - rec.t0) / INTERIOR_CHECKS as f64;
        let mut t_prev = rec.t0;
        let mut g_prev = section.event(rec.y0);
        for k in 1..=INTERIOR_CHECKS {
            let t_k = if k == INTERIOR_CHECKS {
                rec.t1
            } else {
                rec.t0 + dt * k as f64
            };
            let g_k = section.event(rec.interp(t_k));
            if g_prev.signum() != g_k.signum() && g_prev.abs() + g_k.abs() < std::f64::consts::PI {
                let (_, sc) =
                    refine_crossing(params, opts.tolerances, direction, &rec, &section, t_prev, t_k)?;
                let f = rhs_unchecked(params, sc);
                let fdir = State {
                    x: direction * f.x,
                    y: direction * f.y,
                };
                let orient = match section {
                    Section::Ray { .. } => (sc.x * fdir.y - sc.y * fdir.x).signum(),
                    Section::Plane { nx, ny, .. } => (fdir.x * nx + fdir.y * ny).signum(),
                };
                if orient == orientation {
                    count += 1;
                    if count == lag {
                        found_coord = Some(section.coordinate(sc));
                        break 'ret;
                    }
                }
            }
            t_prev = t_k;
            g_prev = g_k;
        }
    }
    let multiplier_section = match found_coord {
        Some(c1) => ((c1 - base_coord) / delta).abs(),
        None => 0.0, // super-attracting within resolution
    };
    // In reversed time the measured multiplier is the reciprocal of the
    // forward-time one.
    let floquet = if opts.reverse_time {
        if multiplier_section > 1e-300 {
            1.0 / multiplier_section
        } else {
            f64::INFINITY
        }
    } else {
        multiplier_section
    };
    let stability = if floquet < 1.0 - 1e-6 {
        Stability::Stable
    } else {
        Stability::Unstable
    };

    Ok(CycleSearch::Found(LimitCycle {
        samples,
        times,
        period,
        stability,
        winding,
        floquet_magnitude: floquet,
        section_point: loop_start,
    }))
}

/// Locate a limit cycle from `seed` using the Poincare ray `phi = section_phi`.
///
/// The trajectory runs past a transient horizon, then successive
/// same-orientation crossings of the ray are recorded; a cycle is declared
/// when crossing radii (and states) repeat within tolerance. If the ray is
/// never crossed (a cycle not enclosing the origin), the search retries on
/// a line section transversal to the flow through the current point.
pub fn find_limit_cycle(
    params: &ModelParams,
    seed: State,
    section_phi: f64,
    opts: &CycleOptions,
) -> Result<CycleSearch> {
    if !seed.is_finite() {
        return Err(Error::NonFinite("seed must be finite".into()));
    }
    let primary = cycle_search_core(params, seed, Section::Ray { phi: section_phi }, opts)?;
    if let CycleSearch::NotFound(NotFoundReason::HorizonExceeded { last_state, .. }) = &primary {
        // Fallback: anchor a transversal line at the tail point.
        let f = rhs_unchecked(params, *last_state);
        let norm = f.x.hypot(f.y);
        if norm > 1e-12 {
            let section = Section::Plane {
                point: (last_state.x, last_state.y),
                nx: f.x / norm,
                ny: f.y / norm,
            };
            let mut retry_opts = *opts;
            retry_opts.transient = 0.0;
            return cycle_search_core(params, *last_state, section, &retry_opts);
        }
    }
    Ok(primary)
}

/// Locate a cycle on an explicit section (used for cycles that do not
/// enclose the origin, such as the small subcritical cycles around the
/// nontrivial foci).
pub fn find_limit_cycle_on_section(
    params: &ModelParams,
    seed: State,
    section: Section,
    opts: &CycleOptions,
) -> Result<CycleSearch> {
    cycle_search_core(params, seed, section, opts)
}

/// Seeding policy for [`portrait`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedPolicy {
    /// Radii of seed rings for the cycle search.
    pub ring_radii: Vec<f64>,
    /// Seed angles per ring.
    pub ring_angles: usize,
    /// Also search for unstable cycles in reversed time.
    pub reverse_rings: bool,
    /// Background trajectory grid (nx, ny) over `window`.
    pub grid: (usize, usize),
    /// (x_min, x_max, y_min, y_max) for the background grid.
    pub window: (f64, f64, f64, f64),
    pub t_background: f64,
    pub t_separatrix: f64,
    pub tolerances: Tolerances,
    pub cycle: CycleOptions,
}

impl Default for SeedPolicy {
    fn default() -> Self {
        SeedPolicy {
            ring_radii: vec![0.3, 1.0, 2.0],
            ring_angles: 4,
            reverse_rings: false,
            grid: (5, 5),
            window: (-2.5, 2.5, -2.5, 2.5),
            t_background: 60.0,
            t_separatrix: 80.0,
            tolerances: Tolerances::default(),
            cycle: CycleOptions::default(),
        }
    }
}

/// A saddle separatrix: the branch of the unstable (forward time) or
/// stable (reversed time) manifold seeded at a small offset along an
/// eigenvector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Separatrix {
    pub saddle: State,
    pub unstable: bool,
    pub trajectory: Trajectory,
}

/// A phase portrait: equilibria, limit cycles, saddle separatrices and a
/// bundle of background trajectories. Deterministic for a fixed policy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Portrait {
    pub params: ModelParams,
    pub equilibria: Vec<Equilibrium>,
    pub cycles: Vec<LimitCycle>,
    pub separatrices: Vec<Separatrix>,
    pub trajectories: Vec<Trajectory>,
}

const SEPARATRIX_OFFSET: f64 = 1e-6;

fn eigenvector(j: &nalgebra::Matrix2<f64>, lambda: f64) -> (f64, f64) {
    // (J - lambda I) v = 0; pick the better-conditioned row.
    let r1 = (j[(0, 0)] - lambda, j[(0, 1)]);
    let r2 = (j[(1, 0)], j[(1, 1)] - lambda);
    let v1 = (-r1.1, r1.0);
    let v2 = (-r2.1, r2.0);
    let (vx, vy) = if r1.0.hypot(r1.1) >= r2.0.hypot(r2.1) {
        v1
    } else {
        v2
    };
    let n = vx.hypot(vy);
    if n > 0.0 {
        (vx / n, vy / n)
    } else {
        (1.0, 0.0)
    }
}

fn reversed_integrate(
    params: &ModelParams,
    initial: State,
    t_end: f64,
    tol: Tolerances,
) -> Result<Trajectory> {
    let mut stepper = Stepper::new(params, initial, tol, -1.0, (t_end / 10.0).min(10.0))?;
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![initial],
        derivs: vec![stepper.f],
        params: *params,
    };
    while stepper.t < t_end {
        let rec = stepper.step(t_end)?;
        traj.times.push(rec.t1);
        traj.states.push(rec.y1);
        traj.derivs.push(rec.f1);
        if rec.y1.r() > ESCAPE_RADIUS {
            break;
        }
    }
    Ok(traj)
}

fn same_cycle(a: &LimitCycle, b: &LimitCycle) -> bool {
    if (a.period - b.period).abs() > 1e-6 * a.period.max(b.period) {
        return false;
    }
    let p = a.samples[0];
    let d = b
        .samples
        .iter()
        .map(|s| s.dist(&p))
        .fold(f64::INFINITY, f64::min);
    d < 1e-5 * (1.0 + p.r())
}

/// Assemble a phase portrait: equilibria, saddle separatrices (seeded
/// 1e-6 along the eigenvectors), limit cycles from a ring of seeds, and a
/// grid of background trajectories. The trajectory bundle runs in
/// parallel; results merge in seed order.
pub fn portrait(params: &ModelParams, policy: &SeedPolicy) -> Result<Portrait> {
    let equilibria = fixed_points(params)?;

    // Cycle search over ring seeds (forward, plus reversed if requested).
    let mut cycles: Vec<LimitCycle> = Vec::new();
    let mut seeds = Vec::new();
    for (ri, r) in policy.ring_radii.iter().enumerate() {
        for k in 0..policy.ring_angles {
            let phi =
                std::f64::consts::TAU * k as f64 / policy.ring_angles as f64 + 0.1 * ri as f64;
            seeds.push((State::from_polar(*r, phi), false));
            if policy.reverse_rings {
                seeds.push((State::from_polar(*r, phi), true));
            }
        }
    }
    let searches: Vec<Result<CycleSearch>> = seeds
        .par_iter()
        .map(|(seed, reverse)| {
            let mut opts = policy.cycle;
            opts.reverse_time = *reverse;
            find_limit_cycle(params, *seed, 0.0, &opts)
        })
        .collect();
    for s in searches {
        if let CycleSearch::Found(c) = s? {
            if !cycles.iter().any(|other| same_cycle(other, &c)) {
                cycles.push(c);
            }
        }
    }

    // Saddle separatrices.
    let mut separatrices = Vec::new();
    for eq in equilibria
        .iter()
        .filter(|e| e.class == StabilityClass::Saddle)
    {
        let j = crate::normalform::jacobian(params, eq.position)?;
        for (lambda, unstable) in [
            (eq.eigenvalues.0.re, eq.eigenvalues.0.re > 0.0),
            (eq.eigenvalues.1.re, eq.eigenvalues.1.re > 0.0),
        ] {
            let (vx, vy) = eigenvector(&j, lambda);
            for sign in [1.0, -1.0] {
                let start = State {
                    x: eq.position.x + sign * SEPARATRIX_OFFSET * vx,
                    y: eq.position.y + sign * SEPARATRIX_OFFSET * vy,
                };
                let traj = if unstable {
                    integrate(params, start, policy.t_separatrix, policy.tolerances)?
                } else {
                    reversed_integrate(params, start, policy.t_separatrix, policy.tolerances)?
                };
                separatrices.push(Separatrix {
                    saddle: eq.position,
                    unstable,
                    trajectory: traj,
                });
            }
        }
    }

    // Background bundle.
    let (nx, ny) = policy.grid;
    let mut grid_seeds = Vec::new();
    for i in 0..nx {
        for k in 0..ny {
            let x = policy.window.0
                + (policy.window.1 - policy.window.0) * (i as f64 + 0.5) / nx as f64;
            let y = policy.window.2
                + (policy.window.3 - policy.window.2) * (k as f64 + 0.5) / ny as f64;
            grid_seeds.push(State::new(x, y));
        }
    }
    let trajectories: Vec<Trajectory> = grid_seeds
        .par_iter()
        .map(|s| integrate(params, *s, policy.t_background, policy.tolerances))
        .collect::<Result<Vec<_>>>()?;

    Ok(Portrait {
        params: *params,
        equilibria,
        cycles,
        separatrices,
        trajectories,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normalform::PerturbationKind;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_4;

    /// Closed-form solution of the symmetric system: logistic modulus and
    /// quadrature phase.
    fn exact_symmetric(mu: f64, nu: f64, alpha0: f64, s0: State, t: f64) -> State {
        let (a, b) = (alpha0.sin(), alpha0.cos());
        let rho0 = s0.r() * s0.r();
        let e = (2.0 * mu * t).exp();
        let denom = mu + a * rho0 * (e - 1.0);
        let rho = mu * rho0 * e / denom;
        let phi = s0.phi() + nu * t - (b / (2.0 * a)) * (denom / mu).ln();
        State::from_polar(rho.sqrt(), phi)
    }

    #[test]
    fn symmetric_trajectory_converges_to_rotating_wave() {
        let alpha0 = FRAC_PI_4;
        let (a, b) = (alpha0.sin(), alpha0.cos());
        let mu = 1.0;
        let nu = b * mu / a + 0.5;
        let p = ModelParams::symmetric(mu, nu, alpha0).unwrap();
        let r_wave = (mu / a).sqrt();
        let traj = integrate(
            &p,
            State::from_polar(0.9 * r_wave, 0.3),
            80.0,
            Tolerances::default(),
        )
        .unwrap();
        let tail = traj.last_state();
        assert_relative_eq!(tail.r(), r_wave, epsilon = 1e-8);
        // Phase advances at rate nu - b mu / a = 0.5 on the tail.
        let t1 = traj.last_time();
        let s_a = traj.sample(t1 - 10.0);
        let mut dphi = tail.phi() - s_a.phi();
        while dphi < 0.0 {
            dphi += std::f64::consts::TAU;
        }
        // 10 time units at rate 0.5 is 5 radians < 2 pi, no wrap ambiguity.
        let rate = dphi / 10.0;
        assert!((rate - 0.5).abs() <= 1e-6, "rate = {rate}");
    }

    #[test]
    fn integrator_matches_exact_solution() {
        let p = ModelParams::symmetric(0.7, 1.3, 0.9).unwrap();
        let s0 = State::from_polar(0.4, 1.0);
        let t_end = 12.0;
        let traj = integrate(&p, s0, t_end, Tolerances::default()).unwrap();
        let want = exact_symmetric(0.7, 1.3, 0.9, s0, t_end);
        assert!(traj.last_state().dist(&want) < 1e-8);
    }

    #[test]
    fn fixed_step_order_at_least_four() {
        let p = ModelParams::symmetric(0.7, 1.3, 0.9).unwrap();
        let s0 = State::from_polar(0.4, 1.0);
        let t_end = 4.0;
        let want = exact_symmetric(0.7, 1.3, 0.9, s0, t_end);
        let e1 = integrate_fixed(&p, s0, t_end, 200).unwrap().dist(&want);
        let e2 = integrate_fixed(&p, s0, t_end, 400).unwrap().dist(&want);
        let order = (e1 / e2).log2();
        assert!(order >= 4.0, "observed order {order} (e1 = {e1}, e2 = {e2})");
    }

    #[test]
    fn halving_tolerances_reduces_error() {
        let p = ModelParams::symmetric(0.7, 1.3, 0.9).unwrap();
        let s0 = State::from_polar(0.4, 1.0);
        let t_end = 12.0;
        let want = exact_symmetric(0.7, 1.3, 0.9, s0, t_end);
        let mut errors = Vec::new();
        for k in 0..4 {
            let scale = 0.5f64.powi(3 * k);
            let tol = Tolerances::new(1e-7 * scale, 1e-9 * scale).unwrap();
            let traj = integrate(&p, s0, t_end, tol).unwrap();
            errors.push(traj.last_state().dist(&want).max(1e-16));
        }
        for w in errors.windows(2) {
            assert!(w[1] <= w[0] * 1.5, "errors not decreasing: {errors:?}");
        }
    }

    #[test]
    fn exact_rotating_wave_cycle() {
        let alpha0 = FRAC_PI_4;
        let (a, b) = (alpha0.sin(), alpha0.cos());
        let mu = 1.0;
        let nu = b * mu / a + 0.5;
        let p = ModelParams::symmetric(mu, nu, alpha0).unwrap();
        let opts = CycleOptions {
            transient: 50.0,
            ..CycleOptions::default()
        };
        let found = find_limit_cycle(&p, State::from_polar(0.5, 0.0), 0.0, &opts).unwrap();
        let c = found.found().expect("rotating wave exists");
        let r_wave = (mu / a).sqrt();
        assert_relative_eq!(c.section_point.r(), r_wave, epsilon = 1e-8);
        let omega: f64 = nu - b * mu / a;
        assert_relative_eq!(
            c.period,
            std::f64::consts::TAU / omega.abs(),
            epsilon = 1e-6
        );
        assert_eq!(c.winding, 1);
        assert_eq!(c.stability, Stability::Stable);
        assert!(c.floquet_magnitude < 1.0);
        let first = c.samples.first().unwrap();
        let last = c.samples.last().unwrap();
        assert!(first.dist(last) < 1e-8);
    }

    #[test]
    fn fixed_point_attractor_reported() {
        // Inside the pinning region of the constant case the attractor is
        // a fixed point.
        let p = ModelParams::new(2.0, 2.0, FRAC_PI_4, 1.0, PerturbationKind::Const).unwrap();
        let opts = CycleOptions {
            transient: 20.0,
            max_time: 200.0,
            ..CycleOptions::default()
        };
        let res = find_limit_cycle(&p, State::from_polar(1.5, 0.4), 0.0, &opts).unwrap();
        match res {
            CycleSearch::NotFound(NotFoundReason::FixedPointAttractor { state }) => {
                let eqs = crate::equilibria::fixed_points(&p).unwrap();
                let d = eqs
                    .iter()
                    .map(|e| e.position.dist(&state))
                    .fold(f64::INFINITY, f64::min);
                assert!(d < 1e-8, "tail state {state:?} is {d} from the equilibria");
            }
            other => panic!("expected a fixed-point attractor, got {other:?}"),
        }
    }

    #[test]
    fn period_consistent_across_sections() {
        let p =
            ModelParams::new(1.6, 0.19, FRAC_PI_4, 1.0, PerturbationKind::ZmResidual(2)).unwrap();
        let opts = CycleOptions {
            transient: 200.0,
            ..CycleOptions::default()
        };
        let c1 = find_limit_cycle(&p, State::from_polar(2.0, 0.3), 0.0, &opts).unwrap();
        let c2 = find_limit_cycle(&p, State::from_polar(2.0, 0.3), 1.9, &opts).unwrap();
        let (c1, c2) = (c1.found().unwrap(), c2.found().unwrap());
        assert!(
            (c1.period - c2.period).abs() <= 1e-7 * c1.period,
            "{} vs {}",
            c1.period,
            c2.period
        );
        assert_eq!(c1.winding, -1);
        assert_eq!(c2.winding, -1);
    }

    #[test]
    fn stiffness_error_carries_state() {
        // Force underflow with an absurd tolerance on a fast system.
        let p = ModelParams::symmetric(50.0, 0.0, 0.5).unwrap();
        let res = integrate(
            &p,
            State::from_polar(1e-3, 0.0),
            1e3,
            Tolerances::new(1e-300, 1e-300).unwrap(),
        );
        match res {
            Err(Error::Stiffness { .. }) => {}
            other => panic!("expected stiffness failure, got {other:?}"),
        }
    }

    #[test]
    fn portrait_counts_snic_het_a() {
        let p =
            ModelParams::new(1.6, 0.19, FRAC_PI_4, 1.0, PerturbationKind::ZmResidual(2)).unwrap();
        let policy = SeedPolicy {
            ring_radii: vec![2.2],
            ring_angles: 2,
            grid: (3, 3),
            t_background: 40.0,
            cycle: CycleOptions {
                transient: 200.0,
                ..CycleOptions::default()
            },
            ..SeedPolicy::default()
        };
        let port = portrait(&p, &policy).unwrap();
        assert_eq!(port.equilibria.len(), 5);
        assert_eq!(port.cycles.len(), 1);
        // Two saddles producing four separatrix branches each.
        assert_eq!(port.separatrices.len(), 8);
    }
}
