//! Unconstrained energy/time optimal trajectory of a single vehicle.
//!
//! Minimizing `β(t_m − t_0) + ∫ ½u² dt` over a double integrator with free
//! terminal time gives a linear control `u*(t) = a t + b`, a quadratic speed
//! and a cubic position. The four integration constants and the exit time
//! solve five algebraic conditions: initial speed, initial position,
//! terminal position, zero terminal control (transversality) and the
//! zero-Hamiltonian condition at the free terminal time:
//!
//! ```text
//!   ½a t₀² + b t₀ + c                 = v₀
//!   ⅙a t₀³ + ½b t₀² + c t₀ + d        = 0
//!   ⅙a t_m³ + ½b t_m² + c t_m + d     = L
//!   a t_m + b                         = 0
//!   β + ½a² t_m² + a b t_m + a c      = 0
//! ```
//!
//! The system is time invariant, so it is solved in a frame where `t₀ = 0`
//! and the coefficients are stored relative to `t₀`. Absolute coefficients
//! are available through [`UnconstrainedSolution::absolute_coefficients`].

use nalgebra::{Matrix5, Vector5};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coordinator::{CavRecord, ExitLane, Lane};
use crate::scenario::ScenarioParams;

/// Accepted residual of the five conditions.
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Newton step size below which iteration stops.
const STEP_TOL: f64 = 1e-10;
const MAX_ITERATIONS: usize = 100;
/// Multipliers applied to the initial exit-time guess on restarts.
const RESTART_SCALES: [f64; 6] = [1.0, 0.9, 0.75, 0.6, 1.1, 0.45];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OcSolveError {
    #[error("invalid input: {0}")]
    InvalidInput(&'static str),
    #[error("no convergence after {restarts} restarts (final residual {residual:e})")]
    NoConvergence { restarts: usize, residual: f64 },
}

/// Coefficients of `u* = a s + b`, `v* = ½a s² + b s + c`,
/// `x* = ⅙a s³ + ½b s² + c s + d` with `s = t − t0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnconstrainedSolution {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub t0: f64,
    /// Exit time `t_m` (absolute).
    pub tm: f64,
    /// Terminal distance `L_k`.
    pub length: f64,
    pub v0: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub x: f64,
    pub v: f64,
    pub u: f64,
}

impl UnconstrainedSolution {
    /// Travel time `t_m − t_0`.
    pub fn duration(&self) -> f64 {
        self.tm - self.t0
    }

    /// Residuals of the five conditions, evaluated in the `t₀ = 0` frame.
    pub fn residuals(&self) -> [f64; 5] {
        residual_vector(
            [self.a, self.b, self.c, self.d, self.duration()],
            self.v0,
            self.length,
            self.beta,
        )
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals().iter().fold(0.0f64, |m, r| m.max(r.abs()))
    }

    /// Coefficients in absolute time, `u* = a t + b` and so on.
    ///
    /// For large `t0` these lose precision through cancellation; prefer
    /// [`eval_trajectory`] for evaluation.
    pub fn absolute_coefficients(&self) -> [f64; 4] {
        let (a, b, c, d, t0) = (self.a, self.b, self.c, self.d, self.t0);
        [
            a,
            b - a * t0,
            c - b * t0 + 0.5 * a * t0 * t0,
            d - c * t0 + 0.5 * b * t0 * t0 - a * t0.powi(3) / 6.0,
        ]
    }

    /// Closed-form `∫ ½u*² dt` over `[t0, tm]`.
    pub fn energy(&self) -> f64 {
        let t = self.duration();
        let (a, b) = (self.a, self.b);
        0.5 * (a * a * t.powi(3) / 3.0 + a * b * t * t + b * b * t)
    }

    /// Objective `β(t_m − t_0) + ∫ ½u*² dt` of the reference itself.
    pub fn cost(&self) -> f64 {
        self.beta * self.duration() + self.energy()
    }
}

/// Evaluates the reference at absolute time `t`.
///
/// Before `t0` the start state is returned; after `tm` the vehicle is
/// extrapolated at its exit speed with zero control. The speed may leave
/// `[v_min, v_max]`: the unconstrained reference ignores limits, which the
/// barrier layer enforces.
pub fn eval_trajectory(sol: &UnconstrainedSolution, t: f64) -> TrajectoryPoint {
    let dur = sol.duration();
    let s = (t - sol.t0).max(0.0);
    let poly = |s: f64| TrajectoryPoint {
        x: sol.a * s.powi(3) / 6.0 + 0.5 * sol.b * s * s + sol.c * s + sol.d,
        v: 0.5 * sol.a * s * s + sol.b * s + sol.c,
        u: sol.a * s + sol.b,
    };
    if s <= dur {
        poly(s)
    } else {
        let end = poly(dur);
        TrajectoryPoint {
            x: end.x + end.v * (s - dur),
            v: end.v,
            u: 0.0,
        }
    }
}

/// Terminal distance `L_k` of a vehicle's path through the control zone.
pub fn terminal_length(record: &CavRecord, params: &ScenarioParams) -> f64 {
    path_length(record.original_lane, record.exit_lane, params)
}

/// `L3 + l` for lane-2/3 arrivals leaving through lane 1, `L3` otherwise.
pub fn path_length(original: Lane, exit: ExitLane, params: &ScenarioParams) -> f64 {
    match (original, exit) {
        (Lane::L2 | Lane::L3, ExitLane::L1) => params.l3 + params.l_extra,
        _ => params.l3,
    }
}

fn residual_vector(p: [f64; 5], v0: f64, length: f64, beta: f64) -> [f64; 5] {
    let [a, b, c, d, t] = p;
    [
        c - v0,
        d,
        a * t.powi(3) / 6.0 + 0.5 * b * t * t + c * t + d - length,
        a * t + b,
        beta + 0.5 * a * a * t * t + a * b * t + a * c,
    ]
}

fn jacobian(p: [f64; 5]) -> Matrix5<f64> {
    let [a, b, c, _d, t] = p;
    #[rustfmt::skip]
    let j = Matrix5::new(
        0.0, 0.0, 1.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 1.0, 0.0,
        t.powi(3) / 6.0, 0.5 * t * t, t, 1.0, 0.5 * a * t * t + b * t + c,
        t, 1.0, 0.0, 0.0, a,
        a * t * t + b * t + c, a * t, a, 0.0, a * a * t + a * b,
    );
    j
}

fn norm_inf(r: &[f64; 5]) -> f64 {
    r.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// One damped-Newton run from `guess`; returns the final point and residual.
fn newton(guess: [f64; 5], v0: f64, length: f64, beta: f64) -> ([f64; 5], f64) {
    let mut p = guess;
    let mut r = residual_vector(p, v0, length, beta);
    let mut merit = norm_inf(&r);
    for _ in 0..MAX_ITERATIONS {
        if merit < 1e-13 * (1.0 + length) {
            break;
        }
        let Some(lu_step) = jacobian(p).lu().solve(&-Vector5::from(r)) else {
            break;
        };
        let mut lambda = 1.0;
        let mut accepted = false;
        while lambda > 1e-6 {
            let mut trial = p;
            for (k, tk) in trial.iter_mut().enumerate() {
                *tk += lambda * lu_step[k];
            }
            if trial[4] > 0.0 {
                let rt = residual_vector(trial, v0, length, beta);
                let mt = norm_inf(&rt);
                if mt.is_finite() && mt < merit {
                    p = trial;
                    r = rt;
                    merit = mt;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted || lambda * lu_step.amax() < STEP_TOL {
            break;
        }
    }
    (p, merit)
}

/// Solves for the reference trajectory of a vehicle entering at `t0` with
/// speed `v0` that must travel `length` metres.
pub fn solve_unconstrained(
    t0: f64,
    v0: f64,
    length: f64,
    beta: f64,
) -> Result<UnconstrainedSolution, OcSolveError> {
    if !(t0.is_finite() && v0.is_finite() && length.is_finite() && beta.is_finite()) {
        return Err(OcSolveError::InvalidInput("non-finite input"));
    }
    if v0 <= 0.0 {
        return Err(OcSolveError::InvalidInput("initial speed must be positive"));
    }
    if length <= 0.0 {
        return Err(OcSolveError::InvalidInput("terminal length must be positive"));
    }
    if beta < 0.0 {
        return Err(OcSolveError::InvalidInput("beta must be nonnegative"));
    }
    let cruise = length / v0;
    let mut best = f64::INFINITY;
    for scale in RESTART_SCALES {
        let guess = [0.0, 0.0, v0, 0.0, cruise * scale];
        let (p, merit) = newton(guess, v0, length, beta);
        best = best.min(merit);
        if merit < RESIDUAL_TOL && p[4] > 0.0 {
            let [a, b, c, d, t] = p;
            return Ok(UnconstrainedSolution {
                a,
                b,
                c,
                d,
                t0,
                tm: t0 + t,
                length,
                v0,
                beta,
            });
        }
    }
    Err(OcSolveError::NoConvergence {
        restarts: RESTART_SCALES.len(),
        residual: best,
    })
}
