//! Per-step safety filter: CBF rows, CLF tracking row and reference signals.
//!
//! Each vehicle solves, at every step, a QP in `(u, e)`:
//!
//! ```text
//!     minimize    β e² + ½ (u − u_ref)²
//!     subject to  coeff_u·u + rhs_free ≥ 0            (one row per barrier)
//!                 2 (v − v_ref) u + ε (v − v_ref)² ≤ e  (tracking, softened by e)
//!                 u_min ≤ u ≤ u_max
//! ```
//!
//! Barrier rows use `γ(b) = c·b³`. Neighbour positions must already be
//! expressed in the controlled vehicle's own path coordinate.

use crate::coordinator::VehicleState;
use crate::ocsolve::{eval_trajectory, UnconstrainedSolution};
use crate::qpsolve::DenseQp;
use crate::scenario::{ControllerMode, ScenarioParams};

/// Below this position the reference falls back to `(v*, u*)`.
pub const X_FLOOR: f64 = 0.1;
/// Cap on the position-feedback ratio `x*/x`.
pub const REF_RATIO_MAX: f64 = 2.0;
/// Smallest weight on the relaxation variable.
pub const BETA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConstraintSource {
    RearEnd,
    MergeJ,
    MergeK,
    /// Leader in the lane the vehicle is about to enter.
    MergeJoin,
    VMax,
    VMin,
    UMax,
    UMin,
}

impl ConstraintSource {
    pub fn name(self) -> &'static str {
        match self {
            ConstraintSource::RearEnd => "rear_end",
            ConstraintSource::MergeJ => "merge_j",
            ConstraintSource::MergeK => "merge_k",
            ConstraintSource::MergeJoin => "merge_join",
            ConstraintSource::VMax => "v_max",
            ConstraintSource::VMin => "v_min",
            ConstraintSource::UMax => "u_max",
            ConstraintSource::UMin => "u_min",
        }
    }
}

/// Cubic class-K function `γ(b) = gain·b³`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassK {
    pub gain: f64,
}

impl ClassK {
    pub fn eval(&self, b: f64) -> f64 {
        self.gain * b * b * b
    }
}

/// One linear row `coeff_u·u + rhs_free ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CbfConstraint {
    pub coeff_u: f64,
    pub rhs_free: f64,
    pub source: ConstraintSource,
    /// Barrier value at the current state.
    pub b: f64,
}

impl CbfConstraint {
    pub fn holds(&self, u: f64) -> bool {
        self.coeff_u * u + self.rhs_free >= 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSignal {
    pub v_ref: f64,
    pub u_ref: f64,
}

/// Position and speed of a neighbour in my path coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborState {
    pub x: f64,
    pub v: f64,
}

/// A safe-merging partner with the merging point position `L_p` on my path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeNeighbor {
    pub state: NeighborState,
    pub l_p: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CbfInputs {
    pub ip: Option<NeighborState>,
    pub j: Option<MergeNeighbor>,
    pub k: Option<MergeNeighbor>,
    /// Vehicle that will be ahead once this one enters its second lane.
    pub join: Option<MergeNeighbor>,
    /// Vehicles ahead that enter this one's lane further downstream, at most
    /// one per entry position.
    pub cut_ins: Vec<MergeNeighbor>,
}

/// Gap-time coefficient of the safe-merging barrier, growing linearly from
/// `−δ/v0` at the origin to `φ` at the merging point.
pub fn phi_p(x: f64, l_p: f64, v0: f64, params: &ScenarioParams) -> f64 {
    phi_p_slope(l_p, v0, params) * x - params.delta / v0
}

/// `dΦ_p/dx`.
pub fn phi_p_slope(l_p: f64, v0: f64, params: &ScenarioParams) -> f64 {
    (params.phi + params.delta / v0) / l_p
}

/// Rear-end barrier `b = z − φv − δ`.
pub fn rear_end_barrier(me: VehicleState, ip: NeighborState, params: &ScenarioParams) -> f64 {
    ip.x - me.x - params.phi * me.v - params.delta
}

/// Safe-merging barrier `b = z − Φ_p(x)v − δ`.
pub fn merge_barrier(me: VehicleState, v0: f64, n: MergeNeighbor, params: &ScenarioParams) -> f64 {
    n.state.x - me.x - phi_p(me.x, n.l_p, v0, params) * me.v - params.delta
}

/// Builds the barrier rows for the rear-end, safe-merging and speed limits.
/// Merging rows are emitted only while `x ≤ L_p`.
///
/// With `merge_step_correction`, a merging row's control coefficient is
/// `−Φ_p(x) − Φ_p'·v·dt`: under forward Euler the barrier then changes by
/// exactly `dt` times the row's left side minus `γ(b)`.
pub fn build_cbf_rows(
    me: VehicleState,
    v0: f64,
    inputs: &CbfInputs,
    params: &ScenarioParams,
    gamma: ClassK,
) -> Vec<CbfConstraint> {
    let mut rows = Vec::with_capacity(6 + inputs.cut_ins.len());
    if let Some(ip) = inputs.ip {
        let b = rear_end_barrier(me, ip, params);
        rows.push(CbfConstraint {
            coeff_u: -params.phi,
            rhs_free: (ip.v - me.v) + gamma.eval(b),
            source: ConstraintSource::RearEnd,
            b,
        });
    }
    let merging = [
        (inputs.j, ConstraintSource::MergeJ),
        (inputs.k, ConstraintSource::MergeK),
        (inputs.join, ConstraintSource::MergeJoin),
    ]
    .into_iter()
    .filter_map(|(n, source)| Some((n?, source)))
    .chain(inputs.cut_ins.iter().map(|&n| (n, ConstraintSource::MergeJoin)));
    for (n, source) in merging {
        if me.x > n.l_p {
            continue;
        }
        let b = merge_barrier(me, v0, n, params);
        let slope = phi_p_slope(n.l_p, v0, params);
        let step = if params.merge_step_correction { slope * me.v * params.dt } else { 0.0 };
        rows.push(CbfConstraint {
            coeff_u: -phi_p(me.x, n.l_p, v0, params) - step,
            rhs_free: (n.state.v - me.v) - slope * me.v * me.v + gamma.eval(b),
            source,
            b,
        });
    }
    let b = params.v_max - me.v;
    rows.push(CbfConstraint { coeff_u: -1.0, rhs_free: gamma.eval(b), source: ConstraintSource::VMax, b });
    let b = me.v - params.v_min;
    rows.push(CbfConstraint { coeff_u: 1.0, rhs_free: gamma.eval(b), source: ConstraintSource::VMin, b });
    rows
}

/// Tracking reference. OCBF follows the unconstrained optimum with position
/// feedback; CBF-only mode drives toward `v_max` with no feedforward.
pub fn reference(
    me: VehicleState,
    sol: &UnconstrainedSolution,
    t: f64,
    mode: ControllerMode,
    params: &ScenarioParams,
) -> ReferenceSignal {
    match mode {
        ControllerMode::CbfOnly => ReferenceSignal { v_ref: params.v_max, u_ref: 0.0 },
        ControllerMode::Ocbf => {
            let star = eval_trajectory(sol, t);
            let ratio = if me.x < X_FLOOR {
                1.0
            } else {
                (star.x / me.x).clamp(0.0, REF_RATIO_MAX)
            };
            ReferenceSignal { v_ref: ratio * star.v, u_ref: ratio * star.u }
        }
    }
}

/// The QP of one vehicle at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepQp {
    pub v: f64,
    pub reference: ReferenceSignal,
    pub beta: f64,
    pub eps_clf: f64,
    pub rows: Vec<CbfConstraint>,
    pub u_min: f64,
    pub u_max: f64,
}

impl StepQp {
    /// Dense form over `z = (u, e)` with rows `A z ≤ b`: barrier rows first,
    /// then the tracking row, then `u ≤ u_max` and `−u ≤ −u_min`.
    pub fn to_dense(&self) -> DenseQp {
        let beta = self.beta.max(BETA_FLOOR);
        let mut qp = DenseQp::new([[1.0, 0.0], [0.0, 2.0 * beta]], [-self.reference.u_ref, 0.0]);
        for r in &self.rows {
            qp.push_row([-r.coeff_u, 0.0], r.rhs_free);
        }
        let dv = self.v - self.reference.v_ref;
        qp.push_row([2.0 * dv, -1.0], -self.eps_clf * dv * dv);
        qp.push_row([1.0, 0.0], self.u_max);
        qp.push_row([-1.0, 0.0], -self.u_min);
        qp
    }

    /// Rows (barriers and box) violated by `u`.
    pub fn violated_by(&self, u: f64) -> Vec<ConstraintSource> {
        let mut out: Vec<_> = self.rows.iter().filter(|r| !r.holds(u)).map(|r| r.source).collect();
        if u > self.u_max {
            out.push(ConstraintSource::UMax);
        }
        if u < self.u_min {
            out.push(ConstraintSource::UMin);
        }
        out
    }
}

/// Assembles the step QP from the barrier inputs and the reference.
pub fn build_step_qp(
    me: VehicleState,
    v0: f64,
    inputs: &CbfInputs,
    reference: ReferenceSignal,
    params: &ScenarioParams,
) -> StepQp {
    let gamma = ClassK { gain: params.classk_gain };
    StepQp {
        v: me.v,
        reference,
        beta: params.beta,
        eps_clf: params.eps_clf,
        rows: build_cbf_rows(me, v0, inputs, params, gamma),
        u_min: params.u_min,
        u_max: params.u_max,
    }
}
