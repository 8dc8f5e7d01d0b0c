//! Fixed-step simulation of the merging area.
//!
//! Each step runs in four phases over one shared snapshot:
//!
//! 1. held arrivals are admitted in lane order once their entry is safe;
//! 2. every vehicle builds and solves its QP from the snapshot;
//! 3. states advance by forward Euler with zero-order-hold noise;
//! 4. events are dispatched: merging-point checks, exits, first-MP passes
//!    and lane changes, then overtakes.
//!
//! Vehicles that leave the control zone keep cruising at constant speed for
//! a while, so followers and merging partners still see them.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Uniform};
use thiserror::Error;

use crate::coordinator::{
    frame_offset, ArrivalRequest, CavRecord, CoordError, ExitLane, Lane, LanePath, MpId, MpStation,
    QueueTables, VehicleId, VehicleState,
};
use crate::decision::{
    choose_exit_lane, compute_merge_point, match_constraints, merge_point_floor,
    ConstraintAssignment, MatchedCase, Partner,
};
use crate::ocbf::{
    build_step_qp, phi_p_slope, reference, CbfConstraint, CbfInputs, ConstraintSource,
    MergeNeighbor, NeighborState,
};
use crate::ocsolve::{path_length, solve_unconstrained, OcSolveError, UnconstrainedSolution};
use crate::qpsolve::{solve_qp, QpError};
use crate::report::{Metrics, SeriesPoint, VehicleLog, Violation, ViolationKind};
use crate::scenario::{ConfigError, ScenarioParams, SimConfig};

/// Barriers below this value are logged as violations.
pub const VIOLATION_LOG_TOL: f64 = 1e-9;
/// Departed vehicles are dropped this far past their exit.
const DEPARTED_KEEP: f64 = 500.0;

const STREAM_MAIN: u64 = 1;
const STREAM_MERGE: u64 = 2;
const STREAM_W1: u64 = 3;
const STREAM_W2: u64 = 4;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("reference trajectory for vehicle arriving on {lane} at t = {t}: {source}")]
    Reference {
        t: f64,
        lane: Lane,
        #[source]
        source: OcSolveError,
    },
    #[error("QP breakdown for vehicle {id} at t = {t}: {message}")]
    QpBreakdown { t: f64, id: VehicleId, message: String },
    #[error(transparent)]
    Tables(#[from] CoordError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Road {
    /// Lanes 1 and 2.
    Main,
    /// Lanes 3 and 4.
    Merge,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    pub t: f64,
    pub road: Road,
    pub lane: Lane,
    pub v0: f64,
}

/// Poisson arrivals on both roads up to `horizon`, sorted by time.
///
/// Each road draws from its own stream of the seeded generator, so changing
/// one road's rate leaves the other road's arrivals untouched.
pub fn generate_arrivals(config: &SimConfig, horizon: f64) -> Vec<Arrival> {
    let mut out = road_arrivals(config, Road::Main, horizon);
    out.extend(road_arrivals(config, Road::Merge, horizon));
    out.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.lane.cmp(&b.lane)));
    out
}

fn road_arrivals(config: &SimConfig, road: Road, horizon: f64) -> Vec<Arrival> {
    let (rate, stream, lanes) = match road {
        Road::Main => (config.arrival_rate_main, STREAM_MAIN, (Lane::L1, Lane::L2)),
        Road::Merge => (config.arrival_rate_merge, STREAM_MERGE, (Lane::L3, Lane::L4)),
    };
    if rate <= 0.0 {
        return Vec::new();
    }
    let mut rng = stream_rng(config.rng_seed, stream);
    let gap = Exp::new(rate / 3600.0).expect("positive rate");
    let speed = Uniform::new_inclusive(config.v0_low, config.v0_high).expect("valid speed range");
    let mut out = Vec::new();
    let mut t = 0.0;
    loop {
        t += gap.sample(&mut rng);
        if t >= horizon {
            return out;
        }
        let lane = if rng.random_bool(config.lane_split) { lanes.0 } else { lanes.1 };
        out.push(Arrival { t, road, lane, v0: speed.sample(&mut rng) });
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform disturbances on the position and speed channels.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    pub enabled: bool,
    pub w1_bound: f64,
    pub w2_bound: f64,
    rng_w1: ChaCha8Rng,
    rng_w2: ChaCha8Rng,
}

impl NoiseModel {
    pub fn new(config: &SimConfig) -> Self {
        Self {
            enabled: config.noise_enabled,
            w1_bound: config.w1_bound,
            w2_bound: config.w2_bound,
            rng_w1: stream_rng(config.rng_seed, STREAM_W1),
            rng_w2: stream_rng(config.rng_seed, STREAM_W2),
        }
    }

    /// One `(w1, w2)` draw; exactly zero when disabled.
    pub fn draw(&mut self) -> (f64, f64) {
        if !self.enabled {
            return (0.0, 0.0);
        }
        let draw = |rng: &mut ChaCha8Rng, bound: f64| {
            if bound > 0.0 {
                rng.random_range(-bound..=bound)
            } else {
                0.0
            }
        };
        (draw(&mut self.rng_w1, self.w1_bound), draw(&mut self.rng_w2, self.w2_bound))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    /// Keep a queue-table dump at every sample.
    pub record_tables: bool,
    /// Spacing of the time-series samples (s).
    pub sample_interval: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { record_tables: false, sample_interval: 1.0 }
    }
}

/// Controller-side data of a vehicle in the control zone.
#[derive(Debug, Clone)]
struct Active {
    sol: UnconstrainedSolution,
    v0: f64,
    assignment: ConstraintAssignment,
    t_arrival: f64,
    /// Queue index assigned on arrival.
    index: usize,
    energy: f64,
    /// `½u²` at the previous step.
    last_power: Option<f64>,
}

/// A vehicle past its exit, cruising at constant speed.
#[derive(Debug, Clone, Copy)]
struct Departed {
    original_lane: Lane,
    path: LanePath,
    x: f64,
    v: f64,
    path_length: f64,
}

/// Snapshot entry used by every controller within a step.
#[derive(Debug, Clone, Copy)]
struct Seen {
    progress: f64,
    v: f64,
    path: LanePath,
}

struct Snapshot {
    by_id: BTreeMap<VehicleId, Seen>,
    /// Ids sorted by progress, ties by id.
    order: Vec<(f64, VehicleId)>,
}

impl Snapshot {
    fn new(by_id: BTreeMap<VehicleId, Seen>) -> Self {
        let mut order: Vec<(f64, VehicleId)> = by_id.iter().map(|(&id, s)| (s.progress, id)).collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Self { by_id, order }
    }

    /// Vehicles ahead of `(progress, id)` in progress order, nearest first,
    /// up to `reach` ahead.
    fn ahead(&self, progress: f64, id: VehicleId, reach: f64) -> impl Iterator<Item = (VehicleId, &Seen)> {
        let start = self.order.partition_point(|&(p, i)| p < progress || (p == progress && i <= id));
        let before_tie = self.order[..start]
            .iter()
            .rev()
            .take_while(move |&&(p, _)| p == progress)
            .filter(move |&&(_, i)| i < id)
            .map(|&(_, i)| i)
            .collect::<Vec<_>>();
        before_tie
            .into_iter()
            .rev()
            .chain(
                self.order[start..]
                    .iter()
                    .take_while(move |&&(p, _)| p - progress <= reach)
                    .map(|&(_, i)| i),
            )
            .map(|i| (i, &self.by_id[&i]))
    }
}

/// Distance ahead beyond which any barrier row holds for every control in
/// `[u_min, u_max]`, and so cannot change the step QP.
fn row_reach(me: VehicleState, v0: f64, params: &ScenarioParams) -> f64 {
    let c = params.classk_gain;
    if !(c > 0.0) {
        return f64::INFINITY;
    }
    let lp_min = me.x.max(merge_point_floor(params) - params.l_extra).max(f64::MIN_POSITIVE);
    let slope = phi_p_slope(lp_min, v0, params);
    let step = if params.merge_step_correction { slope * me.v * params.dt } else { 0.0 };
    let u_abs = params.u_max.max(-params.u_min);
    let need = (me.v - params.v_min) + slope * me.v * me.v + (params.phi + step) * u_abs;
    (need.max(0.0) / c).cbrt() + params.phi * me.v + params.delta
}

#[derive(Debug, Clone)]
struct StepControl {
    u: f64,
    min_b: f64,
    violations: Vec<Violation>,
    infeasible: bool,
}

pub struct World {
    params: ScenarioParams,
    config: SimConfig,
    options: RunOptions,
    step_index: u64,
    tables: QueueTables,
    active: BTreeMap<VehicleId, Active>,
    departed: BTreeMap<VehicleId, Departed>,
    arrivals: Vec<Arrival>,
    next_arrival: usize,
    held: [VecDeque<Arrival>; 4],
    noise: NoiseModel,
    metrics: Metrics,
    next_sample: f64,
}

fn lane_slot(lane: Lane) -> usize {
    match lane {
        Lane::L1 => 0,
        Lane::L2 => 1,
        Lane::L3 => 2,
        Lane::L4 => 3,
    }
}

impl World {
    pub fn new(params: ScenarioParams, config: SimConfig, options: RunOptions) -> Result<Self, SimError> {
        let arrivals = generate_arrivals(&config, config.horizon);
        Self::with_arrivals(params, config, options, arrivals)
    }

    /// A world fed by an explicit arrival list instead of the Poisson streams.
    pub fn with_arrivals(
        params: ScenarioParams,
        config: SimConfig,
        options: RunOptions,
        mut arrivals: Vec<Arrival>,
    ) -> Result<Self, SimError> {
        params.validate()?;
        config.validate(&params)?;
        if !(options.sample_interval > 0.0) {
            return Err(ConfigError::invalid("sample_interval", "must be positive").into());
        }
        arrivals.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.lane.cmp(&b.lane)));
        let metrics = Metrics { arrivals: arrivals.len(), ..Metrics::default() };
        Ok(Self {
            tables: QueueTables::new(params.capacity_n),
            noise: NoiseModel::new(&config),
            params,
            config,
            options,
            step_index: 0,
            active: BTreeMap::new(),
            departed: BTreeMap::new(),
            arrivals,
            next_arrival: 0,
            held: Default::default(),
            metrics,
            next_sample: 0.0,
        })
    }

    pub fn time(&self) -> f64 {
        self.step_index as f64 * self.params.dt
    }

    pub fn tables(&self) -> &QueueTables {
        &self.tables
    }

    pub fn metrics(&self) -> &Metrics {
        &self.metrics
    }

    pub fn params(&self) -> &ScenarioParams {
        &self.params
    }

    pub fn into_metrics(self) -> Metrics {
        self.metrics
    }

    /// Unconstrained reference of an active vehicle.
    pub fn reference_of(&self, id: VehicleId) -> Option<&UnconstrainedSolution> {
        self.active.get(&id).map(|a| &a.sol)
    }

    pub fn assignment_of(&self, id: VehicleId) -> Option<&ConstraintAssignment> {
        self.active.get(&id).map(|a| &a.assignment)
    }

    /// Number of arrivals waiting at an origin.
    pub fn held_count(&self) -> usize {
        self.held.iter().map(VecDeque::len).sum()
    }

    /// Runs until the configured horizon and records a final sample.
    pub fn run_to_end(&mut self) -> Result<(), SimError> {
        let steps = (self.config.horizon / self.params.dt - 1e-9).ceil().max(0.0) as u64;
        while self.step_index < steps {
            self.step()?;
        }
        self.sample(self.time(), true);
        Ok(())
    }

    /// Advances the world by one step of `dt`.
    pub fn step(&mut self) -> Result<(), SimError> {
        let t = self.time();
        let dt = self.params.dt;
        while let Some(a) = self.arrivals.get(self.next_arrival) {
            if a.t > t + 1e-12 {
                break;
            }
            self.held[lane_slot(a.lane)].push_back(*a);
            self.next_arrival += 1;
        }
        for lane in Lane::ALL {
            while let Some(a) = self.held[lane_slot(lane)].front().copied() {
                if self.try_admit(&a, t)? {
                    self.held[lane_slot(lane)].pop_front();
                } else {
                    break;
                }
            }
        }
        self.sample(t, false);

        let seen = self.snapshot();
        let mut controls = BTreeMap::new();
        for &id in self.active.keys() {
            let record = &self.tables.get(id).expect("active vehicle has a record");
            let control = self.control(record, &seen, t)?;
            controls.insert(id, control);
        }
        for c in controls.values_mut() {
            self.metrics.violations.append(&mut c.violations);
            self.metrics.infeasible_steps += u64::from(c.infeasible);
        }

        // Integrate.
        let mut prev: BTreeMap<VehicleId, VehicleState> = BTreeMap::new();
        for (&id, control) in &controls {
            let (w1, w2) = self.noise.draw();
            let power = 0.5 * control.u * control.u;
            let act = self.active.get_mut(&id).expect("active");
            if let Some(p) = act.last_power {
                act.energy += 0.5 * (p + power) * dt;
            }
            act.last_power = Some(power);
            let rec = self.tables.get_mut(id).expect("record");
            prev.insert(id, rec.state);
            let s = rec.state;
            rec.state = VehicleState {
                x: s.x + (s.v + w1) * dt,
                v: (s.v + (control.u + w2) * dt).clamp(self.params.v_min, self.params.v_max),
            };
            self.metrics.vehicle_steps += 1;
            if control.min_b < -0.1 {
                self.metrics.steps_below_tenth += 1;
            }
        }
        for d in self.departed.values_mut() {
            d.x += d.v * dt;
        }
        self.step_index += 1;
        let t_new = self.time();
        self.dispatch_events(t, &seen, &prev, &controls)?;
        let keep = DEPARTED_KEEP;
        self.departed.retain(|_, d| d.x < d.path_length + keep);
        debug_assert!(t_new > t);
        Ok(())
    }

    fn sample(&mut self, t: f64, force: bool) {
        if !force && t + 1e-9 < self.next_sample {
            return;
        }
        if force && self.metrics.series.last().is_some_and(|p| (p.t - t).abs() < 1e-9) {
            return;
        }
        self.metrics.series.push(SeriesPoint {
            t,
            exited: self.metrics.exited(),
            avg_time: self.metrics.avg_travel_time(),
            avg_energy: self.metrics.avg_energy(),
            avg_objective: self.metrics.avg_objective(),
        });
        if self.options.record_tables {
            self.metrics.table_snapshots.push((t, self.tables.dump()));
        }
        if !force {
            self.next_sample += self.options.sample_interval;
        }
    }

    /// Whether `id` follows `leader` through its chain of merge partners.
    fn yields_to(&self, id: VehicleId, leader: VehicleId) -> bool {
        let mut stack = vec![id];
        let mut visited = BTreeSet::new();
        while let Some(v) = stack.pop() {
            if !visited.insert(v) {
                continue;
            }
            let Some(a) = self.active.get(&v) else { continue };
            for p in [a.assignment.j, a.assignment.k].into_iter().flatten() {
                if p.id == leader {
                    return true;
                }
                stack.push(p.id);
            }
        }
        false
    }

    fn snapshot(&self) -> Snapshot {
        let mut seen = BTreeMap::new();
        for r in self.tables.records() {
            seen.insert(
                r.id,
                Seen {
                    progress: r.progress(&self.params),
                    v: r.state.v,
                    path: r.lane_path(&self.params),
                },
            );
        }
        for (&id, d) in &self.departed {
            seen.insert(
                id,
                Seen {
                    progress: d.x + frame_offset(d.original_lane, &self.params),
                    v: d.v,
                    path: d.path,
                },
            );
        }
        Snapshot::new(seen)
    }

    /// Merge partners whose merging point is still ahead of `record`.
    fn live_partners(record: &CavRecord, a: &ConstraintAssignment) -> [Option<Partner>; 2] {
        let live = |p: Option<Partner>| p.filter(|p| record.state.x <= p.mp.at);
        [live(a.j), live(a.k)]
    }

    /// Barrier inputs of `record` under `assignment`, from the snapshot.
    fn cbf_inputs(
        &self,
        record: &CavRecord,
        assignment: &ConstraintAssignment,
        v0: f64,
        seen: &Snapshot,
    ) -> CbfInputs {
        let offset = frame_offset(record.original_lane, &self.params);
        let me_progress = record.state.x + offset;
        let [j, k] = Self::live_partners(record, assignment);
        let merge = |p: Option<Partner>| {
            let p = p?;
            let s = seen.by_id.get(&p.id)?;
            Some(MergeNeighbor {
                state: NeighborState { x: s.progress - offset, v: s.v },
                l_p: p.mp.at,
            })
        };
        let mine = record.lane_path(&self.params);
        let followed = assignment.ip.filter(|_| assignment.matched_case == MatchedCase::Case1);
        let neighbor = |s: &Seen| NeighborState { x: s.progress - offset, v: s.v };
        let mut ip = None;
        let mut join = None;
        let mut cut_ins: BTreeMap<u64, MergeNeighbor> = BTreeMap::new();
        let reach = row_reach(record.state, v0, &self.params);
        for (id, s) in seen.ahead(me_progress, record.id, reach) {
            // A vehicle ahead is my predecessor if we share the lane over the
            // whole stretch between us, or if it is the same-route vehicle I
            // was matched to follow.
            if ip.is_none()
                && (Some(id) == followed
                    || (s.path.lane_at(me_progress) == record.current_lane
                        && s.path.lane_at(s.progress) == mine.lane_at(s.progress)))
            {
                ip = Some(neighbor(s));
                continue;
            }
            // Before our lanes coincide, it is kept apart by a ramped gap
            // measured where they first do: my own join point, or the point
            // where it enters my lane.
            // A vehicle matched, directly or through a chain of partners, to
            // cross behind me is not a leader, wherever it is now.
            if self.yields_to(id, record.id) {
                continue;
            }
            let Some(q) = first_shared(&mine, &s.path, me_progress) else { continue };
            let after = s.progress.max(q);
            if q <= me_progress || mine.lane_at(after) != s.path.lane_at(after) {
                continue;
            }
            let n = MergeNeighbor { state: neighbor(s), l_p: q - offset };
            if mine.join.is_some_and(|(at, _)| at == q) {
                join.get_or_insert(n);
            } else {
                cut_ins.entry(q.to_bits()).or_insert(n);
            }
        }
        CbfInputs { ip, j: merge(j), k: merge(k), join, cut_ins: cut_ins.into_values().collect() }
    }

    fn control(
        &self,
        record: &CavRecord,
        seen: &Snapshot,
        t: f64,
    ) -> Result<StepControl, SimError> {
        let act = &self.active[&record.id];
        let inputs = self.cbf_inputs(record, &act.assignment, act.v0, seen);
        let r = reference(record.state, &act.sol, t, self.config.controller_mode, &self.params);
        let qp = build_step_qp(record.state, act.v0, &inputs, r, &self.params);
        let mut min_b = f64::INFINITY;
        let mut violations = Vec::new();
        for row in &qp.rows {
            min_b = min_b.min(row.b);
            if row.b < -VIOLATION_LOG_TOL {
                if let Some(kind) = row_kind(row) {
                    violations.push(Violation { t, id: record.id, kind, magnitude: -row.b });
                }
            }
        }
        let (u, infeasible) = match solve_qp(&qp.to_dense()) {
            Ok(sol) => (sol.z[0], false),
            Err(QpError::Infeasible) => {
                debug!("t = {t}: QP infeasible for {}, braking", record.id);
                violations.push(Violation { t, id: record.id, kind: ViolationKind::QpInfeasible, magnitude: 0.0 });
                (self.params.u_min, true)
            }
            Err(QpError::Breakdown(message)) => {
                return Err(SimError::QpBreakdown { t, id: record.id, message });
            }
        };
        Ok(StepControl { u, min_b, violations, infeasible })
    }

    /// Nearest active lane-2 vehicle ahead of the lane-2 origin.
    fn lane2_leader(&self) -> Option<&UnconstrainedSolution> {
        self.tables
            .records()
            .filter(|r| r.current_lane == Lane::L2)
            .min_by(|a, b| a.state.x.total_cmp(&b.state.x).then(b.id.cmp(&a.id)))
            .and_then(|r| self.active.get(&r.id))
            .map(|a| &a.sol)
    }

    /// Instantiates `a` at time `t` if every barrier is nonnegative and the
    /// entry QP is feasible. Returns whether it was admitted.
    fn try_admit(&mut self, a: &Arrival, t: f64) -> Result<bool, SimError> {
        let p = &self.params;
        let (n1, n2) = self.tables.counts();
        let exit = match a.lane {
            Lane::L1 => ExitLane::L1,
            Lane::L4 => ExitLane::L2,
            _ => choose_exit_lane(n1, n2),
        };
        let length = path_length(a.lane, exit, p);
        let sol = solve_unconstrained(t, a.v0, length, p.beta)
            .map_err(|source| SimError::Reference { t, lane: a.lane, source })?;
        let merge_point = (a.lane == Lane::L2 && exit == ExitLane::L1)
            .then(|| compute_merge_point(&sol, self.lane2_leader(), p).at);
        let req = ArrivalRequest {
            lane: a.lane,
            t,
            v0: a.v0,
            exit: matches!(a.lane, Lane::L2 | Lane::L3).then_some(exit),
            merge_point,
        };
        let record = match self.tables.preview_arrival(&req, p) {
            Ok(r) => r,
            Err(CoordError::QueueFull(..)) => return Ok(false),
            Err(e) => return Err(e.into()),
        };
        let assignment = match_constraints(&self.tables, &record);
        let seen = self.snapshot();
        let inputs = self.cbf_inputs(&record, &assignment, a.v0, &seen);
        let r = reference(record.state, &sol, t, self.config.controller_mode, p);
        let qp = build_step_qp(record.state, a.v0, &inputs, r, p);
        if qp.rows.iter().any(|row| row.b < 0.0) {
            return Ok(false);
        }
        match solve_qp(&qp.to_dense()) {
            Ok(_) => {}
            Err(QpError::Infeasible) => return Ok(false),
            Err(QpError::Breakdown(message)) => {
                return Err(SimError::QpBreakdown { t, id: record.id, message })
            }
        }
        let index = record.index;
        let id = self.tables.insert(record);
        self.active.insert(
            id,
            Active { sol, v0: a.v0, assignment, t_arrival: a.t, index, energy: 0.0, last_power: None },
        );
        self.metrics.admitted += 1;
        Ok(true)
    }

    /// Merging-point checks, exits, first-MP passes, lane joins, overtakes.
    fn dispatch_events(
        &mut self,
        t: f64,
        seen: &Snapshot,
        prev: &BTreeMap<VehicleId, VehicleState>,
        controls: &BTreeMap<VehicleId, StepControl>,
    ) -> Result<(), SimError> {
        let dt = self.params.dt;
        let now = self.snapshot();
        let ids: Vec<VehicleId> = prev.keys().copied().collect();

        struct Crossing {
            id: VehicleId,
            mp: MpStation,
            first: bool,
        }
        let mut crossings = Vec::new();
        let mut exits = Vec::new();
        for &id in &ids {
            let rec = self.tables.get(id).expect("record");
            let (x0, x1) = (prev[&id].x, rec.state.x);
            let crossed = |at: f64| x0 < at && at <= x1;
            if let Some(mp) = rec.mp_first {
                if !rec.has_passed(mp.id) && crossed(mp.at) {
                    crossings.push(Crossing { id, mp, first: true });
                }
            }
            if !rec.has_passed(rec.mp_second.id) && crossed(rec.mp_second.at) {
                crossings.push(Crossing { id, mp: rec.mp_second, first: false });
            }
            if x1 >= rec.path_length {
                exits.push(id);
            }
        }

        // Safe-merging gaps at the crossing instants.
        for c in &crossings {
            let rec = self.tables.get(c.id).expect("record");
            let act = &self.active[&c.id];
            let (s0, s1) = (prev[&c.id], rec.state);
            let f = (c.mp.at - s0.x) / (s1.x - s0.x);
            let t_c = t + f * dt;
            let v_c = s0.v + f * (s1.v - s0.v);
            let offset = frame_offset(rec.original_lane, &self.params);
            for (partner, label) in [(act.assignment.j, "j"), (act.assignment.k, "k")] {
                let Some(pt) = partner.filter(|pt| pt.mp.id == c.mp.id && pt.mp.at == c.mp.at) else {
                    continue;
                };
                let (Some(a), Some(b)) = (seen.by_id.get(&pt.id), now.by_id.get(&pt.id)) else {
                    continue;
                };
                let x_p = a.progress + f * (b.progress - a.progress) - offset;
                let gap = x_p - c.mp.at - self.params.phi * v_c - self.params.delta;
                if gap < -VIOLATION_LOG_TOL {
                    debug!("t = {t_c}: {} misses the {label} gap at {} by {}", c.id, c.mp.id, -gap);
                    self.metrics.violations.push(Violation {
                        t: t_c,
                        id: c.id,
                        kind: ViolationKind::MergeCrossing(c.mp.id),
                        magnitude: -gap,
                    });
                }
            }
        }

        for &id in &exits {
            let rec = self.tables.get(id).expect("record").clone();
            let (s0, s1) = (prev[&id], rec.state);
            let f = ((rec.path_length - s0.x) / (s1.x - s0.x)).clamp(0.0, 1.0);
            let tm = t + f * dt;
            let mut act = self.active.remove(&id).expect("active");
            // The control sampled at t is held until the exit instant.
            let u = controls[&id].u;
            act.energy += 0.5 * u * u * (tm - t);
            let log = VehicleLog {
                id,
                index: act.index,
                original_lane: rec.original_lane,
                exit_lane: rec.exit_lane,
                mp_first: rec.mp_first,
                mp_second: rec.mp_second,
                t_arrival: act.t_arrival,
                t0: rec.t_arrive,
                tm,
                energy: act.energy,
                objective: self.params.beta * (tm - rec.t_arrive) + act.energy,
            };
            self.metrics.vehicles.push(log);
            self.tables.on_exit(id)?;
            self.departed.insert(
                id,
                Departed {
                    original_lane: rec.original_lane,
                    path: rec.lane_path(&self.params),
                    x: s1.x,
                    v: s1.v,
                    path_length: rec.path_length,
                },
            );
        }

        for c in &crossings {
            let Some(rec) = self.tables.get_mut(c.id) else { continue };
            let s0 = prev[&c.id];
            let f = (c.mp.at - s0.x) / (rec.state.x - s0.x);
            rec.t_mp.push((c.mp.id, t + f * dt));
            if c.first {
                self.tables.on_first_mp_pass(c.id)?;
            } else if rec.original_lane == Lane::L3 && rec.exit_lane == ExitLane::L1 && c.mp.id == MpId::M4 {
                self.tables.set_current_lane(c.id, Lane::L1)?;
            }
        }

        for id in self.tables.out_of_order(&self.params) {
            let swaps = self.tables.on_overtake(id, &self.params)?;
            if swaps > 0 {
                debug!("t = {t}: {id} moved up {swaps} row(s)");
            }
        }
        Ok(())
    }
}

/// First position at or beyond `from` where both paths use the same lane.
fn first_shared(a: &LanePath, b: &LanePath, from: f64) -> Option<f64> {
    let mut points = vec![from];
    points.extend(a.join.map(|(at, _)| at).filter(|&at| at > from));
    points.extend(b.join.map(|(at, _)| at).filter(|&at| at > from));
    points.sort_by(f64::total_cmp);
    points.into_iter().find(|&q| a.lane_at(q) == b.lane_at(q))
}

fn row_kind(row: &CbfConstraint) -> Option<ViolationKind> {
    match row.source {
        ConstraintSource::RearEnd => Some(ViolationKind::RearEnd),
        ConstraintSource::MergeJ => Some(ViolationKind::MergeJ),
        ConstraintSource::MergeK => Some(ViolationKind::MergeK),
        ConstraintSource::MergeJoin => Some(ViolationKind::MergeJoin),
        ConstraintSource::VMax => Some(ViolationKind::VMax),
        ConstraintSource::VMin => Some(ViolationKind::VMin),
        ConstraintSource::UMax | ConstraintSource::UMin => None,
    }
}

/// Simulates one run with default options.
pub fn run(params: &ScenarioParams, config: &SimConfig) -> Result<Metrics, SimError> {
    run_with(params, config, RunOptions::default())
}

pub fn run_with(params: &ScenarioParams, config: &SimConfig, options: RunOptions) -> Result<Metrics, SimError> {
    let mut world = World::new(params.clone(), config.clone(), options)?;
    world.run_to_end()?;
    Ok(world.into_metrics())
}
