//! The coordinator's extended FIFO queue tables.
//!
//! Two queues track the vehicles by exit lane: `S1` for lane 1 and `S2` for
//! lane 2. Lane-2 queue indices are drawn from `0..n`, lane-1 indices from
//! `n..2n`, so the index alone tells which exit a vehicle takes. Vehicles
//! arriving on lanes 2 and 3 may conflict with both exits and are listed in
//! both queues until they pass their first merging point.
//!
//! Each row carries the columns a newly arriving vehicle needs to resolve
//! its constraints: index, current lane, original lane, first and second
//! merging point. Records are stored once and referenced from both queues
//! by [`VehicleId`], so the two listings can never disagree.
//!
//! Positions are path coordinates from each vehicle's own origin. Lane-1
//! paths are `l_extra` shorter than lane-2/3 paths that end on lane 1, so
//! comparing progress across lanes goes through [`CavRecord::progress`],
//! which expresses every position in the lane-2/3 frame.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::ScenarioParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoordError {
    #[error("queue for exit lane {0} is full (capacity {1})")]
    QueueFull(ExitLane, usize),
    #[error("vehicle {0} is not in the queue tables")]
    UnknownVehicle(VehicleId),
    #[error("lane {0} arrivals need an exit-lane decision")]
    MissingDecision(Lane),
    #[error("lane {0} arrivals cannot exit through lane {1}")]
    InvalidExit(Lane, ExitLane),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Lane {
    L1,
    L2,
    L3,
    L4,
}

impl Lane {
    pub const ALL: [Lane; 4] = [Lane::L1, Lane::L2, Lane::L3, Lane::L4];
}

impl fmt::Display for Lane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Lane::L1 => "l1",
            Lane::L2 => "l2",
            Lane::L3 => "l3",
            Lane::L4 => "l4",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ExitLane {
    L1,
    L2,
}

impl ExitLane {
    pub fn queue(self) -> QueueId {
        match self {
            ExitLane::L1 => QueueId::S1,
            ExitLane::L2 => QueueId::S2,
        }
    }
}

impl fmt::Display for ExitLane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExitLane::L1 => f.write_str("l1"),
            ExitLane::L2 => f.write_str("l2"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum QueueId {
    S1,
    S2,
}

impl QueueId {
    pub fn other(self) -> QueueId {
        match self {
            QueueId::S1 => QueueId::S2,
            QueueId::S2 => QueueId::S1,
        }
    }
}

/// Merging point identifiers. `Mi1` is the vehicle-specific lane-change
/// point from lane 2 into lane 1; it matches any other `Mi1` in the tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MpId {
    Mi1,
    M2,
    M3,
    M4,
}

impl fmt::Display for MpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MpId::Mi1 => "Mi1",
            MpId::M2 => "M2",
            MpId::M3 => "M3",
            MpId::M4 => "M4",
        };
        f.write_str(s)
    }
}

/// A merging point together with its position along the owner's path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpStation {
    pub id: MpId,
    pub at: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VehicleId(pub u64);

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub v: f64,
}

/// Which queue family an index belongs to: `One` for `i ≥ n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueueType {
    One,
    Two,
}

/// One vehicle's row in the queue tables.
#[derive(Debug, Clone, PartialEq)]
pub struct CavRecord {
    pub id: VehicleId,
    pub index: usize,
    pub original_lane: Lane,
    pub current_lane: Lane,
    pub mp_first: Option<MpStation>,
    pub mp_second: MpStation,
    pub t_arrive: f64,
    pub v_arrive: f64,
    /// Lane-change point `L_i1` of a lane-2 arrival leaving through lane 1.
    pub merge_point: Option<f64>,
    pub state: VehicleState,
    pub exit_lane: ExitLane,
    pub path_length: f64,
    pub t_exit: Option<f64>,
    /// Crossing times of the merging points passed so far.
    pub t_mp: Vec<(MpId, f64)>,
}

impl CavRecord {
    pub fn queue_type(&self, n: usize) -> QueueType {
        if self.index >= n {
            QueueType::One
        } else {
            QueueType::Two
        }
    }

    /// Position in the common lane-2/3 frame.
    pub fn progress(&self, params: &ScenarioParams) -> f64 {
        self.state.x + frame_offset(self.original_lane, params)
    }

    pub fn lane_path(&self, params: &ScenarioParams) -> LanePath {
        LanePath::new(self.original_lane, self.exit_lane, self.merge_point, params)
    }

    pub fn has_passed(&self, mp: MpId) -> bool {
        self.t_mp.iter().any(|(id, _)| *id == mp)
    }

    /// Whether this vehicle is listed in both queues until its first MP.
    pub fn is_dual_listed(&self) -> bool {
        matches!(self.original_lane, Lane::L2 | Lane::L3)
    }

    /// Lane the vehicle ends in after passing its first merging point.
    pub fn lane_after_first_mp(&self) -> Lane {
        match (self.original_lane, self.exit_lane) {
            (Lane::L2, ExitLane::L1) => Lane::L1,
            (Lane::L3, ExitLane::L2) => Lane::L2,
            // Lane-3 vehicles bound for lane 1 cross lane 2 at M2 and join
            // lane 1 only at M4.
            (lane, _) => lane,
        }
    }
}

/// The lanes a vehicle occupies along the common frame: its original lane,
/// then at most one other lane from a join position on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LanePath {
    pub original: Lane,
    /// `(position, lane)` where the vehicle enters its second lane.
    pub join: Option<(f64, Lane)>,
}

impl LanePath {
    pub fn new(original: Lane, exit: ExitLane, merge_point: Option<f64>, params: &ScenarioParams) -> Self {
        let join = match (original, exit) {
            (Lane::L2, ExitLane::L1) => Some((merge_point.unwrap_or(params.l2), Lane::L1)),
            (Lane::L3, ExitLane::L2) => Some((params.l2, Lane::L2)),
            (Lane::L3, ExitLane::L1) => Some((params.m4_from_lane2(), Lane::L1)),
            (Lane::L4, _) => Some((params.l3, Lane::L2)),
            _ => None,
        };
        Self { original, join }
    }

    /// Lane occupied at common-frame position `s`.
    pub fn lane_at(&self, s: f64) -> Lane {
        match self.join {
            Some((at, lane)) if s >= at => lane,
            _ => self.original,
        }
    }
}

/// Offset from a lane's own path coordinate to the common frame.
pub fn frame_offset(original: Lane, params: &ScenarioParams) -> f64 {
    match original {
        Lane::L1 => params.l_extra,
        _ => 0.0,
    }
}

/// Position of `other` expressed in `me`'s path coordinate.
pub fn transform_position(me: Lane, other: Lane, x_other: f64, params: &ScenarioParams) -> f64 {
    x_other + frame_offset(other, params) - frame_offset(me, params)
}

/// A vehicle entering the control zone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrivalRequest {
    pub lane: Lane,
    pub t: f64,
    pub v0: f64,
    /// Exit decision for lane-2/3 arrivals; ignored for lanes 1 and 4.
    pub exit: Option<ExitLane>,
    /// `L_i1` for lane-2 arrivals switching to lane 1 (defaults to `L2`).
    pub merge_point: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueueTables {
    n: usize,
    records: BTreeMap<VehicleId, CavRecord>,
    s1: Vec<VehicleId>,
    s2: Vec<VehicleId>,
    next_id: u64,
}

impl QueueTables {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            records: BTreeMap::new(),
            s1: Vec::new(),
            s2: Vec::new(),
            next_id: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn get(&self, id: VehicleId) -> Option<&CavRecord> {
        self.records.get(&id)
    }

    pub fn get_mut(&mut self, id: VehicleId) -> Option<&mut CavRecord> {
        self.records.get_mut(&id)
    }

    /// All records in id (arrival) order.
    pub fn records(&self) -> impl Iterator<Item = &CavRecord> {
        self.records.values()
    }

    pub fn ids(&self) -> Vec<VehicleId> {
        self.records.keys().copied().collect()
    }

    pub fn queue_ids(&self, q: QueueId) -> &[VehicleId] {
        match q {
            QueueId::S1 => &self.s1,
            QueueId::S2 => &self.s2,
        }
    }

    fn queue_mut(&mut self, q: QueueId) -> &mut Vec<VehicleId> {
        match q {
            QueueId::S1 => &mut self.s1,
            QueueId::S2 => &mut self.s2,
        }
    }

    /// Rows of a queue, top to bottom.
    pub fn queue(&self, q: QueueId) -> impl Iterator<Item = &CavRecord> {
        self.queue_ids(q).iter().map(|id| &self.records[id])
    }

    pub fn contains(&self, q: QueueId, id: VehicleId) -> bool {
        self.queue_ids(q).contains(&id)
    }

    pub fn row_of(&self, q: QueueId, id: VehicleId) -> Option<usize> {
        self.queue_ids(q).iter().position(|x| *x == id)
    }

    /// `(N1, N2)`: vehicles currently bound for each exit lane.
    pub fn counts(&self) -> (usize, usize) {
        let n1 = self
            .records
            .values()
            .filter(|r| r.exit_lane == ExitLane::L1)
            .count();
        (n1, self.records.len() - n1)
    }

    pub fn queue_type(&self, id: VehicleId) -> Option<QueueType> {
        self.records.get(&id).map(|r| r.queue_type(self.n))
    }

    /// Builds the record an arrival would receive, without inserting it.
    pub fn preview_arrival(
        &self,
        req: &ArrivalRequest,
        params: &ScenarioParams,
    ) -> Result<CavRecord, CoordError> {
        let exit = match req.lane {
            Lane::L1 => ExitLane::L1,
            Lane::L4 => ExitLane::L2,
            lane => req.exit.ok_or(CoordError::MissingDecision(lane))?,
        };
        if let (Lane::L1, Some(ExitLane::L2)) | (Lane::L4, Some(ExitLane::L1)) = (req.lane, req.exit) {
            return Err(CoordError::InvalidExit(req.lane, req.exit.unwrap()));
        }
        let (n1, n2) = self.counts();
        let index = match exit {
            ExitLane::L1 if n1 >= self.n => return Err(CoordError::QueueFull(exit, self.n)),
            ExitLane::L2 if n2 >= self.n => return Err(CoordError::QueueFull(exit, self.n)),
            ExitLane::L1 => self.n + n1,
            ExitLane::L2 => n2,
        };
        let m2 = MpStation { id: MpId::M2, at: params.l2 };
        let m3 = MpStation { id: MpId::M3, at: params.l3 };
        let m4_lane2 = MpStation { id: MpId::M4, at: params.m4_from_lane2() };
        let mut merge_point = None;
        let (mp_first, mp_second) = match (req.lane, exit) {
            (Lane::L1, _) => (self.lane1_first_mp(params), MpStation { id: MpId::M4, at: params.l4 }),
            (Lane::L2, ExitLane::L2) => (Some(m2), m3),
            (Lane::L2, ExitLane::L1) => {
                let at = req.merge_point.unwrap_or(params.l2);
                merge_point = Some(at);
                (Some(MpStation { id: MpId::Mi1, at }), m4_lane2)
            }
            (Lane::L3, ExitLane::L1) => (Some(m2), m4_lane2),
            (Lane::L3, ExitLane::L2) => (Some(m2), m3),
            (Lane::L4, _) => (None, m3),
        };
        let path_length = crate::ocsolve::path_length(req.lane, exit, params);
        Ok(CavRecord {
            id: VehicleId(self.next_id),
            index,
            original_lane: req.lane,
            current_lane: req.lane,
            mp_first,
            mp_second,
            t_arrive: req.t,
            v_arrive: req.v0,
            merge_point,
            state: VehicleState { x: 0.0, v: req.v0 },
            exit_lane: exit,
            path_length,
            t_exit: None,
            t_mp: Vec::new(),
        })
    }

    /// A lane-1 arrival passes a first merging point only when the previous
    /// lane-1-bound vehicle is a lane-2 vehicle that has not changed lanes
    /// yet: it will cut in at its `M_{i,1}`.
    fn lane1_first_mp(&self, params: &ScenarioParams) -> Option<MpStation> {
        let prev = self
            .records
            .values()
            .filter(|r| r.exit_lane == ExitLane::L1)
            .max_by_key(|r| r.index)?;
        match (prev.original_lane, prev.current_lane, prev.merge_point) {
            (Lane::L2, Lane::L2, Some(at)) => Some(MpStation {
                id: MpId::Mi1,
                at: (at - params.l_extra).max(0.0),
            }),
            _ => None,
        }
    }

    /// Inserts a record built by [`preview_arrival`](Self::preview_arrival)
    /// at the tail of its queue(s).
    pub fn insert(&mut self, record: CavRecord) -> VehicleId {
        let id = record.id;
        self.next_id = self.next_id.max(id.0 + 1);
        if record.is_dual_listed() {
            self.s1.push(id);
            self.s2.push(id);
        } else {
            self.queue_mut(record.exit_lane.queue()).push(id);
        }
        self.records.insert(id, record);
        id
    }

    /// Assigns an index to a new arrival and appends it to its queue(s).
    pub fn assign_arrival(
        &mut self,
        req: &ArrivalRequest,
        params: &ScenarioParams,
    ) -> Result<VehicleId, CoordError> {
        let record = self.preview_arrival(req, params)?;
        Ok(self.insert(record))
    }

    /// Removes a vehicle leaving the control zone and renumbers the queue
    /// family it belongs to.
    ///
    /// Indices of the same type above the leaver shift down by one; in FIFO
    /// order the leaver holds index `0` (or `n`) and this is exactly "all
    /// indices decrement, the one reaching −1 (or `n−1`) is dropped".
    pub fn on_exit(&mut self, id: VehicleId) -> Result<CavRecord, CoordError> {
        let record = self
            .records
            .remove(&id)
            .ok_or(CoordError::UnknownVehicle(id))?;
        self.s1.retain(|x| *x != id);
        self.s2.retain(|x| *x != id);
        let ty = record.queue_type(self.n);
        let n = self.n;
        for r in self.records.values_mut() {
            if r.queue_type(n) == ty && r.index > record.index {
                r.index -= 1;
            }
        }
        Ok(record)
    }

    /// Handles a dual-listed vehicle passing its first merging point: it is
    /// dropped from the queue of the exit it did not choose, and its current
    /// lane follows a physical lane change. Returns whether the lane changed.
    pub fn on_first_mp_pass(&mut self, id: VehicleId) -> Result<bool, CoordError> {
        let record = self.records.get_mut(&id).ok_or(CoordError::UnknownVehicle(id))?;
        if !record.is_dual_listed() {
            return Ok(false);
        }
        let drop_from = record.exit_lane.queue().other();
        let new_lane = record.lane_after_first_mp();
        let changed = record.current_lane != new_lane;
        record.current_lane = new_lane;
        self.queue_mut(drop_from).retain(|x| *x != id);
        Ok(changed)
    }

    /// Updates the current-lane column, e.g. when a lane-3 vehicle joins
    /// lane 1 at M4.
    pub fn set_current_lane(&mut self, id: VehicleId, lane: Lane) -> Result<bool, CoordError> {
        let record = self.records.get_mut(&id).ok_or(CoordError::UnknownVehicle(id))?;
        let changed = record.current_lane != lane;
        record.current_lane = lane;
        Ok(changed)
    }

    /// Moves a vehicle up its queue(s) past every row it has physically
    /// overtaken, swapping whole rows. Returns the number of swaps.
    pub fn on_overtake(&mut self, id: VehicleId, params: &ScenarioParams) -> Result<usize, CoordError> {
        let me = self
            .records
            .get(&id)
            .ok_or(CoordError::UnknownVehicle(id))?
            .progress(params);
        let mut swaps = 0;
        for q in [QueueId::S1, QueueId::S2] {
            let Some(mut row) = self.row_of(q, id) else {
                continue;
            };
            while row > 0 {
                let above = self.queue_ids(q)[row - 1];
                if self.records[&above].progress(params) >= me {
                    break;
                }
                self.queue_mut(q).swap(row - 1, row);
                row -= 1;
                swaps += 1;
            }
        }
        Ok(swaps)
    }

    /// Vehicles that are ahead (in progress) of the row directly above them.
    pub fn out_of_order(&self, params: &ScenarioParams) -> Vec<VehicleId> {
        let mut found = Vec::new();
        for q in [QueueId::S1, QueueId::S2] {
            let ids = self.queue_ids(q);
            for w in ids.windows(2) {
                if self.records[&w[1]].progress(params) > self.records[&w[0]].progress(params)
                    && !found.contains(&w[1])
                {
                    found.push(w[1]);
                }
            }
        }
        found
    }

    /// Checks the structural invariants of the tables.
    pub fn check_consistency(&self) -> Result<(), String> {
        for q in [QueueId::S1, QueueId::S2] {
            let ids = self.queue_ids(q);
            let mut seen = std::collections::BTreeSet::new();
            for id in ids {
                if !seen.insert(*id) {
                    return Err(format!("{id} listed twice in {q:?}"));
                }
                if !self.records.contains_key(id) {
                    return Err(format!("{id} in {q:?} has no record"));
                }
            }
        }
        for r in self.records.values() {
            let in1 = self.contains(QueueId::S1, r.id);
            let in2 = self.contains(QueueId::S2, r.id);
            let own = self.contains(r.exit_lane.queue(), r.id);
            if !own {
                return Err(format!("{} missing from its exit queue", r.id));
            }
            let first_passed = r.mp_first.is_some_and(|mp| r.has_passed(mp.id));
            let expect_both = r.is_dual_listed() && !first_passed;
            if expect_both != (in1 && in2) {
                return Err(format!("{} dual listing is wrong", r.id));
            }
        }
        let (n1, n2) = self.counts();
        let mut idx1: Vec<usize> = Vec::new();
        let mut idx2: Vec<usize> = Vec::new();
        for r in self.records.values() {
            match r.queue_type(self.n) {
                QueueType::One => idx1.push(r.index),
                QueueType::Two => idx2.push(r.index),
            }
            let expected = match r.exit_lane {
                ExitLane::L1 => QueueType::One,
                ExitLane::L2 => QueueType::Two,
            };
            if r.queue_type(self.n) != expected {
                return Err(format!("{} has index {} of the wrong type", r.id, r.index));
            }
        }
        idx1.sort_unstable();
        idx2.sort_unstable();
        if idx1 != (self.n..self.n + n1).collect::<Vec<_>>() {
            return Err(format!("lane-1 indices not contiguous: {idx1:?}"));
        }
        if idx2 != (0..n2).collect::<Vec<_>>() {
            return Err(format!("lane-2 indices not contiguous: {idx2:?}"));
        }
        Ok(())
    }

    /// Formats an index the way the tables print it (`n+3` for lane 1).
    pub fn index_label(&self, index: usize) -> String {
        if index >= self.n {
            match index - self.n {
                0 => "n".to_string(),
                k => format!("n+{k}"),
            }
        } else {
            index.to_string()
        }
    }

    /// Plain-text dump of both tables with the columns index, current lane,
    /// original lane, first MP and second MP.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (name, q) in [("S1", QueueId::S1), ("S2", QueueId::S2)] {
            let _ = writeln!(out, "{name}");
            let _ = writeln!(out, "index\tcurrent\toriginal\tmp1\tmp2");
            for r in self.queue(q) {
                let mp1 = r.mp_first.map_or("-".to_string(), |m| m.id.to_string());
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}",
                    self.index_label(r.index),
                    r.current_lane,
                    r.original_lane,
                    mp1,
                    r.mp_second.id
                );
            }
        }
        out
    }
}
