//! Run metrics and their tab-separated text form.
//!
//! Every aggregate is a plain function of the per-vehicle log, and floats
//! are written with Rust's shortest round-trip formatting, so a summary can
//! be recomputed byte-for-byte from `vehicles.tsv`.

use std::fmt::Write as _;

use crate::coordinator::{ExitLane, Lane, MpId, MpStation, VehicleId};

/// One vehicle that completed its path through the control zone.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleLog {
    pub id: VehicleId,
    /// Queue index assigned on arrival.
    pub index: usize,
    pub original_lane: Lane,
    pub exit_lane: ExitLane,
    pub mp_first: Option<MpStation>,
    pub mp_second: MpStation,
    /// Nominal arrival time at the origin.
    pub t_arrival: f64,
    /// Time the vehicle entered the control zone.
    pub t0: f64,
    /// Time it left the control zone.
    pub tm: f64,
    pub energy: f64,
    pub objective: f64,
}

impl VehicleLog {
    pub fn travel_time(&self) -> f64 {
        self.tm - self.t0
    }

    pub fn held_time(&self) -> f64 {
        self.t0 - self.t_arrival
    }
}

/// Running averages over the vehicles that have exited by time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesPoint {
    pub t: f64,
    pub exited: usize,
    pub avg_time: f64,
    pub avg_energy: f64,
    pub avg_objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ViolationKind {
    /// Rear-end barrier against the physical predecessor.
    RearEnd,
    /// Interpolated safe-merging barrier for partner `j` or `k`.
    MergeJ,
    MergeK,
    /// Interpolated barrier toward the leader in the lane being entered.
    MergeJoin,
    /// Safe-merging gap measured at the crossing of a merging point.
    MergeCrossing(MpId),
    VMax,
    VMin,
    /// No control satisfied every row; maximal braking was applied.
    QpInfeasible,
}

impl ViolationKind {
    pub fn label(self) -> String {
        match self {
            ViolationKind::RearEnd => "rear_end".into(),
            ViolationKind::MergeJ => "merge_j".into(),
            ViolationKind::MergeK => "merge_k".into(),
            ViolationKind::MergeJoin => "merge_join".into(),
            ViolationKind::MergeCrossing(mp) => format!("merge_at_{mp}"),
            ViolationKind::VMax => "v_max".into(),
            ViolationKind::VMin => "v_min".into(),
            ViolationKind::QpInfeasible => "qp_infeasible".into(),
        }
    }
}

/// A constraint found below zero; `magnitude` is how far below.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub t: f64,
    pub id: VehicleId,
    pub kind: ViolationKind,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Metrics {
    pub vehicles: Vec<VehicleLog>,
    pub series: Vec<SeriesPoint>,
    pub violations: Vec<Violation>,
    /// Vehicle-steps simulated.
    pub vehicle_steps: u64,
    /// Vehicle-steps with some barrier below `-0.1`.
    pub steps_below_tenth: u64,
    pub infeasible_steps: u64,
    /// Arrivals generated within the horizon.
    pub arrivals: usize,
    /// Arrivals admitted into the control zone.
    pub admitted: usize,
    /// Queue-table dumps `(t, text)` when recording was enabled.
    pub table_snapshots: Vec<(f64, String)>,
}

impl Metrics {
    pub fn exited(&self) -> usize {
        self.vehicles.len()
    }

    fn mean(&self, f: impl Fn(&VehicleLog) -> f64) -> f64 {
        if self.vehicles.is_empty() {
            return 0.0;
        }
        self.vehicles.iter().map(f).sum::<f64>() / self.vehicles.len() as f64
    }

    pub fn avg_travel_time(&self) -> f64 {
        self.mean(VehicleLog::travel_time)
    }

    pub fn avg_energy(&self) -> f64 {
        self.mean(|v| v.energy)
    }

    pub fn avg_objective(&self) -> f64 {
        self.mean(|v| v.objective)
    }

    pub fn max_violation(&self, pred: impl Fn(ViolationKind) -> bool) -> f64 {
        self.violations
            .iter()
            .filter(|v| pred(v.kind))
            .map(|v| v.magnitude)
            .fold(0.0, f64::max)
    }

    pub fn count_violations(&self, pred: impl Fn(ViolationKind) -> bool, above: f64) -> usize {
        self.violations
            .iter()
            .filter(|v| pred(v.kind) && v.magnitude > above)
            .count()
    }

    /// Fraction of vehicle-steps with a barrier below `-0.1`.
    pub fn fraction_below_tenth(&self) -> f64 {
        if self.vehicle_steps == 0 {
            0.0
        } else {
            self.steps_below_tenth as f64 / self.vehicle_steps as f64
        }
    }

    /// Snapshot recorded closest to `t`.
    pub fn snapshot_at(&self, t: f64) -> Option<&(f64, String)> {
        self.table_snapshots
            .iter()
            .min_by(|a, b| (a.0 - t).abs().total_cmp(&(b.0 - t).abs()))
    }

    pub fn vehicles_tsv(&self) -> String {
        let mut out = String::from(
            "id\tindex\toriginal_lane\texit_lane\tmp1\tmp1_at\tmp2\tmp2_at\tt_arrival\tt0\ttm\ttravel_time\tenergy\tobjective\n",
        );
        for v in &self.vehicles {
            let (mp1, mp1_at) = match v.mp_first {
                Some(m) => (m.id.to_string(), m.at.to_string()),
                None => ("-".to_string(), "-".to_string()),
            };
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                v.id.0,
                v.index,
                v.original_lane,
                v.exit_lane,
                mp1,
                mp1_at,
                v.mp_second.id,
                v.mp_second.at,
                v.t_arrival,
                v.t0,
                v.tm,
                v.travel_time(),
                v.energy,
                v.objective
            );
        }
        out
    }

    pub fn series_tsv(&self) -> String {
        let mut out = String::from("t\texited\tavg_time\tavg_energy\tavg_objective\n");
        for p in &self.series {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                p.t, p.exited, p.avg_time, p.avg_energy, p.avg_objective
            );
        }
        out
    }

    pub fn violations_tsv(&self) -> String {
        let mut out = String::from("t\tid\tconstraint\tmagnitude\n");
        for v in &self.violations {
            let _ = writeln!(out, "{}\t{}\t{}\t{}", v.t, v.id.0, v.kind.label(), v.magnitude);
        }
        out
    }

    /// All recorded table dumps, each introduced by a `# t = ...` line.
    pub fn tables_text(&self) -> String {
        let mut out = String::new();
        for (t, text) in &self.table_snapshots {
            let _ = writeln!(out, "# t = {t}");
            out.push_str(text);
        }
        out
    }
}

/// Averages of the columns of a `vehicles.tsv` file:
/// `(count, avg travel time, avg energy, avg objective)`.
pub fn summarize_vehicles_tsv(text: &str) -> Result<(usize, f64, f64, f64), String> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or("empty file")?.split('\t').collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| format!("missing column {name}"))
    };
    let (ct, ce, co) = (col("travel_time")?, col("energy")?, col("objective")?);
    let (mut n, mut st, mut se, mut so) = (0usize, 0.0, 0.0, 0.0);
    for line in lines.filter(|l| !l.is_empty()) {
        let f: Vec<&str> = line.split('\t').collect();
        let num = |i: usize| f.get(i).ok_or("short row")?.parse::<f64>().map_err(|e| e.to_string());
        st += num(ct)?;
        se += num(ce)?;
        so += num(co)?;
        n += 1;
    }
    if n == 0 {
        return Ok((0, 0.0, 0.0, 0.0));
    }
    let k = n as f64;
    Ok((n, st / k, se / k, so / k))
}

/// Parses a `tables.txt` file back into `(t, dump)` pairs.
pub fn parse_tables_text(text: &str) -> Result<Vec<(f64, String)>, String> {
    let mut out: Vec<(f64, String)> = Vec::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("# t = ") {
            let t = rest.trim().parse::<f64>().map_err(|e| format!("bad time {rest:?}: {e}"))?;
            out.push((t, String::new()));
        } else {
            let (_, body) = out.last_mut().ok_or("content before first time header")?;
            body.push_str(line);
            body.push('\n');
        }
    }
    Ok(out)
}
