//! Lane decision, merging-point placement and safe-merging constraint lookup.

use thiserror::Error;

use crate::coordinator::{CavRecord, ExitLane, Lane, MpId, MpStation, QueueTables, VehicleId};
use crate::ocsolve::{eval_trajectory, UnconstrainedSolution};
use crate::scenario::ScenarioParams;

/// Smallest admissible lane-change point, in metres from the origin.
pub const MIN_MERGE_POINT: f64 = 1.0;

/// Time tolerance of the merging-point root search, in seconds.
pub const ROOT_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecisionError {
    #[error("case count needs at least one merging point")]
    NoMergingPoints,
    #[error("case count for {0} merging points overflows u64")]
    Overflow(usize),
}

/// Shortest queue first; ties stay on lane 2.
pub fn choose_exit_lane(n1: usize, n2: usize) -> ExitLane {
    if n1 < n2 {
        ExitLane::L1
    } else {
        ExitLane::L2
    }
}

/// Result of the lane-change point search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergePoint {
    /// Position of the lane-change point along the lane-2 path.
    pub at: f64,
    /// Time the rear-end constraint with the lane-2 predecessor first binds.
    pub t_active: Option<f64>,
}

/// Places `M_{i,1}` where the rear-end constraint with the lane-2
/// predecessor first becomes active along both unconstrained trajectories.
///
/// Without a predecessor, or if the constraint never binds before `M2`,
/// the vehicle changes lanes at `L2`.
pub fn compute_merge_point(
    sol_i: &UnconstrainedSolution,
    sol_ip: Option<&UnconstrainedSolution>,
    params: &ScenarioParams,
) -> MergePoint {
    let fallback = MergePoint { at: params.l2, t_active: None };
    let Some(sol_ip) = sol_ip else {
        return fallback;
    };
    let t0 = sol_i.t0;
    let t_m2 = time_at_position(sol_i, params.l2);
    let gap = |t: f64| {
        let me = eval_trajectory(sol_i, t);
        let ip = eval_trajectory(sol_ip, t);
        ip.x - me.x - params.phi * me.v - params.delta
    };
    let step = params.dt.max(1e-3);
    let mut lo = t0;
    let mut g_lo = gap(lo);
    if g_lo <= 0.0 {
        return clamp(MergePoint { at: eval_trajectory(sol_i, t0).x, t_active: Some(t0) }, params);
    }
    while lo < t_m2 {
        let hi = (lo + step).min(t_m2);
        let g_hi = gap(hi);
        if g_hi <= 0.0 {
            let t_a = bisect(&gap, lo, hi, g_lo);
            let at = eval_trajectory(sol_i, t_a).x;
            return clamp(MergePoint { at, t_active: Some(t_a) }, params);
        }
        lo = hi;
        g_lo = g_hi;
    }
    fallback
}

/// Lowest position a variable merging point can take.
pub fn merge_point_floor(params: &ScenarioParams) -> f64 {
    params.min_merge_point.max(MIN_MERGE_POINT).min(params.l2)
}

fn clamp(mp: MergePoint, params: &ScenarioParams) -> MergePoint {
    MergePoint { at: mp.at.clamp(merge_point_floor(params), params.l2), ..mp }
}

fn bisect(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, mut f_lo: f64) -> f64 {
    while hi - lo > ROOT_TOL {
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid);
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// First time the unconstrained trajectory reaches `x`.
pub fn time_at_position(sol: &UnconstrainedSolution, x: f64) -> f64 {
    let (mut lo, mut hi) = (sol.t0, sol.tm);
    if eval_trajectory(sol, hi).x < x {
        let v = sol.v0.max(1e-9);
        return sol.tm + (x - eval_trajectory(sol, sol.tm).x) / v;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if eval_trajectory(sol, mid).x < x {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-10 {
            break;
        }
    }
    hi
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchedCase {
    Case1,
    Case2,
    Case3,
    Case4,
    None,
}

/// A safe-merging partner and the merging point (on my path) it is bound to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Partner {
    pub id: VehicleId,
    pub index: usize,
    pub mp: MpStation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintAssignment {
    pub ip: Option<VehicleId>,
    pub j: Option<Partner>,
    pub k: Option<Partner>,
    pub matched_case: MatchedCase,
    /// `k` coincides with `ip`, so its constraint duplicates the rear-end one.
    pub k_redundant: bool,
}

impl ConstraintAssignment {
    pub fn constraint_count(&self) -> usize {
        usize::from(self.ip.is_some()) + usize::from(self.j.is_some()) + usize::from(self.k.is_some())
    }
}

/// Looks up the safe-merging partners of `me` in its own exit queue.
///
/// Rows above `me` are scanned bottom-up and the scan stops at the first row
/// satisfying one of the four cases, checked in order per row:
///
/// 1. original lane and both MP columns equal: follow that row as `ip`;
/// 2. first MP equal, same queue type: `j` at the first MP;
/// 3. first MP equal, different type: `j` at the first MP, `k` is the next
///    row up whose second MP equals mine;
/// 4. second MP equal: `j` at the second MP (at my lane-change point if `j`
///    is a lane-1 vehicle), `k` is the next row up whose first MP equals
///    mine, bound to the first MP.
///
/// Outside case 1, `ip` is the nearest row above with my current lane.
pub fn match_constraints(tables: &QueueTables, me: &CavRecord) -> ConstraintAssignment {
    let n = tables.capacity();
    let q = me.exit_lane.queue();
    let rows: Vec<&CavRecord> = tables.queue(q).collect();
    let top = rows.iter().position(|r| r.id == me.id).unwrap_or(rows.len());
    let above = &rows[..top];
    let ip_scan = above
        .iter()
        .rev()
        .find(|r| r.current_lane == me.current_lane)
        .map(|r| r.id);
    let first_eq = |r: &CavRecord| match (r.mp_first, me.mp_first) {
        (Some(a), Some(b)) => a.id == b.id,
        _ => false,
    };
    let second_eq = |r: &CavRecord| r.mp_second.id == me.mp_second.id;

    for (row, r) in above.iter().enumerate().rev() {
        let case1 = r.original_lane == me.original_lane
            && r.mp_first.map(|m| m.id) == me.mp_first.map(|m| m.id)
            && second_eq(r);
        if case1 {
            return ConstraintAssignment {
                ip: Some(r.id),
                j: None,
                k: None,
                matched_case: MatchedCase::Case1,
                k_redundant: false,
            };
        }
        if first_eq(r) {
            let mp1 = me.mp_first.expect("first MP matched");
            let j = Some(Partner { id: r.id, index: r.index, mp: mp1 });
            if r.queue_type(n) == me.queue_type(n) {
                return ConstraintAssignment {
                    ip: ip_scan,
                    j,
                    k: None,
                    matched_case: MatchedCase::Case2,
                    k_redundant: false,
                };
            }
            let k = above[..row]
                .iter()
                .rev()
                .find(|x| second_eq(x))
                .map(|x| Partner { id: x.id, index: x.index, mp: me.mp_second });
            return with_k(ip_scan, j, k, MatchedCase::Case3);
        }
        if second_eq(r) {
            let j = Some(Partner { id: r.id, index: r.index, mp: case4_station(me, r) });
            let k = me.mp_first.and_then(|mp1| {
                above[..row]
                    .iter()
                    .rev()
                    .find(|x| first_eq(x))
                    .map(|x| Partner { id: x.id, index: x.index, mp: mp1 })
            });
            return with_k(ip_scan, j, k, MatchedCase::Case4);
        }
    }
    ConstraintAssignment { ip: ip_scan, j: None, k: None, matched_case: MatchedCase::None, k_redundant: false }
}

/// Station of the case-4 partner `j`: the lane-change point when `j` is
/// already driving on lane 1 there, otherwise the second merging point.
fn case4_station(me: &CavRecord, j: &CavRecord) -> MpStation {
    match me.mp_first {
        Some(mp) if mp.id == MpId::Mi1 && j.original_lane == Lane::L1 => mp,
        _ => me.mp_second,
    }
}

fn with_k(
    ip: Option<VehicleId>,
    j: Option<Partner>,
    k: Option<Partner>,
    matched_case: MatchedCase,
) -> ConstraintAssignment {
    let k_redundant = matches!((k, ip), (Some(k), Some(ip)) if k.id == ip);
    ConstraintAssignment { ip, j, k, matched_case, k_redundant }
}

/// Number of constraint cases a vehicle passing `n_mps` merging points may
/// face: `S_n + 1` with `S_1 = 1`, `S_n = 1 + 2 S_{n-1} + S_{n-2} + … + S_1`.
pub fn case_count(n_mps: usize) -> Result<u64, DecisionError> {
    if n_mps == 0 {
        return Err(DecisionError::NoMergingPoints);
    }
    let mut s: Vec<u64> = vec![1];
    let mut prefix: u64 = 1; // S_1 + … + S_{m-1}
    for m in 2..=n_mps {
        let last = s[m - 2];
        // 1 + 2 S_{m-1} + (S_{m-2} + … + S_1) = 1 + S_{m-1} + prefix
        let next = last
            .checked_add(prefix)
            .and_then(|x| x.checked_add(1))
            .ok_or(DecisionError::Overflow(n_mps))?;
        prefix = prefix.checked_add(next).ok_or(DecisionError::Overflow(n_mps))?;
        s.push(next);
    }
    s[n_mps - 1].checked_add(1).ok_or(DecisionError::Overflow(n_mps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coordinator::{ArrivalRequest, QueueId};
    use crate::ocsolve::solve_unconstrained;
    use proptest::prelude::*;

    #[test]
    fn exit_lane_rule() {
        assert_eq!(choose_exit_lane(0, 0), ExitLane::L2);
        assert_eq!(choose_exit_lane(1, 2), ExitLane::L1);
        assert_eq!(choose_exit_lane(3, 3), ExitLane::L2);
        assert_eq!(choose_exit_lane(4, 3), ExitLane::L2);
    }

    #[test]
    fn case_counts() {
        assert_eq!(case_count(1), Ok(2));
        assert_eq!(case_count(2), Ok(4));
        assert_eq!(case_count(5), Ok(56));
        assert_eq!(case_count(0), Err(DecisionError::NoMergingPoints));
        assert!(matches!(case_count(200), Err(DecisionError::Overflow(200))));
    }

    fn brute_s(n: usize) -> u64 {
        // Direct transcription of the recursion.
        if n == 1 {
            return 1;
        }
        let mut s = 1 + 2 * brute_s(n - 1);
        for m in 1..n - 1 {
            s += brute_s(m);
        }
        s
    }

    #[test]
    fn case_count_matches_recursion() {
        for n in 1..=8 {
            assert_eq!(case_count(n).unwrap(), brute_s(n) + 1, "n = {n}");
        }
    }

    fn p() -> ScenarioParams {
        ScenarioParams { capacity_n: 100, min_merge_point: 0.0, ..ScenarioParams::default() }
    }

    #[test]
    fn merge_point_without_predecessor_is_l2() {
        let p = p();
        let sol = solve_unconstrained(0.0, 16.0, p.l3 + p.l_extra, 1.0).unwrap();
        let mp = compute_merge_point(&sol, None, &p);
        assert_eq!(mp, MergePoint { at: 400.0, t_active: None });
    }

    #[test]
    fn merge_point_with_fast_leader_is_l2() {
        let p = p();
        let me = solve_unconstrained(5.0, 15.0, p.l3 + p.l_extra, 1.0).unwrap();
        let ip = solve_unconstrained(0.0, 20.0, p.l3, 1.0).unwrap();
        assert_eq!(compute_merge_point(&me, Some(&ip), &p).at, p.l2);
    }

    fn constant_speed(t0: f64, v: f64, length: f64) -> UnconstrainedSolution {
        // Zero-acceleration profile: a = b = 0, c = v, d = 0.
        UnconstrainedSolution {
            a: 0.0,
            b: 0.0,
            c: v,
            d: 0.0,
            t0,
            tm: t0 + length / v,
            length,
            v0: v,
            beta: 0.0,
        }
    }

    #[test]
    fn merge_point_matches_residual_scan() {
        let p = p();
        let ip = constant_speed(0.0, 15.0, p.l3);
        // Large beta drives i to a fast, nearly linear profile that catches up.
        let me = solve_unconstrained(5.0, 20.0, p.l3 + p.l_extra, 50.0).unwrap();
        let mp = compute_merge_point(&me, Some(&ip), &p);
        let t_a = mp.t_active.expect("constraint becomes active");

        // Oracle: scan the residual at dt/10 and take the first non-positive sample.
        let step = p.dt / 10.0;
        let resid = |t: f64| {
            let a = eval_trajectory(&me, t);
            let b = eval_trajectory(&ip, t);
            b.x - a.x - p.phi * a.v - p.delta
        };
        let mut t = me.t0;
        while resid(t) > 0.0 {
            t += step;
        }
        assert!((t - t_a).abs() <= step + ROOT_TOL, "oracle {t}, got {t_a}");
        assert!(t_a > me.t0);
        assert!(resid(t_a).abs() < 1e-3);
        assert!(mp.at > 0.0 && mp.at < p.l2);
        assert!((mp.at - eval_trajectory(&me, t_a).x).abs() < 1e-9);
    }

    #[test]
    fn merge_point_when_already_too_close() {
        let p = p();
        let ip = constant_speed(0.0, 15.0, p.l3);
        let me = solve_unconstrained(0.1, 20.0, p.l3 + p.l_extra, 1.0).unwrap();
        let mp = compute_merge_point(&me, Some(&ip), &p);
        assert_eq!(mp.at, MIN_MERGE_POINT);
    }

    #[test]
    fn merge_point_respects_configured_floor() {
        let p = ScenarioParams { capacity_n: 100, ..ScenarioParams::default() };
        let ip = constant_speed(0.0, 15.0, p.l3);
        let me = solve_unconstrained(0.1, 20.0, p.l3 + p.l_extra, 1.0).unwrap();
        let mp = compute_merge_point(&me, Some(&ip), &p);
        assert_eq!(mp.at, p.min_merge_point);
        assert_eq!(merge_point_floor(&p), 100.0);
    }

    /// Builds the example tables. Arrival order:
    /// 0 (l4), 1 (l4), n (l1), n+1 (l3 to l1), 2 (l2), n+2 (l2 to l1),
    /// 3 (l2), n+3 (l2 to l1), 4 (l4), n+4 (l1), 5 (l2).
    /// Vehicle n+2 has already changed lanes.
    fn example() -> (QueueTables, Vec<(String, VehicleId)>) {
        let p = p();
        let mut t = QueueTables::new(100);
        let plan = [
            ("0", Lane::L4, None),
            ("1", Lane::L4, None),
            ("n", Lane::L1, None),
            ("n+1", Lane::L3, Some(ExitLane::L1)),
            ("2", Lane::L2, Some(ExitLane::L2)),
            ("n+2", Lane::L2, Some(ExitLane::L1)),
            ("3", Lane::L2, Some(ExitLane::L2)),
            ("n+3", Lane::L2, Some(ExitLane::L1)),
            ("4", Lane::L4, None),
            ("n+4", Lane::L1, None),
            ("5", Lane::L2, Some(ExitLane::L2)),
        ];
        let mut ids = Vec::new();
        for (name, lane, exit) in plan {
            if name == "n+3" {
                let np2 = ids.iter().find(|(s, _): &&(String, VehicleId)| s == "n+2").unwrap().1;
                t.on_first_mp_pass(np2).unwrap();
                t.get_mut(np2).unwrap().t_mp.push((MpId::Mi1, 0.0));
            }
            let req = ArrivalRequest { lane, t: 0.0, v0: 16.0, exit, merge_point: Some(380.0) };
            let id = t.assign_arrival(&req, &p).unwrap();
            assert_eq!(t.index_label(t.get(id).unwrap().index), name);
            ids.push((name.to_string(), id));
        }
        (t, ids)
    }

    fn name_of(ids: &[(String, VehicleId)], id: VehicleId) -> &str {
        &ids.iter().find(|(_, x)| *x == id).unwrap().0
    }

    fn id_of(ids: &[(String, VehicleId)], name: &str) -> VehicleId {
        ids.iter().find(|(s, _)| s == name).unwrap().1
    }

    #[test]
    fn example_tables_layout() {
        let (t, ids) = example();
        let s2: Vec<_> = t.queue(QueueId::S2).map(|r| name_of(&ids, r.id)).collect();
        assert_eq!(s2, ["0", "1", "n+1", "2", "3", "n+3", "4", "5"]);
        let s1: Vec<_> = t.queue(QueueId::S1).map(|r| name_of(&ids, r.id)).collect();
        assert_eq!(s1, ["n", "n+1", "2", "n+2", "3", "n+3", "n+4", "5"]);
        t.check_consistency().unwrap();
    }

    #[test]
    fn example_case1_follows_predecessor() {
        let (t, ids) = example();
        let me = t.get(id_of(&ids, "n+3")).unwrap();
        let a = match_constraints(&t, me);
        assert_eq!(a.matched_case, MatchedCase::Case1);
        assert_eq!(a.ip.map(|x| name_of(&ids, x)), Some("n+2"));
        assert!(a.j.is_none() && a.k.is_none());
    }

    #[test]
    fn example_case2_same_type() {
        let (t, ids) = example();
        let me = t.get(id_of(&ids, "n+4")).unwrap();
        let a = match_constraints(&t, me);
        assert_eq!(a.matched_case, MatchedCase::Case2);
        assert_eq!(a.j.map(|x| name_of(&ids, x.id)), Some("n+3"));
        assert_eq!(a.j.unwrap().mp.id, MpId::Mi1);
        assert!(a.k.is_none());
    }

    #[test]
    fn example_case3_different_type() {
        let (t, ids) = example();
        let me = t.get(id_of(&ids, "2")).unwrap();
        let a = match_constraints(&t, me);
        assert_eq!(a.matched_case, MatchedCase::Case3);
        assert_eq!(a.j.map(|x| name_of(&ids, x.id)), Some("n+1"));
        assert_eq!(a.k.map(|x| name_of(&ids, x.id)), Some("1"));
        assert_eq!((a.j.unwrap().mp.id, a.k.unwrap().mp.id), (MpId::M2, MpId::M3));
        assert!(a.ip.is_none());
    }

    #[test]
    fn example_case4_second_mp_first() {
        let (t, ids) = example();
        let me = t.get(id_of(&ids, "5")).unwrap();
        let a = match_constraints(&t, me);
        assert_eq!(a.matched_case, MatchedCase::Case4);
        assert_eq!(a.j.map(|x| name_of(&ids, x.id)), Some("4"));
        assert_eq!(a.k.map(|x| name_of(&ids, x.id)), Some("3"));
        assert_eq!(a.ip.map(|x| name_of(&ids, x)), Some("n+3"));
        assert_eq!((a.j.unwrap().mp.id, a.k.unwrap().mp.id), (MpId::M3, MpId::M2));
        assert!(a.constraint_count() <= 3);
    }

    #[test]
    fn lane_changer_binds_lane1_partner_at_change_point() {
        let mut t = QueueTables::new(100);
        let p = p();
        let l1 = t
            .assign_arrival(&ArrivalRequest { lane: Lane::L1, t: 0.0, v0: 16.0, exit: None, merge_point: None }, &p)
            .unwrap();
        let req = ArrivalRequest { lane: Lane::L2, t: 0.0, v0: 16.0, exit: Some(ExitLane::L1), merge_point: Some(350.0) };
        let sw = t.assign_arrival(&req, &p).unwrap();
        let a = match_constraints(&t, t.get(sw).unwrap());
        assert_eq!(a.matched_case, MatchedCase::Case4);
        let j = a.j.unwrap();
        assert_eq!(j.id, l1);
        assert_eq!((j.mp.id, j.mp.at), (MpId::Mi1, 350.0));
    }

    #[test]
    fn empty_queue_gives_no_constraints() {
        let mut t = QueueTables::new(100);
        let req = ArrivalRequest { lane: Lane::L4, t: 0.0, v0: 16.0, exit: None, merge_point: None };
        let id = t.assign_arrival(&req, &p()).unwrap();
        let a = match_constraints(&t, t.get(id).unwrap());
        assert_eq!(a.matched_case, MatchedCase::None);
        assert_eq!(a.constraint_count(), 0);
    }

    fn route() -> impl Strategy<Value = (Lane, Option<ExitLane>)> {
        prop_oneof![
            Just((Lane::L1, None)),
            Just((Lane::L2, Some(ExitLane::L1))),
            Just((Lane::L2, Some(ExitLane::L2))),
            Just((Lane::L3, Some(ExitLane::L1))),
            Just((Lane::L3, Some(ExitLane::L2))),
            Just((Lane::L4, None)),
        ]
    }

    // Routes whose presence does not alter the MP columns of later arrivals.
    fn prefix_route() -> impl Strategy<Value = (Lane, Option<ExitLane>)> {
        prop_oneof![
            Just((Lane::L3, Some(ExitLane::L1))),
            Just((Lane::L3, Some(ExitLane::L2))),
            Just((Lane::L4, None)),
        ]
    }

    fn build(routes: &[(Lane, Option<ExitLane>)]) -> (QueueTables, Vec<VehicleId>) {
        let mut t = QueueTables::new(100);
        let ids = routes
            .iter()
            .map(|&(lane, exit)| {
                let req = ArrivalRequest { lane, t: 0.0, v0: 16.0, exit, merge_point: None };
                t.assign_arrival(&req, &p()).unwrap()
            })
            .collect();
        (t, ids)
    }

    proptest! {
        #[test]
        fn partners_precede_me_and_lookup_is_pure(routes in proptest::collection::vec(route(), 1..30)) {
            let (t, ids) = build(&routes);
            for id in ids {
                let me = t.get(id).unwrap();
                let a = match_constraints(&t, me);
                prop_assert_eq!(a, match_constraints(&t.clone(), me));
                prop_assert!(a.constraint_count() <= 3);
                let q = me.exit_lane.queue();
                let my_row = t.row_of(q, id).unwrap();
                for other in [a.ip, a.j.map(|x| x.id), a.k.map(|x| x.id)].into_iter().flatten() {
                    prop_assert!(t.row_of(q, other).unwrap() < my_row);
                }
                match a.matched_case {
                    MatchedCase::Case1 => prop_assert!(a.j.is_none() && a.k.is_none()),
                    MatchedCase::Case2 => prop_assert!(a.j.is_some() && a.k.is_none()),
                    MatchedCase::Case3 | MatchedCase::Case4 => prop_assert!(a.j.is_some()),
                    MatchedCase::None => prop_assert!(a.j.is_none() && a.k.is_none()),
                }
            }
        }

        #[test]
        fn rows_above_first_match_do_not_matter(
            prefix in proptest::collection::vec(prefix_route(), 0..10),
            tail in proptest::collection::vec(route(), 1..10),
        ) {
            // Compare the last vehicle's assignment with and without extra rows on top.
            let (t_short, ids_short) = build(&tail);
            let mut all = prefix.clone();
            all.extend_from_slice(&tail);
            let (t_long, ids_long) = build(&all);
            let me_s = t_short.get(*ids_short.last().unwrap()).unwrap();
            let me_l = t_long.get(*ids_long.last().unwrap()).unwrap();
            let a_s = match_constraints(&t_short, me_s);
            let a_l = match_constraints(&t_long, me_l);
            // The first-matching row lies inside the tail in the short table, so
            // the case is unchanged; a miss may become a hit with more rows.
            let offset = prefix.len() as u64;
            let shift = |x: VehicleId| VehicleId(x.0 + offset);
            if a_s.matched_case != MatchedCase::None {
                prop_assert_eq!(a_s.matched_case, a_l.matched_case);
                prop_assert_eq!(a_s.j.map(|x| shift(x.id)), a_l.j.map(|x| x.id));
                if a_s.matched_case == MatchedCase::Case1 {
                    prop_assert_eq!(a_s.ip.map(shift), a_l.ip);
                }
                if a_s.k.is_some() {
                    prop_assert_eq!(a_s.k.map(|x| shift(x.id)), a_l.k.map(|x| x.id));
                }
            }
        }
    }
}
