//! Exhaustive `T`-slot look-ahead optimizer.
//!
//! With full knowledge of a frame's prices, renewables and arrivals, the
//! search enumerates every dominant delay assignment and, for each, runs a
//! dynamic program over the battery level and the accumulated usage on an
//! energy lattice of step `h`.
//!
//! Per slot the energy action reduces to the net battery change `y = k·h`:
//! surplus renewable is charged before grid energy, and a negative `y` is
//! a discharge. Frame cost is `(1/T)Σ(E·P + x_e) + C_u(x̄_u) + α·C_d(d̄)`
//! subject to the frame's net change equalling `Δ_u·T/T_o`, the frame
//! delay average staying at or below `d^max`, and the battery bounds.

use serde::{Deserialize, Serialize};

use crate::controller::Controller;
use crate::error::{Error, Result};
use crate::scenario::{LoadTask, SlotInput, Trace};
use crate::simulator::{RunSummary, ServiceLedger};

pub const DEFAULT_NODE_LIMIT: f64 = 1e8;

/// One frame of the horizon, conditioned on a run's state at its start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub start: usize,
    pub slots: Vec<SlotInput>,
    /// Battery level entering the frame.
    pub b_start: f64,
    /// Demand of loads that arrived before the frame, per frame slot.
    pub carry_in: Vec<f64>,
    /// Required net battery change over the frame (kWh).
    pub target_change: f64,
}

impl Frame {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Arrivals as `(offset, task)`.
    pub fn tasks(&self) -> Vec<(usize, LoadTask)> {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(j, s)| s.task.map(|t| (j, t)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub start: usize,
    pub len: usize,
    /// Optimal frame objective `u_m^opt`.
    pub objective: f64,
    /// Chosen delay per arrival, as `(arrival slot, delay)`.
    pub delays: Vec<(usize, u32)>,
    /// Net battery change per slot (kWh).
    pub net: Vec<f64>,
    /// Grid purchase per slot (kWh).
    pub purchase: Vec<f64>,
    pub step: f64,
    pub nodes: f64,
}

/// Splits a run's horizon into frames of length `t`, each conditioned on
/// the run's battery level and earlier delays.
pub fn frames_from_run(trace: &Trace, run: &RunSummary, t: usize) -> Result<Vec<Frame>> {
    let horizon = trace.horizon();
    if t == 0 || !horizon.is_multiple_of(t) {
        return Err(Error::FrameMismatch(format!(
            "horizon {horizon} is not a multiple of frame length {t}"
        )));
    }
    if run.horizon != horizon || run.records.len() < horizon {
        return Err(Error::FrameMismatch(
            "run does not cover the trace or has no per-slot records".into(),
        ));
    }
    let target_change = run.weights.delta_u * t as f64 / horizon as f64;
    let mut ledger = ServiceLedger::new();
    let mut frames = Vec::with_capacity(horizon / t);
    for m in 0..horizon / t {
        let start = m * t;
        let carry_in = (start..start + t)
            .map(|s| ledger.active_demand(s))
            .collect();
        frames.push(Frame {
            start,
            slots: trace.slots[start..start + t].to_vec(),
            b_start: run.records[start].state.b,
            carry_in,
            target_change,
        });
        for rec in &run.records[start..start + t] {
            if let Some(task) = trace.slots[rec.slot].task {
                ledger.schedule(task, rec.decision.delay)?;
            }
        }
        ledger.retire(start + t);
    }
    Ok(frames)
}

/// Delay options at offset `j`: any start inside the frame, plus the first
/// slot after the frame when allowed. Later starts only add delay cost.
fn delay_options(j: usize, len: usize, max_delay: u32) -> Vec<u32> {
    let inside = (len - 1 - j) as u32;
    let mut v: Vec<u32> = (0..=max_delay.min(inside)).collect();
    let out = (len - j) as u32;
    if out <= max_delay {
        v.push(out);
    }
    v
}

fn combinations(options: &[Vec<u32>]) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new()];
    for opts in options {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                opts.iter().map(move |&d| {
                    let mut p = prefix.clone();
                    p.push(d);
                    p
                })
            })
            .collect();
    }
    out
}

/// Per-slot feasible lattice moves `(k, cost)` with `y = k·h`.
struct SlotMoves {
    moves: Vec<(i64, f64, f64)>,
}

fn slot_moves(
    ctl: &Controller,
    demand: f64,
    renewable: f64,
    price: f64,
    h: f64,
    k_r: i64,
    k_d: i64,
) -> SlotMoves {
    let b = &ctl.battery;
    let e_max = ctl.grid.e_max;
    let s_w = demand.min(renewable);
    let residual = demand - s_w;
    let surplus = renewable - s_w;
    let tol = 1e-12;
    let mut moves = Vec::new();
    for k in -k_d..=k_r {
        let y = k as f64 * h;
        let (e, entry) = if k > 0 {
            let s_r = y.min(surplus);
            (residual + (y - s_r), b.c_rc)
        } else if k < 0 {
            let d = -y;
            if d > residual + tol {
                continue;
            }
            ((residual - d).max(0.0), b.c_dc)
        } else {
            (residual, 0.0)
        };
        if e > e_max + tol {
            continue;
        }
        moves.push((k, e * price + entry, e));
    }
    SlotMoves { moves }
}

/// Lattice sizes used by [`lookahead_optimum`].
#[derive(Debug, Clone, Copy)]
struct Lattice {
    k_r: i64,
    k_d: i64,
    l_min: i64,
    l_max: i64,
    u_max: i64,
}

impl Lattice {
    fn new(ctl: &Controller, frame: &Frame, h: f64) -> Self {
        let b = &ctl.battery;
        let t = frame.len() as i64;
        let k_r = (b.r_max / h + 1e-9).floor() as i64;
        let k_d = (b.d_max_rate / h + 1e-9).floor() as i64;
        let l_min = ((b.b_min - frame.b_start) / h - 1e-9).ceil() as i64;
        let l_max = ((b.b_max - frame.b_start) / h + 1e-9).floor() as i64;
        Self {
            k_r,
            k_d,
            l_min: l_min.max(-t * k_d),
            l_max: l_max.min(t * k_r),
            u_max: t * k_r.max(k_d),
        }
    }

    fn width(&self) -> usize {
        (self.l_max - self.l_min + 1).max(0) as usize
    }

    fn states(&self) -> usize {
        self.width() * (self.u_max + 1) as usize
    }

    fn index(&self, l: i64, u: i64) -> usize {
        (l - self.l_min) as usize * (self.u_max + 1) as usize + u as usize
    }
}

struct ComboBest {
    objective: f64,
    net: Vec<f64>,
    purchase: Vec<f64>,
}

fn solve_combo(
    ctl: &Controller,
    frame: &Frame,
    tasks: &[(usize, LoadTask)],
    delays: &[u32],
    h: f64,
    lat: &Lattice,
) -> Option<ComboBest> {
    let t = frame.len();
    let tf = t as f64;
    let delay_sum: u32 = delays.iter().sum();
    if delay_sum as f64 > tf * ctl.d_avg_max + 1e-9 {
        return None;
    }
    let mut demand = frame.carry_in.clone();
    for ((j, task), &d) in tasks.iter().zip(delays) {
        let start = j + d as usize;
        for slot in demand.iter_mut().skip(start).take(task.duration as usize) {
            *slot += task.intensity;
        }
    }
    if lat.l_min > 0 || lat.l_max < 0 {
        return None;
    }

    let n = lat.states();
    let mut value = vec![f64::INFINITY; n];
    value[lat.index(0, 0)] = 0.0;
    // Parent pointers per slot: (previous index, move index).
    let mut parents: Vec<Vec<(u32, u16)>> = Vec::with_capacity(t);
    let mut all_moves = Vec::with_capacity(t);
    for (j, s) in frame.slots.iter().enumerate() {
        let moves = slot_moves(ctl, demand[j], s.renewable, s.price, h, lat.k_r, lat.k_d);
        let mut next = vec![f64::INFINITY; n];
        let mut parent = vec![(u32::MAX, 0u16); n];
        for l in lat.l_min..=lat.l_max {
            for u in 0..=lat.u_max {
                let from = lat.index(l, u);
                let base = value[from];
                if !base.is_finite() {
                    continue;
                }
                for (mi, &(k, cost, _)) in moves.moves.iter().enumerate() {
                    let nl = l + k;
                    let nu = u + k.abs();
                    if nl < lat.l_min || nl > lat.l_max || nu > lat.u_max {
                        continue;
                    }
                    let to = lat.index(nl, nu);
                    let cand = base + cost;
                    if cand < next[to] {
                        next[to] = cand;
                        parent[to] = (from as u32, mi as u16);
                    }
                }
            }
        }
        value = next;
        parents.push(parent);
        all_moves.push(moves);
    }

    let target = (frame.target_change / h).round() as i64;
    if target < lat.l_min || target > lat.l_max {
        return None;
    }
    let delay_cost = ctl.alpha * ctl.delay.value(delay_sum as f64 / tf);
    let mut best: Option<(f64, usize)> = None;
    for u in 0..=lat.u_max {
        let idx = lat.index(target, u);
        if !value[idx].is_finite() {
            continue;
        }
        let obj = value[idx] / tf + ctl.usage.value(u as f64 * h / tf) + delay_cost;
        if best.is_none_or(|(b, _)| obj < b) {
            best = Some((obj, idx));
        }
    }
    let (objective, mut idx) = best?;
    let mut net = vec![0.0; t];
    let mut purchase = vec![0.0; t];
    for j in (0..t).rev() {
        let (prev, mi) = parents[j][idx];
        let (k, _, e) = all_moves[j].moves[mi as usize];
        net[j] = k as f64 * h;
        purchase[j] = e;
        idx = prev as usize;
    }
    Some(ComboBest {
        objective,
        net,
        purchase,
    })
}

/// Estimated DP work for a frame at step `h`.
pub fn search_nodes(ctl: &Controller, frame: &Frame, h: f64) -> f64 {
    let lat = Lattice::new(ctl, frame, h);
    let combos: f64 = frame
        .tasks()
        .iter()
        .map(|(j, t)| delay_options(*j, frame.len(), t.max_delay).len() as f64)
        .product();
    combos * frame.len() as f64 * lat.states() as f64 * (lat.k_r + lat.k_d + 1) as f64
}

/// Minimum frame objective over all delay assignments and lattice actions.
pub fn lookahead_optimum(
    ctl: &Controller,
    frame: &Frame,
    h: f64,
    node_limit: f64,
) -> Result<OracleSolution> {
    if frame.is_empty() || !(h > 0.0) {
        return Err(Error::FrameMismatch(
            "empty frame or non-positive step".into(),
        ));
    }
    if frame.carry_in.len() != frame.len() {
        return Err(Error::FrameMismatch(
            "carry-in length differs from frame".into(),
        ));
    }
    let nodes = search_nodes(ctl, frame, h);
    if nodes > node_limit {
        return Err(Error::SearchSpace {
            nodes,
            limit: node_limit,
            suggested_step: h * (nodes / node_limit).cbrt(),
        });
    }
    let lat = Lattice::new(ctl, frame, h);
    let tasks = frame.tasks();
    let options: Vec<Vec<u32>> = tasks
        .iter()
        .map(|(j, t)| delay_options(*j, frame.len(), t.max_delay))
        .collect();
    let combos = combinations(&options);
    let results = crate::par::map(&combos, |delays| {
        solve_combo(ctl, frame, &tasks, delays, h, &lat)
    });
    let mut best: Option<(usize, ComboBest)> = None;
    for (i, r) in results.into_iter().enumerate() {
        if let Some(r) = r {
            if best.as_ref().is_none_or(|(_, b)| r.objective < b.objective) {
                best = Some((i, r));
            }
        }
    }
    let (i, b) = best.ok_or_else(|| Error::InfeasibleSlot {
        slot: frame.start,
        reason: "no feasible plan for the frame on this lattice".into(),
    })?;
    Ok(OracleSolution {
        start: frame.start,
        len: frame.len(),
        objective: b.objective,
        delays: tasks
            .iter()
            .zip(&combos[i])
            .map(|((_, t), &d)| (t.arrival_slot, d))
            .collect(),
        net: b.net,
        purchase: b.purchase,
        step: h,
        nodes,
    })
}

/// Frame objective of an explicit plan, computed slot by slot without the
/// lattice. `None` when the plan breaks a constraint.
pub fn evaluate_frame_plan(
    ctl: &Controller,
    frame: &Frame,
    delays: &[u32],
    net: &[f64],
) -> Option<f64> {
    let t = frame.len();
    let tasks = frame.tasks();
    if delays.len() != tasks.len() || net.len() != t {
        return None;
    }
    let b = &ctl.battery;
    let tol = 1e-9;
    let mut ledger = ServiceLedger::new();
    for ((j, task), &d) in tasks.iter().zip(delays) {
        if d > task.max_delay {
            return None;
        }
        let mut local = *task;
        local.arrival_slot = *j;
        ledger.schedule(local, d).ok()?;
    }
    let delay_sum: u32 = delays.iter().sum();
    if delay_sum as f64 > t as f64 * ctl.d_avg_max + tol {
        return None;
    }
    let mut level = frame.b_start;
    let (mut money, mut usage) = (0.0, 0.0);
    for (j, s) in frame.slots.iter().enumerate() {
        let demand = frame.carry_in[j] + ledger.active_demand(j);
        let s_w = demand.min(s.renewable);
        let y = net[j];
        let (q, s_r, d) = if y > 0.0 {
            let s_r = y.min(s.renewable - s_w);
            (y - s_r, s_r, 0.0)
        } else {
            (0.0, 0.0, -y)
        };
        let e = demand - s_w + q - d;
        if q + s_r > b.r_max + tol || d > b.d_max_rate + tol || e < -tol || e > ctl.grid.e_max + tol
        {
            return None;
        }
        level += y;
        if level < b.b_min - tol || level > b.b_max + tol {
            return None;
        }
        let entry = if y > 0.0 { b.c_rc } else { 0.0 } + if y < 0.0 { b.c_dc } else { 0.0 };
        money += e * s.price + entry;
        usage += y.abs();
    }
    if (level - frame.b_start - frame.target_change).abs() > tol {
        return None;
    }
    let tf = t as f64;
    Some(
        money / tf
            + ctl.usage.value(usage / tf)
            + ctl.alpha * ctl.delay.value(delay_sum as f64 / tf),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Model;
    use approx::assert_relative_eq;

    fn frame(prices: &[f64], renewable: f64, tasks: &[(usize, LoadTask)], b_start: f64) -> Frame {
        let slots = prices
            .iter()
            .enumerate()
            .map(|(j, &price)| SlotInput {
                slot: j,
                price,
                renewable,
                task: tasks.iter().find(|(k, _)| *k == j).map(|(_, t)| *t),
            })
            .collect();
        Frame {
            start: 0,
            slots,
            b_start,
            carry_in: vec![0.0; prices.len()],
            target_change: 0.0,
        }
    }

    fn task(arrival: usize, rho: f64, duration: u32, max_delay: u32) -> LoadTask {
        LoadTask {
            arrival_slot: arrival,
            intensity: rho,
            duration,
            max_delay,
        }
    }

    fn controller() -> Controller {
        Controller::new(&Model::defaults(), 24).unwrap()
    }

    #[test]
    fn empty_frame_idles() {
        let ctl = controller();
        let f = frame(&[0.118], 0.0, &[], 0.0);
        let s = lookahead_optimum(&ctl, &f, 0.0165, DEFAULT_NODE_LIMIT).unwrap();
        assert_eq!(s.objective, 0.0);
        assert_eq!(s.net, vec![0.0]);
    }

    #[test]
    fn cheap_slot_wins_delay() {
        let ctl = controller();
        let f = frame(&[0.118, 0.063], 0.0, &[(0, task(0, 0.1, 1, 1))], 0.0);
        let s = lookahead_optimum(&ctl, &f, 0.0165, DEFAULT_NODE_LIMIT).unwrap();
        assert_eq!(s.delays, vec![(0, 1)]);
        let expected = 0.1 * 0.063 / 2.0 + ctl.alpha * ctl.delay.value(0.5);
        assert_relative_eq!(s.objective, expected, epsilon = 1e-12);
        // Delay is worth it: 0.1·(0.118 − 0.063) exceeds the delay penalty.
        assert!(0.1 * (0.118 - 0.063) / 2.0 > ctl.alpha * ctl.delay.value(0.5));
    }

    #[test]
    fn delay_options_include_frame_exit() {
        assert_eq!(delay_options(0, 4, 18), vec![0, 1, 2, 3, 4]);
        assert_eq!(delay_options(3, 4, 18), vec![0, 1]);
        assert_eq!(delay_options(1, 4, 1), vec![0, 1]);
        assert_eq!(delay_options(2, 4, 0), vec![0]);
    }

    #[test]
    fn solution_reevaluates() {
        let ctl = controller();
        let f = frame(
            &[0.063, 0.118, 0.118, 0.099],
            0.02,
            &[(0, task(0, 0.08, 3, 18)), (2, task(2, 0.12, 2, 18))],
            0.5,
        );
        let s = lookahead_optimum(&ctl, &f, 0.0165, DEFAULT_NODE_LIMIT).unwrap();
        let delays: Vec<u32> = s.delays.iter().map(|&(_, d)| d).collect();
        let direct = evaluate_frame_plan(&ctl, &f, &delays, &s.net).unwrap();
        assert_relative_eq!(direct, s.objective, epsilon = 1e-12);
        let idle = evaluate_frame_plan(&ctl, &f, &[0, 0], &[0.0; 4]).unwrap();
        assert!(s.objective <= idle);
    }

    #[test]
    fn overflow_suggests_step() {
        let ctl = controller();
        let f = frame(&[0.118; 4], 0.0, &[(0, task(0, 0.1, 1, 18))], 1.0);
        match lookahead_optimum(&ctl, &f, 1e-4, 1e6) {
            Err(Error::SearchSpace { suggested_step, .. }) => assert!(suggested_step > 1e-4),
            other => panic!("expected overflow, got {other:?}"),
        }
    }
}
