//! Property tests over randomized inputs.

use proptest::prelude::*;

use esm_core::controller::{aux_solution, schedule_load, Controller, ControllerState};
use esm_core::model::{CostFn, Model};
use esm_core::oracle::lookahead::{evaluate_frame_plan, lookahead_optimum, Frame};
use esm_core::oracle::subproblem::{aux_objective, check_case, random_cases};
use esm_core::scenario::{
    generate_trace, read_trace, write_trace, LoadTask, SlotInput, StageProfile,
};
use esm_core::simulator::{run, Policy, RunOptions};

const H: f64 = 0.0165;

fn controller(horizon: usize) -> Controller {
    Controller::new(&Model::defaults(), horizon).unwrap()
}

fn state_strategy() -> impl Strategy<Value = ControllerState> {
    (
        -6.0..3.0f64,
        0.0..30.0f64,
        -2.0..0.5f64,
        -40.0..20.0f64,
        0.0..12.7f64,
    )
        .prop_map(|(z, x, h_u, h_d, v)| ControllerState {
            z,
            x,
            h_u,
            h_d,
            b: 0.0,
            a_o: 2.67,
            v,
            gamma_u_cap: 0.165,
            slot: 0,
        })
}

fn task_strategy(max_delay: u32) -> impl Strategy<Value = LoadTask> {
    (0.005..0.15f64, 1..=4u32, 0..=max_delay).prop_map(|(intensity, duration, max_delay)| {
        LoadTask {
            arrival_slot: 0,
            intensity,
            duration,
            max_delay,
        }
    })
}

/// A short frame with at most two arrivals and prices on the three stages.
fn frame_strategy() -> impl Strategy<Value = Frame> {
    (
        prop::collection::vec(prop::sample::select(vec![0.063, 0.099, 0.118]), 3),
        prop::collection::vec(0.0..0.05f64, 3),
        prop::option::of(task_strategy(4)),
        prop::option::of(task_strategy(4)),
        0..=20usize,
    )
        .prop_map(|(prices, renewable, first, second, level)| {
            let arrivals = [first, None, second];
            let slots = prices
                .iter()
                .zip(&renewable)
                .zip(arrivals)
                .enumerate()
                .map(|(j, ((&price, &renewable), task))| SlotInput {
                    slot: j,
                    price,
                    renewable,
                    task: task.map(|t| LoadTask {
                        arrival_slot: j,
                        ..t
                    }),
                })
                .collect();
            Frame {
                start: 0,
                slots,
                b_start: level as f64 * H,
                carry_in: vec![0.0; 3],
                target_change: 0.0,
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn costs_are_convex_and_non_decreasing(
        k in 0.01..5.0f64,
        p in 1.1..4.0f64,
        x in 0.0..1.0f64,
        y in 0.0..1.0f64,
        t in 0.0..1.0f64,
    ) {
        for c in [CostFn::quadratic(k), CostFn::Power { k, exponent: p }] {
            let mid = c.value(t * x + (1.0 - t) * y);
            prop_assert!(mid <= t * c.value(x) + (1.0 - t) * c.value(y) + 1e-12);
            let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
            prop_assert!(c.value(lo) <= c.value(hi) + 1e-15);
        }
    }

    #[test]
    fn delay_is_zero_one_or_cap(state in state_strategy(), task in task_strategy(24), mu in 0.05..2.0f64) {
        let d = schedule_load(&state, &task, mu);
        prop_assert!(d == 0 || d == 1 || d == task.max_delay, "d = {}", d);
    }

    #[test]
    fn aux_solution_beats_its_neighbors(
        h in -3.0..1.0f64,
        v in 0.0..13.0f64,
        k in 0.01..1.0f64,
        cap in 0.0..0.5f64,
    ) {
        let cost = CostFn::quadratic(k);
        let g = aux_solution(h, v, 1.0, &cost, cap);
        prop_assert!((0.0..=cap).contains(&g));
        let best = aux_objective(h, v, 1.0, &cost, g);
        for probe in [0.0, cap, (g - 1e-3).max(0.0), (g + 1e-3).min(cap)] {
            prop_assert!(best <= aux_objective(h, v, 1.0, &cost, probe) + 1e-12);
        }
    }

    #[test]
    fn closed_forms_match_oracles(seed in any::<u64>()) {
        let ctl = controller(288);
        for c in random_cases(&ctl, 8, seed) {
            let o = check_case(&ctl, &c);
            prop_assert!(o.passed(), "{:?} -> {:?}", c, o);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Scaling every monetary quantity by a power of two and `V` by its
    /// inverse leaves the drift-plus-penalty objective, and hence every
    /// physical decision, bit-identical.
    #[test]
    fn monetary_scale_leaves_decisions_unchanged(seed in 0..1000u64, exp in -4..=4i32) {
        let c = 2f64.powi(exp);
        let base = Model::defaults();
        let mut scaled = base.clone();
        scaled.battery.c_rc *= c;
        scaled.battery.c_dc *= c;
        scaled.grid.p_min *= c;
        scaled.grid.p_max *= c;
        scaled.costs.usage = base.costs.usage.scaled(c);
        scaled.costs.delay = Some(base.delay_fn().scaled(c));

        let trace = generate_trace(&StageProfile::defaults(), 96, seed).unwrap();
        let mut scaled_trace = trace.clone();
        for s in &mut scaled_trace.slots {
            s.price *= c;
        }
        let opts = RunOptions::default();
        let a = run(&trace, Policy::Joint, &base, &opts).unwrap();
        let b = run(&scaled_trace, Policy::Joint, &scaled, &opts).unwrap();
        prop_assert_eq!(b.design.v, a.design.v / c);
        prop_assert_eq!(b.design.a_o, a.design.a_o);
        prop_assert_eq!(a.records.len(), b.records.len());
        for (x, y) in a.records.iter().zip(&b.records) {
            prop_assert_eq!(y.decision.entry_cost, c * x.decision.entry_cost);
            let mut unscaled = y.decision;
            unscaled.entry_cost = x.decision.entry_cost;
            prop_assert_eq!(x.decision, unscaled, "slot {}", x.slot);
        }
        prop_assert!((b.total - c * a.total).abs() <= 1e-12 * (1.0 + c * a.total));
    }

    #[test]
    fn finer_lattice_never_costs_more(frame in frame_strategy()) {
        let ctl = controller(24);
        let coarse = lookahead_optimum(&ctl, &frame, H, 1e8);
        let fine = lookahead_optimum(&ctl, &frame, H / 2.0, 1e8);
        if let Ok(coarse) = coarse {
            let fine = fine.unwrap();
            prop_assert!(fine.objective <= coarse.objective + 1e-12);
        }
    }

    #[test]
    fn lookahead_beats_serving_from_the_grid(frame in frame_strategy()) {
        let ctl = controller(24);
        let n_tasks = frame.tasks().len();
        if let Some(plain) = evaluate_frame_plan(&ctl, &frame, &vec![0; n_tasks], &[0.0; 3]) {
            let best = lookahead_optimum(&ctl, &frame, H, 1e8).unwrap();
            prop_assert!(best.objective <= plain + 1e-12);
        }
    }

    #[test]
    fn trace_csv_round_trips(seed in any::<u64>()) {
        let trace = generate_trace(&StageProfile::defaults(), 48, seed).unwrap();
        let mut buf = Vec::new();
        write_trace(&trace, &mut buf).unwrap();
        let back = read_trace(buf.as_slice(), trace.slot_minutes).unwrap();
        prop_assert_eq!(back, trace);
    }

    #[test]
    fn battery_stays_in_bounds(seed in any::<u64>(), policy in prop::sample::select(Policy::ALL.to_vec())) {
        let model = Model::defaults();
        let trace = generate_trace(&StageProfile::defaults(), 288, seed).unwrap();
        let r = run(&trace, policy, &model, &RunOptions::default()).unwrap();
        for rec in &r.records {
            prop_assert!(rec.state.b >= model.battery.b_min - 1e-9);
            prop_assert!(rec.state.b <= model.battery.b_max + 1e-9);
        }
        prop_assert!(r.avg_delay <= model.weights.d_avg_max);
    }
}
