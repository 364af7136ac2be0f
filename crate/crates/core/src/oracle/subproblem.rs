//! Brute-force minimizers of the four per-slot subproblems, used to check
//! the closed forms in [`crate::controller`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controller::{Controller, ControllerState};
use crate::model::{BatteryParams, CostFn, GridParams};
use crate::scenario::LoadTask;

pub const ENERGY_STEP: f64 = 1e-3;
pub const GAMMA_STEP: f64 = 1e-4;

/// Delay-subproblem objective: `ω_o` for immediate service, otherwise
/// `μ·d·(X − H_d)`.
pub fn delay_objective(state: &ControllerState, task: &LoadTask, mu: f64, d: u32) -> f64 {
    if d == 0 {
        -task.intensity * (state.z - state.h_u.abs())
    } else {
        mu * d as f64 * (state.x - state.h_d)
    }
}

/// Smallest minimizer of the delay objective over `0..=d_t^max`.
pub fn delay_oracle(state: &ControllerState, task: &LoadTask, mu: f64) -> u32 {
    let mut best = (0, delay_objective(state, task, mu, 0));
    for d in 1..=task.max_delay {
        let v = delay_objective(state, task, mu, d);
        if v < best.1 {
            best = (d, v);
        }
    }
    best.0
}

pub fn aux_objective(h: f64, v: f64, beta: f64, cost: &CostFn, gamma: f64) -> f64 {
    h * gamma + v * beta * cost.value(gamma)
}

/// Grid minimizer of the auxiliary objective on `{0, step, 2·step, …} ∪ {cap}`.
pub fn aux_oracle(h: f64, v: f64, beta: f64, cost: &CostFn, cap: f64, step: f64) -> f64 {
    if cap <= 0.0 {
        return 0.0;
    }
    let n = (cap / step + 1e-9).floor() as usize;
    let mut best = (0.0, aux_objective(h, v, beta, cost, 0.0));
    for g in (1..=n).map(|k| k as f64 * step).chain(std::iter::once(cap)) {
        let g = g.min(cap);
        let val = aux_objective(h, v, beta, cost, g);
        if val < best.1 {
            best = (g, val);
        }
    }
    best.0
}

/// Energy-subproblem objective
/// `E·(Z − H_u + V·P) + S_r·(Z − H_u) + V·x_e`.
#[allow(clippy::too_many_arguments)]
pub fn energy_objective(
    state: &ControllerState,
    price: f64,
    battery: &BatteryParams,
    e: f64,
    q: f64,
    d_rate: f64,
    s_r: f64,
) -> f64 {
    let level = state.z - state.h_u;
    let entry = if q + s_r > 0.0 { battery.c_rc } else { 0.0 }
        + if d_rate > 0.0 { battery.c_dc } else { 0.0 };
    e * (level + state.v * price) + level * s_r + state.v * entry
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyOptimum {
    pub e: f64,
    pub q: f64,
    pub d_rate: f64,
    pub s_r: f64,
    pub value: f64,
    pub points: usize,
}

fn grid_points(hi: f64, step: f64) -> impl Iterator<Item = f64> {
    let hi = hi.max(0.0);
    let n = (hi / step + 1e-9).floor() as usize;
    (0..=n)
        .map(move |k| (k as f64 * step).min(hi))
        .chain(std::iter::once(hi))
}

/// Grid search over `(S_r, Q)` charging actions and `D` discharging actions
/// on a `step` lattice plus the boundary points. `E` follows from balance.
/// `None` when no point satisfies `0 ≤ E ≤ E_max`.
#[allow(clippy::too_many_arguments)]
pub fn energy_oracle(
    state: &ControllerState,
    demand: f64,
    s_w: f64,
    renewable: f64,
    price: f64,
    battery: &BatteryParams,
    grid: &GridParams,
    step: f64,
) -> Option<EnergyOptimum> {
    let residual = demand - s_w;
    let surplus = renewable - s_w;
    let mut best: Option<EnergyOptimum> = None;
    let mut points = 0;
    let mut consider = |e: f64, q: f64, d: f64, s_r: f64| {
        points += 1;
        if e < 0.0 || e > grid.e_max {
            return;
        }
        let value = energy_objective(state, price, battery, e, q, d, s_r);
        if best.is_none_or(|b| value < b.value) {
            best = Some(EnergyOptimum {
                e,
                q,
                d_rate: d,
                s_r,
                value,
                points: 0,
            });
        }
    };
    for s_r in grid_points(surplus.min(battery.r_max), step) {
        for q in grid_points(battery.r_max - s_r, step) {
            consider(residual + q, q, 0.0, s_r);
        }
    }
    for d in grid_points(battery.d_max_rate.min(residual), step) {
        consider(residual - d, 0.0, d, 0.0);
    }
    best.map(|b| EnergyOptimum { points, ..b })
}

/// One randomized controller state with slot inputs.
#[derive(Debug, Clone, Copy)]
pub struct SubproblemCase {
    pub state: ControllerState,
    pub task: LoadTask,
    pub demand: f64,
    pub renewable: f64,
    pub price: f64,
}

/// Draws `n` states covering every branch of the closed forms.
pub fn random_cases(controller: &Controller, n: usize, seed: u64) -> Vec<SubproblemCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v_max = controller.design.v_max;
    let grid = controller.grid;
    (0..n)
        .map(|i| {
            let v = if i % 17 == 0 {
                0.0
            } else {
                rng.random_range(0.0..=v_max)
            };
            let state = ControllerState {
                z: rng.random_range(-6.0..3.0),
                x: if i % 5 == 0 {
                    0.0
                } else {
                    rng.random_range(0.0..30.0)
                },
                h_u: rng.random_range(-2.0..0.5),
                h_d: rng.random_range(-40.0..20.0),
                b: 0.0,
                a_o: controller.design.a_o,
                v,
                gamma_u_cap: controller.battery.gamma_u(),
                slot: i,
            };
            let task = LoadTask {
                arrival_slot: i,
                intensity: rng.random_range(0.0..0.3),
                duration: rng.random_range(1..=12),
                max_delay: rng.random_range(0..=24),
            };
            let demand = if i % 7 == 0 {
                0.0
            } else {
                rng.random_range(0.0..=grid.e_max)
            };
            let renewable = if i % 3 == 0 {
                0.0
            } else {
                rng.random_range(0.0..0.4)
            };
            let price = rng.random_range(grid.p_min..=grid.p_max);
            SubproblemCase {
                state,
                task,
                demand,
                renewable,
                price,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub delay_match: bool,
    pub gamma_u_gap: f64,
    pub gamma_d_gap: f64,
    /// Closed-form value minus grid best; must be ≤ 1e-9.
    pub energy_excess: f64,
    /// Grid best minus closed-form value; bounded by the grid resolution.
    pub energy_shortfall: f64,
    pub energy_shortfall_bound: f64,
    pub feasible: bool,
}

impl CaseOutcome {
    pub fn passed(&self) -> bool {
        self.delay_match
            && self.gamma_u_gap <= GAMMA_STEP * (1.0 + 1e-9)
            && self.gamma_d_gap <= GAMMA_STEP * (1.0 + 1e-9)
            && self.feasible
            && self.energy_excess <= 1e-9
            && self.energy_shortfall <= self.energy_shortfall_bound + 1e-9
    }
}

/// Compares every closed-form step against its grid oracle on one case.
pub fn check_case(ctl: &Controller, c: &SubproblemCase) -> CaseOutcome {
    let s = &c.state;
    let delay_match = ctl.schedule(s, &c.task) == delay_oracle(s, &c.task, ctl.mu);

    let gu = ctl.gamma_u(s);
    let gu_grid = aux_oracle(s.h_u, s.v, 1.0, &ctl.usage, s.gamma_u_cap, GAMMA_STEP);
    let gd = ctl.gamma_d(s, Some(&c.task));
    let gd_grid = aux_oracle(
        s.h_d,
        s.v,
        ctl.alpha / ctl.mu,
        &ctl.delay,
        ctl.delay_cap(Some(&c.task)),
        GAMMA_STEP,
    );

    let s_w = c.demand.min(c.renewable);
    let closed = ctl.energy(s, c.demand, s_w, c.renewable, c.price);
    let oracle = energy_oracle(
        s,
        c.demand,
        s_w,
        c.renewable,
        c.price,
        &ctl.battery,
        &ctl.grid,
        ENERGY_STEP,
    );
    let level = s.z - s.h_u;
    let bound = 2.0 * ENERGY_STEP * ((level + s.v * c.price).abs() + level.abs());
    let (feasible, excess, shortfall) = match (closed, oracle) {
        (Ok(a), Some(o)) => (true, a.objective - o.value, o.value - a.objective),
        (Err(_), None) => (true, 0.0, 0.0),
        _ => (false, f64::INFINITY, f64::INFINITY),
    };
    CaseOutcome {
        delay_match,
        gamma_u_gap: (gu - gu_grid).abs(),
        gamma_d_gap: (gd - gd_grid).abs(),
        energy_excess: excess,
        energy_shortfall: shortfall,
        energy_shortfall_bound: bound,
        feasible,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub cases: usize,
    pub delay_mismatches: usize,
    pub gamma_u_mismatches: usize,
    pub gamma_d_mismatches: usize,
    pub energy_mismatches: usize,
    pub max_gamma_gap: f64,
    pub max_energy_excess: f64,
}

impl EquivalenceReport {
    pub fn passed(&self) -> bool {
        self.delay_mismatches
            + self.gamma_u_mismatches
            + self.gamma_d_mismatches
            + self.energy_mismatches
            == 0
    }
}

/// Runs [`check_case`] on `n` random cases, in parallel when enabled.
pub fn closed_form_equivalence(ctl: &Controller, n: usize, seed: u64) -> EquivalenceReport {
    let cases = random_cases(ctl, n, seed);
    let outcomes = crate::par::map(&cases, |c| check_case(ctl, c));
    let tol = GAMMA_STEP * (1.0 + 1e-9);
    let mut r = EquivalenceReport {
        cases: n,
        ..Default::default()
    };
    for o in &outcomes {
        r.delay_mismatches += usize::from(!o.delay_match);
        r.gamma_u_mismatches += usize::from(o.gamma_u_gap > tol);
        r.gamma_d_mismatches += usize::from(o.gamma_d_gap > tol);
        let energy_ok = o.feasible
            && o.energy_excess <= 1e-9
            && o.energy_shortfall <= o.energy_shortfall_bound + 1e-9;
        r.energy_mismatches += usize::from(!energy_ok);
        r.max_gamma_gap = r.max_gamma_gap.max(o.gamma_u_gap).max(o.gamma_d_gap);
        if o.energy_excess.is_finite() {
            r.max_energy_excess = r.max_energy_excess.max(o.energy_excess);
        }
    }
    r
}
