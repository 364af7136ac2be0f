//! The real-time drift-plus-penalty controller.
//!
//! Each slot runs three closed-form steps in order: the scheduling delay of
//! the arriving load together with the delay auxiliary variable, the
//! renewable split, and then the usage auxiliary variable together with the
//! energy action. Afterwards the four virtual queues advance.
//!
//! ```text
//! X ← max(X + d − d^max, 0)          average-delay queue
//! Z ← Z + Q + S_r − D − Δ_u/T_o       battery queue, Z = B − A_t
//! H_u ← H_u + γ_u − x_u               usage auxiliary queue
//! H_d ← H_d + γ_d − d                 delay auxiliary queue
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{v_max_numerator, BatteryParams, CostFn, GridParams, Model};
use crate::scenario::LoadTask;

/// Tolerance for the `Z = B − A_t` shift identity.
pub const IDENTITY_TOL: f64 = 1e-9;

/// How `Z_0` is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Z0Mode {
    /// `Z_0 = B_0 − A_o`, consistent with the shift identity.
    #[default]
    Shifted,
    /// `Z_0 = 0`; the identity then holds with shift `B_0` instead of `A_o`.
    Zero,
}

/// Designed constants: the shift `A_o`, the penalty weight in use and its
/// feasible maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub a_o: f64,
    pub v: f64,
    pub v_max: f64,
}

pub fn v_max(battery: &BatteryParams, grid: &GridParams, usage: &CostFn, delta_u: f64) -> f64 {
    v_max_numerator(battery, delta_u) / (grid.p_max + usage.derivative(battery.gamma_u()))
}

/// Shift constant `A_o` for a given penalty weight.
pub fn shift_constant(
    battery: &BatteryParams,
    grid: &GridParams,
    usage: &CostFn,
    delta_u: f64,
    horizon: usize,
    v: f64,
) -> f64 {
    let gamma_u = battery.gamma_u();
    let base = battery.b_min
        + v * grid.p_max
        + v * usage.derivative(gamma_u)
        + gamma_u
        + battery.d_max_rate
        + delta_u / horizon as f64;
    if delta_u >= 0.0 {
        base
    } else {
        base - delta_u
    }
}

/// Computes `V_max` and `A_o`, using `weights.v` when set and `V_max`
/// otherwise. A weight above `V_max` is accepted; the battery-bound
/// guarantee does not hold for it.
pub fn design_params(model: &Model, horizon: usize) -> Result<Design> {
    if horizon == 0 {
        return Err(Error::Config("horizon must be >= 1".into()));
    }
    let w = &model.weights;
    let v_max = v_max(&model.battery, &model.grid, &model.costs.usage, w.delta_u);
    if !(v_max > 0.0) {
        return Err(Error::Config(format!(
            "V_max = {v_max} is not positive; the battery range is too small for the rates"
        )));
    }
    let v = w.v.unwrap_or(v_max);
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::Config(format!("V = {v} must be finite and >= 0")));
    }
    let a_o = shift_constant(
        &model.battery,
        &model.grid,
        &model.costs.usage,
        w.delta_u,
        horizon,
        v,
    );
    Ok(Design { a_o, v, v_max })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    /// Battery queue `Z_t` (kWh, signed).
    pub z: f64,
    /// Average-delay queue `X_t` (slots, never negative).
    pub x: f64,
    pub h_u: f64,
    pub h_d: f64,
    /// Battery level `B_t` (kWh).
    pub b: f64,
    /// Shift constant in the identity `Z = B − (A_o + Δ_u·t/T_o)`.
    pub a_o: f64,
    pub v: f64,
    pub gamma_u_cap: f64,
    pub slot: usize,
}

impl ControllerState {
    /// `A_t = A_o + (Δ_u/T_o)·t`.
    pub fn shift_at(&self, delta_u: f64, horizon: usize) -> f64 {
        self.a_o + delta_u / horizon as f64 * self.slot as f64
    }
}

pub fn init_state(battery: &BatteryParams, a_o: f64, v: f64, mode: Z0Mode) -> ControllerState {
    let (z, shift) = match mode {
        Z0Mode::Shifted => (battery.b_init - a_o, a_o),
        Z0Mode::Zero => (0.0, battery.b_init),
    };
    ControllerState {
        z,
        x: 0.0,
        h_u: 0.0,
        h_d: 0.0,
        b: battery.b_init,
        a_o: shift,
        v,
        gamma_u_cap: battery.gamma_u(),
        slot: 0,
    }
}

/// Optimal delay for the arriving load; always one of `0`, `1` or the
/// load's delay cap. Ties go to immediate service.
pub fn schedule_load(state: &ControllerState, task: &LoadTask, mu: f64) -> u32 {
    let omega_o = -task.intensity * (state.z - state.h_u.abs());
    delay_rule(state, task, mu, omega_o)
}

fn delay_rule(state: &ControllerState, task: &LoadTask, mu: f64, omega_o: f64) -> u32 {
    if task.max_delay == 0 {
        return 0;
    }
    let gap = state.x - state.h_d;
    if gap >= 0.0 {
        let omega_1 = mu * gap;
        if omega_o <= omega_1 {
            0
        } else {
            1
        }
    } else {
        let omega_cap = mu * task.max_delay as f64 * gap;
        if omega_o <= omega_cap {
            0
        } else {
            task.max_delay
        }
    }
}

/// Minimizer of `h·γ + vβ·C(γ)` over `[0, cap]`.
///
/// With `vβ = 0` the limit convention applies: `0` for `h ≥ 0`, `cap`
/// otherwise.
pub fn aux_solution(h: f64, v: f64, beta: f64, cost: &CostFn, cap: f64) -> f64 {
    if cap <= 0.0 || h >= 0.0 {
        return 0.0;
    }
    let vb = v * beta;
    if vb <= 0.0 {
        return cap;
    }
    if h < -vb * cost.derivative(cap) {
        cap
    } else {
        cost.inverse_derivative(-h / vb).clamp(0.0, cap)
    }
}

/// Renewable energy routed straight to the loads.
pub fn renewable_split(demand: f64, renewable: f64) -> f64 {
    demand.min(renewable)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Charge,
    Discharge,
    Idle,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Charge => "charge",
            Regime::Discharge => "discharge",
            Regime::Idle => "idle",
        }
    }
}

/// Sign pattern that selects the candidate action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyCase {
    /// `Z − H_u + V·P ≤ 0`: charge or idle.
    LowLevel,
    /// `Z − H_u < 0 ≤ Z − H_u + V·P`: charge from surplus, discharge, or idle.
    Moderate,
    /// `0 ≤ Z − H_u`: discharge or idle.
    HighLevel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyAction {
    pub e: f64,
    pub q: f64,
    pub d_rate: f64,
    pub s_r: f64,
    pub regime: Regime,
    pub case: EnergyCase,
    /// Objective of the chosen action.
    pub objective: f64,
    /// Objective of the idle action.
    pub idle_objective: f64,
}

/// Closed-form energy purchase and storage control.
///
/// `demand` is the active demand including any load just scheduled for
/// immediate service, `s_w` the renewable already routed to it. The
/// candidate action of the selected case wins only if strictly cheaper than
/// idling.
#[allow(clippy::too_many_arguments)]
pub fn energy_control(
    state: &ControllerState,
    demand: f64,
    s_w: f64,
    renewable: f64,
    price: f64,
    battery: &BatteryParams,
    grid: &GridParams,
) -> Result<EnergyAction> {
    let v = state.v;
    let level = state.z - state.h_u;
    let grid_weight = level + v * price;
    let residual = demand - s_w;
    let surplus = renewable - s_w;
    let idle_objective = residual * grid_weight;

    let (case, q, d_rate, s_r) = if grid_weight <= 0.0 {
        let s_r = surplus.min(battery.r_max);
        let q = (battery.r_max - s_r).min(grid.e_max - residual);
        (EnergyCase::LowLevel, q, 0.0, s_r)
    } else if level < 0.0 {
        let d = residual.min(battery.d_max_rate);
        let s_r = surplus.min(battery.r_max);
        (EnergyCase::Moderate, 0.0, d, s_r)
    } else {
        let d = residual.min(battery.d_max_rate);
        (EnergyCase::HighLevel, 0.0, d, 0.0)
    };
    // `E_max` is applied as a cap so `residual + (E_max − residual)` cannot
    // round above it.
    let e = (residual + q - d_rate).min(grid.e_max.max(residual));
    let charging = q + s_r > 0.0;
    let discharging = d_rate > 0.0;
    let entry =
        if charging { battery.c_rc } else { 0.0 } + if discharging { battery.c_dc } else { 0.0 };
    let candidate_objective = e * grid_weight + level * s_r + v * entry;

    let action = if candidate_objective < idle_objective {
        let regime = if discharging {
            Regime::Discharge
        } else if charging {
            Regime::Charge
        } else {
            Regime::Idle
        };
        EnergyAction {
            e,
            q,
            d_rate,
            s_r,
            regime,
            case,
            objective: candidate_objective,
            idle_objective,
        }
    } else {
        EnergyAction {
            e: residual,
            q: 0.0,
            d_rate: 0.0,
            s_r: 0.0,
            regime: Regime::Idle,
            case,
            objective: idle_objective,
            idle_objective,
        }
    };

    if action.e > grid.e_max || action.q < 0.0 || action.e < 0.0 {
        return Err(Error::InfeasibleSlot {
            slot: state.slot,
            reason: format!(
                "{} action needs E = {:.6} kWh (E_max = {}), demand {:.6}, renewable to loads {:.6}",
                action.regime.as_str(),
                action.e,
                grid.e_max,
                demand,
                s_w
            ),
        });
    }
    Ok(action)
}

/// The complete per-slot decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlDecision {
    pub e: f64,
    pub q: f64,
    pub d_rate: f64,
    pub s_w: f64,
    pub s_r: f64,
    /// Delay chosen for this slot's arrival; 0 without one.
    pub delay: u32,
    pub gamma_u: f64,
    pub gamma_d: f64,
    /// `C_rc·1[Q+S_r>0] + C_dc·1[D>0]`.
    pub entry_cost: f64,
    /// `|Q + S_r − D|`.
    pub usage_amount: f64,
    pub regime: Regime,
}

impl ControlDecision {
    pub fn net_change(&self) -> f64 {
        self.q + self.s_r - self.d_rate
    }
}

/// Advances the queues and the battery by one slot.
pub fn update_queues(
    state: &ControllerState,
    decision: &ControlDecision,
    d_avg_max: f64,
    delta_u: f64,
    horizon: usize,
) -> Result<ControllerState> {
    let net = decision.net_change();
    let next = ControllerState {
        x: (state.x + decision.delay as f64 - d_avg_max).max(0.0),
        z: state.z + net - delta_u / horizon as f64,
        h_u: state.h_u + decision.gamma_u - decision.usage_amount,
        h_d: state.h_d + decision.gamma_d - decision.delay as f64,
        b: state.b + net,
        slot: state.slot + 1,
        ..*state
    };
    let expected = next.b - next.shift_at(delta_u, horizon);
    if (next.z - expected).abs() > IDENTITY_TOL {
        return Err(Error::Consistency {
            slot: state.slot,
            message: format!("Z = {} but B − A_t = {}", next.z, expected),
        });
    }
    Ok(next)
}

/// The constant `G` bounding the squared increments in the one-slot drift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftBound {
    pub g: f64,
}

/// `G` from the rates, the delay targets and `Δ_u/T_o`. `per_load_d_max` is
/// the largest delay cap over the trace.
pub fn drift_bound_g(
    battery: &BatteryParams,
    mu: f64,
    d_avg_max: f64,
    per_load_d_max: f64,
    delta_u: f64,
    horizon: usize,
) -> DriftBound {
    let step = delta_u / horizon as f64;
    let r = battery.r_max;
    let d = battery.d_max_rate;
    let g = 0.5 * (r - step).powi(2).max((d + step).powi(2))
        + 0.5 * (r * r).max(d * d)
        + 0.5 * mu * (d_avg_max * d_avg_max).max((per_load_d_max - d_avg_max).powi(2))
        + 0.5 * mu * per_load_d_max * per_load_d_max;
    DriftBound { g }
}

/// Quadratic Lyapunov function `½[Z² + H_u² + μ(X² + H_d²)]`.
pub fn lyapunov(state: &ControllerState, mu: f64) -> f64 {
    0.5 * (state.z * state.z
        + state.h_u * state.h_u
        + mu * (state.x * state.x + state.h_d * state.h_d))
}

/// Right-hand side of the one-slot drift bound evaluated at a decision.
/// `demand` is the total active demand of the slot.
#[allow(clippy::too_many_arguments)]
pub fn drift_bound_rhs(
    state: &ControllerState,
    decision: &ControlDecision,
    demand: f64,
    g: &DriftBound,
    mu: f64,
    d_avg_max: f64,
    delta_u: f64,
    horizon: usize,
) -> f64 {
    let step = delta_u / horizon as f64;
    let d = decision.delay as f64;
    let bought = decision.e + decision.s_r;
    state.z * (bought + decision.s_w - demand - step) + state.h_u * decision.gamma_u
        - state.h_u * bought
        + mu * state.x * (d - d_avg_max)
        + g.g
        - state.h_u.abs() * (decision.s_w - demand)
        + mu * state.h_d * (decision.gamma_d - d)
}

/// Test hooks that deliberately corrupt the controller.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    #[default]
    None,
    /// Flips the sign of the immediate-service objective in the delay rule.
    NegateOmegaO,
}

/// The controller with its resolved parameters.
#[derive(Debug, Clone)]
pub struct Controller {
    pub battery: BatteryParams,
    pub grid: GridParams,
    pub usage: CostFn,
    pub delay: CostFn,
    pub alpha: f64,
    pub mu: f64,
    pub d_avg_max: f64,
    pub delta_u: f64,
    pub horizon: usize,
    pub design: Design,
    pub fault: Fault,
}

impl Controller {
    pub fn new(model: &Model, horizon: usize) -> Result<Self> {
        let design = design_params(model, horizon)?;
        Ok(Self::with_design(model, horizon, design))
    }

    pub fn with_design(model: &Model, horizon: usize, design: Design) -> Self {
        Self {
            battery: model.battery,
            grid: model.grid,
            usage: model.costs.usage.clone(),
            delay: model.delay_fn(),
            alpha: model.weights.alpha,
            mu: model.weights.mu,
            d_avg_max: model.weights.d_avg_max,
            delta_u: model.weights.delta_u,
            horizon,
            design,
            fault: Fault::None,
        }
    }

    pub fn init_state(&self, mode: Z0Mode) -> ControllerState {
        init_state(&self.battery, self.design.a_o, self.design.v, mode)
    }

    /// Delay-subproblem objective at `d`, honoring the fault hook.
    pub fn delay_objective(&self, state: &ControllerState, task: &LoadTask, d: u32) -> f64 {
        if d == 0 {
            let omega_o = -task.intensity * (state.z - state.h_u.abs());
            match self.fault {
                Fault::None => omega_o,
                Fault::NegateOmegaO => -omega_o,
            }
        } else {
            self.mu * d as f64 * (state.x - state.h_d)
        }
    }

    pub fn schedule(&self, state: &ControllerState, task: &LoadTask) -> u32 {
        match self.fault {
            Fault::None => schedule_load(state, task, self.mu),
            Fault::NegateOmegaO => {
                let omega_o = task.intensity * (state.z - state.h_u.abs());
                delay_rule(state, task, self.mu, omega_o)
            }
        }
    }

    /// `Γ_d = min{d_t^max, d^max}`; 0 for a slot without an arrival.
    pub fn delay_cap(&self, task: Option<&LoadTask>) -> f64 {
        task.map_or(0.0, |t| (t.max_delay as f64).min(self.d_avg_max))
    }

    pub fn gamma_d(&self, state: &ControllerState, task: Option<&LoadTask>) -> f64 {
        aux_solution(
            state.h_d,
            state.v,
            self.alpha / self.mu,
            &self.delay,
            self.delay_cap(task),
        )
    }

    pub fn gamma_u(&self, state: &ControllerState) -> f64 {
        aux_solution(state.h_u, state.v, 1.0, &self.usage, state.gamma_u_cap)
    }

    pub fn energy(
        &self,
        state: &ControllerState,
        demand: f64,
        s_w: f64,
        renewable: f64,
        price: f64,
    ) -> Result<EnergyAction> {
        energy_control(
            state,
            demand,
            s_w,
            renewable,
            price,
            &self.battery,
            &self.grid,
        )
    }

    pub fn advance(
        &self,
        state: &ControllerState,
        decision: &ControlDecision,
    ) -> Result<ControllerState> {
        update_queues(state, decision, self.d_avg_max, self.delta_u, self.horizon)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn state(z: f64, h_u: f64, x: f64, h_d: f64, v: f64) -> ControllerState {
        ControllerState {
            z,
            x,
            h_u,
            h_d,
            b: 0.0,
            a_o: -z,
            v,
            gamma_u_cap: 0.165,
            slot: 0,
        }
    }

    fn task(rho: f64, max_delay: u32) -> LoadTask {
        LoadTask {
            arrival_slot: 0,
            intensity: rho,
            duration: 3,
            max_delay,
        }
    }

    #[test]
    fn defaults_design() {
        let d = design_params(&Model::defaults(), 288).unwrap();
        assert_relative_eq!(d.v_max, 2.34 / 0.184, epsilon = 1e-12);
        assert_relative_eq!(d.v_max, 12.717391304347826, epsilon = 1e-9);
        assert_relative_eq!(d.a_o, 2.67, epsilon = 1e-12);
        assert_eq!(d.v, d.v_max);
    }

    #[test]
    fn zero_v_shift() {
        let mut m = Model::defaults();
        m.weights.v = Some(0.0);
        let d = design_params(&m, 288).unwrap();
        assert_relative_eq!(d.a_o, 0.0 + 0.165 + 0.165, epsilon = 1e-15);
    }

    #[test]
    fn negative_delta_shift() {
        let mut m = Model::defaults();
        m.weights.delta_u = -0.288;
        m.weights.v = Some(1.0);
        let d = design_params(&m, 288).unwrap();
        // A_o' = 0 + 0.118 + 0.066 + 0.165 + 0.165 − 0.001, then − Δ_u.
        assert_relative_eq!(d.a_o, 0.513 + 0.288, epsilon = 1e-12);
    }

    #[test]
    fn design_rejects_small_battery() {
        let mut m = Model::defaults();
        m.battery.b_max = 0.5;
        assert!(matches!(design_params(&m, 288), Err(Error::Config(_))));
    }

    #[test]
    fn init_shifted_and_zero() {
        let b = BatteryParams::defaults();
        let s = init_state(&b, 2.67, 12.0, Z0Mode::Shifted);
        assert_relative_eq!(s.z, -2.67);
        assert_eq!((s.x, s.h_u, s.h_d), (0.0, 0.0, 0.0));
        let mut b2 = b;
        b2.b_init = 2.67;
        b2.b_max = 3.0;
        let s = init_state(&b2, 2.67, 12.0, Z0Mode::Shifted);
        assert_eq!(s.z, 0.0);
        let s = init_state(&b, 2.67, 12.0, Z0Mode::Zero);
        assert_eq!(s.z, 0.0);
        assert_eq!(s.a_o, 0.0);
    }

    #[test]
    fn delay_rule_branches() {
        let s = state(-2.0, 0.3, 0.5, 0.2, 10.0);
        assert_eq!(schedule_load(&s, &task(0.1, 18), 1.0), 0);

        let s = state(-2.0, 0.3, 0.0, 0.5, 10.0);
        assert_eq!(schedule_load(&s, &task(0.1, 18), 1.0), 18);

        let s = state(-2.0, 0.3, 0.0, 0.0, 10.0);
        assert_eq!(schedule_load(&s, &task(0.0, 18), 1.0), 0);

        // ω_o = 0.1·(2 + 0.3) = 0.23 > ω_1 = 0.1 → delay by one slot.
        let s = state(-2.0, 0.3, 0.3, 0.2, 10.0);
        assert_eq!(schedule_load(&s, &task(0.1, 18), 1.0), 1);

        // No freedom without a delay allowance.
        assert_eq!(schedule_load(&s, &task(0.1, 0), 1.0), 0);
    }

    #[test]
    fn aux_branches() {
        let c = CostFn::quadratic(0.2);
        assert_eq!(aux_solution(-1.0, 10.0, 1.0, &c, 0.165), 0.165);
        assert_relative_eq!(
            aux_solution(-0.4, 10.0, 1.0, &c, 0.165),
            0.1,
            epsilon = 1e-15
        );
        assert_eq!(aux_solution(0.5, 10.0, 1.0, &c, 0.165), 0.0);
        assert_eq!(aux_solution(-0.1, 0.0, 1.0, &c, 0.165), 0.165);
        assert_eq!(aux_solution(0.1, 0.0, 1.0, &c, 0.165), 0.0);
        assert_eq!(aux_solution(-0.1, 10.0, 1.0, &c, 0.0), 0.0);
    }

    #[test]
    fn split() {
        assert_eq!(renewable_split(0.2, 0.05), 0.05);
        assert_eq!(renewable_split(0.05, 0.2), 0.05);
        assert_eq!(renewable_split(0.0, 0.2), 0.0);
    }

    #[test]
    fn low_level_charges() {
        let mut b = BatteryParams::defaults();
        b.c_rc = 0.001;
        let g = GridParams::defaults();
        let s = state(-3.0, 0.0, 0.0, 0.0, 10.0);
        // L* − S_w = 0.1 and S − S_w = 0.05.
        let a = energy_control(&s, 0.15, 0.05, 0.1, 0.118, &b, &g).unwrap();
        assert_eq!(a.case, EnergyCase::LowLevel);
        assert_eq!(a.regime, Regime::Charge);
        assert_relative_eq!(a.s_r, 0.05, epsilon = 1e-15);
        assert_relative_eq!(a.q, 0.115, epsilon = 1e-15);
        assert_relative_eq!(a.e, 0.215, epsilon = 1e-15);
        assert_relative_eq!(a.objective, -0.5313, epsilon = 1e-12);
        assert_relative_eq!(a.idle_objective, -0.182, epsilon = 1e-12);
    }

    #[test]
    fn nothing_to_do_is_idle() {
        let b = BatteryParams::defaults();
        let g = GridParams::defaults();
        let s = state(0.5, 0.1, 0.0, 0.0, 10.0);
        let a = energy_control(&s, 0.1, 0.1, 0.1, 0.099, &b, &g).unwrap();
        assert_eq!(a.regime, Regime::Idle);
        assert_eq!((a.e, a.q, a.d_rate, a.s_r), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn high_level_discharge_comparison() {
        let b = BatteryParams::defaults();
        let g = GridParams::defaults();
        for (z, v) in [(0.2, 10.0), (0.0, 0.001), (1.0, 0.0)] {
            let s = state(z, 0.0, 0.0, 0.0, v);
            let a = energy_control(&s, 0.2, 0.0, 0.0, 0.118, &b, &g).unwrap();
            assert_eq!(a.case, EnergyCase::HighLevel);
            let w = z + v * 0.118;
            let discharge = 0.035 * w + v * b.c_dc < 0.2 * w;
            if discharge {
                assert_eq!(a.regime, Regime::Discharge);
                assert_relative_eq!(a.d_rate, 0.165);
                assert_relative_eq!(a.e, 0.035, epsilon = 1e-15);
            } else {
                assert_eq!(a.regime, Regime::Idle);
                assert_relative_eq!(a.e, 0.2);
            }
        }
    }

    #[test]
    fn over_limit_is_infeasible() {
        let b = BatteryParams::defaults();
        let g = GridParams::defaults();
        let s = state(-3.0, 0.0, 0.0, 0.0, 10.0);
        let e = energy_control(&s, 0.5, 0.0, 0.0, 0.118, &b, &g).unwrap_err();
        assert!(matches!(e, Error::InfeasibleSlot { .. }));
    }

    fn decision(q: f64, s_r: f64, d_rate: f64, delay: u32) -> ControlDecision {
        ControlDecision {
            e: 0.0,
            q,
            d_rate,
            s_w: 0.0,
            s_r,
            delay,
            gamma_u: 0.0,
            gamma_d: 0.0,
            entry_cost: 0.0,
            usage_amount: (q + s_r - d_rate).abs(),
            regime: Regime::Idle,
        }
    }

    #[test]
    fn queue_updates() {
        let b = BatteryParams::defaults();
        let s = init_state(&b, 2.67, 12.0, Z0Mode::Shifted);

        let n = update_queues(&s, &decision(0.0, 0.0, 0.0, 0), 2.0, 0.288, 288).unwrap();
        assert_eq!(n.x, 0.0);
        assert_relative_eq!(n.z, s.z - 0.001, epsilon = 1e-15);
        assert_eq!(n.b, s.b);

        let n = update_queues(&s, &decision(0.06, 0.04, 0.0, 0), 2.0, 0.0, 288).unwrap();
        assert_relative_eq!(n.z, s.z + 0.1, epsilon = 1e-15);
        assert_relative_eq!(n.b, s.b + 0.1, epsilon = 1e-15);

        let n = update_queues(&s, &decision(0.0, 0.0, 0.0, 18), 12.0, 0.0, 288).unwrap();
        assert_eq!(n.x, 6.0);
        assert_eq!(n.h_d, -18.0);
    }

    #[test]
    fn identity_violation_trapped() {
        let b = BatteryParams::defaults();
        let mut s = init_state(&b, 2.67, 12.0, Z0Mode::Shifted);
        s.z += 1e-6;
        let e = update_queues(&s, &decision(0.0, 0.0, 0.0, 0), 2.0, 0.0, 288).unwrap_err();
        assert!(matches!(e, Error::Consistency { .. }));
    }

    #[test]
    fn drift_constant() {
        let b = BatteryParams::defaults();
        let g = drift_bound_g(&b, 1.0, 18.0, 18.0, 0.0, 288);
        assert_relative_eq!(g.g, 0.165f64.powi(2) + 324.0, epsilon = 1e-12);
        assert_relative_eq!(g.g, 324.027225, epsilon = 1e-9);

        let zero = BatteryParams {
            r_max: 0.0,
            d_max_rate: 0.0,
            ..b
        };
        assert_eq!(drift_bound_g(&zero, 1.0, 0.0, 0.0, 0.0, 288).g, 0.0);

        // Δ_u/T_o = R_max: first term becomes ½(D_max + R_max)².
        let g = drift_bound_g(&b, 1.0, 0.0, 0.0, 288.0 * 0.165, 288);
        assert_relative_eq!(
            g.g,
            0.5 * 0.33f64.powi(2) + 0.5 * 0.165f64.powi(2),
            epsilon = 1e-12
        );
    }
}
