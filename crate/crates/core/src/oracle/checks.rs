//! Checks of a completed run against the performance guarantees and the
//! per-slot invariants. Every check yields a machine-readable
//! [`CheckReport`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::controller::{drift_bound_rhs, lyapunov, ControllerState, DriftBound, IDENTITY_TOL};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::oracle::lookahead::OracleSolution;
use crate::simulator::{RunSummary, BALANCE_TOL};

/// Tolerance on the one-slot drift inequality; both sides are sums of
/// products of order `10²`.
pub const DRIFT_TOL: f64 = 1e-9;
/// Tolerance on battery bounds (kWh).
pub const BOUND_TOL: f64 = 1e-9;
pub const JENSEN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    /// Achieved value (or violation count for per-slot checks).
    pub value: f64,
    /// Bound the value is compared against.
    pub bound: f64,
    pub detail: String,
}

impl CheckReport {
    fn new(name: &str, passed: bool, value: f64, bound: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            passed,
            value,
            bound,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: value {:.6e}, bound {:.6e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.bound
        )?;
        if !self.detail.is_empty() {
            write!(f, " ({})", self.detail)?;
        }
        Ok(())
    }
}

fn next_states(
    run: &RunSummary,
) -> impl Iterator<Item = (&crate::simulator::SlotRecord, ControllerState)> {
    run.records.iter().enumerate().map(move |(i, r)| {
        let next = run.records.get(i + 1).map_or(run.final_state, |n| n.state);
        (r, next)
    })
}

fn require_records(run: &RunSummary) -> Result<()> {
    if run.records.len() != run.slots_simulated {
        return Err(Error::FrameMismatch(
            "run was executed without per-slot records".into(),
        ));
    }
    Ok(())
}

/// `B_min ≤ B_t ≤ B_max` at every slot, including after the last one.
pub fn battery_bounds_check(run: &RunSummary, model: &Model) -> Result<CheckReport> {
    require_records(run)?;
    let b = &model.battery;
    let levels = run
        .records
        .iter()
        .map(|r| r.state.b)
        .chain(std::iter::once(run.final_state.b));
    let (mut violations, mut worst) = (0usize, 0.0f64);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for level in levels {
        lo = lo.min(level);
        hi = hi.max(level);
        let excess = (b.b_min - level).max(level - b.b_max);
        if excess > BOUND_TOL {
            violations += 1;
            worst = worst.max(excess);
        }
    }
    Ok(CheckReport::new(
        "battery_bounds",
        violations == 0,
        violations as f64,
        0.0,
        format!(
            "B in [{lo:.6}, {hi:.6}] vs [{}, {}], worst excess {worst:.3e}",
            b.b_min, b.b_max
        ),
    ))
}

/// `Z_t = B_t − A_t` at every slot.
pub fn identity_check(run: &RunSummary) -> Result<CheckReport> {
    require_records(run)?;
    let delta = run.weights.delta_u;
    let worst = run
        .records
        .iter()
        .map(|r| r.state)
        .chain(std::iter::once(run.final_state))
        .map(|s| (s.z - (s.b - s.shift_at(delta, run.horizon))).abs())
        .fold(0.0, f64::max);
    Ok(CheckReport::new(
        "shift_identity",
        worst <= IDENTITY_TOL,
        worst,
        IDENTITY_TOL,
        "",
    ))
}

/// Supply-demand balance and charge/discharge exclusivity at every slot.
pub fn balance_check(run: &RunSummary) -> Result<Vec<CheckReport>> {
    require_records(run)?;
    let mut worst = 0.0f64;
    let mut overlaps = 0usize;
    for r in &run.records {
        let d = &r.decision;
        worst = worst.max((d.e - d.q + d.s_w + d.d_rate - r.demand).abs());
        if (d.q + d.s_r) * d.d_rate != 0.0 {
            overlaps += 1;
        }
    }
    Ok(vec![
        CheckReport::new("balance", worst <= BALANCE_TOL, worst, BALANCE_TOL, ""),
        CheckReport::new(
            "no_simultaneous_charge_discharge",
            overlaps == 0,
            overlaps as f64,
            0.0,
            "",
        ),
    ])
}

/// One-slot drift `L(Θ_{t+1}) − L(Θ_t)` against its bound at every slot.
pub fn drift_check(run: &RunSummary) -> Result<CheckReport> {
    require_records(run)?;
    let w = &run.weights;
    let g = DriftBound { g: run.g };
    let (mut violations, mut worst) = (0usize, f64::NEG_INFINITY);
    for (r, next) in next_states(run) {
        let lhs = lyapunov(&next, w.mu) - lyapunov(&r.state, w.mu);
        let rhs = drift_bound_rhs(
            &r.state,
            &r.decision,
            r.demand,
            &g,
            w.mu,
            w.d_avg_max,
            w.delta_u,
            run.horizon,
        );
        let gap = lhs - rhs;
        worst = worst.max(gap);
        if gap > DRIFT_TOL * (1.0 + rhs.abs()) {
            violations += 1;
        }
    }
    Ok(CheckReport::new(
        "lyapunov_drift",
        violations == 0,
        violations as f64,
        0.0,
        format!("max(lhs − rhs) = {worst:.6e}, G = {:.6}", run.g),
    ))
}

/// Mean of `C(γ_t)` is at least `C` of the mean, for both auxiliaries.
pub fn jensen_check(run: &RunSummary, model: &Model) -> Vec<CheckReport> {
    let usage = &model.costs.usage;
    let delay = model.costs.delay_fn(run.weights.d_avg_max);
    let a = &run.aux;
    let gap_u = a.usage_cost_of_gamma - usage.value(a.gamma_u);
    let gap_d = a.delay_cost_of_gamma - delay.value(a.gamma_d);
    vec![
        CheckReport::new("jensen_usage", gap_u >= -JENSEN_TOL, gap_u, -JENSEN_TOL, ""),
        CheckReport::new("jensen_delay", gap_d >= -JENSEN_TOL, gap_d, -JENSEN_TOL, ""),
    ]
}

/// Delay-margin and battery-mismatch bounds.
pub fn margin_checks(run: &RunSummary, model: &Model) -> Vec<CheckReport> {
    let w = &run.weights;
    let b = &model.battery;
    let n = run.horizon as f64;
    let l0 = lyapunov(&run.initial_state, w.mu);
    let eps_d_bound =
        (2.0 * run.g / (w.mu * n) + l0 / (w.mu * n)).sqrt() + run.initial_state.x.abs() / n;
    let excess_delay = run.avg_delay - w.d_avg_max;
    let gamma_u = b.gamma_u();
    let v = run.design.v;
    let eps_u_bound = 2.0 * gamma_u
        + b.r_max
        + v * model.grid.p_max
        + v * model.costs.usage.derivative(gamma_u)
        + b.d_max_rate;
    vec![
        CheckReport::new(
            "delay_margin",
            run.epsilon_d.abs() <= eps_d_bound,
            run.epsilon_d,
            eps_d_bound,
            "",
        ),
        CheckReport::new(
            "delay_excess",
            excess_delay <= eps_d_bound,
            excess_delay,
            eps_d_bound,
            format!("avg delay {:.4} vs d^max {}", run.avg_delay, w.d_avg_max),
        ),
        CheckReport::new(
            "usage_mismatch",
            run.epsilon_u.abs() <= eps_u_bound,
            run.epsilon_u,
            eps_u_bound,
            "",
        ),
    ]
}

/// Left and right sides of the performance bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundTerms {
    pub run_cost: f64,
    pub mean_frame_optimum: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

/// Compares a run with the frame optima: passes iff
/// `u*(V) − (1/M)Σ u_m^opt ≤ G·T/V + (L_0 − L_{T_o})/(V·T_o)
///   + [C_u'(Γ_u)(H_{u,0} − H_{u,T_o}) + α·C_d'(Γ_d)(H_{d,0} − H_{d,T_o})]/T_o + slack`,
/// where the slack is one lattice step per slot priced at `P_max + C_u'(Γ_u)`.
pub fn performance_bound_terms(
    run: &RunSummary,
    frames: &[OracleSolution],
    model: &Model,
) -> Result<BoundTerms> {
    let Some(first) = frames.first() else {
        return Err(Error::FrameMismatch("no frames".into()));
    };
    let t = first.len;
    for (m, f) in frames.iter().enumerate() {
        if f.len != t || f.start != m * t {
            return Err(Error::FrameMismatch(format!(
                "frame {m} starts at {} with length {}",
                f.start, f.len
            )));
        }
    }
    if frames.len() * t != run.horizon {
        return Err(Error::FrameMismatch(format!(
            "{} frames of {t} slots do not cover {} slots",
            frames.len(),
            run.horizon
        )));
    }
    let w = &run.weights;
    let n = run.horizon as f64;
    let v = run.design.v;
    let s0 = &run.initial_state;
    let st = &run.horizon_state;
    let gamma_u = model.battery.gamma_u();
    let gamma_d = (run.max_task_delay as f64).min(w.d_avg_max);
    let delay = model.costs.delay_fn(w.d_avg_max);
    let du = model.costs.usage.derivative(gamma_u);
    let rhs = run.g * t as f64 / v
        + (lyapunov(s0, w.mu) - lyapunov(st, w.mu)) / (v * n)
        + (du * (s0.h_u - st.h_u) + w.alpha * delay.derivative(gamma_d) * (s0.h_d - st.h_d)) / n;
    let step = frames.iter().map(|f| f.step).fold(0.0, f64::max);
    let slack = step * (model.grid.p_max + du);
    let mean = frames.iter().map(|f| f.objective).sum::<f64>() / frames.len() as f64;
    Ok(BoundTerms {
        run_cost: run.total,
        mean_frame_optimum: mean,
        lhs: run.total - mean,
        rhs,
        slack,
    })
}

pub fn performance_bound_check(
    run: &RunSummary,
    frames: &[OracleSolution],
    model: &Model,
) -> Result<CheckReport> {
    let t = performance_bound_terms(run, frames, model)?;
    Ok(CheckReport::new(
        "performance_bound",
        t.lhs <= t.rhs + t.slack,
        t.lhs,
        t.rhs + t.slack,
        format!(
            "u* = {:.6}, mean frame optimum = {:.6}, slack = {:.3e}",
            t.run_cost, t.mean_frame_optimum, t.slack
        ),
    ))
}

/// Every per-run invariant check that needs no oracle.
pub fn run_invariants(run: &RunSummary, model: &Model) -> Result<Vec<CheckReport>> {
    let mut out = vec![battery_bounds_check(run, model)?, identity_check(run)?];
    out.extend(balance_check(run)?);
    out.push(drift_check(run)?);
    out.extend(margin_checks(run, model));
    out.extend(jensen_check(run, model));
    Ok(out)
}
