//! Physical and economic parameters: battery, grid, convex cost functions and
//! control weights, plus joint feasibility validation of a configuration.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryParams {
    /// Minimum energy level that must stay in the battery (kWh).
    pub b_min: f64,
    /// Maximum energy level allowed (kWh).
    pub b_max: f64,
    /// Maximum charge per slot (kWh).
    pub r_max: f64,
    /// Maximum discharge per slot (kWh).
    pub d_max_rate: f64,
    /// Entry cost per charging event ($).
    pub c_rc: f64,
    /// Entry cost per discharging event ($).
    pub c_dc: f64,
    /// Initial energy level (kWh).
    pub b_init: f64,
}

impl BatteryParams {
    pub fn defaults() -> Self {
        Self {
            b_min: 0.0,
            b_max: 3.0,
            r_max: 0.165,
            d_max_rate: 0.165,
            c_rc: 0.001,
            c_dc: 0.001,
            b_init: 0.0,
        }
    }

    /// Cap on the per-slot net battery change, `max{R_max, D_max}`.
    pub fn gamma_u(&self) -> f64 {
        self.r_max.max(self.d_max_rate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    /// Maximum energy purchasable per slot (kWh).
    pub e_max: f64,
    pub p_min: f64,
    pub p_max: f64,
}

impl GridParams {
    pub fn defaults() -> Self {
        Self {
            e_max: 0.3,
            p_min: 0.063,
            p_max: 0.118,
        }
    }
}

/// A continuous, convex, non-decreasing cost on `[0, ∞)` described by its
/// value, derivative and inverse derivative.
pub trait ConvexCost: Send + Sync + fmt::Debug {
    fn value(&self, x: f64) -> f64;
    fn derivative(&self, x: f64) -> f64;
    /// Inverse of [`ConvexCost::derivative`] on the derivative's range.
    fn inverse_derivative(&self, y: f64) -> f64;
}

#[derive(Debug, Clone)]
pub enum CostFn {
    /// `k·x²`
    Quadratic {
        k: f64,
    },
    /// `k·x^p` with `p > 1`.
    Power {
        k: f64,
        exponent: f64,
    },
    Custom(Arc<dyn ConvexCost>),
}

impl CostFn {
    pub fn quadratic(k: f64) -> Self {
        CostFn::Quadratic { k }
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            CostFn::Quadratic { k } => k * x * x,
            CostFn::Power { k, exponent } => k * x.powf(*exponent),
            CostFn::Custom(c) => c.value(x),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            CostFn::Quadratic { k } => 2.0 * k * x,
            CostFn::Power { k, exponent } => k * exponent * x.powf(exponent - 1.0),
            CostFn::Custom(c) => c.derivative(x),
        }
    }

    pub fn inverse_derivative(&self, y: f64) -> f64 {
        match self {
            CostFn::Quadratic { k } => y / (2.0 * k),
            CostFn::Power { k, exponent } => (y / (k * exponent)).powf(1.0 / (exponent - 1.0)),
            CostFn::Custom(c) => c.inverse_derivative(y),
        }
    }

    /// Scales the cost by `c > 0`.
    pub fn scaled(&self, c: f64) -> CostFn {
        match self {
            CostFn::Quadratic { k } => CostFn::Quadratic { k: k * c },
            CostFn::Power { k, exponent } => CostFn::Power {
                k: k * c,
                exponent: *exponent,
            },
            CostFn::Custom(inner) => CostFn::Custom(Arc::new(Scaled {
                inner: inner.clone(),
                factor: c,
            })),
        }
    }

    /// Numerical shape check on `[0, cap]`: finite derivative at the cap,
    /// non-decreasing, convex. Returns a description of the first failure.
    pub fn check_shape(&self, cap: f64) -> Option<String> {
        let d_cap = self.derivative(cap.max(0.0));
        if !d_cap.is_finite() {
            return Some(format!("derivative at cap {cap} is not finite"));
        }
        if cap <= 0.0 {
            return None;
        }
        const N: usize = 64;
        let xs: Vec<f64> = (0..=N).map(|i| cap * i as f64 / N as f64).collect();
        let vals: Vec<f64> = xs.iter().map(|&x| self.value(x)).collect();
        for w in vals.windows(2) {
            if w[1] < w[0] - 1e-12 * (1.0 + w[0].abs()) {
                return Some("cost is decreasing".to_string());
            }
        }
        for w in vals.windows(3) {
            if w[0] + w[2] - 2.0 * w[1] < -1e-12 * (1.0 + w[1].abs()) {
                return Some("cost is not convex".to_string());
            }
        }
        None
    }
}

#[derive(Debug)]
struct Scaled {
    inner: Arc<dyn ConvexCost>,
    factor: f64,
}

impl ConvexCost for Scaled {
    fn value(&self, x: f64) -> f64 {
        self.factor * self.inner.value(x)
    }
    fn derivative(&self, x: f64) -> f64 {
        self.factor * self.inner.derivative(x)
    }
    fn inverse_derivative(&self, y: f64) -> f64 {
        self.inner.inverse_derivative(y / self.factor)
    }
}

/// Battery usage cost `C_u` and average-delay cost `C_d`.
#[derive(Debug, Clone)]
pub struct CostModel {
    pub usage: CostFn,
    /// `None` selects the normalized quadratic `x²/(d^max)²`, recomputed
    /// whenever the delay target changes.
    pub delay: Option<CostFn>,
}

impl CostModel {
    pub fn defaults() -> Self {
        Self {
            usage: CostFn::quadratic(0.2),
            delay: None,
        }
    }

    /// Resolves `C_d` for a given average-delay target. A zero target makes
    /// the normalized cost identically zero.
    pub fn delay_fn(&self, d_avg_max: f64) -> CostFn {
        match &self.delay {
            Some(f) => f.clone(),
            None if d_avg_max > 0.0 => CostFn::quadratic(1.0 / (d_avg_max * d_avg_max)),
            None => CostFn::quadratic(0.0),
        }
    }

    pub fn usage_cost(&self, x: f64) -> Result<f64> {
        if x < 0.0 {
            return Err(Error::NegativeInput {
                what: "usage cost",
                value: x,
            });
        }
        Ok(self.usage.value(x))
    }

    pub fn delay_cost(&self, x: f64, d_avg_max: f64) -> Result<f64> {
        if x < 0.0 {
            return Err(Error::NegativeInput {
                what: "delay cost",
                value: x,
            });
        }
        Ok(self.delay_fn(d_avg_max).value(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    /// Weight of the delay cost.
    pub alpha: f64,
    /// Weight of the delay queues in the Lyapunov function.
    pub mu: f64,
    /// Drift-penalty weight. `None` uses the largest feasible value.
    pub v: Option<f64>,
    /// Desired battery-level change over the horizon (kWh).
    pub delta_u: f64,
    /// Maximum average scheduling delay (slots).
    pub d_avg_max: f64,
}

impl Weights {
    pub fn defaults() -> Self {
        Self {
            alpha: 1.0,
            mu: 1.0,
            v: None,
            delta_u: 0.0,
            d_avg_max: 18.0,
        }
    }
}

/// Everything the controller and the accounting need, bundled.
#[derive(Debug, Clone)]
pub struct Model {
    pub battery: BatteryParams,
    pub grid: GridParams,
    pub costs: CostModel,
    pub weights: Weights,
}

impl Model {
    pub fn defaults() -> Self {
        Self {
            battery: BatteryParams::defaults(),
            grid: GridParams::defaults(),
            costs: CostModel::defaults(),
            weights: Weights::defaults(),
        }
    }

    pub fn delay_fn(&self) -> CostFn {
        self.costs.delay_fn(self.weights.d_avg_max)
    }

    pub fn validate(&self, horizon: usize) -> ValidationReport {
        validate_config(
            &self.battery,
            &self.grid,
            &self.costs,
            &self.weights,
            horizon,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    pub severity: Severity,
    pub field: String,
    pub message: String,
}

/// A list of rule violations; empty means valid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn error(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.issues.push(Issue {
            severity: Severity::Error,
            field: field.into(),
            message: message.into(),
        });
    }

    pub fn warning(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.issues.push(Issue {
            severity: Severity::Warning,
            field: field.into(),
            message: message.into(),
        });
    }

    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn has_errors(&self) -> bool {
        self.issues.iter().any(|i| i.severity == Severity::Error)
    }

    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    pub fn merge(&mut self, other: ValidationReport) {
        self.issues.extend(other.issues);
    }

    /// Converts a report with errors into [`Error::Config`].
    pub fn into_result(self) -> Result<()> {
        if !self.has_errors() {
            return Ok(());
        }
        let msg = self
            .errors()
            .map(|i| format!("{}: {}", i.field, i.message))
            .collect::<Vec<_>>()
            .join("; ");
        Err(Error::Config(msg))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for issue in &self.issues {
            let tag = match issue.severity {
                Severity::Error => "error",
                Severity::Warning => "warning",
            };
            writeln!(f, "{tag}: {}: {}", issue.field, issue.message)?;
        }
        Ok(())
    }
}

/// Numerator of the largest feasible penalty weight,
/// `B_max − B_min − R_max − D_max − 2Γ_u − |Δ_u|`.
pub fn v_max_numerator(battery: &BatteryParams, delta_u: f64) -> f64 {
    battery.b_max
        - battery.b_min
        - battery.r_max
        - battery.d_max_rate
        - 2.0 * battery.gamma_u()
        - delta_u.abs()
}

pub fn validate_config(
    battery: &BatteryParams,
    grid: &GridParams,
    costs: &CostModel,
    weights: &Weights,
    horizon: usize,
) -> ValidationReport {
    let mut r = ValidationReport::default();
    let finite = |x: f64| x.is_finite();

    for (name, v) in [
        ("battery.b_min", battery.b_min),
        ("battery.b_max", battery.b_max),
        ("battery.r_max", battery.r_max),
        ("battery.d_max_rate", battery.d_max_rate),
        ("battery.c_rc", battery.c_rc),
        ("battery.c_dc", battery.c_dc),
        ("battery.b_init", battery.b_init),
        ("grid.e_max", grid.e_max),
        ("grid.p_min", grid.p_min),
        ("grid.p_max", grid.p_max),
        ("weights.alpha", weights.alpha),
        ("weights.mu", weights.mu),
        ("weights.delta_u", weights.delta_u),
        ("weights.d_avg_max", weights.d_avg_max),
    ] {
        if !finite(v) {
            r.error(name, format!("must be finite, got {v}"));
        }
    }

    if !(0.0 <= battery.b_min && battery.b_min <= battery.b_init && battery.b_init <= battery.b_max)
    {
        r.error(
            "battery",
            format!(
                "need 0 <= b_min <= b_init <= b_max, got {} / {} / {}",
                battery.b_min, battery.b_init, battery.b_max
            ),
        );
    }
    if battery.r_max <= 0.0 {
        r.error("battery.r_max", "must be > 0");
    }
    if battery.d_max_rate <= 0.0 {
        r.error("battery.d_max_rate", "must be > 0");
    }
    if battery.c_rc < 0.0 {
        r.error("battery.c_rc", "must be >= 0");
    }
    if battery.c_dc < 0.0 {
        r.error("battery.c_dc", "must be >= 0");
    }

    if grid.e_max <= 0.0 {
        r.error("grid.e_max", "must be > 0");
    }
    if !(0.0 <= grid.p_min && grid.p_min <= grid.p_max) {
        r.error(
            "grid",
            format!(
                "need 0 <= p_min <= p_max, got {} / {}",
                grid.p_min, grid.p_max
            ),
        );
    }

    if weights.alpha <= 0.0 {
        r.error("weights.alpha", "must be > 0");
    }
    if weights.mu <= 0.0 {
        r.error("weights.mu", "must be > 0");
    }
    if let Some(v) = weights.v {
        if !(v >= 0.0 && v.is_finite()) {
            r.error("weights.v", format!("must be finite and >= 0, got {v}"));
        }
    }
    if weights.d_avg_max < 0.0 {
        r.error("weights.d_avg_max", "must be >= 0");
    }
    if horizon == 0 {
        r.error("horizon", "must be >= 1");
    }
    let delta_cap = (battery.b_max - battery.b_min).min(horizon as f64 * battery.gamma_u());
    if weights.delta_u.abs() > delta_cap {
        r.error(
            "weights.delta_u",
            format!("|delta_u| = {} exceeds {delta_cap}", weights.delta_u.abs()),
        );
    }

    let gamma_u = battery.gamma_u();
    if let Some(msg) = costs.usage.check_shape(gamma_u) {
        r.error("costs.usage", msg);
    }
    let delay = costs.delay_fn(weights.d_avg_max);
    if let Some(msg) = delay.check_shape(weights.d_avg_max) {
        r.error("costs.delay", msg);
    }

    let num = v_max_numerator(battery, weights.delta_u);
    if num <= 0.0 {
        r.error(
            "v_max",
            format!(
                "V_max <= 0: b_max - b_min = {} does not exceed r_max + d_max + 2*gamma_u + |delta_u| = {}",
                battery.b_max - battery.b_min,
                battery.b_max - battery.b_min - num
            ),
        );
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quadratic_costs() {
        let costs = CostModel::defaults();
        assert_relative_eq!(costs.usage_cost(0.165).unwrap(), 0.005445, epsilon = 1e-15);
        assert_eq!(costs.usage_cost(0.0).unwrap(), 0.0);
        assert_relative_eq!(costs.delay_cost(18.0, 18.0).unwrap(), 1.0, epsilon = 1e-15);
        assert!(matches!(
            costs.usage_cost(-0.1),
            Err(Error::NegativeInput { .. })
        ));
        let u = &costs.usage;
        assert_relative_eq!(u.derivative(0.165), 0.066, epsilon = 1e-15);
        assert_relative_eq!(u.inverse_derivative(0.04), 0.1, epsilon = 1e-15);
    }

    #[test]
    fn zero_delay_target_gives_zero_delay_cost() {
        let f = CostModel::defaults().delay_fn(0.0);
        assert_eq!(f.value(3.0), 0.0);
    }

    #[test]
    fn defaultss_are_valid() {
        let m = Model::defaults();
        let r = m.validate(288);
        assert!(r.is_empty(), "{r}");
    }

    #[test]
    fn small_battery_has_no_feasible_v() {
        let mut m = Model::defaults();
        m.battery.b_max = 0.5;
        let r = m.validate(288);
        assert!(r.issues.iter().any(|i| i.field == "v_max"), "{r}");
    }

    #[test]
    fn zero_e_max_invalid() {
        let mut m = Model::defaults();
        m.grid.e_max = 0.0;
        assert!(m.validate(288).has_errors());
    }

    #[test]
    fn delta_u_bound() {
        let mut m = Model::defaults();
        m.weights.delta_u = 0.5;
        assert!(!m.validate(288).has_errors());
        // T_o·Γ_u = 2·0.165 caps it below B range.
        assert!(m.validate(2).has_errors());
    }

    #[test]
    fn concave_custom_cost_rejected() {
        #[derive(Debug)]
        struct Sqrt;
        impl ConvexCost for Sqrt {
            fn value(&self, x: f64) -> f64 {
                x.sqrt()
            }
            fn derivative(&self, x: f64) -> f64 {
                0.5 / x.sqrt()
            }
            fn inverse_derivative(&self, y: f64) -> f64 {
                0.25 / (y * y)
            }
        }
        let f = CostFn::Custom(Arc::new(Sqrt));
        assert!(f.check_shape(1.0).is_some());
    }

    #[test]
    fn power_cost_inverse() {
        let f = CostFn::Power {
            k: 0.3,
            exponent: 3.0,
        };
        let y = f.derivative(0.7);
        assert_relative_eq!(f.inverse_derivative(y), 0.7, epsilon = 1e-12);
    }
}
