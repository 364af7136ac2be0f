//! Parameter sweeps over seeded replications, and the `verify` battery.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentSpec;
use crate::controller::Controller;
use crate::error::Result;
use crate::model::Model;
use crate::oracle::{self, CheckReport};
use crate::scenario::{generate_trace, Trace};
use crate::simulator::{run, Policy, RunSummary};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub d_max: f64,
    /// Per-load delay cap written over the trace; `None` keeps the trace's.
    pub d_t_max: Option<u32>,
    pub b_max: f64,
    pub alpha: f64,
    pub mu: f64,
}

impl SweepPoint {
    pub fn apply(&self, model: &Model) -> Model {
        let mut m = model.clone();
        m.weights.d_avg_max = self.d_max;
        m.battery.b_max = self.b_max;
        m.weights.alpha = self.alpha;
        m.weights.mu = self.mu;
        m
    }

    pub fn trace(&self, base: &Trace) -> Trace {
        match self.d_t_max {
            Some(d) => base.with_max_delay(d),
            None => base.clone(),
        }
    }
}

/// Cartesian product of the sweep axes, `d_max` varying slowest.
pub fn sweep_points(spec: &ExperimentSpec) -> Vec<SweepPoint> {
    let s = &spec.experiment.sweep;
    let w = &spec.weights;
    let d_max = s.d_max.clone().unwrap_or_else(|| vec![w.d_avg_max]);
    let d_t_max: Vec<Option<u32>> = match &s.d_t_max {
        Some(v) => v.iter().copied().map(Some).collect(),
        None => vec![None],
    };
    let b_max = s.b_max.clone().unwrap_or_else(|| vec![spec.battery.b_max]);
    let alpha = s.alpha.clone().unwrap_or_else(|| vec![w.alpha]);
    let mu = s.mu.clone().unwrap_or_else(|| vec![w.mu]);
    let mut out = Vec::new();
    for &d in &d_max {
        for &dt in &d_t_max {
            for &b in &b_max {
                for &a in &alpha {
                    for &m in &mu {
                        out.push(SweepPoint {
                            d_max: d,
                            d_t_max: dt,
                            b_max: b,
                            alpha: a,
                            mu: m,
                        });
                    }
                }
            }
        }
    }
    out
}

/// One row of the tidy sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub d_max: f64,
    pub d_t_max: Option<u32>,
    pub b_max: f64,
    pub alpha: f64,
    pub mu: f64,
    pub policy: Policy,
    pub replication: usize,
    #[serde(rename = "J")]
    pub j: Option<f64>,
    pub entry: Option<f64>,
    pub usage_cost: Option<f64>,
    pub delay_cost: Option<f64>,
    pub total: Option<f64>,
    pub avg_delay: Option<f64>,
    pub error: String,
}

impl SweepRow {
    fn new(point: &SweepPoint, policy: Policy, replication: usize, r: Result<RunSummary>) -> Self {
        let base = Self {
            d_max: point.d_max,
            d_t_max: point.d_t_max,
            b_max: point.b_max,
            alpha: point.alpha,
            mu: point.mu,
            policy,
            replication,
            j: None,
            entry: None,
            usage_cost: None,
            delay_cost: None,
            total: None,
            avg_delay: None,
            error: String::new(),
        };
        match r {
            Ok(s) => Self {
                j: Some(s.j_bar),
                entry: Some(s.entry_bar),
                usage_cost: Some(s.usage_cost),
                delay_cost: Some(s.delay_cost),
                total: Some(s.total),
                avg_delay: Some(s.avg_delay),
                ..base
            },
            Err(e) => Self {
                error: e.to_string(),
                ..base
            },
        }
    }

    /// Monetary cost `J̄ + x̄_e`.
    pub fn monetary(&self) -> Option<f64> {
        Some(self.j? + self.entry?)
    }
}

/// Runs every (point, replication, policy) combination. Replication `r`
/// uses the trace seeded with `seed_base + r` for all points and policies.
/// Per-run failures are recorded in the row's `error` column.
pub fn run_sweep(spec: &ExperimentSpec, seed_base: u64) -> Result<Vec<SweepRow>> {
    let model = spec.model();
    let points = sweep_points(spec);
    let reps = spec.experiment.replications;
    let traces: Vec<Trace> = (0..reps)
        .map(|r| spec.trace(seed_base + r as u64))
        .collect::<Result<_>>()?;
    let mut jobs = Vec::new();
    for (pi, _) in points.iter().enumerate() {
        for r in 0..reps {
            for &p in &spec.experiment.policies {
                jobs.push((pi, r, p));
            }
        }
    }
    let mut opts = spec.run_options();
    opts.keep_records = false;
    let rows = crate::par::with_workers(spec.experiment.workers, || {
        crate::par::map(&jobs, |&(pi, r, policy)| {
            let point = &points[pi];
            let trace = point.trace(&traces[r]);
            let m = point.apply(&model);
            SweepRow::new(point, policy, r, run(&trace, policy, &m, &opts))
        })
    });
    Ok(rows)
}

/// Sweep generated directly from a profile, for callers without a spec.
pub fn seeded_traces(spec: &ExperimentSpec, seed_base: u64, n: usize) -> Result<Vec<Trace>> {
    let profile = spec.profile();
    (0..n)
        .map(|r| generate_trace(&profile, spec.scenario.horizon, seed_base + r as u64))
        .collect()
}

/// Replication means per sweep point and policy. Failed runs are counted
/// but excluded from the means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanRow {
    pub d_max: f64,
    pub d_t_max: Option<u32>,
    pub b_max: f64,
    pub alpha: f64,
    pub mu: f64,
    pub policy: Policy,
    pub runs: usize,
    pub failures: usize,
    #[serde(rename = "J")]
    pub j: f64,
    pub entry: f64,
    pub usage_cost: f64,
    pub delay_cost: f64,
    pub total: f64,
    pub avg_delay: f64,
}

impl MeanRow {
    pub fn monetary(&self) -> f64 {
        self.j + self.entry
    }
}

pub fn sweep_means(rows: &[SweepRow]) -> Vec<MeanRow> {
    let mut order = Vec::new();
    let mut groups: BTreeMap<usize, Vec<&SweepRow>> = BTreeMap::new();
    for row in rows {
        let key = order.iter().position(|r: &&SweepRow| {
            r.d_max == row.d_max
                && r.d_t_max == row.d_t_max
                && r.b_max == row.b_max
                && r.alpha == row.alpha
                && r.mu == row.mu
                && r.policy == row.policy
        });
        let key = key.unwrap_or_else(|| {
            order.push(row);
            order.len() - 1
        });
        groups.entry(key).or_default().push(row);
    }
    groups
        .into_iter()
        .map(|(k, g)| {
            let first = order[k];
            let ok: Vec<_> = g.iter().filter(|r| r.error.is_empty()).collect();
            let n = ok.len().max(1) as f64;
            let mean =
                |f: fn(&SweepRow) -> Option<f64>| ok.iter().filter_map(|r| f(r)).sum::<f64>() / n;
            MeanRow {
                d_max: first.d_max,
                d_t_max: first.d_t_max,
                b_max: first.b_max,
                alpha: first.alpha,
                mu: first.mu,
                policy: first.policy,
                runs: g.len(),
                failures: g.len() - ok.len(),
                j: mean(|r| r.j),
                entry: mean(|r| r.entry),
                usage_cost: mean(|r| r.usage_cost),
                delay_cost: mean(|r| r.delay_cost),
                total: mean(|r| r.total),
                avg_delay: mean(|r| r.avg_delay),
            }
        })
        .collect()
}

fn write_rows<T: Serialize, W: Write>(rows: &[T], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], writer: W) -> Result<()> {
    write_rows(rows, writer)
}

pub fn write_means_csv<W: Write>(rows: &[MeanRow], writer: W) -> Result<()> {
    write_rows(rows, writer)
}

pub fn save_csv<T: Serialize>(rows: &[T], path: impl AsRef<Path>) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_rows(rows, f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckReport>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push_result(&mut self, name: &str, r: Result<Vec<CheckReport>>) {
        match r {
            Ok(cs) => self.checks.extend(cs),
            Err(e) => self.checks.push(CheckReport {
                name: name.to_string(),
                passed: false,
                value: f64::NAN,
                bound: f64::NAN,
                detail: e.to_string(),
            }),
        }
    }
}

/// Runs the full invariant battery for a configuration: closed-form
/// equivalence, per-run invariants on a full-horizon joint run, and the
/// look-ahead comparison on a small instance.
pub fn verify(spec: &ExperimentSpec, seed: u64) -> VerifyReport {
    let model = spec.model();
    let vcfg = &spec.experiment.verify;
    let opts = spec.run_options();
    let mut report = VerifyReport { checks: Vec::new() };

    report.push_result(
        "subproblem_equivalence",
        Controller::new(&model, spec.scenario.horizon).map(|mut ctl| {
            ctl.fault = opts.fault;
            let r = oracle::closed_form_equivalence(&ctl, vcfg.equivalence_cases, seed);
            vec![CheckReport {
                name: "subproblem_equivalence".into(),
                passed: r.passed(),
                value: (r.delay_mismatches
                    + r.gamma_u_mismatches
                    + r.gamma_d_mismatches
                    + r.energy_mismatches) as f64,
                bound: 0.0,
                detail: format!(
                    "{} cases; mismatches delay {}, gamma_u {}, gamma_d {}, energy {}",
                    r.cases,
                    r.delay_mismatches,
                    r.gamma_u_mismatches,
                    r.gamma_d_mismatches,
                    r.energy_mismatches
                ),
            }]
        }),
    );

    report.push_result(
        "run_invariants",
        spec.trace(seed)
            .and_then(|trace| run(&trace, Policy::Joint, &model, &opts))
            .and_then(|r| oracle::run_invariants(&r, &model)),
    );

    let small = (|| {
        let mut profile = spec.profile();
        profile.slot_minutes = vcfg.small_slot_minutes;
        let trace = generate_trace(&profile, vcfg.small_horizon, seed)?;
        let r = run(&trace, Policy::Joint, &model, &opts)?;
        let frames = oracle::frame_optima(
            &trace,
            &r,
            &model,
            vcfg.frame_len,
            vcfg.oracle_step,
            vcfg.node_limit,
        )?;
        Ok(vec![oracle::performance_bound_check(&r, &frames, &model)?])
    })();
    report.push_result("performance_bound", small);
    report
}
