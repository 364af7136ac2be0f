//! Exogenous inputs: the three-stage price / solar / load generator and the
//! trace CSV format.
//!
//! Trace CSV header is `slot,price,renewable,intensity,duration,max_delay`,
//! one row per slot. An empty `intensity,duration,max_delay` triple means no
//! arrival in that slot. Decimals carry at most 9 fractional digits.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GridParams, ValidationReport};

pub const TRACE_HEADER: [&str; 6] = [
    "slot",
    "price",
    "renewable",
    "intensity",
    "duration",
    "max_delay",
];

/// Fractional digits kept in generated and stored values.
pub const DECIMALS: usize = 9;
/// Smallest representable step at [`DECIMALS`].
pub const QUANTUM: f64 = 1e-9;

/// Rounds to the stored decimal precision.
pub fn quantize(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadTask {
    pub arrival_slot: usize,
    /// Energy drawn per slot while served (kWh).
    pub intensity: f64,
    /// Service length in slots, at least 1.
    pub duration: u32,
    /// Largest allowed delay before service starts (slots).
    pub max_delay: u32,
}

impl LoadTask {
    /// Total requested energy `W = ρ·λ`.
    pub fn total_energy(&self) -> f64 {
        self.intensity * self.duration as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotInput {
    pub slot: usize,
    pub price: f64,
    pub renewable: f64,
    pub task: Option<LoadTask>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub slots: Vec<SlotInput>,
    pub slot_minutes: u32,
}

impl Trace {
    pub fn horizon(&self) -> usize {
        self.slots.len()
    }

    /// Largest per-load delay cap over the trace; 0 without arrivals.
    pub fn max_task_delay(&self) -> u32 {
        self.slots
            .iter()
            .filter_map(|s| s.task.map(|t| t.max_delay))
            .max()
            .unwrap_or(0)
    }

    /// Copy with every task's delay cap replaced.
    pub fn with_max_delay(&self, max_delay: u32) -> Trace {
        let mut t = self.clone();
        for s in &mut t.slots {
            if let Some(task) = &mut s.task {
                task.max_delay = max_delay;
            }
        }
        t
    }

    pub fn tasks(&self) -> impl Iterator<Item = &LoadTask> {
        self.slots.iter().filter_map(|s| s.task.as_ref())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageValues {
    pub high: f64,
    pub mid: f64,
    pub low: f64,
}

impl StageValues {
    pub fn get(&self, stage: Stage) -> f64 {
        match stage {
            Stage::High => self.high,
            Stage::Mid => self.mid,
            Stage::Low => self.low,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    High,
    Mid,
    Low,
}

/// Daily three-stage pattern for price and for the means of renewable
/// supply and load. Renewable and load draws are normal with standard
/// deviation `ratio·mean`, clamped at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageProfile {
    /// $/kWh per stage.
    pub price: StageValues,
    /// Mean renewable energy per slot (kWh).
    pub renewable_mean: StageValues,
    /// Mean arriving load per slot (kWh).
    pub load_mean: StageValues,
    /// Hour-of-day intervals `[start, end)` of the high stage.
    pub high_hours: Vec<(f64, f64)>,
    /// Hour-of-day intervals of the mid stage; everything else is low.
    pub mid_hours: Vec<(f64, f64)>,
    pub renewable_std_ratio: f64,
    pub load_std_ratio: f64,
    /// Inclusive bounds of the uniform duration draw.
    pub duration_min: u32,
    pub duration_max: u32,
    /// Per-load delay cap written to every generated task.
    pub max_delay: u32,
    pub slot_minutes: u32,
    /// Ceiling on the demand of loads served on arrival (kWh per slot).
    /// A task whose intensity would push any slot of its window above it
    /// is trimmed to the remaining headroom. `None` disables trimming.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demand_cap: Option<f64>,
}

impl StageProfile {
    pub fn defaults() -> Self {
        Self {
            price: StageValues {
                high: 0.118,
                mid: 0.099,
                low: 0.063,
            },
            renewable_mean: StageValues {
                high: 1.98 / 12.0,
                mid: 0.96 / 12.0,
                low: 0.005 / 12.0,
            },
            load_mean: StageValues {
                high: 2.4 / 12.0,
                mid: 1.38 / 12.0,
                low: 0.6 / 12.0,
            },
            high_hours: vec![(11.0, 17.0)],
            mid_hours: vec![(7.0, 11.0), (17.0, 19.0)],
            renewable_std_ratio: 0.4,
            load_std_ratio: 0.2,
            duration_min: 1,
            duration_max: 12,
            max_delay: 18,
            slot_minutes: 5,
            demand_cap: Some(0.3),
        }
    }

    pub fn slots_per_day(&self) -> usize {
        (24 * 60 / self.slot_minutes.max(1)) as usize
    }

    pub fn stage_of(&self, slot: usize) -> Stage {
        let minutes = (slot as u64 * self.slot_minutes as u64) % (24 * 60);
        let hour = minutes as f64 / 60.0;
        let inside = |iv: &[(f64, f64)]| iv.iter().any(|&(a, b)| a <= hour && hour < b);
        if inside(&self.high_hours) {
            Stage::High
        } else if inside(&self.mid_hours) {
            Stage::Mid
        } else {
            Stage::Low
        }
    }

    pub fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::default();
        let p = &self.price;
        if !(p.high >= p.mid && p.mid >= p.low) {
            r.error(
                "scenario.price",
                "stage prices must satisfy high >= mid >= low",
            );
        }
        if p.low < 0.0 {
            r.error("scenario.price", "prices must be >= 0");
        }
        for (name, sv) in [
            ("scenario.renewable_mean", &self.renewable_mean),
            ("scenario.load_mean", &self.load_mean),
        ] {
            if [sv.high, sv.mid, sv.low].iter().any(|v| !(*v >= 0.0)) {
                r.error(name, "stage means must be >= 0");
            }
        }
        if !(self.renewable_std_ratio >= 0.0) || !(self.load_std_ratio >= 0.0) {
            r.error("scenario", "std-dev ratios must be >= 0");
        }
        if self.duration_min < 1 {
            r.error("scenario.duration_min", "duration lower bound must be >= 1");
        }
        if self.duration_max < self.duration_min {
            r.error(
                "scenario.duration_max",
                "duration_max must be >= duration_min",
            );
        }
        if self.slot_minutes == 0 || (24 * 60) % self.slot_minutes != 0 {
            r.error("scenario.slot_minutes", "must divide a day evenly");
        }
        if self.demand_cap.is_some_and(|c| !(c > 0.0)) {
            r.error("scenario.demand_cap", "must be > 0");
        }
        for &(a, b) in self.high_hours.iter().chain(&self.mid_hours) {
            if !(0.0 <= a && a < b && b <= 24.0) {
                r.error("scenario.hours", format!("bad hour interval [{a}, {b})"));
            }
        }
        r
    }
}

/// Draws a trace. Prices follow the deterministic stage pattern; renewable
/// supply and loads are independent clamped-normal draws per slot; each slot
/// carries one arriving task with a uniform integer duration. With a demand
/// cap, intensities are trimmed so that serving every task on arrival never
/// needs more than the cap in any slot.
pub fn generate_trace(profile: &StageProfile, horizon: usize, seed: u64) -> Result<Trace> {
    if horizon == 0 {
        return Err(Error::Config("horizon must be >= 1".into()));
    }
    profile.validate().into_result()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng, mean: f64, ratio: f64| -> f64 {
        let normal = Normal::new(mean, ratio * mean).expect("validated std-dev");
        normal.sample(rng).max(0.0)
    };

    // Demand per slot if every task is served on arrival.
    let mut immediate = vec![0.0; horizon + profile.duration_max as usize];
    let slots = (0..horizon)
        .map(|t| {
            let stage = profile.stage_of(t);
            let price = quantize(profile.price.get(stage));
            let renewable = quantize(draw(
                &mut rng,
                profile.renewable_mean.get(stage),
                profile.renewable_std_ratio,
            ));
            let load = draw(
                &mut rng,
                profile.load_mean.get(stage),
                profile.load_std_ratio,
            );
            let duration = rng.random_range(profile.duration_min..=profile.duration_max);
            let window = &mut immediate[t..t + duration as usize];
            let mut intensity = quantize(load / duration as f64);
            if let Some(cap) = profile.demand_cap {
                let peak = window.iter().copied().fold(0.0, f64::max);
                // One quantum of margin keeps float sums of 9-decimal values
                // at or below the cap.
                let headroom = ((cap - peak - QUANTUM) * 1e9).floor() / 1e9;
                intensity = intensity.min(headroom.max(0.0));
            }
            for w in window.iter_mut() {
                *w += intensity;
            }
            SlotInput {
                slot: t,
                price,
                renewable,
                task: Some(LoadTask {
                    arrival_slot: t,
                    intensity,
                    duration,
                    max_delay: profile.max_delay,
                }),
            }
        })
        .collect();

    Ok(Trace {
        slots,
        slot_minutes: profile.slot_minutes,
    })
}

/// Lists every violated rule; an empty report means the trace is usable
/// with `grid`.
pub fn validate_trace(trace: &Trace, grid: &GridParams) -> ValidationReport {
    let mut r = ValidationReport::default();
    for (i, s) in trace.slots.iter().enumerate() {
        let at = format!("slot {i}");
        if s.slot != i {
            r.error(&at, format!("slot index {} out of sequence", s.slot));
        }
        if !(grid.p_min <= s.price && s.price <= grid.p_max) {
            r.error(
                &at,
                format!("price {} outside [{}, {}]", s.price, grid.p_min, grid.p_max),
            );
        }
        if !(s.renewable >= 0.0) {
            r.error(&at, format!("renewable {} must be >= 0", s.renewable));
        }
        if let Some(task) = &s.task {
            if task.arrival_slot != i {
                r.error(
                    &at,
                    format!("task arrival slot {} mismatch", task.arrival_slot),
                );
            }
            if !(task.intensity >= 0.0) {
                r.error(&at, format!("intensity {} must be >= 0", task.intensity));
            }
            if task.duration < 1 {
                r.error(&at, "duration >= 1 violated");
            }
        }
    }
    r
}

fn format_decimal(x: f64) -> String {
    let s = format!("{:.*}", DECIMALS, x);
    let s = s.trim_end_matches('0');
    let s = s.strip_suffix('.').unwrap_or(s);
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

pub fn write_trace<W: Write>(trace: &Trace, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRACE_HEADER)?;
    for s in &trace.slots {
        let (i, d, m) = match &s.task {
            Some(t) => (
                format_decimal(t.intensity),
                t.duration.to_string(),
                t.max_delay.to_string(),
            ),
            None => (String::new(), String::new(), String::new()),
        };
        w.write_record([
            s.slot.to_string(),
            format_decimal(s.price),
            format_decimal(s.renewable),
            i,
            d,
            m,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_trace(trace: &Trace, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_trace(trace, std::io::BufWriter::new(file))
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<Trace> {
    read_trace(std::fs::File::open(path)?, 5)
}

fn parse_decimal(field: &str, name: &str, line: u64) -> Result<f64> {
    let err = |message: String| Error::TraceParse { line, message };
    let body = field.trim();
    if body.is_empty() {
        return Err(err(format!("{name} is empty")));
    }
    if body.contains(['e', 'E']) {
        return Err(err(format!("{name} `{body}` must be plain decimal text")));
    }
    if let Some((_, frac)) = body.split_once('.') {
        if frac.len() > DECIMALS {
            return Err(err(format!(
                "{name} `{body}` has more than {DECIMALS} fractional digits"
            )));
        }
    }
    body.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| err(format!("{name} `{body}` is not a number")))
}

fn parse_int(field: &str, name: &str, line: u64) -> Result<i64> {
    field.trim().parse::<i64>().map_err(|_| Error::TraceParse {
        line,
        message: format!("{name} `{}` is not an integer", field.trim()),
    })
}

/// Parses and validates a trace. Errors carry the 1-based file line.
pub fn read_trace<R: Read>(reader: R, slot_minutes: u32) -> Result<Trace> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != TRACE_HEADER {
        return Err(Error::TraceParse {
            line: 1,
            message: format!(
                "header must be `{}`, got `{}`",
                TRACE_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    let mut slots = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let err = |message: String| Error::TraceParse { line, message };
        if record.len() != TRACE_HEADER.len() {
            return Err(err(format!(
                "expected {} fields, got {}",
                TRACE_HEADER.len(),
                record.len()
            )));
        }

        let slot = parse_int(&record[0], "slot", line)?;
        if slot != slots.len() as i64 {
            return Err(err(format!(
                "slot {slot} breaks contiguity (expected {})",
                slots.len()
            )));
        }
        let slot = slot as usize;
        let price = parse_decimal(&record[1], "price", line)?;
        let renewable = parse_decimal(&record[2], "renewable", line)?;
        if renewable < 0.0 {
            return Err(err(format!(
                "renewable {renewable} violates renewable >= 0"
            )));
        }

        let triple = [&record[3], &record[4], &record[5]];
        let empty = triple.iter().filter(|f| f.is_empty()).count();
        let task = match empty {
            3 => None,
            0 => {
                let intensity = parse_decimal(triple[0], "intensity", line)?;
                if intensity < 0.0 {
                    return Err(err(format!(
                        "intensity {intensity} violates intensity >= 0"
                    )));
                }
                let duration = parse_int(triple[1], "duration", line)?;
                if duration < 1 {
                    return Err(err(format!("duration {duration} violates duration >= 1")));
                }
                let max_delay = parse_int(triple[2], "max_delay", line)?;
                if max_delay < 0 {
                    return Err(err(format!(
                        "max_delay {max_delay} violates max_delay >= 0"
                    )));
                }
                let to_u32 = |v: i64, name: &str| {
                    u32::try_from(v).map_err(|_| err(format!("{name} {v} out of range")))
                };
                Some(LoadTask {
                    arrival_slot: slot,
                    intensity,
                    duration: to_u32(duration, "duration")?,
                    max_delay: to_u32(max_delay, "max_delay")?,
                })
            }
            _ => {
                return Err(err(
                    "intensity, duration and max_delay must be all present or all empty".into(),
                ))
            }
        };
        slots.push(SlotInput {
            slot,
            price,
            renewable,
            task,
        });
    }
    Ok(Trace {
        slots,
        slot_minutes,
    })
}
