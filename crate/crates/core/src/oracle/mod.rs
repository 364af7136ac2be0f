//! Desk-scale ground truth: grid-search minimizers of the per-slot
//! subproblems, the exhaustive look-ahead optimizer, and checkers for the
//! performance and margin bounds.

pub mod checks;
pub mod lookahead;
pub mod subproblem;

pub use checks::{performance_bound_check, run_invariants, CheckReport};
pub use lookahead::{frames_from_run, lookahead_optimum, Frame, OracleSolution};
pub use subproblem::{closed_form_equivalence, EquivalenceReport};

use crate::controller::Controller;
use crate::error::Result;
use crate::model::Model;
use crate::scenario::Trace;
use crate::simulator::RunSummary;

/// Solves every frame of a run at lattice step `h`, frames in parallel.
pub fn frame_optima(
    trace: &Trace,
    run: &RunSummary,
    model: &Model,
    frame_len: usize,
    h: f64,
    node_limit: f64,
) -> Result<Vec<OracleSolution>> {
    let frames = frames_from_run(trace, run, frame_len)?;
    let mut m = model.clone();
    m.weights = run.weights;
    let ctl = Controller::with_design(&m, trace.horizon(), run.design);
    crate::par::map(&frames, |f| lookahead_optimum(&ctl, f, h, node_limit))
        .into_iter()
        .collect()
}
