use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::linear::{identify_linear, LinearIdentification, PARAMETER_NAMES};
use super::PreparedState;
use crate::error::{Error, Result};

/// A parameter is left out of `f_rel` when its mean contribution
/// `|<alpha_i>| ||c_i||` is below this fraction of `||f_ext - c0||`.
pub const FREL_SKIP_THRESHOLD: f64 = 1e-6;

/// `k2 = 10, 20, ..., 400`.
pub fn default_k2_grid() -> Vec<f64> {
    (1..=40).map(|i| 10.0 * i as f64).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NonlinearOptions {
    /// Strictly increasing `k2` values.
    pub grid: Vec<f64>,
    /// Evaluate midpoints next to the grid minimum and keep the best.
    pub refine: bool,
}

impl Default for NonlinearOptions {
    fn default() -> Self {
        NonlinearOptions {
            grid: default_k2_grid(),
            refine: false,
        }
    }
}

/// Per-state estimates at one `k2` and their relative scatter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrelEvaluation {
    pub k2: f64,
    /// Sum of `std/mean` over the parameters that are not skipped.
    pub f_rel: f64,
    pub per_state: Vec<LinearIdentification>,
    pub means: [f64; 3],
    /// Population standard deviations.
    pub std: [f64; 3],
    /// Parameters left out of `f_rel` for a vanishing mean.
    pub skipped: [bool; 3],
}

/// Relative parameter scatter over the states at fixed `k2`.
pub fn objective_frel(k2: f64, states: &[PreparedState]) -> Result<FrelEvaluation> {
    if states.len() < 3 {
        return Err(Error::TooFewStates {
            needed: 3,
            got: states.len(),
        });
    }
    let mut per_state = Vec::with_capacity(states.len());
    let mut contribution = [0.0; 3];
    let mut rhs = 0.0;
    for s in states {
        let split = s.split(k2);
        let id = identify_linear(&split)?;
        let b = split.rhs();
        rhs += b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let p = id.params();
        for (i, c) in split.columns().iter().enumerate() {
            contribution[i] += p[i].abs() * c.iter().map(|v| v * v).sum::<f64>().sqrt();
        }
        per_state.push(id);
    }
    let m = states.len() as f64;
    let mut means = [0.0; 3];
    let mut std = [0.0; 3];
    let mut skipped = [false; 3];
    let mut f_rel = 0.0;
    for i in 0..3 {
        let vals: Vec<f64> = per_state.iter().map(|p| p.params()[i]).collect();
        let mean = vals.iter().sum::<f64>() / m;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
        means[i] = mean;
        std[i] = var.sqrt();
        skipped[i] = mean == 0.0 || contribution[i] <= FREL_SKIP_THRESHOLD * rhs;
        if !skipped[i] {
            f_rel += std[i] / mean.abs();
        }
    }
    Ok(FrelEvaluation {
        k2,
        f_rel,
        per_state,
        means,
        std,
        skipped,
    })
}

/// Grid search over `k2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonlinearIdentification {
    pub grid: Vec<f64>,
    /// One entry per grid point; `None` where the data were degenerate.
    pub evaluations: Vec<Option<FrelEvaluation>>,
    pub k2_star: f64,
    /// Evaluation at `k2_star`.
    pub best: FrelEvaluation,
    /// The fiber term vanishes at the optimum, so the data carry no
    /// information on `k2`.
    pub k2_undetermined: bool,
    pub refined: bool,
    pub diagnostics: Vec<String>,
}

impl NonlinearIdentification {
    /// `(k2, f_rel)` at every non-degenerate grid point.
    pub fn f_rel_curve(&self) -> Vec<[f64; 2]> {
        self.evaluations.iter().flatten().map(|e| [e.k2, e.f_rel]).collect()
    }

    pub fn means(&self) -> [f64; 3] {
        self.best.means
    }
}

fn evaluate(k2: f64, states: &[PreparedState]) -> Result<Option<FrelEvaluation>> {
    match objective_frel(k2, states) {
        Ok(e) => Ok(Some(e)),
        Err(Error::DegenerateData { condition, columns }) => {
            debug!("k2 = {k2}: degenerate data (condition {condition:.3e}, columns {columns:?})");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

fn better(a: &FrelEvaluation, b: &FrelEvaluation) -> bool {
    a.f_rel < b.f_rel || (a.f_rel == b.f_rel && a.k2 < b.k2)
}

/// Evaluate `f_rel` on the grid in parallel and take the global minimum.
pub fn identify_nonlinear(states: &[PreparedState], options: &NonlinearOptions) -> Result<NonlinearIdentification> {
    let grid = &options.grid;
    if grid.is_empty() || grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|k| !k.is_finite() || *k < 0.0) {
        return Err(Error::Config("the k2 grid must be nonempty, nonnegative and strictly increasing".into()));
    }
    if states.len() < 3 {
        return Err(Error::TooFewStates {
            needed: 3,
            got: states.len(),
        });
    }
    let evaluations: Vec<Option<FrelEvaluation>> =
        grid.par_iter().map(|&k2| evaluate(k2, states)).collect::<Result<_>>()?;
    let mut diagnostics = Vec::new();
    let degenerate = evaluations.iter().filter(|e| e.is_none()).count();
    if degenerate > 0 {
        diagnostics.push(format!("{degenerate} of {} grid points had degenerate data", grid.len()));
    }
    let mut best_i: Option<usize> = None;
    for (i, e) in evaluations.iter().enumerate() {
        if let Some(e) = e {
            if best_i.is_none_or(|b| better(e, evaluations[b].as_ref().unwrap())) {
                best_i = Some(i);
            }
        }
    }
    let Some(bi) = best_i else {
        return Err(Error::IdentificationFailed("every grid point has degenerate data".into()));
    };
    let mut best = evaluations[bi].clone().unwrap();
    let mut refined = false;
    if options.refine {
        let mut cand = Vec::new();
        if bi > 0 {
            cand.push(0.5 * (grid[bi - 1] + grid[bi]));
        }
        if bi + 1 < grid.len() {
            cand.push(0.5 * (grid[bi] + grid[bi + 1]));
        }
        for k2 in cand {
            if let Some(e) = evaluate(k2, states)? {
                if better(&e, &best) {
                    best = e;
                    refined = true;
                }
            }
        }
    }
    let k2_undetermined = best.skipped[2];
    if k2_undetermined {
        let msg = format!(
            "the {} term vanishes at the optimum (mean {:.3e}); k2 is undetermined",
            PARAMETER_NAMES[2], best.means[2]
        );
        warn!("{msg}");
        diagnostics.push(msg);
    }
    for (i, name) in PARAMETER_NAMES.iter().enumerate() {
        if best.skipped[i] && i != 2 {
            diagnostics.push(format!("{name} left out of f_rel: mean contribution vanishes"));
        }
    }
    Ok(NonlinearIdentification {
        grid: grid.clone(),
        k2_star: best.k2,
        best,
        evaluations,
        k2_undetermined,
        refined,
        diagnostics,
    })
}
