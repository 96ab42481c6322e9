//! Fixed-point search for the unloaded geometry that inflates onto a target.

use log::info;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::solver::{newton_solve, CavityCoupling, JetShape, LoadLevel, Problem, SolverOptions, StepResult};
use super::{BoundaryConditions, Model};
use crate::error::{Error, Result};
use crate::units::mmhg_to_mpa;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StressFreeOptions {
    /// Pressure in both cavities (MPa).
    pub pressure: f64,
    /// Maximum nodal distance to the target (mm).
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Load steps of each inflation.
    pub preload_steps: usize,
    pub solver: SolverOptions,
}

impl Default for StressFreeOptions {
    fn default() -> Self {
        StressFreeOptions {
            pressure: mmhg_to_mpa(17.5),
            tolerance: 2e-3,
            max_iterations: 20,
            preload_steps: 4,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct StressFreeResult {
    /// Model on the stress-free reference coordinates.
    pub model: Model,
    /// Inflated equilibrium of `model` under the preload.
    pub inflated: StepResult,
    /// Maximum nodal distance to the target after each iteration (mm).
    pub distances: Vec<f64>,
}

impl StressFreeResult {
    pub fn iterations(&self) -> usize {
        self.distances.len()
    }
}

/// Ramp the cavity pressures of `model` to `pressure` with the cavities held at fixed pressure.
pub fn inflate(model: &Model, bcs: &BoundaryConditions, pressure: f64, steps: usize, options: &SolverOptions) -> Result<StepResult> {
    let problem = Problem::new(
        model,
        bcs,
        JetShape {
            width: 1.0,
            shear_ratio: 0.0,
        },
        CavityCoupling::Fixed,
    )?;
    let start = LoadLevel::zero(bcs.prescribed.len());
    let steps = steps.max(1);
    let schedule: Vec<LoadLevel> = (1..=steps)
        .map(|i| {
            let t = i as f64 / steps as f64;
            LoadLevel {
                factor: t,
                fixed_pressures: [pressure * t; 2],
                ..start.clone()
            }
        })
        .collect();
    let mut hist = newton_solve(&problem, &model.zero_displacement(), &start, &schedule, options)?;
    Ok(hist.pop().expect("nonempty schedule"))
}

fn max_distance(x: &[Vector3<f64>], u: &[Vector3<f64>], target: &[Vector3<f64>]) -> f64 {
    x.iter()
        .zip(u)
        .zip(target)
        .map(|((x, u), t)| (x + u - t).norm())
        .fold(0.0, f64::max)
}

/// Iterate `X_{n+1} = X_target - u_n(X_n)` until inflating `X_n` lands within
/// the tolerance of the target.
pub fn stress_free_geometry(target: &Model, bcs: &BoundaryConditions, options: &StressFreeOptions) -> Result<StressFreeResult> {
    let x_target = target.mesh.nodes.clone();
    let mut model = target.clone();
    let mut distances: Vec<f64> = Vec::new();
    let mut increases = 0;
    for it in 0..options.max_iterations {
        let inflated = inflate(&model, bcs, options.pressure, options.preload_steps, &options.solver)?;
        let d = max_distance(&model.mesh.nodes, &inflated.u, &x_target);
        info!("stress-free iteration {}: max distance {d:.3e} mm", it + 1);
        if let Some(&prev) = distances.last() {
            increases = if d > prev { increases + 1 } else { 0 };
        }
        distances.push(d);
        if d <= options.tolerance {
            return Ok(StressFreeResult {
                model,
                inflated,
                distances,
            });
        }
        if increases >= 3 {
            return Err(Error::StressFreeDiverged { trace: distances });
        }
        let next: Vec<Vector3<f64>> = x_target.iter().zip(&inflated.u).map(|(t, u)| t - u).collect();
        model = model.remeshed(next)?;
    }
    Err(Error::StressFreeNotConverged {
        tol: options.tolerance,
        iterations: options.max_iterations,
        last: distances.last().copied().unwrap_or(f64::NAN),
    })
}
