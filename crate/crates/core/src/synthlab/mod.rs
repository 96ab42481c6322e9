//! Virtual air-puff tonometry: load history, metrics, identification states,
//! measurement noise and section contours.

mod contour;
mod metrics;
mod noise;

use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::solver::{newton_solve, CavityCoupling, JetShape, LoadLevel, Problem, SolverOptions};
use crate::fem::stress_free::inflate;
use crate::fem::{BoundaryConditions, DisplacementField, Model};
use crate::units::mmhg_to_mpa;

pub use contour::{extract_contours, DeformationContour};
pub use metrics::{central_curvature, def_a, extract_metrics, select_from_series, select_states, NctMetrics, StateSelection};
pub use noise::{add_noise, NoiseSpec};

/// Axisymmetric Gaussian jet `p(r) = peak exp(-r^2 / width^2)`, ramped linearly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JetProfile {
    /// Peak pressure at the apex (MPa).
    pub peak: f64,
    /// Width parameter (mm).
    pub width: f64,
    /// Radial shear peak relative to the pressure peak.
    pub shear_ratio: f64,
    /// Number of load steps from zero to the peak.
    pub steps: usize,
}

impl Default for JetProfile {
    fn default() -> Self {
        JetProfile {
            peak: 0.025,
            width: 2.0,
            shear_ratio: 0.0,
            steps: 40,
        }
    }
}

impl JetProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.peak >= 0.0) || !(self.width > 0.0) || self.steps == 0 {
            return Err(Error::Config(format!(
                "jet needs peak >= 0, width > 0 and at least one step (got {}, {}, {})",
                self.peak, self.width, self.steps
            )));
        }
        Ok(())
    }

    pub fn shape(&self) -> JetShape {
        JetShape {
            width: self.width,
            shear_ratio: self.shear_ratio,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NctConfig {
    /// Preload in both cavities (mmHg).
    pub iop_mmhg: f64,
    pub jet: JetProfile,
    pub preload_steps: usize,
    /// Fluid bulk modulus (MPa).
    pub bulk_modulus: f64,
    pub solver: SolverOptions,
}

impl Default for NctConfig {
    fn default() -> Self {
        NctConfig {
            iop_mmhg: 17.5,
            jet: JetProfile::default(),
            preload_steps: 4,
            bulk_modulus: 2000.0,
            solver: SolverOptions::default(),
        }
    }
}

/// One stored load step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeformationState {
    pub step: usize,
    pub load_factor: f64,
    pub u: DisplacementField,
    /// Anterior chamber and vitreous pressures (MPa).
    pub pressures: [f64; 2],
    /// Jet peak pressure applied at this step (MPa).
    pub jet_peak: f64,
}

/// Preload (step 0) followed by the jet ramp.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NctHistory {
    pub states: Vec<DeformationState>,
    pub reference_volumes: [f64; 2],
    /// Preload pressure (MPa).
    pub iop0: f64,
    pub jet: JetProfile,
    pub bulk_modulus: f64,
    pub newton_iterations: usize,
}

impl NctHistory {
    pub fn preload(&self) -> &DeformationState {
        &self.states[0]
    }
}

/// Inflate the stress-free model to the preload, then ramp the jet with both
/// cavities coupled to their volumes.
pub fn run_virtual_nct(model: &Model, bcs: &BoundaryConditions, config: &NctConfig) -> Result<NctHistory> {
    config.jet.validate()?;
    let iop0 = mmhg_to_mpa(config.iop_mmhg);
    let pre = inflate(model, bcs, iop0, config.preload_steps, &config.solver)?;
    let mut iterations = pre.iterations;
    let coupled = Problem::new(
        model,
        bcs,
        config.jet.shape(),
        CavityCoupling::Coupled {
            reference_volumes: pre.volumes,
            reference_pressures: pre.pressures,
            bulk_modulus: config.bulk_modulus,
        },
    )?;
    let n = config.jet.steps;
    let schedule: Vec<LoadLevel> = (1..=n)
        .map(|i| {
            let t = i as f64 / n as f64;
            LoadLevel {
                factor: t,
                jet_peak: config.jet.peak * t,
                ..pre.level.clone()
            }
        })
        .collect();
    let start = LoadLevel { factor: 0.0, ..pre.level.clone() };
    let steps = newton_solve(&coupled, &pre.u, &start, &schedule, &config.solver)?;
    let mut states = vec![DeformationState {
        step: 0,
        load_factor: 0.0,
        u: pre.u.clone(),
        pressures: pre.pressures,
        jet_peak: 0.0,
    }];
    for (i, s) in steps.into_iter().enumerate() {
        iterations += s.iterations;
        states.push(DeformationState {
            step: i + 1,
            load_factor: s.level.factor,
            u: s.u,
            pressures: s.pressures,
            jet_peak: s.level.jet_peak,
        });
    }
    info!("virtual NCT finished: {} steps, {iterations} Newton iterations", states.len());
    Ok(NctHistory {
        states,
        reference_volumes: pre.volumes,
        iop0,
        jet: config.jet,
        bulk_modulus: config.bulk_modulus,
        newton_iterations: iterations,
    })
}
