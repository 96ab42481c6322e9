//! Mechanical morphing: rebuild full displacement fields from section contours.
//!
//! The measured contours are rotated into rigid stamps. Corneal surface nodes
//! get their axial displacement from the stamp height at their current radius
//! while the in-plane components stay free, and a soft isotropic surrogate
//! model carries the deformation into the interior with both cavities active.

mod stamp;

use log::{debug, info, warn};
use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::egm::MeasuredState;
use crate::error::{Error, Result};
use crate::fem::solver::{newton_solve, CavityCoupling, JetShape, LoadLevel, Problem, SolverOptions, StepResult};
use crate::fem::stress_free::{stress_free_geometry, StressFreeOptions};
use crate::fem::surface::JetLoad;
use crate::fem::{AuxMaterials, BoundaryConditions, DisplacementField, Model, RegionMaterials};
use crate::geometry::{build_eye_mesh, EyeGeometryConfig, SurfaceSet};
use crate::material::{Constitutive, LinearElasticParams};
use crate::synthlab::DeformationContour;
use crate::units::{mmhg_to_mpa, mpa_to_mmhg};

pub use stamp::{build_stamps, StampSide, Stamps};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MorphConfig {
    /// Isotropic surrogate for the cornea.
    pub surrogate: LinearElasticParams,
    pub aux: AuxMaterials,
    /// Load steps from the preload to the first stamp position.
    pub substeps: usize,
    /// Fixed-point iterations on the node radii.
    pub max_radial_iterations: usize,
    /// Largest stamp height change between radial iterations (mm).
    pub radial_tolerance: f64,
    /// Surface nodes beyond `(1 - margin)` of the stamp extent stay unconstrained.
    pub stamp_margin: f64,
    /// Also hold the in-plane surface displacements at their preload values.
    pub tangential_clamp: bool,
    /// Fluid bulk modulus of both cavities (MPa).
    pub bulk_modulus: f64,
    pub stress_free: StressFreeOptions,
    pub solver: SolverOptions,
}

impl Default for MorphConfig {
    fn default() -> Self {
        MorphConfig {
            surrogate: LinearElasticParams { e: 1.4, nu: 0.49 },
            aux: AuxMaterials::default(),
            substeps: 8,
            max_radial_iterations: 10,
            radial_tolerance: 1e-4,
            stamp_margin: 0.02,
            tangential_clamp: false,
            bulk_modulus: 2000.0,
            stress_free: StressFreeOptions::default(),
            solver: SolverOptions::default(),
        }
    }
}

impl MorphConfig {
    pub fn materials(&self) -> RegionMaterials {
        RegionMaterials::with_cornea_law(Constitutive::NeoHooke(self.surrogate), &self.aux)
    }
}

/// Contours of one load step and the jet acting at that step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorphStateInput {
    pub step: usize,
    pub contour: DeformationContour,
    pub jet: Option<JetLoad>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorphInput {
    pub geometry: EyeGeometryConfig,
    pub iop_mmhg: f64,
    /// Ordered by load level.
    pub states: Vec<MorphStateInput>,
}

impl MorphInput {
    pub fn validate(&self) -> Result<()> {
        if !(self.iop_mmhg > 0.0) {
            return Err(Error::Config(format!("IOP must be positive, got {} mmHg", self.iop_mmhg)));
        }
        for s in &self.states {
            s.contour.validate()?;
        }
        if self.states.windows(2).any(|w| w[1].contour.def_a < w[0].contour.def_a || w[1].step <= w[0].step) {
            return Err(Error::Contour("states must be ordered by step with nondecreasing DefA".into()));
        }
        Ok(())
    }
}

/// Reconstructed field of one state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorphedState {
    pub step: usize,
    pub u: DisplacementField,
    /// Cavity pressures (MPa).
    pub pressures: [f64; 2],
    /// Cavity pressure change against the preload (mmHg).
    pub delta_iop_mmhg: [f64; 2],
    pub jet: Option<JetLoad>,
    /// Largest axial gap between the driven surface nodes and the stamps (mm).
    pub fit_residual: f64,
    pub radial_iterations: usize,
    pub newton_iterations: usize,
    /// Number of surface nodes driven by the stamps.
    pub driven_nodes: usize,
}

impl MorphedState {
    pub fn iop_mmhg(&self) -> [f64; 2] {
        self.pressures.map(mpa_to_mmhg)
    }

    pub fn measured(&self) -> MeasuredState {
        MeasuredState {
            step: self.step,
            u: self.u.clone(),
            jet: self.jet,
            pressures: self.pressures,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MorphOutput {
    /// Surrogate model on its stress-free geometry.
    pub model: Model,
    pub stress_free_distances: Vec<f64>,
    /// Preload equilibrium of the surrogate.
    pub preload: StepResult,
    pub states: Vec<MorphedState>,
    pub diagnostics: Vec<String>,
}

fn radius(x: &Vector3<f64>) -> f64 {
    x.x.hypot(x.y)
}

/// Drive the corneal surfaces of the preloaded surrogate onto `stamps`.
pub fn morph_state(
    model: &Model,
    bcs: &BoundaryConditions,
    preload: &StepResult,
    stamps: &Stamps,
    step: usize,
    jet: Option<JetLoad>,
    config: &MorphConfig,
) -> Result<MorphedState> {
    let mesh = &model.mesh;
    let mut driven: Vec<(usize, StampSide)> = Vec::new();
    for (side, set) in [(StampSide::Anterior, SurfaceSet::AnteriorCornea), (StampSide::Posterior, SurfaceSet::PosteriorCornea)] {
        let limit = (1.0 - config.stamp_margin) * stamps.extent(side);
        for &n in mesh.node_set(set)? {
            if radius(&(mesh.nodes[n] + preload.u[n])) <= limit {
                driven.push((n, side));
            }
        }
    }
    if driven.is_empty() {
        return Err(Error::Contour("no corneal surface node lies inside the stamps".into()));
    }
    let zero = bcs.zero_dofs();
    let mut dofs: Vec<usize> = driven.iter().map(|(n, _)| 3 * n + 2).collect();
    let mut clamp_values = Vec::new();
    if config.tangential_clamp {
        for (n, _) in &driven {
            for k in 0..2 {
                let d = 3 * n + k;
                if !zero.contains(&d) {
                    dofs.push(d);
                    clamp_values.push(preload.u[*n][k]);
                }
            }
        }
    }
    let local_bcs = bcs.clone().with_prescribed(dofs)?;
    let problem = Problem::new(
        model,
        &local_bcs,
        JetShape {
            width: 1.0,
            shear_ratio: 0.0,
        },
        CavityCoupling::Coupled {
            reference_volumes: preload.volumes,
            reference_pressures: preload.pressures,
            bulk_modulus: config.bulk_modulus,
        },
    )?;

    let targets = |u: &[Vector3<f64>]| -> Result<Vec<f64>> {
        driven
            .iter()
            .map(|&(n, side)| {
                let x = mesh.nodes[n] + u[n];
                Ok(stamps.height(side, radius(&x))? - mesh.nodes[n].z)
            })
            .collect()
    };
    let level = |z: &[f64]| LoadLevel {
        factor: 1.0,
        jet_peak: 0.0,
        fixed_pressures: preload.pressures,
        prescribed: z.iter().chain(&clamp_values).copied().collect(),
    };

    let current: Vec<f64> = driven.iter().map(|(n, _)| preload.u[*n].z).collect();
    let mut from = LoadLevel { factor: 0.0, ..level(&current) };
    let mut u = preload.u.clone();
    let mut z = targets(&u)?;
    let mut newton_iterations = 0;
    let mut pressures = preload.pressures;
    let mut change = f64::INFINITY;
    let mut iterations = 0;
    while iterations < config.max_radial_iterations.max(1) {
        let to = level(&z);
        let schedule: Vec<LoadLevel> = if iterations == 0 {
            let n = config.substeps.max(1);
            (1..=n).map(|i| from.lerp(&to, i as f64 / n as f64)).collect()
        } else {
            vec![to.clone()]
        };
        let steps = newton_solve(&problem, &u, &from, &schedule, &config.solver)?;
        newton_iterations += steps.iter().map(|s| s.iterations).sum::<usize>();
        let last = steps.into_iter().last().expect("nonempty schedule");
        u = last.u;
        pressures = last.pressures;
        from = to;
        iterations += 1;
        let next = targets(&u)?;
        change = next.iter().zip(&z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        z = next;
        debug!("step {step}: radial iteration {iterations}, stamp height change {change:.3e} mm");
        if change <= config.radial_tolerance {
            break;
        }
    }
    if change > config.radial_tolerance {
        warn!("step {step}: radial fixed point stopped at a change of {change:.3e} mm");
    }
    let p0 = preload.pressures;
    Ok(MorphedState {
        step,
        u,
        pressures,
        delta_iop_mmhg: [mpa_to_mmhg(pressures[0] - p0[0]), mpa_to_mmhg(pressures[1] - p0[1])],
        jet,
        fit_residual: change,
        radial_iterations: iterations,
        newton_iterations,
        driven_nodes: driven.len(),
    })
}

/// Surrogate stress-free geometry and preload for `input`, then every state morphed in parallel.
pub fn morph_pipeline(input: &MorphInput, config: &MorphConfig) -> Result<MorphOutput> {
    input.validate()?;
    let mesh = build_eye_mesh(&input.geometry)?;
    let target = Model::new(mesh, config.materials())?;
    let bcs = BoundaryConditions::from_mesh(&target.mesh)?;
    let options = StressFreeOptions {
        pressure: mmhg_to_mpa(input.iop_mmhg),
        ..config.stress_free
    };
    let sf = stress_free_geometry(&target, &bcs, &options)?;
    info!("surrogate stress-free geometry after {} iterations", sf.iterations());
    let model = sf.model;
    let preload = sf.inflated;
    let states: Vec<MorphedState> = input
        .states
        .par_iter()
        .map(|s| {
            let stamps = build_stamps(&s.contour)?;
            morph_state(&model, &bcs, &preload, &stamps, s.step, s.jet, config)
        })
        .collect::<Result<_>>()?;
    let mut diagnostics = vec![format!(
        "surrogate cornea: E = {} MPa, nu = {}",
        config.surrogate.e, config.surrogate.nu
    )];
    let apex = model.mesh.apex_node()?;
    for (s, inp) in states.iter().zip(&input.states) {
        let d = preload.u[apex].z - s.u[apex].z;
        diagnostics.push(format!(
            "step {}: fit residual {:.2e} mm, apex deflection {:.4} mm (contour DefA {:.4} mm), dIOP_AC {:.2} mmHg",
            s.step, s.fit_residual, d, inp.contour.def_a, s.delta_iop_mmhg[0]
        ));
    }
    Ok(MorphOutput {
        model,
        stress_free_distances: sf.distances,
        preload,
        states,
        diagnostics,
    })
}
