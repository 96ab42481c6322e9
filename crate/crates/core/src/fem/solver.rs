//! Newton-Raphson load stepping with follower loads and pressure-volume
//! coupled fluid cavities.

use log::{debug, warn};
use nalgebra::{Matrix2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::assembly::Assembler;
use super::linsys::SparseLu;
use super::surface::{
    facet_coords, facet_volume, facet_volume_gradient, jet_facet_force, jet_facet_tangent, pressure_facet_force,
    pressure_facet_tangent, JetLoad, CAVITY_WALLS,
};
use super::{BoundaryConditions, DisplacementField, Model};
use crate::error::{Error, Result};
use crate::geometry::{Facet, SurfaceSet};

/// Loads at one pseudo-time. All fields interpolate linearly between levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadLevel {
    pub factor: f64,
    /// Peak jet pressure (MPa).
    pub jet_peak: f64,
    /// Cavity pressures (MPa) used while the cavities are not coupled.
    pub fixed_pressures: [f64; 2],
    /// Values of the prescribed dofs (mm), in [`BoundaryConditions::prescribed`] order.
    #[serde(default)]
    pub prescribed: Vec<f64>,
}

impl LoadLevel {
    pub fn zero(num_prescribed: usize) -> LoadLevel {
        LoadLevel {
            factor: 0.0,
            jet_peak: 0.0,
            fixed_pressures: [0.0; 2],
            prescribed: vec![0.0; num_prescribed],
        }
    }

    pub fn lerp(&self, other: &LoadLevel, t: f64) -> LoadLevel {
        let mix = |a: f64, b: f64| a + (b - a) * t;
        LoadLevel {
            factor: mix(self.factor, other.factor),
            jet_peak: mix(self.jet_peak, other.jet_peak),
            fixed_pressures: [
                mix(self.fixed_pressures[0], other.fixed_pressures[0]),
                mix(self.fixed_pressures[1], other.fixed_pressures[1]),
            ],
            prescribed: self.prescribed.iter().zip(&other.prescribed).map(|(a, b)| mix(*a, *b)).collect(),
        }
    }
}

/// How the cavity pressures are obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CavityCoupling {
    /// Pressures taken from [`LoadLevel::fixed_pressures`].
    Fixed,
    /// `p = p0 - K_W (V - V0) / V0` for each cavity, solved jointly with the displacements.
    Coupled {
        reference_volumes: [f64; 2],
        reference_pressures: [f64; 2],
        bulk_modulus: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub max_iterations: usize,
    /// Maximum depth of step halving on failure.
    pub max_bisections: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol_abs: 1e-10,
            tol_rel: 1e-8,
            max_iterations: 25,
            max_bisections: 8,
        }
    }
}

/// A converged equilibrium state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub level: LoadLevel,
    pub u: DisplacementField,
    /// Cavity pressures (MPa), anterior chamber then vitreous body.
    pub pressures: [f64; 2],
    /// Cavity volumes (mm^3).
    pub volumes: [f64; 2],
    pub iterations: usize,
    /// Free-dof residual norm per Newton iteration.
    pub residual_norms: Vec<f64>,
    /// Increment norm per Newton iteration.
    pub increment_norms: Vec<f64>,
}

/// Spatial shape of the jet; its magnitude comes from the load level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JetShape {
    pub width: f64,
    /// Shear peak as a multiple of the pressure peak.
    pub shear_ratio: f64,
}

impl JetShape {
    pub fn at(&self, peak: f64) -> JetLoad {
        JetLoad {
            peak,
            width: self.width,
            shear_peak: self.shear_ratio * peak,
        }
    }
}

/// A boundary value problem with a fixed sparsity pattern and symbolic factorization.
pub struct Problem<'a> {
    pub model: &'a Model,
    pub bcs: &'a BoundaryConditions,
    pub jet: JetShape,
    pub cavities: CavityCoupling,
    assembler: Assembler,
    lu: SparseLu,
    walls: [&'a [Facet]; 2],
    jet_facets: &'a [Facet],
}

struct Linearization {
    residual: Vec<f64>,
    f_ext_norm: f64,
    pressures: [f64; 2],
    volumes: [f64; 2],
    values: Vec<f64>,
    /// Low-rank coupling `sum_c u_c w_c^T` over free dofs.
    low_rank: Vec<(Vec<f64>, Vec<f64>)>,
}

impl<'a> Problem<'a> {
    pub fn new(model: &'a Model, bcs: &'a BoundaryConditions, jet: JetShape, cavities: CavityCoupling) -> Result<Self> {
        let assembler = Assembler::new(model, bcs)?;
        let lu = SparseLu::new(assembler.num_free(), assembler.col_ptr.clone(), assembler.row_idx.clone())?;
        let walls = [
            model.mesh.facet_set(CAVITY_WALLS[0])?,
            model.mesh.facet_set(CAVITY_WALLS[1])?,
        ];
        let jet_facets = model.mesh.facet_set(SurfaceSet::AnteriorCornea)?;
        Ok(Problem {
            model,
            bcs,
            jet,
            cavities,
            assembler,
            lu,
            walls,
            jet_facets,
        })
    }

    pub fn num_free(&self) -> usize {
        self.assembler.num_free()
    }

    /// Cavity volumes of the full eye at `u`.
    pub fn volumes(&self, u: &[Vector3<f64>]) -> [f64; 2] {
        self.walls
            .map(|w| 4.0 * w.iter().map(|&f| facet_volume(&facet_coords(&self.model.mesh, u, f))).sum::<f64>())
    }

    fn pressures(&self, level: &LoadLevel, volumes: [f64; 2]) -> [f64; 2] {
        match self.cavities {
            CavityCoupling::Fixed => level.fixed_pressures,
            CavityCoupling::Coupled {
                reference_volumes: v0,
                reference_pressures: p0,
                bulk_modulus: k,
            } => [0, 1].map(|c| p0[c] - k * (volumes[c] - v0[c]) / v0[c]),
        }
    }

    fn linearize(&self, u: &[Vector3<f64>], level: &LoadLevel) -> Result<Linearization> {
        let mesh = &self.model.mesh;
        let mut values = vec![0.0; self.assembler.nnz()];
        let f_int = self.assembler.internal_with_tangent(self.model, u, &mut values)?;
        let mut f_ext = vec![0.0; mesh.num_dofs()];
        let add = |out: &mut [f64], nodes: [usize; 4], f: &[Vector3<f64>; 4], s: f64| {
            for (n, v) in nodes.iter().zip(f) {
                for k in 0..3 {
                    out[3 * n + k] += s * v[k];
                }
            }
        };
        if level.jet_peak != 0.0 {
            let jet = self.jet.at(level.jet_peak);
            for &f in self.jet_facets {
                let x = facet_coords(mesh, u, f);
                add(&mut f_ext, mesh.facet_nodes(f), &jet_facet_force(&x, &jet), 1.0);
                self.assembler.add_facet_block(&mut values, f, &jet_facet_tangent(&x, &jet), -1.0);
            }
        }
        let volumes = self.volumes(u);
        let pressures = self.pressures(level, volumes);
        let mut low_rank = Vec::new();
        for c in 0..2 {
            let mut g = vec![0.0; mesh.num_dofs()];
            let mut dv = vec![0.0; mesh.num_dofs()];
            for &f in self.walls[c] {
                let x = facet_coords(mesh, u, f);
                let nodes = mesh.facet_nodes(f);
                add(&mut g, nodes, &pressure_facet_force(&x), 1.0);
                if pressures[c] != 0.0 {
                    self.assembler.add_facet_block(&mut values, f, &pressure_facet_tangent(&x), -pressures[c]);
                }
                if let CavityCoupling::Coupled { .. } = self.cavities {
                    add(&mut dv, nodes, &facet_volume_gradient(&x), 4.0);
                }
            }
            for (fe, gi) in f_ext.iter_mut().zip(&g) {
                *fe += pressures[c] * gi;
            }
            if let CavityCoupling::Coupled {
                reference_volumes: v0,
                bulk_modulus: k,
                ..
            } = self.cavities
            {
                let scale = k / v0[c];
                let uc: Vec<f64> = self.assembler.restrict(&g).into_iter().map(|v| v * scale).collect();
                low_rank.push((uc, self.assembler.restrict(&dv)));
            }
        }
        let residual: Vec<f64> = f_int.iter().zip(&f_ext).map(|(a, b)| a - b).collect();
        let f_ext_norm = norm(&self.assembler.restrict(&f_ext));
        Ok(Linearization {
            residual,
            f_ext_norm,
            pressures,
            volumes,
            values,
            low_rank,
        })
    }

    /// Solve `(A + sum u_c w_c^T) x = b` with one factorization of `A`.
    fn solve_linear(&self, lin: &Linearization, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.num_free();
        let k = lin.low_rank.len();
        let mut rhs = Vec::with_capacity(n * (k + 1));
        rhs.extend_from_slice(b);
        for (uc, _) in &lin.low_rank {
            rhs.extend_from_slice(uc);
        }
        self.lu.solve(&lin.values, &mut rhs)?;
        let (z, y) = rhs.split_at(n);
        if k == 0 {
            return Ok(z.to_vec());
        }
        let mut m = Matrix2::identity();
        let mut wz = Vector2::zeros();
        for (i, (_, wi)) in lin.low_rank.iter().enumerate() {
            wz[i] = dot(wi, z);
            for j in 0..k {
                m[(i, j)] += dot(wi, &y[j * n..(j + 1) * n]);
            }
        }
        let (m, wz) = if k == 1 {
            (Matrix2::new(m[(0, 0)], 0.0, 0.0, 1.0), Vector2::new(wz[0], 0.0))
        } else {
            (m, wz)
        };
        let coef = m
            .try_inverse()
            .ok_or_else(|| Error::Factorization("singular cavity coupling".into()))?
            * wz;
        let mut x = z.to_vec();
        for j in 0..k {
            for (xi, yi) in x.iter_mut().zip(&y[j * n..(j + 1) * n]) {
                *xi -= coef[j] * yi;
            }
        }
        Ok(x)
    }

    fn apply_constraints(&self, u: &mut [Vector3<f64>], level: &LoadLevel) -> Result<()> {
        if level.prescribed.len() != self.bcs.prescribed.len() {
            return Err(Error::Mismatch {
                what: "prescribed values",
                expected: self.bcs.prescribed.len().to_string(),
                found: level.prescribed.len().to_string(),
            });
        }
        for d in self.bcs.zero_dofs() {
            u[d / 3][d % 3] = 0.0;
        }
        for (&d, &v) in self.bcs.prescribed.iter().zip(&level.prescribed) {
            u[d / 3][d % 3] = v;
        }
        Ok(())
    }

    /// Newton iteration at a fixed load level starting from `u`.
    pub fn equilibrate(&self, u: &[Vector3<f64>], level: &LoadLevel, options: &SolverOptions) -> Result<StepResult> {
        let mut u = u.to_vec();
        self.apply_constraints(&mut u, level)?;
        let mut residual_norms = Vec::new();
        let mut increment_norms = Vec::new();
        for it in 0..=options.max_iterations {
            let lin = self.linearize(&u, level)?;
            let r = self.assembler.restrict(&lin.residual);
            let rn = norm(&r);
            residual_norms.push(rn);
            debug!("level {:.4} iteration {it}: |R| = {rn:.3e}", level.factor);
            if !rn.is_finite() {
                break;
            }
            if rn <= options.tol_abs + options.tol_rel * lin.f_ext_norm {
                return Ok(StepResult {
                    level: level.clone(),
                    u,
                    pressures: lin.pressures,
                    volumes: lin.volumes,
                    iterations: it,
                    residual_norms,
                    increment_norms,
                });
            }
            if it == options.max_iterations {
                break;
            }
            let b: Vec<f64> = r.iter().map(|v| -v).collect();
            let du = self.solve_linear(&lin, &b)?;
            increment_norms.push(norm(&du));
            for (i, &d) in self.assembler.free_dofs.iter().enumerate() {
                u[d / 3][d % 3] += du[i];
            }
        }
        Err(Error::Solver {
            load_factor: level.factor,
            reason: format!(
                "no convergence in {} iterations (residuals {:?})",
                options.max_iterations,
                residual_norms.iter().rev().take(4).collect::<Vec<_>>()
            ),
        })
    }

    /// Advance from a converged state at `from` to `to`, halving the step on failure.
    pub fn advance(&self, u: &[Vector3<f64>], from: &LoadLevel, to: &LoadLevel, options: &SolverOptions) -> Result<StepResult> {
        self.advance_depth(u, from, to, options, 0)
    }

    fn advance_depth(
        &self,
        u: &[Vector3<f64>],
        from: &LoadLevel,
        to: &LoadLevel,
        options: &SolverOptions,
        depth: usize,
    ) -> Result<StepResult> {
        match self.equilibrate(u, to, options) {
            Ok(r) => Ok(r),
            Err(e) if depth < options.max_bisections && recoverable(&e) => {
                warn!("bisecting step {:.4} -> {:.4}: {e}", from.factor, to.factor);
                let mid = from.lerp(to, 0.5);
                let half = self.advance_depth(u, from, &mid, options, depth + 1)?;
                let mut out = self.advance_depth(&half.u, &mid, to, options, depth + 1)?;
                out.iterations += half.iterations;
                Ok(out)
            }
            Err(e) => Err(e),
        }
    }
}

fn recoverable(e: &Error) -> bool {
    matches!(e, Error::Solver { .. } | Error::InvertedElement { .. } | Error::Factorization(_))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solve a sequence of load levels starting from the equilibrium `u0` at `start`.
pub fn newton_solve(
    problem: &Problem,
    u0: &[Vector3<f64>],
    start: &LoadLevel,
    schedule: &[LoadLevel],
    options: &SolverOptions,
) -> Result<Vec<StepResult>> {
    let mut out: Vec<StepResult> = Vec::with_capacity(schedule.len());
    let mut u = u0.to_vec();
    let mut from = start.clone();
    for level in schedule {
        let r = problem.advance(&u, &from, level, options)?;
        u.clone_from(&r.u);
        from = level.clone();
        out.push(r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::assembly::assemble_internal;
    use crate::fem::surface::external_force;
    use crate::fem::RegionMaterials;
    use crate::geometry::{build_eye_mesh, EyeGeometryConfig};
    use crate::material::MaterialParams;
    use crate::units::mmhg_to_mpa;
    use std::sync::OnceLock;

    fn model() -> &'static Model {
        static M: OnceLock<Model> = OnceLock::new();
        M.get_or_init(|| {
            let mesh = build_eye_mesh(&EyeGeometryConfig::default()).unwrap();
            let mats = RegionMaterials::new(MaterialParams::new(10.0, 0.275, 0.04, 200.0).unwrap(), &Default::default());
            Model::new(mesh, mats).unwrap()
        })
    }

    const JET: JetShape = JetShape { width: 1.5, shear_ratio: 0.0 };

    fn pressure_level(p: f64) -> LoadLevel {
        LoadLevel {
            factor: 1.0,
            jet_peak: 0.0,
            fixed_pressures: [p, p],
            prescribed: vec![],
        }
    }

    #[test]
    fn zero_load_is_immediately_converged() {
        let m = model();
        let bcs = BoundaryConditions::from_mesh(&m.mesh).unwrap();
        let p = Problem::new(m, &bcs, JET, CavityCoupling::Fixed).unwrap();
        let r = p.equilibrate(&m.zero_displacement(), &LoadLevel::zero(0), &SolverOptions::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert!(r.u.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn inflation_then_coupled_indentation() {
        let m = model();
        let bcs = BoundaryConditions::from_mesh(&m.mesh).unwrap();
        let iop = mmhg_to_mpa(17.5);
        let opts = SolverOptions::default();
        let fixed = Problem::new(m, &bcs, JET, CavityCoupling::Fixed).unwrap();
        let steps: Vec<_> = (1..=2).map(|i| pressure_level(iop * i as f64 / 2.0)).collect();
        let hist = newton_solve(&fixed, &m.zero_displacement(), &LoadLevel::zero(0), &steps, &opts).unwrap();
        let pre = hist.last().unwrap();
        let apex = m.mesh.apex_node().unwrap();
        assert!(pre.u[apex].z > 0.0, "apex moves outward under IOP");
        // quadratic convergence near the solution
        let inc = &pre.increment_norms;
        let n = inc.len();
        assert!(n >= 3);
        assert!(inc[n - 1] <= 10.0 * inc[n - 2].powf(1.8), "{inc:?}");
        // reactions at constrained dofs balance the total external load
        let f_int = assemble_internal(m, &pre.u).unwrap();
        let f_ext = external_force(&m.mesh, &pre.u, None, pre.pressures).unwrap();
        let mask = bcs.constrained_mask(m.mesh.num_dofs());
        let mut reaction = Vector3::<f64>::zeros();
        let mut load = Vector3::<f64>::zeros();
        let mut scale = 0.0;
        for d in 0..m.mesh.num_dofs() {
            if mask[d] {
                reaction[d % 3] += f_int[d] - f_ext[d];
            }
            load[d % 3] += f_ext[d];
            scale += f_ext[d].abs();
        }
        assert!((reaction + load).norm() <= 1e-8 * scale, "{reaction} vs {load}");

        // coupled indentation raises both pressures, the anterior one more
        let coupled = Problem::new(
            m,
            &bcs,
            JET,
            CavityCoupling::Coupled {
                reference_volumes: pre.volumes,
                reference_pressures: pre.pressures,
                bulk_modulus: 2000.0,
            },
        )
        .unwrap();
        let start = pre.level.clone();
        let jet_level = LoadLevel { jet_peak: 0.01, ..start.clone() };
        let r = coupled.advance(&pre.u, &start, &jet_level, &opts).unwrap();
        assert!(r.u[apex].z < pre.u[apex].z);
        assert!(r.pressures[0] > iop && r.pressures[1] > iop);
        assert!(r.pressures[0] - iop > r.pressures[1] - iop, "{:?}", r.pressures);
    }
}
