use std::sync::Arc;

use super::{check_field, MeasuredState, ResidualSplit};
use crate::error::{Error, Result};
use crate::fem::assembly::{assemble_split, for_each_element};
use crate::fem::element::{element_fiber_terms, ElementData, ElementVector};
use crate::fem::Model;
use crate::geometry::Region;
use crate::material::Constitutive;

const NONE: u32 = u32::MAX;

/// Per-state cache of everything in the residual split that does not depend
/// on `k2`, plus the fiber terms needed to rebuild `c_k1` at any `k2`.
#[derive(Clone, Debug)]
pub struct PreparedState {
    pub state: usize,
    pub dofs: Arc<[usize]>,
    c_k: Vec<f64>,
    c_mu: Vec<f64>,
    c0: Vec<f64>,
    f_ext: Vec<f64>,
    /// Selected row of each local dof of the corneal elements.
    maps: Vec<[u32; 24]>,
    /// `(element map, E, v)` per active fiber family and quadrature point.
    terms: Vec<(u32, f64, ElementVector)>,
}

impl PreparedState {
    pub fn new(model: &Model, state: &MeasuredState, dofs: Arc<[usize]>) -> Result<PreparedState> {
        check_field(model, &state.u)?;
        let Constitutive::FiberReinforced(p) = &model.materials.cornea else {
            return Err(Error::Config("identification needs the fiber-reinforced corneal law".into()));
        };
        let mut row = vec![NONE; model.mesh.num_dofs()];
        for (i, &d) in dofs.iter().enumerate() {
            row[d] = i as u32;
        }
        // k2 only enters c_k1, which is rebuilt below
        let s = assemble_split(model, &state.u, p.k2)?;
        let f = state.external_force(model)?;
        let pick = |v: &[f64]| dofs.iter().map(|&d| v[d]).collect::<Vec<f64>>();

        let cornea: Vec<usize> = (0..model.mesh.elements.len())
            .filter(|&e| model.mesh.elements[e].region == Region::Cornea)
            .collect();
        let mut maps = Vec::with_capacity(cornea.len());
        let mut terms = Vec::new();
        for_each_element(
            cornea.len(),
            |i| {
                let e = cornea[i];
                let d = model.mesh.elements[e].conn.map(|n| state.u[n]);
                element_fiber_terms(
                    &ElementData {
                        index: e,
                        quadrature: &model.quadrature[e],
                        displacements: &d,
                        fibers: model.fibers.get(e),
                    },
                    p.kappa,
                    p.fibers_tension_only,
                    p.dispersion.as_ref(),
                )
            },
            |i, t| {
                let conn = &model.mesh.elements[cornea[i]].conn;
                let map: [u32; 24] = std::array::from_fn(|k| row[3 * conn[k / 3] + k % 3]);
                if map.iter().all(|&r| r == NONE) || t.is_empty() {
                    return;
                }
                let m = maps.len() as u32;
                maps.push(map);
                terms.extend(t.into_iter().map(|(e, v)| (m, e, v)));
            },
        )?;
        Ok(PreparedState {
            state: state.step,
            c_k: pick(&s.c_k),
            c_mu: pick(&s.c_mu),
            c0: pick(&s.c0),
            f_ext: pick(&f),
            dofs,
            maps,
            terms,
        })
    }

    /// Fiber column at `k2` on the selected dofs.
    pub fn c_k1(&self, k2: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dofs.len()];
        for (m, e, v) in &self.terms {
            let w = e * (k2 * e * e).exp();
            for (r, x) in self.maps[*m as usize].iter().zip(v.iter()) {
                if *r != NONE {
                    out[*r as usize] += w * x;
                }
            }
        }
        out
    }

    pub fn split(&self, k2: f64) -> ResidualSplit {
        ResidualSplit {
            c_k: self.c_k.clone(),
            c_mu: self.c_mu.clone(),
            c_k1: self.c_k1(k2),
            c0: self.c0.clone(),
            f_ext: self.f_ext.clone(),
            dofs: self.dofs.clone(),
            k2,
            state: self.state,
        }
    }
}

#[cfg(test)]
mod tests {
    use nalgebra::Vector3;

    use super::*;
    use crate::fem::{BoundaryConditions, RegionMaterials};
    use crate::geometry::{build_eye_mesh, EyeGeometryConfig};
    use crate::material::MaterialParams;

    use crate::egm::DofSelection;

    #[test]
    fn cache_matches_direct_assembly() {
        let mesh = build_eye_mesh(&EyeGeometryConfig::default()).unwrap();
        let model = Model::new(mesh, RegionMaterials::new(MaterialParams::new(10.0, 0.275, 0.04, 200.0).unwrap(), &Default::default())).unwrap();
        let bcs = BoundaryConditions::from_mesh(&model.mesh).unwrap();
        let dofs: Arc<[usize]> = DofSelection::Cornea.resolve(&model, &bcs).unwrap().into();
        // smooth stretch-and-dent field that keeps some fibers in tension
        let u: Vec<Vector3<f64>> = model
            .mesh
            .nodes
            .iter()
            .map(|x| {
                let r2 = x.x * x.x + x.y * x.y;
                Vector3::new(0.01 * x.x, 0.008 * x.y, -0.05 * (-r2 / 4.0).exp())
            })
            .collect();
        let state = MeasuredState {
            step: 3,
            u,
            jet: Some(crate::fem::surface::JetLoad { peak: 0.01, width: 2.0, shear_peak: 0.0 }),
            pressures: [0.003, 0.0025],
        };
        let prepared = PreparedState::new(&model, &state, dofs.clone()).unwrap();
        for k2 in [10.0, 200.0, 400.0] {
            let direct = ResidualSplit::assemble(&model, &state, dofs.clone(), k2).unwrap();
            let cached = prepared.split(k2);
            assert_eq!(cached.c_k, direct.c_k);
            assert_eq!(cached.c_mu, direct.c_mu);
            assert_eq!(cached.f_ext, direct.f_ext);
            let scale = direct.c_k1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(scale > 0.0);
            for (a, b) in cached.c_k1.iter().zip(&direct.c_k1) {
                assert!((a - b).abs() <= 1e-12 * scale, "{a} vs {b}");
            }
        }
    }
}
