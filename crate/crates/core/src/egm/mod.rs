//! Equilibrium gap identification.
//!
//! For a measured displacement field the discrete residual is linear in the
//! corneal parameters `(K, mu, k1)` once `k2` is fixed:
//! `R = K c_K + mu c_mu + k1 c_k1 + c0 - f_ext`. The linear parameters follow
//! from a 3x3 constrained least-squares problem per state, and `k2` from the
//! scatter of the per-state results over a grid.

mod linear;
mod nonlinear;
mod prepared;

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::assembly::assemble_split;
use crate::fem::surface::{external_force, JetLoad};
use crate::fem::{BoundaryConditions, DisplacementField, Model};
use crate::geometry::Region;
use crate::synthlab::NctHistory;

pub use linear::{identify_linear, residual_norm, LinearIdentification, CONDITION_THRESHOLD, PARAMETER_NAMES};
pub use nonlinear::{
    default_k2_grid, identify_nonlinear, objective_frel, FrelEvaluation, NonlinearIdentification, NonlinearOptions,
    FREL_SKIP_THRESHOLD,
};
pub use prepared::PreparedState;

/// One displacement field with the loads acting on it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasuredState {
    /// Load step the field belongs to.
    pub step: usize,
    pub u: DisplacementField,
    pub jet: Option<JetLoad>,
    /// Anterior chamber and vitreous pressures (MPa).
    pub pressures: [f64; 2],
}

impl MeasuredState {
    pub fn from_history(history: &NctHistory, step: usize) -> Result<MeasuredState> {
        let s = history.states.get(step).ok_or_else(|| Error::Mismatch {
            what: "history step",
            expected: format!("< {}", history.states.len()),
            found: step.to_string(),
        })?;
        Ok(MeasuredState {
            step,
            u: s.u.clone(),
            jet: (s.jet_peak != 0.0).then(|| history.jet.shape().at(s.jet_peak)),
            pressures: s.pressures,
        })
    }

    /// External nodal forces on the deformed surfaces (all dofs).
    pub fn external_force(&self, model: &Model) -> Result<Vec<f64>> {
        external_force(&model.mesh, &self.u, self.jet.as_ref(), self.pressures)
    }
}

/// Which equations of the residual enter the identification.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DofSelection {
    /// Free dofs of every node touching a corneal element.
    #[default]
    Cornea,
    /// Every unconstrained dof.
    AllFree,
    /// Explicit global dof indices.
    Dofs(Vec<usize>),
}

impl DofSelection {
    /// Sorted global dof indices.
    pub fn resolve(&self, model: &Model, bcs: &BoundaryConditions) -> Result<Vec<usize>> {
        let ndofs = model.mesh.num_dofs();
        let mask = bcs.constrained_mask(ndofs);
        let dofs: Vec<usize> = match self {
            DofSelection::Cornea => {
                let nodes: BTreeSet<usize> = model
                    .mesh
                    .elements
                    .iter()
                    .filter(|e| e.region == Region::Cornea)
                    .flat_map(|e| e.conn)
                    .collect();
                nodes.into_iter().flat_map(|n| [3 * n, 3 * n + 1, 3 * n + 2]).filter(|&d| !mask[d]).collect()
            }
            DofSelection::AllFree => (0..ndofs).filter(|&d| !mask[d]).collect(),
            DofSelection::Dofs(d) => {
                let set: BTreeSet<usize> = d.iter().copied().collect();
                if let Some(&bad) = set.iter().find(|&&i| i >= ndofs) {
                    return Err(Error::Mismatch {
                        what: "selected dof",
                        expected: format!("< {ndofs}"),
                        found: bad.to_string(),
                    });
                }
                set.into_iter().collect()
            }
        };
        if dofs.is_empty() {
            return Err(Error::EmptySelection);
        }
        Ok(dofs)
    }
}

/// Residual columns restricted to the selected dofs.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualSplit {
    pub c_k: Vec<f64>,
    pub c_mu: Vec<f64>,
    pub c_k1: Vec<f64>,
    /// Internal force of the regions with known material.
    pub c0: Vec<f64>,
    pub f_ext: Vec<f64>,
    /// Global dof of each row.
    pub dofs: Arc<[usize]>,
    pub k2: f64,
    pub state: usize,
}

impl ResidualSplit {
    /// Split from columns already restricted to `dofs`.
    pub fn from_columns(
        columns: [Vec<f64>; 3],
        c0: Vec<f64>,
        f_ext: Vec<f64>,
        dofs: Arc<[usize]>,
        k2: f64,
        state: usize,
    ) -> Result<ResidualSplit> {
        let [c_k, c_mu, c_k1] = columns;
        for (what, len) in [("c_K", c_k.len()), ("c_mu", c_mu.len()), ("c_k1", c_k1.len()), ("c0", c0.len()), ("f_ext", f_ext.len())] {
            if len != dofs.len() {
                return Err(Error::Mismatch {
                    what,
                    expected: format!("{} rows", dofs.len()),
                    found: format!("{len} rows"),
                });
            }
        }
        Ok(ResidualSplit {
            c_k,
            c_mu,
            c_k1,
            c0,
            f_ext,
            dofs,
            k2,
            state,
        })
    }

    /// Direct assembly of every column at `k2`.
    pub fn assemble(model: &Model, state: &MeasuredState, dofs: Arc<[usize]>, k2: f64) -> Result<ResidualSplit> {
        check_field(model, &state.u)?;
        let s = assemble_split(model, &state.u, k2)?;
        let f = state.external_force(model)?;
        let pick = |v: &[f64]| dofs.iter().map(|&d| v[d]).collect::<Vec<f64>>();
        ResidualSplit::from_columns([pick(&s.c_k), pick(&s.c_mu), pick(&s.c_k1)], pick(&s.c0), pick(&f), dofs.clone(), k2, state.step)
    }

    pub fn len(&self) -> usize {
        self.dofs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dofs.is_empty()
    }

    pub fn columns(&self) -> [&[f64]; 3] {
        [&self.c_k, &self.c_mu, &self.c_k1]
    }

    /// Right-hand side `f_ext - c0`.
    pub fn rhs(&self) -> Vec<f64> {
        self.f_ext.iter().zip(&self.c0).map(|(f, c)| f - c).collect()
    }

    /// Scale every column by `factor`.
    pub fn scaled(&self, factor: f64) -> ResidualSplit {
        let s = |v: &[f64]| v.iter().map(|x| x * factor).collect();
        ResidualSplit {
            c_k: s(&self.c_k),
            c_mu: s(&self.c_mu),
            c_k1: s(&self.c_k1),
            c0: s(&self.c0),
            f_ext: s(&self.f_ext),
            ..self.clone()
        }
    }
}

fn check_field(model: &Model, u: &[nalgebra::Vector3<f64>]) -> Result<()> {
    if u.len() != model.mesh.num_nodes() {
        return Err(Error::Mismatch {
            what: "displacement field",
            expected: format!("{} nodes", model.mesh.num_nodes()),
            found: format!("{} nodes", u.len()),
        });
    }
    Ok(())
}
