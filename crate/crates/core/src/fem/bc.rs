use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Mesh, SurfaceSet};

/// Dirichlet data of the quarter model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundaryConditions {
    /// Nodes with all three components fixed.
    pub fixed_nodes: Vec<usize>,
    /// Nodes on the `y = 0` plane (`u_y = 0`).
    pub symmetry_xz: Vec<usize>,
    /// Nodes on the `x = 0` plane (`u_x = 0`).
    pub symmetry_yz: Vec<usize>,
    /// Global dof indices whose values come from the load level.
    pub prescribed: Vec<usize>,
}

impl BoundaryConditions {
    /// Fixation cone plus both symmetry planes.
    pub fn from_mesh(mesh: &Mesh) -> Result<Self> {
        Ok(BoundaryConditions {
            fixed_nodes: mesh.node_set(SurfaceSet::Fixation)?.to_vec(),
            symmetry_xz: mesh.node_set(SurfaceSet::SymmetryXz)?.to_vec(),
            symmetry_yz: mesh.node_set(SurfaceSet::SymmetryYz)?.to_vec(),
            prescribed: Vec::new(),
        })
    }

    pub fn with_prescribed(mut self, dofs: Vec<usize>) -> Result<Self> {
        self.prescribed = dofs;
        self.validate()?;
        Ok(self)
    }

    /// Dofs held at zero.
    pub fn zero_dofs(&self) -> BTreeSet<usize> {
        let mut s = BTreeSet::new();
        for &n in &self.fixed_nodes {
            s.extend([3 * n, 3 * n + 1, 3 * n + 2]);
        }
        s.extend(self.symmetry_xz.iter().map(|n| 3 * n + 1));
        s.extend(self.symmetry_yz.iter().map(|n| 3 * n));
        s
    }

    /// Prescribed entries may not overlap the homogeneous constraints.
    pub fn validate(&self) -> Result<()> {
        let zero = self.zero_dofs();
        let mut seen = BTreeSet::new();
        for &d in &self.prescribed {
            if zero.contains(&d) {
                return Err(Error::Config(format!("dof {d} is both fixed and prescribed")));
            }
            if !seen.insert(d) {
                return Err(Error::Config(format!("dof {d} is prescribed twice")));
            }
        }
        Ok(())
    }

    /// `true` for every constrained dof out of `ndofs`.
    pub fn constrained_mask(&self, ndofs: usize) -> Vec<bool> {
        let mut mask = vec![false; ndofs];
        for d in self.zero_dofs().into_iter().chain(self.prescribed.iter().copied()) {
            mask[d] = true;
        }
        mask
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_eye_mesh, EyeGeometryConfig};

    #[test]
    fn overlap_is_rejected() {
        let mesh = build_eye_mesh(&EyeGeometryConfig::default()).unwrap();
        let bc = BoundaryConditions::from_mesh(&mesh).unwrap();
        let n = bc.fixed_nodes[0];
        assert!(bc.clone().with_prescribed(vec![3 * n + 2]).is_err());
        let free = (0..mesh.num_dofs()).find(|d| !bc.zero_dofs().contains(d)).unwrap();
        assert!(bc.clone().with_prescribed(vec![free, free]).is_err());
        assert!(bc.with_prescribed(vec![free]).is_ok());
    }
}
