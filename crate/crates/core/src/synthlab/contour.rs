use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Mesh, SurfaceSet};

/// Anterior and posterior corneal section in the `y = 0` symmetry plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeformationContour {
    pub plane: String,
    /// `(r, z)` points sorted by radius (mm).
    pub anterior: Vec<[f64; 2]>,
    pub posterior: Vec<[f64; 2]>,
    /// Central corneal thickness of the deformed section (mm).
    pub cct: f64,
    pub def_a: f64,
}

impl DeformationContour {
    /// Axial coordinate of the anterior apex.
    pub fn apex_z(&self) -> f64 {
        self.anterior[0][1]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, line) in [("anterior", &self.anterior), ("posterior", &self.posterior)] {
            if line.len() < 2 {
                return Err(Error::Contour(format!("{name} contour has fewer than two points")));
            }
            if line.windows(2).any(|w| !(w[1][0] > w[0][0])) {
                return Err(Error::Contour(format!("{name} contour radius is not strictly increasing")));
            }
        }
        Ok(())
    }
}

fn section(mesh: &Mesh, u: &[Vector3<f64>], set: SurfaceSet) -> Result<Vec<[f64; 2]>> {
    let mut pts: Vec<[f64; 2]> = mesh
        .node_set(set)?
        .iter()
        .filter(|&&n| mesh.nodes[n].y == 0.0)
        .map(|&n| {
            let x = mesh.nodes[n] + u[n];
            [x.x, x.z]
        })
        .collect();
    if pts.is_empty() {
        return Err(Error::Contour(format!("no `{}` nodes on the symmetry plane", set.name())));
    }
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]));
    Ok(pts)
}

/// Deformed corneal section of `u`; `def_a` is recorded with it.
pub fn extract_contours(mesh: &Mesh, u: &[Vector3<f64>], def_a: f64) -> Result<DeformationContour> {
    let anterior = section(mesh, u, SurfaceSet::AnteriorCornea)?;
    let posterior = section(mesh, u, SurfaceSet::PosteriorCornea)?;
    let a = mesh.apex_node()?;
    let p = mesh.posterior_apex_node()?;
    let c = DeformationContour {
        plane: "xz".into(),
        anterior,
        posterior,
        cct: (mesh.nodes[a].z + u[a].z) - (mesh.nodes[p].z + u[p].z),
        def_a,
    };
    c.validate()?;
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_eye_mesh, EyeGeometryConfig};

    #[test]
    fn undeformed_contour_is_the_section() {
        let mesh = build_eye_mesh(&EyeGeometryConfig::default()).unwrap();
        let zero = vec![Vector3::zeros(); mesh.num_nodes()];
        let c = extract_contours(&mesh, &zero, 0.0).unwrap();
        let count = mesh
            .node_set(SurfaceSet::AnteriorCornea)
            .unwrap()
            .iter()
            .filter(|&&n| mesh.nodes[n].y == 0.0)
            .count();
        assert_eq!(c.anterior.len(), count);
        assert!((c.cct - 0.55).abs() < 1e-9, "{}", c.cct);
        let apex = mesh.apex_node().unwrap();
        assert_eq!(c.apex_z(), mesh.nodes[apex].z);
        assert_eq!(c.anterior[0][0], 0.0);

        // bookkeeping identity at the apex
        let mut u = zero.clone();
        u[apex].z = -0.3;
        let d = extract_contours(&mesh, &u, 0.3).unwrap();
        assert!((d.apex_z() - (mesh.nodes[apex].z - 0.3)).abs() < 1e-12);
    }
}
