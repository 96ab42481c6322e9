//! Quasi-static finite element model of the quarter eye.

pub mod assembly;
pub mod bc;
pub mod element;
pub mod hex8;
mod linsys;
pub mod solver;
pub mod stress_free;
pub mod surface;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Mesh, Region};
use crate::material::fibers::{corneal_fibers, FiberField};
use crate::material::{Constitutive, LinearElasticParams, MaterialParams};

pub use bc::BoundaryConditions;
pub use solver::{newton_solve, CavityCoupling, LoadLevel, SolverOptions, StepResult};
pub use stress_free::{stress_free_geometry, StressFreeOptions, StressFreeResult};

/// Nodal displacements (mm), aligned with the mesh node order.
pub type DisplacementField = Vec<Vector3<f64>>;

/// Anterior chamber (index 0) and vitreous body (index 1).
pub const CAVITY_NAMES: [&str; 2] = ["anterior_chamber", "vitreous"];

/// Elastic constants of the non-corneal tissues.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuxMaterials {
    pub limbus: LinearElasticParams,
    pub sclera: LinearElasticParams,
    pub lens: LinearElasticParams,
}

impl Default for AuxMaterials {
    fn default() -> Self {
        AuxMaterials {
            limbus: LinearElasticParams { e: 1.4, nu: 0.49 },
            sclera: LinearElasticParams { e: 2.3, nu: 0.49 },
            lens: LinearElasticParams { e: 2.4, nu: 0.49 },
        }
    }
}

/// Constitutive law per region.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionMaterials {
    pub cornea: Constitutive,
    pub limbus: Constitutive,
    pub sclera: Constitutive,
    pub lens: Constitutive,
}

impl RegionMaterials {
    pub fn new(cornea: MaterialParams, aux: &AuxMaterials) -> Self {
        Self::with_cornea_law(Constitutive::FiberReinforced(cornea), aux)
    }

    pub fn with_cornea_law(cornea: Constitutive, aux: &AuxMaterials) -> Self {
        RegionMaterials {
            cornea,
            limbus: Constitutive::NeoHooke(aux.limbus),
            sclera: Constitutive::NeoHooke(aux.sclera),
            lens: Constitutive::NeoHooke(aux.lens),
        }
    }

    pub fn get(&self, region: Region) -> &Constitutive {
        match region {
            Region::Cornea => &self.cornea,
            Region::Limbus => &self.limbus,
            Region::Sclera => &self.sclera,
            Region::Lens => &self.lens,
        }
    }
}

/// A mesh with materials, fiber directions and precomputed reference gradients.
#[derive(Clone, Debug)]
pub struct Model {
    pub mesh: Mesh,
    pub materials: RegionMaterials,
    pub fibers: FiberField,
    pub(crate) quadrature: Vec<[hex8::QuadraturePoint; 8]>,
}

impl Model {
    pub fn new(mesh: Mesh, materials: RegionMaterials) -> Result<Model> {
        let fibers = corneal_fibers(&mesh);
        Self::with_fibers(mesh, materials, fibers)
    }

    pub fn with_fibers(mesh: Mesh, materials: RegionMaterials, fibers: FiberField) -> Result<Model> {
        let quadrature = (0..mesh.elements.len())
            .map(|e| {
                hex8::quadrature(&mesh.element_coords(e)).map_err(|(point, det_f)| Error::InvertedElement {
                    element: e,
                    point,
                    det_f,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Model {
            mesh,
            materials,
            fibers,
            quadrature,
        })
    }

    /// Same mesh topology on new reference coordinates; fibers are recomputed.
    pub fn remeshed(&self, nodes: Vec<Vector3<f64>>) -> Result<Model> {
        Model::new(self.mesh.with_nodes(nodes), self.materials.clone())
    }

    pub fn with_materials(&self, materials: RegionMaterials) -> Model {
        Model {
            materials,
            ..self.clone()
        }
    }

    pub fn zero_displacement(&self) -> DisplacementField {
        vec![Vector3::zeros(); self.mesh.nodes.len()]
    }
}

/// Flatten nodal vectors into a `3N` column.
pub fn flatten(u: &[Vector3<f64>]) -> Vec<f64> {
    u.iter().flat_map(|v| [v.x, v.y, v.z]).collect()
}

pub fn unflatten(v: &[f64]) -> DisplacementField {
    v.chunks_exact(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect()
}
