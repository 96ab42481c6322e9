#![allow(dead_code)]

use std::collections::BTreeMap;

use corneal_egm::fem::hex8::NODE_SIGNS;
use corneal_egm::fem::{Model, RegionMaterials};
use corneal_egm::geometry::{Element, EyeGeometryConfig, Mesh, MeshDensity, Region, SurfaceSet};
use corneal_egm::material::fibers::FiberField;
use corneal_egm::material::MaterialParams;
use nalgebra::Vector3;

pub fn healthy() -> MaterialParams {
    MaterialParams::new(10.0, 0.275, 0.04, 200.0).unwrap()
}

/// Two unit cubes along x with empty cavity walls, so every load routine runs.
pub fn two_cubes(region: Region) -> Mesh {
    let id = |i: usize, j: usize, k: usize| k * 6 + j * 3 + i;
    let mut nodes = Vec::new();
    for k in 0..2 {
        for j in 0..2 {
            for i in 0..3 {
                nodes.push(Vector3::new(i as f64, j as f64, k as f64));
            }
        }
    }
    let elements = (0..2)
        .map(|e| Element {
            conn: NODE_SIGNS.map(|s| id(e + (s[0] > 0.0) as usize, (s[1] > 0.0) as usize, (s[2] > 0.0) as usize)),
            region,
        })
        .collect();
    let mut facets = BTreeMap::new();
    facets.insert(SurfaceSet::AnteriorChamberWall, Vec::new());
    facets.insert(SurfaceSet::VitreousWall, Vec::new());
    Mesh {
        nodes,
        elements,
        facets,
        node_sets: BTreeMap::new(),
    }
}

/// Two-cube cornea with in-plane fibers along x and y.
pub fn cube_model(params: MaterialParams) -> Model {
    let mesh = two_cubes(Region::Cornea);
    let fibers = FiberField {
        directions: vec![[Vector3::x(), Vector3::y()]; mesh.elements.len()],
    };
    Model::with_fibers(mesh, RegionMaterials::new(params, &Default::default()), fibers).unwrap()
}

/// A smooth stretch-and-shear field on the cube nodes.
pub fn cube_field(model: &Model, scale: f64) -> Vec<Vector3<f64>> {
    model
        .mesh
        .nodes
        .iter()
        .map(|x| scale * Vector3::new(0.06 * x.x + 0.01 * x.y, 0.03 * x.y + 0.005 * x.x * x.z, -0.02 * x.z + 0.01 * x.x))
        .collect()
}

/// Coarse quarter eye for the quicker end-to-end tests.
pub fn coarse_geometry() -> EyeGeometryConfig {
    EyeGeometryConfig {
        density: MeshDensity {
            circumferential_divisions: 4,
            shell_layers: 2,
            lens_layers: 1,
            cornea_spacing: 0.8,
            limbus_spacing: 0.8,
            sclera_spacing: 2.4,
            lens_spacing: 0.8,
        },
        ..Default::default()
    }
}
