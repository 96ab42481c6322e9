//! Collagen fiber directions: the nasal-temporal (x) and superior-inferior (y)
//! directions projected onto the local corneal tangent plane.

use nalgebra::Vector3;

use crate::geometry::{Mesh, Region, HEX_FACES};

/// Two unit fiber directions per element.
#[derive(Clone, Debug, PartialEq)]
pub struct FiberField {
    pub directions: Vec<[Vector3<f64>; 2]>,
}

impl FiberField {
    pub fn get(&self, element: usize) -> &[Vector3<f64>; 2] {
        &self.directions[element]
    }
}

fn face_centroid(mesh: &Mesh, e: usize, face: usize) -> Vector3<f64> {
    let conn = &mesh.elements[e].conn;
    HEX_FACES[face].iter().map(|&i| mesh.nodes[conn[i]]).sum::<Vector3<f64>>() / 4.0
}

fn project(v: Vector3<f64>, n: &Vector3<f64>) -> Vector3<f64> {
    let t = v - n * n.dot(&v);
    t.normalize()
}

/// Fibers for every element. Cornea elements use the through-thickness
/// direction (outer face centroid minus inner face centroid) as the local
/// surface normal; other elements keep the global axes.
pub fn corneal_fibers(mesh: &Mesh) -> FiberField {
    let directions = (0..mesh.elements.len())
        .map(|e| {
            if mesh.elements[e].region != Region::Cornea {
                return [Vector3::x(), Vector3::y()];
            }
            let n = (face_centroid(mesh, e, 1) - face_centroid(mesh, e, 0)).normalize();
            [project(Vector3::x(), &n), project(Vector3::y(), &n)]
        })
        .collect();
    FiberField { directions }
}
