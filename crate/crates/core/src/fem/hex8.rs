//! Trilinear 8-node hexahedron.

use nalgebra::{Matrix3, Vector3};

/// Natural coordinates of the element nodes.
pub const NODE_SIGNS: [[f64; 3]; 8] = [
    [-1.0, -1.0, -1.0],
    [1.0, -1.0, -1.0],
    [1.0, 1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
    [1.0, -1.0, 1.0],
    [1.0, 1.0, 1.0],
    [-1.0, 1.0, 1.0],
];

const G: f64 = 0.577_350_269_189_625_8;

/// 2x2x2 Gauss points (all weights are 1).
pub const GAUSS_POINTS: [[f64; 3]; 8] = [
    [-G, -G, -G],
    [G, -G, -G],
    [G, G, -G],
    [-G, G, -G],
    [-G, -G, G],
    [G, -G, G],
    [G, G, G],
    [-G, G, G],
];

pub fn shape(xi: [f64; 3]) -> [f64; 8] {
    NODE_SIGNS.map(|s| 0.125 * (1.0 + s[0] * xi[0]) * (1.0 + s[1] * xi[1]) * (1.0 + s[2] * xi[2]))
}

/// Derivatives of the shape functions with respect to the natural coordinates.
pub fn shape_derivatives(xi: [f64; 3]) -> [Vector3<f64>; 8] {
    NODE_SIGNS.map(|s| {
        let a = 1.0 + s[0] * xi[0];
        let b = 1.0 + s[1] * xi[1];
        let c = 1.0 + s[2] * xi[2];
        0.125 * Vector3::new(s[0] * b * c, s[1] * a * c, s[2] * a * b)
    })
}

/// `J_ij = dx_i / dxi_j`.
pub fn jacobian(coords: &[Vector3<f64>; 8], dn: &[Vector3<f64>; 8]) -> Matrix3<f64> {
    let mut j = Matrix3::zeros();
    for a in 0..8 {
        j += coords[a] * dn[a].transpose();
    }
    j
}

/// Shape function gradients and volume weight at one quadrature point.
#[derive(Clone, Copy, Debug)]
pub struct QuadraturePoint {
    pub grads: [Vector3<f64>; 8],
    pub weight: f64,
}

/// Gradients with respect to `coords` at the 8 Gauss points. On a non-positive
/// Jacobian returns the failing point index and determinant.
pub fn quadrature(coords: &[Vector3<f64>; 8]) -> Result<[QuadraturePoint; 8], (usize, f64)> {
    let mut out = [QuadraturePoint {
        grads: [Vector3::zeros(); 8],
        weight: 0.0,
    }; 8];
    for (g, xi) in GAUSS_POINTS.iter().enumerate() {
        let dn = shape_derivatives(*xi);
        let j = jacobian(coords, &dn);
        let det = j.determinant();
        if !(det > 0.0) {
            return Err((g, det));
        }
        let jinv_t = j.try_inverse().ok_or((g, det))?.transpose();
        out[g] = QuadraturePoint {
            grads: dn.map(|d| jinv_t * d),
            weight: det,
        };
    }
    Ok(out)
}

/// Jacobian determinants at the 8 corners.
pub fn corner_determinants(coords: &[Vector3<f64>; 8]) -> [f64; 8] {
    NODE_SIGNS.map(|xi| jacobian(coords, &shape_derivatives(xi)).determinant())
}
