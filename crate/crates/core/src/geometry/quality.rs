use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;

use super::{Mesh, Region};
use crate::fem::hex8::{corner_determinants, NODE_SIGNS};

const EDGES: [[usize; 2]; 12] = [
    [0, 1], [1, 2], [2, 3], [3, 0],
    [4, 5], [5, 6], [6, 7], [7, 4],
    [0, 4], [1, 5], [2, 6], [3, 7],
];

#[derive(Clone, Debug, Serialize)]
pub struct QualityReport {
    pub num_nodes: usize,
    pub num_elements: usize,
    pub min_scaled_jacobian: f64,
    /// Smallest ratio of min to max corner Jacobian determinant over elements.
    pub min_jacobian_ratio: f64,
    pub max_jacobian_ratio: f64,
    pub max_aspect_ratio: f64,
    pub mean_aspect_ratio: f64,
    pub negative_jacobian_elements: Vec<usize>,
    pub elements_per_region: BTreeMap<Region, usize>,
}

fn neighbor(a: usize, axis: usize) -> usize {
    let mut s = NODE_SIGNS[a];
    s[axis] = -s[axis];
    NODE_SIGNS.iter().position(|t| *t == s).unwrap()
}

/// Minimum over the corners of the determinant of unit edge vectors.
pub fn scaled_jacobian(x: &[Vector3<f64>; 8]) -> f64 {
    let mut min = f64::INFINITY;
    for a in 0..8 {
        let mut m = Matrix3::zeros();
        for axis in 0..3 {
            let d = (x[neighbor(a, axis)] - x[a]) * -NODE_SIGNS[a][axis];
            m.set_column(axis, &d.normalize());
        }
        min = min.min(m.determinant());
    }
    min
}

pub fn mesh_quality_report(mesh: &Mesh) -> QualityReport {
    let mut r = QualityReport {
        num_nodes: mesh.nodes.len(),
        num_elements: mesh.elements.len(),
        min_scaled_jacobian: f64::INFINITY,
        min_jacobian_ratio: f64::INFINITY,
        max_jacobian_ratio: f64::NEG_INFINITY,
        max_aspect_ratio: 0.0,
        mean_aspect_ratio: 0.0,
        negative_jacobian_elements: Vec::new(),
        elements_per_region: mesh.region_counts(),
    };
    for e in 0..mesh.elements.len() {
        let x = mesh.element_coords(e);
        let sj = scaled_jacobian(&x);
        let dets = corner_determinants(&x);
        let lo = dets.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = dets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if lo <= 0.0 || sj <= 0.0 {
            r.negative_jacobian_elements.push(e);
        }
        let ratio = lo / hi;
        let lengths = EDGES.map(|[a, b]| (x[a] - x[b]).norm());
        let aspect = lengths.iter().copied().fold(0.0, f64::max) / lengths.iter().copied().fold(f64::INFINITY, f64::min);
        r.min_scaled_jacobian = r.min_scaled_jacobian.min(sj);
        r.min_jacobian_ratio = r.min_jacobian_ratio.min(ratio);
        r.max_jacobian_ratio = r.max_jacobian_ratio.max(ratio);
        r.max_aspect_ratio = r.max_aspect_ratio.max(aspect);
        r.mean_aspect_ratio += aspect / mesh.elements.len() as f64;
    }
    r
}
