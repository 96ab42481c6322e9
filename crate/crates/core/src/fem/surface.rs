//! Follower surface loads and enclosed cavity volumes.
//!
//! Facet nodes are ordered so that `x_xi x x_eta` points out of the solid.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{check_closed, Facet, Mesh, SurfaceSet};

pub type FacetCoords = [Vector3<f64>; 4];
pub type FacetBlock = [[Matrix3<f64>; 4]; 4];

const FACET_SIGNS: [[f64; 2]; 4] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];
const G2: f64 = 0.577_350_269_189_625_8;
const G3: f64 = 0.774_596_669_241_483_4;

/// Tensor-product Gauss rule on the reference square as `(xi, eta, weight)`.
fn gauss_rule(order: usize) -> Vec<(f64, f64, f64)> {
    let line: &[(f64, f64)] = match order {
        2 => &[(-G2, 1.0), (G2, 1.0)],
        _ => &[(-G3, 5.0 / 9.0), (0.0, 8.0 / 9.0), (G3, 5.0 / 9.0)],
    };
    let mut out = Vec::with_capacity(line.len() * line.len());
    for &(eta, we) in line {
        for &(xi, wx) in line {
            out.push((xi, eta, wx * we));
        }
    }
    out
}

struct SurfacePoint {
    n: [f64; 4],
    dxi: [f64; 4],
    deta: [f64; 4],
    x: Vector3<f64>,
    x_xi: Vector3<f64>,
    x_eta: Vector3<f64>,
    weight: f64,
}

fn points(x: &FacetCoords, order: usize) -> impl Iterator<Item = SurfacePoint> + '_ {
    gauss_rule(order).into_iter().map(move |(xi, eta, weight)| {
        let n = FACET_SIGNS.map(|s| 0.25 * (1.0 + s[0] * xi) * (1.0 + s[1] * eta));
        let dxi = FACET_SIGNS.map(|s| 0.25 * s[0] * (1.0 + s[1] * eta));
        let deta = FACET_SIGNS.map(|s| 0.25 * s[1] * (1.0 + s[0] * xi));
        let mut p = SurfacePoint {
            n,
            dxi,
            deta,
            x: Vector3::zeros(),
            x_xi: Vector3::zeros(),
            x_eta: Vector3::zeros(),
            weight,
        };
        for a in 0..4 {
            p.x += x[a] * n[a];
            p.x_xi += x[a] * dxi[a];
            p.x_eta += x[a] * deta[a];
        }
        p
    })
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    v.cross_matrix()
}

/// Nodal forces of a unit follower pressure acting on the facet from outside the solid.
pub fn pressure_facet_force(x: &FacetCoords) -> FacetCoords {
    let mut f = [Vector3::zeros(); 4];
    for p in points(x, 2) {
        let area = p.x_xi.cross(&p.x_eta) * p.weight;
        for a in 0..4 {
            f[a] -= area * p.n[a];
        }
    }
    f
}

/// `d f_a / d x_b` of [`pressure_facet_force`].
pub fn pressure_facet_tangent(x: &FacetCoords) -> FacetBlock {
    let mut k = [[Matrix3::zeros(); 4]; 4];
    for p in points(x, 2) {
        let sxi = skew(&p.x_xi);
        let seta = skew(&p.x_eta);
        for a in 0..4 {
            for b in 0..4 {
                k[a][b] -= (sxi * p.deta[b] - seta * p.dxi[b]) * (p.n[a] * p.weight);
            }
        }
    }
    k
}

/// Axisymmetric Gaussian jet acting on the anterior corneal surface.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JetLoad {
    /// Peak normal pressure at the axis (MPa).
    pub peak: f64,
    /// Radius where the pressure has dropped to `1/e` of the peak (mm).
    pub width: f64,
    /// Peak radial shear traction (MPa); applied without tangent contribution.
    #[serde(default)]
    pub shear_peak: f64,
}

impl JetLoad {
    fn pressure(&self, x: &Vector3<f64>) -> (f64, Vector3<f64>) {
        let w2 = self.width * self.width;
        let p = self.peak * (-(x.x * x.x + x.y * x.y) / w2).exp();
        (p, Vector3::new(-2.0 * x.x / w2, -2.0 * x.y / w2, 0.0) * p)
    }
}

pub fn jet_facet_force(x: &FacetCoords, jet: &JetLoad) -> FacetCoords {
    let mut f = [Vector3::zeros(); 4];
    for p in points(x, 3) {
        let (pr, _) = jet.pressure(&p.x);
        let area = p.x_xi.cross(&p.x_eta) * p.weight;
        let mut t = -area * pr;
        if jet.shear_peak != 0.0 {
            let r = (p.x.x * p.x.x + p.x.y * p.x.y).sqrt();
            if r > 0.0 {
                let normal = area.normalize();
                let radial = Vector3::new(p.x.x / r, p.x.y / r, 0.0);
                let tangential = radial - normal * normal.dot(&radial);
                let w = jet.width;
                let s = jet.shear_peak * (r / w) * (0.5f64.exp() * 2.0f64.sqrt()) * (-(r * r) / (w * w)).exp();
                t += tangential * (s * area.norm());
            }
        }
        for a in 0..4 {
            f[a] += t * p.n[a];
        }
    }
    f
}

/// Tangent of the normal-pressure part of [`jet_facet_force`].
pub fn jet_facet_tangent(x: &FacetCoords, jet: &JetLoad) -> FacetBlock {
    let mut k = [[Matrix3::zeros(); 4]; 4];
    for p in points(x, 3) {
        let (pr, grad) = jet.pressure(&p.x);
        let area = p.x_xi.cross(&p.x_eta);
        let sxi = skew(&p.x_xi);
        let seta = skew(&p.x_eta);
        let ag = area * grad.transpose();
        for a in 0..4 {
            for b in 0..4 {
                k[a][b] -= ((sxi * p.deta[b] - seta * p.dxi[b]) * pr + ag * p.n[b]) * (p.n[a] * p.weight);
            }
        }
    }
    k
}

/// Signed volume contribution `-(1/3) int x . (x_xi x x_eta)` of one facet.
pub fn facet_volume(x: &FacetCoords) -> f64 {
    points(x, 2)
        .map(|p| -p.x.dot(&p.x_xi.cross(&p.x_eta)) * p.weight / 3.0)
        .sum()
}

pub fn facet_volume_gradient(x: &FacetCoords) -> FacetCoords {
    let mut g = [Vector3::zeros(); 4];
    for p in points(x, 2) {
        let a0 = p.x_xi.cross(&p.x_eta);
        let a1 = p.x_eta.cross(&p.x);
        let a2 = p.x.cross(&p.x_xi);
        for a in 0..4 {
            g[a] -= (a0 * p.n[a] + a1 * p.dxi[a] + a2 * p.deta[a]) * (p.weight / 3.0);
        }
    }
    g
}

/// Deformed coordinates of a facet.
pub fn facet_coords(mesh: &Mesh, u: &[Vector3<f64>], f: Facet) -> FacetCoords {
    mesh.facet_nodes(f).map(|n| mesh.nodes[n] + u[n])
}

fn scatter(out: &mut [f64], nodes: [usize; 4], f: &FacetCoords, scale: f64) {
    for (n, v) in nodes.iter().zip(f) {
        for k in 0..3 {
            out[3 * n + k] += scale * v[k];
        }
    }
}

/// Global nodal force of a unit pressure on a surface set.
pub fn pressure_load(mesh: &Mesh, u: &[Vector3<f64>], set: SurfaceSet) -> Result<Vec<f64>> {
    let mut out = vec![0.0; mesh.num_dofs()];
    for &f in mesh.facet_set(set)? {
        scatter(&mut out, mesh.facet_nodes(f), &pressure_facet_force(&facet_coords(mesh, u, f)), 1.0);
    }
    Ok(out)
}

pub fn jet_force(mesh: &Mesh, u: &[Vector3<f64>], jet: &JetLoad) -> Result<Vec<f64>> {
    let mut out = vec![0.0; mesh.num_dofs()];
    for &f in mesh.facet_set(SurfaceSet::AnteriorCornea)? {
        scatter(&mut out, mesh.facet_nodes(f), &jet_facet_force(&facet_coords(mesh, u, f), jet), 1.0);
    }
    Ok(out)
}

/// Cavity wall sets in the order anterior chamber, vitreous body.
pub const CAVITY_WALLS: [SurfaceSet; 2] = [SurfaceSet::AnteriorChamberWall, SurfaceSet::VitreousWall];

/// External nodal forces of the jet and the two cavity pressures on the deformed surfaces.
pub fn external_force(mesh: &Mesh, u: &[Vector3<f64>], jet: Option<&JetLoad>, pressures: [f64; 2]) -> Result<Vec<f64>> {
    let mut out = match jet {
        Some(j) if j.peak != 0.0 || j.shear_peak != 0.0 => jet_force(mesh, u, j)?,
        _ => vec![0.0; mesh.num_dofs()],
    };
    for (set, p) in CAVITY_WALLS.iter().zip(pressures) {
        let facets = mesh.facet_set(*set)?;
        if p != 0.0 {
            for &f in facets {
                scatter(&mut out, mesh.facet_nodes(f), &pressure_facet_force(&facet_coords(mesh, u, f)), p);
            }
        }
    }
    Ok(out)
}

pub(crate) fn wall_volume(mesh: &Mesh, u: &[Vector3<f64>], facets: &[Facet]) -> f64 {
    4.0 * facets.iter().map(|&f| facet_volume(&facet_coords(mesh, u, f))).sum::<f64>()
}

/// Enclosed volume of a cavity of the full eye (mm^3), from its quarter wall.
pub fn cavity_volume(mesh: &Mesh, u: &[Vector3<f64>], set: SurfaceSet) -> Result<f64> {
    check_closed(mesh, set)?;
    Ok(wall_volume(mesh, u, mesh.facet_set(set)?))
}

/// Gradient of [`cavity_volume`] with respect to the nodal displacements.
pub fn cavity_volume_gradient(mesh: &Mesh, u: &[Vector3<f64>], set: SurfaceSet) -> Result<Vec<f64>> {
    let mut out = vec![0.0; mesh.num_dofs()];
    for &f in mesh.facet_set(set)? {
        scatter(&mut out, mesh.facet_nodes(f), &facet_volume_gradient(&facet_coords(mesh, u, f)), 4.0);
    }
    Ok(out)
}

/// Pressure-volume state of one fluid cavity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CavityState {
    pub reference_volume: f64,
    pub reference_pressure: f64,
    pub pressure: f64,
    pub bulk_modulus: f64,
}

impl CavityState {
    pub fn new(reference_volume: f64, reference_pressure: f64, bulk_modulus: f64) -> Result<Self> {
        if !(reference_volume > 0.0) || !(bulk_modulus > 0.0) {
            return Err(Error::Config(format!(
                "cavity needs V0 > 0 and K_W > 0 (got {reference_volume}, {bulk_modulus})"
            )));
        }
        Ok(CavityState {
            reference_volume,
            reference_pressure,
            pressure: reference_pressure,
            bulk_modulus,
        })
    }
}

/// `p = p0 - K_W (V - V0) / V0`.
pub fn cavity_pressure_update(cavity: &CavityState, volume: f64) -> f64 {
    cavity.reference_pressure - cavity.bulk_modulus * (volume - cavity.reference_volume) / cavity.reference_volume
}
