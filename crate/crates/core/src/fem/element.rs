//! Element kernels: deformation gradients, internal forces, tangents and the
//! per-parameter force split.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};

use super::hex8::QuadraturePoint;
use crate::error::{Error, Result};
use crate::material::{
    fiber_stress_basis, kinematics, pk2_split, push_forward, Constitutive, DispersionCorrection, KinematicState, Tangent,
    Voigt,
};

pub type ElementVector = SVector<f64, 24>;
pub type ElementMatrix = SMatrix<f64, 24, 24>;
type BMatrix = SMatrix<f64, 6, 24>;

const VOIGT_PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (1, 2), (0, 2)];

/// Everything the kernels need for one element.
#[derive(Clone, Copy, Debug)]
pub struct ElementData<'a> {
    pub index: usize,
    pub quadrature: &'a [QuadraturePoint; 8],
    pub displacements: &'a [Vector3<f64>; 8],
    pub fibers: &'a [Vector3<f64>; 2],
}

/// `F = I + sum_a u_a (x) grad N_a`.
pub fn deformation_gradient(qp: &QuadraturePoint, u: &[Vector3<f64>; 8]) -> Matrix3<f64> {
    let mut f = Matrix3::identity();
    for a in 0..8 {
        f += u[a] * qp.grads[a].transpose();
    }
    f
}

fn state(el: &ElementData, g: usize, kappa: f64) -> Result<KinematicState> {
    let f = deformation_gradient(&el.quadrature[g], el.displacements);
    kinematics(&f, el.fibers, kappa).map_err(|_| Error::InvertedElement {
        element: el.index,
        point: g,
        det_f: f.determinant(),
    })
}

fn b_matrix(f: &Matrix3<f64>, grads: &[Vector3<f64>; 8]) -> BMatrix {
    let mut b = BMatrix::zeros();
    for (a, g) in grads.iter().enumerate() {
        for (row, &(i, j)) in VOIGT_PAIRS.iter().enumerate() {
            for k in 0..3 {
                b[(row, 3 * a + k)] = if i == j {
                    f[(k, i)] * g[i]
                } else {
                    f[(k, i)] * g[j] + f[(k, j)] * g[i]
                };
            }
        }
    }
    b
}

fn pk2_force(f: &Matrix3<f64>, s: &Voigt, qp: &QuadraturePoint, out: &mut ElementVector) {
    let s = crate::material::from_voigt(s);
    let p = f * s;
    for a in 0..8 {
        let fa = p * qp.grads[a] * qp.weight;
        for k in 0..3 {
            out[3 * a + k] += fa[k];
        }
    }
}

/// Internal force column `int B^T sigma dv` evaluated on the deformed
/// configuration with Cauchy stresses.
pub fn element_internal_force(el: &ElementData, law: &Constitutive) -> Result<ElementVector> {
    let mut out = ElementVector::zeros();
    for g in 0..8 {
        let st = state(el, g, law.kappa())?;
        let sigma = push_forward(&st, &law.pk2(&st));
        let finv_t = st.f.try_inverse().expect("checked by kinematics").transpose();
        let qp = &el.quadrature[g];
        for a in 0..8 {
            let grad_x = finv_t * qp.grads[a];
            let fa = sigma * grad_x * (st.j * qp.weight);
            for k in 0..3 {
                out[3 * a + k] += fa[k];
            }
        }
    }
    Ok(out)
}

/// Internal force and consistent tangent in the total Lagrangian form.
pub fn element_force_tangent(el: &ElementData, law: &Constitutive) -> Result<(ElementVector, ElementMatrix)> {
    let mut force = ElementVector::zeros();
    let mut k = ElementMatrix::zeros();
    for g in 0..8 {
        let st = state(el, g, law.kappa())?;
        let qp = &el.quadrature[g];
        let (s, d): (Voigt, Tangent) = law.pk2_tangent(&st);
        pk2_force(&st.f, &s, qp, &mut force);
        let b = b_matrix(&st.f, &qp.grads);
        let db = d * b * qp.weight;
        k += b.transpose() * db;
        let sm = crate::material::from_voigt(&s);
        for a in 0..8 {
            let sg = sm * qp.grads[a];
            for bn in 0..8 {
                let geo = qp.grads[bn].dot(&sg) * qp.weight;
                for i in 0..3 {
                    k[(3 * a + i, 3 * bn + i)] += geo;
                }
            }
        }
    }
    Ok((force, k))
}

/// Internal force only, total Lagrangian form.
pub fn element_force(el: &ElementData, law: &Constitutive) -> Result<ElementVector> {
    let mut force = ElementVector::zeros();
    for g in 0..8 {
        let st = state(el, g, law.kappa())?;
        pk2_force(&st.f, &law.pk2(&st), &el.quadrature[g], &mut force);
    }
    Ok(force)
}

/// Unit-parameter force columns `(c_K, c_mu, c_k1)` of one element.
pub fn element_split(
    el: &ElementData,
    k2: f64,
    kappa: f64,
    tension_only: bool,
    dispersion: Option<&DispersionCorrection>,
) -> Result<[ElementVector; 3]> {
    let mut out = [ElementVector::zeros(); 3];
    for g in 0..8 {
        let st = state(el, g, kappa)?;
        let parts = pk2_split(&st, k2, tension_only, dispersion);
        for (o, s) in out.iter_mut().zip(parts.iter()) {
            pk2_force(&st.f, s, &el.quadrature[g], o);
        }
    }
    Ok(out)
}

/// Fiber force terms of one element: the unit-`k1` column at any `k2` is
/// `sum E exp(k2 E^2) v` over the returned `(E, v)` pairs.
pub fn element_fiber_terms(
    el: &ElementData,
    kappa: f64,
    tension_only: bool,
    dispersion: Option<&DispersionCorrection>,
) -> Result<Vec<(f64, ElementVector)>> {
    let mut out = Vec::new();
    for g in 0..8 {
        let st = state(el, g, kappa)?;
        for (e, b) in fiber_stress_basis(&st, tension_only, dispersion).into_iter().flatten() {
            let mut v = ElementVector::zeros();
            pk2_force(&st.f, &b, &el.quadrature[g], &mut v);
            out.push((e, v));
        }
    }
    Ok(out)
}
