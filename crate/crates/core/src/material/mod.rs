//! Fiber-reinforced quasi-incompressible corneal model and the neo-Hookean
//! stand-in for the auxiliary tissues.
//!
//! Energy per unit reference volume:
//!
//! ```text
//! psi = K/4 (J^2 - 1 - 2 ln J) + mu/2 (I1b - 3)
//!     + sum_i k1/(2 k2) (exp[k2 (I4s_i - 1)^2] - 1) a_i
//! I4s_i = kappa I1b + (1 - 3 kappa) I4b_i
//! ```
//!
//! Stresses are returned as Cauchy tensors; the solver works with the second
//! Piola-Kirchhoff stress `S` and the material tangent `dS/dE` in Voigt form
//! with order (11, 22, 33, 12, 23, 13) and engineering shear strains.

pub mod fibers;

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Voigt = Vector6<f64>;
pub type Tangent = Matrix6<f64>;

const VOIGT: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (1, 2), (0, 2)];

/// Optional per-family factor `a_i = 1 + kstar_i * sigma2_i`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispersionCorrection {
    pub kstar: [f64; 2],
    pub sigma2: [f64; 2],
}

impl DispersionCorrection {
    pub fn factors(&self) -> [f64; 2] {
        [
            1.0 + self.kstar[0] * self.sigma2[0],
            1.0 + self.kstar[1] * self.sigma2[1],
        ]
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaterialParamsFile {
    #[serde(rename = "K")]
    k: f64,
    mu: f64,
    k1: f64,
    k2: f64,
    #[serde(default)]
    kappa: f64,
    #[serde(default = "default_true")]
    fibers_tension_only: bool,
    #[serde(default)]
    dispersion: Option<DispersionCorrection>,
}

fn default_true() -> bool {
    true
}

/// Corneal parameters `(K, mu, k1, k2)` with the fiber settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MaterialParamsFile", into = "MaterialParamsFile")]
pub struct MaterialParams {
    /// Volumetric penalty `K` (MPa).
    pub k: f64,
    /// Neo-Hookean shear modulus (MPa).
    pub mu: f64,
    /// Collagen fiber stiffness (MPa).
    pub k1: f64,
    /// Fiber nonlinearity exponent (dimensionless).
    pub k2: f64,
    /// Fiber dispersion in `[0, 1/3]`.
    pub kappa: f64,
    /// Fibers carry no load while their isochoric stretch invariant is below 1.
    pub fibers_tension_only: bool,
    pub dispersion: Option<DispersionCorrection>,
}

impl TryFrom<MaterialParamsFile> for MaterialParams {
    type Error = Error;

    fn try_from(f: MaterialParamsFile) -> Result<Self> {
        let mut p = MaterialParams::new(f.k, f.mu, f.k1, f.k2)?;
        p.kappa = f.kappa;
        p.fibers_tension_only = f.fibers_tension_only;
        p.dispersion = f.dispersion;
        p.validate()?;
        Ok(p)
    }
}

impl From<MaterialParams> for MaterialParamsFile {
    fn from(p: MaterialParams) -> Self {
        MaterialParamsFile {
            k: p.k,
            mu: p.mu,
            k1: p.k1,
            k2: p.k2,
            kappa: p.kappa,
            fibers_tension_only: p.fibers_tension_only,
            dispersion: p.dispersion,
        }
    }
}

impl MaterialParams {
    /// Aligned fibers, tension-only switch on, no dispersion correction.
    pub fn new(k: f64, mu: f64, k1: f64, k2: f64) -> Result<Self> {
        let p = MaterialParams {
            k,
            mu,
            k1,
            k2,
            kappa: 0.0,
            fibers_tension_only: true,
            dispersion: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.k, self.mu, self.k1, self.k2, self.kappa]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("material parameters must be finite".into()));
        }
        if self.k < 0.0 || self.mu < 0.0 || self.k1 < 0.0 {
            return Err(Error::Config(format!(
                "K, mu and k1 must be nonnegative (got {}, {}, {})",
                self.k, self.mu, self.k1
            )));
        }
        if self.k2 <= 0.0 {
            return Err(Error::Config(format!("k2 must be positive (got {})", self.k2)));
        }
        if !(0.0..=1.0 / 3.0).contains(&self.kappa) {
            return Err(Error::Config(format!("kappa must lie in [0, 1/3] (got {})", self.kappa)));
        }
        Ok(())
    }

    /// Same settings with the linear parameters replaced.
    pub fn with_linear(&self, k: f64, mu: f64, k1: f64) -> MaterialParams {
        MaterialParams {
            k,
            mu,
            k1,
            ..self.clone()
        }
    }

    fn fiber_factors(&self) -> [f64; 2] {
        self.dispersion.map_or([1.0; 2], |d| d.factors())
    }
}

/// Young's modulus and Poisson ratio of the auxiliary tissues.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearElasticParams {
    #[serde(rename = "E")]
    pub e: f64,
    pub nu: f64,
}

impl LinearElasticParams {
    pub fn new(e: f64, nu: f64) -> Result<Self> {
        if !(e > 0.0 && e.is_finite()) || !(0.0..0.5).contains(&nu) {
            return Err(Error::Config(format!("invalid elastic constants E = {e}, nu = {nu}")));
        }
        Ok(LinearElasticParams { e, nu })
    }

    /// Lame constants `(lambda, mu)`.
    pub fn lame(&self) -> (f64, f64) {
        let lambda = self.e * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu));
        let mu = self.e / (2.0 * (1.0 + self.nu));
        (lambda, mu)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct KinematicState {
    pub f: Matrix3<f64>,
    pub j: f64,
    /// Right Cauchy-Green tensor.
    pub c: Matrix3<f64>,
    pub c_inv: Matrix3<f64>,
    pub i1_bar: f64,
    pub fibers: [Vector3<f64>; 2],
    pub i4_bar: [f64; 2],
    pub i4_star: [f64; 2],
    pub kappa: f64,
}

pub fn kinematics(f: &Matrix3<f64>, fibers: &[Vector3<f64>; 2], kappa: f64) -> Result<KinematicState> {
    let j = f.determinant();
    if !(j > 0.0) {
        return Err(Error::InvertedState { det_f: j });
    }
    let c = f.transpose() * f;
    let c_inv = c.try_inverse().ok_or(Error::InvertedState { det_f: j })?;
    let jm23 = j.powf(-2.0 / 3.0);
    let i1_bar = jm23 * c.trace();
    let i4_bar = fibers.map(|a| jm23 * a.dot(&(c * a)));
    let i4_star = i4_bar.map(|i4| kappa * i1_bar + (1.0 - 3.0 * kappa) * i4);
    Ok(KinematicState {
        f: *f,
        j,
        c,
        c_inv,
        i1_bar,
        fibers: *fibers,
        i4_bar,
        i4_star,
        kappa,
    })
}

impl KinematicState {
    fn fiber_active(&self, i: usize, tension_only: bool) -> bool {
        !tension_only || self.i4_bar[i] >= 1.0
    }
}

/// Strain energy density (MPa). The dispersion `kappa` is taken from the state.
pub fn energy(s: &KinematicState, p: &MaterialParams) -> f64 {
    let vol = 0.25 * p.k * (s.j * s.j - 1.0 - 2.0 * s.j.ln());
    let iso = 0.5 * p.mu * (s.i1_bar - 3.0);
    let a = p.fiber_factors();
    let mut ti = 0.0;
    for i in 0..2 {
        if s.fiber_active(i, p.fibers_tension_only) {
            let e = s.i4_star[i] - 1.0;
            ti += p.k1 / (2.0 * p.k2) * (p.k2 * e * e).exp_m1() * a[i];
        }
    }
    vol + iso + ti
}

/// Symmetric outer product `A (x) B` in Voigt form.
fn outer(a: &Voigt, b: &Voigt) -> Tangent {
    a * b.transpose()
}

fn to_voigt(m: &Matrix3<f64>) -> Voigt {
    Voigt::from_fn(|i, _| {
        let (a, b) = VOIGT[i];
        m[(a, b)]
    })
}

pub fn from_voigt(v: &Voigt) -> Matrix3<f64> {
    Matrix3::new(v[0], v[3], v[5], v[3], v[1], v[4], v[5], v[4], v[2])
}

/// `(Ci (.) Ci)_IJKL = (Ci_IK Ci_JL + Ci_IL Ci_JK) / 2` in Voigt form.
fn ci_odot(ci: &Matrix3<f64>) -> Tangent {
    Tangent::from_fn(|r, c| {
        let (i, j) = VOIGT[r];
        let (k, l) = VOIGT[c];
        0.5 * (ci[(i, k)] * ci[(j, l)] + ci[(i, l)] * ci[(j, k)])
    })
}

/// Derivatives of an isochoric invariant `J^{-2/3} A:C`:
/// first `G = dI/dC` and second `H = dG/dC`.
fn iso_invariant_derivs(a: &Voigt, ia: f64, jm23: f64, ci: &Voigt, odot: &Tangent) -> (Voigt, Tangent) {
    let g = jm23 * (a - ci * (ia / 3.0));
    let h = (outer(a, ci) + outer(ci, a)) * (-jm23 / 3.0)
        + outer(ci, ci) * (ia * jm23 / 9.0)
        + odot * (ia * jm23 / 3.0);
    (g, h)
}

struct Parts {
    s_vol: Voigt,
    c_vol: Tangent,
    s_iso: Voigt,
    c_iso: Tangent,
    s_ti: Voigt,
    c_ti: Tangent,
}

/// Per-parameter stress and tangent contributions with `K = mu = k1 = 1`.
fn unit_parts(s: &KinematicState, k2: f64, tension_only: bool, factors: [f64; 2], with_tangent: bool) -> Parts {
    let ci = to_voigt(&s.c_inv);
    let odot = ci_odot(&s.c_inv);
    let j2 = s.j * s.j;
    let jm23 = s.j.powf(-2.0 / 3.0);

    let s_vol = ci * (0.5 * (j2 - 1.0));
    let c_vol = if with_tangent {
        outer(&ci, &ci) * j2 - odot * (j2 - 1.0)
    } else {
        Tangent::zeros()
    };

    let ident = Voigt::new(1.0, 1.0, 1.0, 0.0, 0.0, 0.0);
    let (g_i, h_i) = iso_invariant_derivs(&ident, s.c.trace(), jm23, &ci, &odot);
    let s_iso = g_i;
    let c_iso = h_i * 2.0;

    let mut s_ti = Voigt::zeros();
    let mut c_ti = Tangent::zeros();
    for i in 0..2 {
        if !s.fiber_active(i, tension_only) {
            continue;
        }
        let a = s.fibers[i];
        let m = to_voigt(&(a * a.transpose()));
        let i4 = a.dot(&(s.c * a));
        let (g_m, h_m) = iso_invariant_derivs(&m, i4, jm23, &ci, &odot);
        let g = g_i * s.kappa + g_m * (1.0 - 3.0 * s.kappa);
        let e = s.i4_star[i] - 1.0;
        let ex = (k2 * e * e).exp();
        let d1 = factors[i] * e * ex;
        s_ti += g * (2.0 * d1);
        if with_tangent {
            let h = h_i * s.kappa + h_m * (1.0 - 3.0 * s.kappa);
            let d2 = factors[i] * (1.0 + 2.0 * k2 * e * e) * ex;
            c_ti += (outer(&g, &g) * d2 + h * d1) * 4.0;
        }
    }
    Parts {
        s_vol,
        c_vol,
        s_iso,
        c_iso,
        s_ti,
        c_ti,
    }
}

/// Second Piola-Kirchhoff stress in Voigt form.
pub fn pk2(s: &KinematicState, p: &MaterialParams) -> Voigt {
    let parts = unit_parts(s, p.k2, p.fibers_tension_only, p.fiber_factors(), false);
    parts.s_vol * p.k + parts.s_iso * p.mu + parts.s_ti * p.k1
}

/// Second Piola-Kirchhoff stress and the material tangent `dS/dE`.
pub fn pk2_tangent(s: &KinematicState, p: &MaterialParams) -> (Voigt, Tangent) {
    let parts = unit_parts(s, p.k2, p.fibers_tension_only, p.fiber_factors(), true);
    (
        parts.s_vol * p.k + parts.s_iso * p.mu + parts.s_ti * p.k1,
        parts.c_vol * p.k + parts.c_iso * p.mu + parts.c_ti * p.k1,
    )
}

/// Material tangent `dS/dE` (Voigt, engineering shear), exactly consistent with [`pk2`].
pub fn tangent(s: &KinematicState, p: &MaterialParams) -> Tangent {
    pk2_tangent(s, p).1
}

/// Unit second Piola-Kirchhoff stresses `(S_K, S_mu, S_k1)`.
pub fn pk2_split(s: &KinematicState, k2: f64, tension_only: bool, dispersion: Option<&DispersionCorrection>) -> [Voigt; 3] {
    let factors = dispersion.map_or([1.0; 2], |d| d.factors());
    let parts = unit_parts(s, k2, tension_only, factors, false);
    [parts.s_vol, parts.s_iso, parts.s_ti]
}

/// Per-family fiber stress basis: `(E_i, B_i)` with
/// `S_k1(k2) = sum_i E_i exp(k2 E_i^2) B_i` over the active families, where
/// `E_i = I4*_i - 1`. Inactive families are `None`.
pub fn fiber_stress_basis(
    s: &KinematicState,
    tension_only: bool,
    dispersion: Option<&DispersionCorrection>,
) -> [Option<(f64, Voigt)>; 2] {
    let factors = dispersion.map_or([1.0; 2], |d| d.factors());
    let ci = to_voigt(&s.c_inv);
    let odot = ci_odot(&s.c_inv);
    let jm23 = s.j.powf(-2.0 / 3.0);
    let ident = Voigt::new(1.0, 1.0, 1.0, 0.0, 0.0, 0.0);
    let (g_i, _) = iso_invariant_derivs(&ident, s.c.trace(), jm23, &ci, &odot);
    std::array::from_fn(|i| {
        if !s.fiber_active(i, tension_only) {
            return None;
        }
        let a = s.fibers[i];
        let m = to_voigt(&(a * a.transpose()));
        let (g_m, _) = iso_invariant_derivs(&m, a.dot(&(s.c * a)), jm23, &ci, &odot);
        let g = g_i * s.kappa + g_m * (1.0 - 3.0 * s.kappa);
        Some((s.i4_star[i] - 1.0, g * (2.0 * factors[i])))
    })
}

/// Push a second Piola-Kirchhoff stress forward to Cauchy stress.
pub fn push_forward(s: &KinematicState, pk2: &Voigt) -> Matrix3<f64> {
    s.f * from_voigt(pk2) * s.f.transpose() / s.j
}

/// Cauchy stress `sigma = (2/J) F dpsi/dC F^T`.
pub fn stress(s: &KinematicState, p: &MaterialParams) -> Matrix3<f64> {
    push_forward(s, &pk2(s, p))
}

/// Unit Cauchy stresses `(sigma_K, sigma_mu, sigma_k1)` such that
/// `stress = K sigma_K + mu sigma_mu + k1 sigma_k1` at fixed `k2`.
pub fn stress_split(
    s: &KinematicState,
    k2: f64,
    tension_only: bool,
    dispersion: Option<&DispersionCorrection>,
) -> [Matrix3<f64>; 3] {
    pk2_split(s, k2, tension_only, dispersion).map(|v| push_forward(s, &v))
}

/// Compressible neo-Hookean energy with Lame constants from `(E, nu)`.
pub fn isotropic_aux_energy(s: &KinematicState, p: &LinearElasticParams) -> f64 {
    let (lambda, mu) = p.lame();
    let lnj = s.j.ln();
    0.5 * mu * (s.c.trace() - 3.0) - mu * lnj + 0.5 * lambda * lnj * lnj
}

pub fn isotropic_aux_pk2_tangent(s: &KinematicState, p: &LinearElasticParams) -> (Voigt, Tangent) {
    let (lambda, mu) = p.lame();
    let ci = to_voigt(&s.c_inv);
    let lnj = s.j.ln();
    let ident = Voigt::new(1.0, 1.0, 1.0, 0.0, 0.0, 0.0);
    let stress = (ident - ci) * mu + ci * (lambda * lnj);
    let tangent = outer(&ci, &ci) * lambda + ci_odot(&s.c_inv) * (2.0 * (mu - lambda * lnj));
    (stress, tangent)
}

pub fn isotropic_aux_pk2(s: &KinematicState, p: &LinearElasticParams) -> Voigt {
    let (lambda, mu) = p.lame();
    let ci = to_voigt(&s.c_inv);
    let ident = Voigt::new(1.0, 1.0, 1.0, 0.0, 0.0, 0.0);
    (ident - ci) * mu + ci * (lambda * s.j.ln())
}

/// Cauchy stress of the auxiliary neo-Hookean model.
pub fn isotropic_aux_stress(s: &KinematicState, p: &LinearElasticParams) -> Matrix3<f64> {
    push_forward(s, &isotropic_aux_pk2(s, p))
}

/// Constitutive law assigned to one mesh region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Constitutive {
    FiberReinforced(MaterialParams),
    NeoHooke(LinearElasticParams),
}

impl Constitutive {
    /// Dispersion to use when evaluating the kinematics.
    pub fn kappa(&self) -> f64 {
        match self {
            Constitutive::FiberReinforced(p) => p.kappa,
            Constitutive::NeoHooke(_) => 0.0,
        }
    }

    pub fn pk2(&self, s: &KinematicState) -> Voigt {
        match self {
            Constitutive::FiberReinforced(p) => pk2(s, p),
            Constitutive::NeoHooke(p) => isotropic_aux_pk2(s, p),
        }
    }

    pub fn pk2_tangent(&self, s: &KinematicState) -> (Voigt, Tangent) {
        match self {
            Constitutive::FiberReinforced(p) => pk2_tangent(s, p),
            Constitutive::NeoHooke(p) => isotropic_aux_pk2_tangent(s, p),
        }
    }

    pub fn energy(&self, s: &KinematicState) -> f64 {
        match self {
            Constitutive::FiberReinforced(p) => energy(s, p),
            Constitutive::NeoHooke(p) => isotropic_aux_energy(s, p),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Unit};
    use proptest::prelude::*;

    fn reference() -> MaterialParams {
        MaterialParams::new(10.0, 0.275, 0.04, 200.0).unwrap()
    }

    fn e1e2() -> [Vector3<f64>; 2] {
        [Vector3::x(), Vector3::y()]
    }

    /// Cauchy stress from central differences of the energy through
    /// `sigma = (2/J) F dpsi/dC F^T`.
    fn fd_cauchy(f: &Matrix3<f64>, fibers: &[Vector3<f64>; 2], kappa: f64, psi: impl Fn(&KinematicState) -> f64) -> Matrix3<f64> {
        let k0 = kinematics(f, fibers, kappa).unwrap();
        let c = k0.c;
        let h = 1e-7;
        let mut dpsi = Matrix3::zeros();
        for i in 0..3 {
            for j in i..3 {
                let mut e = Matrix3::zeros();
                e[(i, j)] = 0.5;
                e[(j, i)] = 0.5;
                if i == j {
                    e[(i, i)] = 1.0;
                }
                let eval = |t: f64| {
                    let cc = c + e * t;
                    // any F with F^T F = cc works; use the symmetric square root
                    let eig = cc.symmetric_eigen();
                    let u = eig.eigenvectors * Matrix3::from_diagonal(&eig.eigenvalues.map(f64::sqrt)) * eig.eigenvectors.transpose();
                    psi(&kinematics(&u, fibers, k0.kappa).unwrap())
                };
                let d = (eval(h) - eval(-h)) / (2.0 * h);
                dpsi[(i, j)] = d;
                dpsi[(j, i)] = d;
            }
        }
        f * (dpsi * 2.0) * f.transpose() / k0.j
    }

    fn arb_f() -> impl Strategy<Value = Matrix3<f64>> {
        proptest::array::uniform9(-0.08f64..0.08).prop_map(|v| Matrix3::from_row_slice(&v) + Matrix3::identity())
    }

    #[test]
    fn identity_state() {
        let s = kinematics(&Matrix3::identity(), &e1e2(), 0.0).unwrap();
        assert_eq!(s.j, 1.0);
        assert!((s.i1_bar - 3.0).abs() < 1e-15);
        assert!((s.i4_bar[0] - 1.0).abs() < 1e-15);
        assert!((s.i4_star[1] - 1.0).abs() < 1e-15);
        assert_eq!(energy(&s, &reference()), 0.0);
        assert!(stress(&s, &reference()).norm() < 1e-15);
        for part in stress_split(&s, 200.0, true, None) {
            assert!(part.norm() < 1e-15);
        }
    }

    #[test]
    fn dilatation_leaves_isochoric_invariants() {
        let s = kinematics(&(Matrix3::identity() * 1.1), &e1e2(), 0.0).unwrap();
        assert!((s.i1_bar - 3.0).abs() < 1e-12);
        assert!((s.i4_bar[0] - 1.0).abs() < 1e-12);
        assert!((s.j - 1.331).abs() < 1e-12);
    }

    #[test]
    fn uniaxial_isochoric_invariants() {
        let l: f64 = 1.2;
        let f = Matrix3::from_diagonal(&Vector3::new(l, l.powf(-0.5), l.powf(-0.5)));
        let s = kinematics(&f, &e1e2(), 0.1).unwrap();
        let i1 = l * l + 2.0 / l;
        assert!((s.i4_bar[0] - 1.44).abs() < 1e-12);
        assert!((s.i1_bar - i1).abs() < 1e-12);
        assert!((s.i4_star[0] - (0.1 * i1 + 0.7 * 1.44)).abs() < 1e-12);
    }

    #[test]
    fn inverted_state_is_rejected() {
        let f = Matrix3::from_diagonal(&Vector3::new(-1.0, 1.0, 1.0));
        assert!(matches!(kinematics(&f, &e1e2(), 0.0), Err(Error::InvertedState { .. })));
    }

    #[test]
    fn volumetric_energy_value() {
        let f = Matrix3::identity() * 1.05f64.cbrt();
        let s = kinematics(&f, &e1e2(), 0.0).unwrap();
        let p = MaterialParams::new(10.0, 0.0, 0.0, 200.0).unwrap();
        let expect = 0.25 * 10.0 * (1.05f64.powi(2) - 1.0 - 2.0 * 1.05f64.ln());
        assert!((energy(&s, &p) - expect).abs() < 1e-15);
        assert!((expect - 0.012_299_179_152_84).abs() < 1e-13);
    }

    #[test]
    fn fiber_energy_value() {
        // isochoric stretch along the fiber with I4 = 1.01
        let l = 1.01f64.sqrt();
        let f = Matrix3::from_diagonal(&Vector3::new(l, l.powf(-0.5), l.powf(-0.5)));
        let s = kinematics(&f, &[Vector3::x(), Vector3::x()], 0.0).unwrap();
        assert!((s.i4_star[0] - 1.01).abs() < 1e-14);
        let p = MaterialParams::new(0.0, 0.0, 0.04, 200.0).unwrap();
        let one_family = 1e-4 * (0.02f64.exp() - 1.0);
        assert!((energy(&s, &p) - 2.0 * one_family).abs() < 1e-17);
        assert!((one_family - 2.0201e-6).abs() < 1e-10);
    }

    #[test]
    fn split_recomposes_stress() {
        let f = Matrix3::new(1.1, 0.05, 0.0, -0.02, 0.95, 0.03, 0.01, 0.0, 1.02);
        let s = kinematics(&f, &e1e2(), 0.0).unwrap();
        let p = reference();
        let [a, b, c] = stress_split(&s, p.k2, true, None);
        let recomposed = a * p.k + b * p.mu + c * p.k1;
        let full = stress(&s, &p);
        assert!((recomposed - full).norm() <= 1e-12 * full.norm());
    }

    #[test]
    fn fiber_basis_rebuilds_fiber_stress() {
        let f = Matrix3::new(1.08, 0.03, 0.0, -0.02, 0.97, 0.01, 0.02, 0.0, 0.99);
        let s = kinematics(&f, &[Vector3::new(1.0, 0.1, 0.0).normalize(), Vector3::y()], 0.05).unwrap();
        for k2 in [10.0, 200.0, 400.0] {
            let [_, _, direct] = pk2_split(&s, k2, true, None);
            let mut rebuilt = Voigt::zeros();
            for (e, b) in fiber_stress_basis(&s, true, None).into_iter().flatten() {
                rebuilt += b * (e * (k2 * e * e).exp());
            }
            assert!((rebuilt - direct).norm() <= 1e-14 * direct.norm().max(1e-12));
        }
    }

    #[test]
    fn compressed_fibers_are_switched_off() {
        let f = Matrix3::from_diagonal(&Vector3::new(0.9, 0.9, 1.0 / 0.81));
        let s = kinematics(&f, &e1e2(), 0.0).unwrap();
        assert!(s.i4_star[0] < 1.0);
        let [_, _, fib] = stress_split(&s, 200.0, true, None);
        assert_eq!(fib, Matrix3::zeros());
        let [_, _, fib] = stress_split(&s, 200.0, false, None);
        assert!(fib.norm() > 0.0);
    }

    #[test]
    fn hydrostatic_stress_under_dilatation() {
        let f = Matrix3::identity() * 1.02;
        let s = kinematics(&f, &e1e2(), 0.0).unwrap();
        let p = MaterialParams::new(10.0, 0.0, 0.0, 200.0).unwrap();
        let sig = stress(&s, &p);
        let fd = fd_cauchy(&f, &e1e2(), 0.0, |k| energy(k, &p));
        assert!((sig - fd).norm() < 1e-6 * sig.norm());
        assert!((sig - Matrix3::identity() * sig[(0, 0)]).norm() < 1e-14);
        let j = s.j;
        assert!((sig[(0, 0)] - 0.5 * p.k * (j - 1.0 / j)).abs() < 1e-13);
    }

    #[test]
    fn isotropic_tangent_at_reference_has_full_symmetry() {
        let s = kinematics(&Matrix3::identity(), &e1e2(), 0.0).unwrap();
        let p = MaterialParams::new(0.0, 1.0, 0.0, 200.0).unwrap();
        let c = tangent(&s, &p);
        assert!((c - c.transpose()).norm() < 1e-14);
        // deviatoric projector 2 mu (I - 1/3 1 (x) 1) with Voigt shear entries mu
        assert!((c[(0, 0)] - 4.0 / 3.0).abs() < 1e-14);
        assert!((c[(0, 1)] + 2.0 / 3.0).abs() < 1e-14);
        assert!((c[(3, 3)] - 1.0).abs() < 1e-14);
        assert!((c[(4, 4)] - 1.0).abs() < 1e-14 && (c[(5, 5)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn fiber_tangent_dominates_along_fiber() {
        let f = Matrix3::from_diagonal(&Vector3::new(1.01, 1.0, 1.0 / 1.01));
        let s = kinematics(&f, &[Vector3::x(), Vector3::x()], 0.0).unwrap();
        let p = MaterialParams::new(0.0, 0.0, 0.04, 200.0).unwrap();
        let c = tangent(&s, &p);
        let max = c.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert_eq!(c[(0, 0)].abs(), max);
    }

    #[test]
    fn aux_matches_hooke_at_small_strain() {
        let p = LinearElasticParams::new(2.3, 0.49).unwrap();
        let (lambda, mu) = p.lame();
        let eps = Matrix3::new(1e-4, 2e-5, 0.0, 2e-5, -3e-5, 1e-5, 0.0, 1e-5, 5e-5);
        let s = kinematics(&(Matrix3::identity() + eps), &e1e2(), 0.0).unwrap();
        let sig = isotropic_aux_stress(&s, &p);
        let hooke = Matrix3::identity() * (lambda * eps.trace()) + eps * (2.0 * mu);
        assert!((sig - hooke).norm() < 1e-2 * hooke.norm());
        assert!(isotropic_aux_stress(&kinematics(&Matrix3::identity(), &e1e2(), 0.0).unwrap(), &p).norm() < 1e-15);
    }

    #[test]
    fn aux_uniaxial_strain() {
        // laterally constrained: sigma_11 = (lambda + 2 mu) eps
        let p = LinearElasticParams::new(2.3, 0.49).unwrap();
        let (lambda, mu) = p.lame();
        let f = Matrix3::from_diagonal(&Vector3::new(1.0 + 1e-4, 1.0, 1.0));
        let sig = isotropic_aux_stress(&kinematics(&f, &e1e2(), 0.0).unwrap(), &p);
        let expect = (lambda + 2.0 * mu) * 1e-4;
        assert!((sig[(0, 0)] - expect).abs() < 1e-3 * expect);
        assert!((sig[(1, 1)] - lambda * 1e-4).abs() < 1e-3 * lambda * 1e-4);
    }

    #[test]
    fn negative_parameters_are_rejected() {
        assert!(MaterialParams::new(-1.0, 0.275, 0.04, 200.0).is_err());
        assert!(MaterialParams::new(10.0, -0.1, 0.04, 200.0).is_err());
        assert!(MaterialParams::new(10.0, 0.275, -0.04, 200.0).is_err());
        assert!(MaterialParams::new(10.0, 0.275, 0.04, 0.0).is_err());
        let json = r#"{"K": 10, "mu": -0.2, "k1": 0.04, "k2": 200}"#;
        assert!(serde_json::from_str::<MaterialParams>(json).is_err());
    }

    #[test]
    fn json_round_trip() {
        let p = reference();
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"K\":10"));
        assert_eq!(serde_json::from_str::<MaterialParams>(&s).unwrap(), p);
    }

    proptest! {
        #[test]
        fn frame_indifference(f in arb_f(), axis in proptest::array::uniform3(-1.0f64..1.0), angle in 0.0f64..6.28) {
            prop_assume!(f.determinant() > 0.2);
            let ax = Vector3::from(axis);
            prop_assume!(ax.norm() > 1e-3);
            let q = Rotation3::from_axis_angle(&Unit::new_normalize(ax), angle);
            let p = MaterialParams { fibers_tension_only: false, ..reference() };
            let a = energy(&kinematics(&f, &e1e2(), 0.0).unwrap(), &p);
            let b = energy(&kinematics(&(q.matrix() * f), &e1e2(), 0.0).unwrap(), &p);
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-12));
        }

        #[test]
        fn isochoric_terms_ignore_dilatation(f in arb_f(), c in prop_oneof![Just(0.9), Just(1.1)]) {
            prop_assume!(f.determinant() > 0.2);
            let p = MaterialParams { k: 0.0, fibers_tension_only: false, ..reference() };
            let a = energy(&kinematics(&f, &e1e2(), 0.05).unwrap(), &p);
            let b = energy(&kinematics(&(f * c), &e1e2(), 0.05).unwrap(), &p);
            // equal up to rounding in J^(-2/3) and the cancellation in I4* - 1
            prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-12), "{a} vs {b}");
        }

        #[test]
        fn isotropic_limit_ignores_fiber_direction(f in arb_f(), angle in 0.0f64..6.28) {
            prop_assume!(f.determinant() > 0.2);
            let p = MaterialParams { kappa: 1.0 / 3.0, fibers_tension_only: false, ..reference() };
            let q = Rotation3::from_axis_angle(&Vector3::z_axis(), angle) * Rotation3::from_axis_angle(&Vector3::x_axis(), 0.3 * angle);
            let rotated = e1e2().map(|a| q * a);
            let a = energy(&kinematics(&f, &e1e2(), p.kappa).unwrap(), &p);
            let b = energy(&kinematics(&f, &rotated, p.kappa).unwrap(), &p);
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-12));
        }

        #[test]
        fn stress_is_energy_derivative(f in arb_f(), kappa in 0.0f64..0.2) {
            prop_assume!(f.determinant() > 0.3);
            let p = MaterialParams { kappa, fibers_tension_only: false, ..reference() };
            let fib = [Vector3::new(1.0, 0.2, 0.1).normalize(), Vector3::new(-0.1, 1.0, 0.3).normalize()];
            let s = kinematics(&f, &fib, kappa).unwrap();
            let sig = stress(&s, &p);
            let fd = fd_cauchy(&f, &fib, kappa, |k| energy(k, &p));
            // the floor covers finite-difference round-off near the stress-free state
            prop_assert!((sig - fd).norm() <= 1e-6 * sig.norm().max(1e-2), "{} vs {}", sig, fd);
        }

        #[test]
        fn tangent_is_stress_derivative(f in arb_f(), dir in proptest::array::uniform9(-1.0f64..1.0)) {
            prop_assume!(f.determinant() > 0.3);
            let p = MaterialParams { fibers_tension_only: false, kappa: 0.05, ..reference() };
            let fib = [Vector3::new(1.0, 0.2, 0.1).normalize(), Vector3::new(-0.1, 1.0, 0.3).normalize()];
            let df = Matrix3::from_row_slice(&dir);
            prop_assume!(df.norm() > 1e-2);
            let df = df / df.norm() * 1e-5;
            let s0 = kinematics(&f, &fib, p.kappa).unwrap();
            let (s_pk, d_mat) = pk2_tangent(&s0, &p);
            let sp = pk2(&kinematics(&(f + df), &fib, p.kappa).unwrap(), &p);
            let sm = pk2(&kinematics(&(f - df), &fib, p.kappa).unwrap(), &p);
            let de = (f.transpose() * df + df.transpose() * f) * 0.5;
            let de_v = Voigt::new(de[(0, 0)], de[(1, 1)], de[(2, 2)], 2.0 * de[(0, 1)], 2.0 * de[(1, 2)], 2.0 * de[(0, 2)]);
            let predicted = d_mat * de_v;
            let fd = (sp - sm) * 0.5;
            prop_assert!((predicted - fd).norm() <= 1e-4 * fd.norm().max(1e-12), "{} vs {}", predicted, fd);
            // the Cauchy stress directional derivative follows by the product rule
            let sig = push_forward(&s0, &s_pk);
            let dsig = (df * from_voigt(&s_pk) * f.transpose() + f * from_voigt(&predicted) * f.transpose()
                + f * from_voigt(&s_pk) * df.transpose()) / s0.j
                - sig * (s0.f.try_inverse().unwrap() * df).trace();
            let fd_sig = (stress(&kinematics(&(f + df), &fib, p.kappa).unwrap(), &p)
                - stress(&kinematics(&(f - df), &fib, p.kappa).unwrap(), &p)) * 0.5;
            prop_assert!((dsig - fd_sig).norm() <= 1e-4 * fd_sig.norm().max(1e-12));
        }

        #[test]
        fn aux_tangent_is_stress_derivative(f in arb_f(), dir in proptest::array::uniform9(-1.0f64..1.0)) {
            prop_assume!(f.determinant() > 0.3);
            let p = LinearElasticParams::new(1.4, 0.49).unwrap();
            let df = Matrix3::from_row_slice(&dir);
            prop_assume!(df.norm() > 1e-2);
            let df = df / df.norm() * 1e-5;
            let s0 = kinematics(&f, &e1e2(), 0.0).unwrap();
            let (_, d_mat) = isotropic_aux_pk2_tangent(&s0, &p);
            let sp = isotropic_aux_pk2(&kinematics(&(f + df), &e1e2(), 0.0).unwrap(), &p);
            let sm = isotropic_aux_pk2(&kinematics(&(f - df), &e1e2(), 0.0).unwrap(), &p);
            let de = (f.transpose() * df + df.transpose() * f) * 0.5;
            let de_v = Voigt::new(de[(0, 0)], de[(1, 1)], de[(2, 2)], 2.0 * de[(0, 1)], 2.0 * de[(1, 2)], 2.0 * de[(0, 2)]);
            let fd = (sp - sm) * 0.5;
            prop_assert!((d_mat * de_v - fd).norm() <= 1e-4 * fd.norm());
            let sig = isotropic_aux_stress(&s0, &p);
            let fdc = fd_cauchy(&f, &e1e2(), 0.0, |k| isotropic_aux_energy(k, &p));
            prop_assert!((sig - fdc).norm() <= 1e-6 * sig.norm().max(1e-3));
        }
    }
}
