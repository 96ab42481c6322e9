//! Meridian profile of the eye shell: a prolate ellipsoidal cornea, a cubic
//! limbus bridge and a spherical sclera, parametrized by arc length from the apex.

use super::EyeGeometryConfig;

const TABLE_SAMPLES: usize = 4000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeridianPoint {
    /// Outer surface radius from the axis (mm).
    pub r: f64,
    /// Outer surface height (mm).
    pub z: f64,
    /// Unit outward normal in the (r, z) half plane.
    pub normal: [f64; 2],
    /// Wall thickness measured along the normal (mm).
    pub thickness: f64,
}

impl MeridianPoint {
    /// Point on the wall at fraction `s` from the inner (0) to the outer (1) surface.
    pub fn through_thickness(&self, s: f64) -> [f64; 2] {
        let d = (1.0 - s) * self.thickness;
        [self.r - d * self.normal[0], self.z - d * self.normal[1]]
    }

    pub fn inner(&self) -> [f64; 2] {
        self.through_thickness(0.0)
    }
}

#[derive(Clone, Debug)]
pub struct MeridianProfile {
    a: f64,
    b: f64,
    z_center: f64,
    r_c: f64,
    r_l: f64,
    sclera_radius: f64,
    theta_l: f64,
    hermite: [f64; 4],
    cct: f64,
    t_periph: f64,
    t_sclera: f64,
    // arc-length tables for the two pieces without closed-form length
    cornea_tau: Vec<f64>,
    cornea_r: Vec<f64>,
    limbus_tau: Vec<f64>,
    limbus_r: Vec<f64>,
    /// Arc length at the cornea/limbus junction.
    pub tau_cornea: f64,
    /// Arc length at the limbus/sclera junction.
    pub tau_limbus: f64,
    /// Arc length at the equator.
    pub tau_equator: f64,
    /// Arc length at the posterior pole.
    pub tau_end: f64,
    /// Height of the corneal apex.
    pub z_apex: f64,
}

impl MeridianProfile {
    pub fn new(cfg: &EyeGeometryConfig) -> Self {
        let [b, a] = cfg.corneal_anterior_radii;
        let r_c = cfg.limbus_start_radius;
        let r_l = cfg.limbus_start_radius + cfg.limbus_width;
        let rs = cfg.sclera_radius;

        let ell_h = |r: f64| a * (1.0 - (r / b).powi(2)).sqrt();
        let ell_slope = |r: f64| -a * r / (b * b * (1.0 - (r / b).powi(2)).sqrt());
        let z_l = (rs * rs - r_l * r_l).sqrt();
        let m1 = -r_l / z_l;
        let m0 = ell_slope(r_c);
        // the chord slope is set to the mean end slope, which reduces the
        // Hermite bridge to a parabola
        let z_c = z_l - 0.5 * (m0 + m1) * (r_l - r_c);
        let z_center = z_c - ell_h(r_c);
        let z_apex = z_center + a;
        let hermite = [z_c, m0, z_l, m1];

        let mut p = MeridianProfile {
            a,
            b,
            z_center,
            r_c,
            r_l,
            sclera_radius: rs,
            theta_l: r_l.atan2(z_l),
            hermite,
            cct: cfg.central_thickness,
            t_periph: cfg.peripheral_thickness,
            t_sclera: cfg.sclera_thickness,
            cornea_tau: Vec::new(),
            cornea_r: Vec::new(),
            limbus_tau: Vec::new(),
            limbus_r: Vec::new(),
            tau_cornea: 0.0,
            tau_limbus: 0.0,
            tau_equator: 0.0,
            tau_end: 0.0,
            z_apex,
        };
        let (ct, cr) = arc_table(0.0, 0.0, r_c, |r| p.cornea_z(r));
        let tau_c = *ct.last().unwrap();
        let (lt, lr) = arc_table(tau_c, r_c, r_l, |r| p.limbus_z(r));
        let tau_l = *lt.last().unwrap();
        p.cornea_tau = ct;
        p.cornea_r = cr;
        p.limbus_tau = lt;
        p.limbus_r = lr;
        p.tau_cornea = tau_c;
        p.tau_limbus = tau_l;
        p.tau_equator = tau_l + rs * (std::f64::consts::FRAC_PI_2 - p.theta_l);
        p.tau_end = tau_l + rs * (std::f64::consts::PI - p.theta_l);
        p
    }

    fn cornea_z(&self, r: f64) -> f64 {
        self.z_center + self.a * (1.0 - (r / self.b).powi(2)).sqrt()
    }

    fn cornea_slope(&self, r: f64) -> f64 {
        -self.a * r / (self.b * self.b * (1.0 - (r / self.b).powi(2)).sqrt())
    }

    fn limbus_z(&self, r: f64) -> f64 {
        let [z0, m0, z1, m1] = self.hermite;
        let h = self.r_l - self.r_c;
        let t = (r - self.r_c) / h;
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * z0
            + (t3 - 2.0 * t2 + t) * h * m0
            + (-2.0 * t3 + 3.0 * t2) * z1
            + (t3 - t2) * h * m1
    }

    fn limbus_slope(&self, r: f64) -> f64 {
        let [z0, m0, z1, m1] = self.hermite;
        let h = self.r_l - self.r_c;
        let t = (r - self.r_c) / h;
        let t2 = t * t;
        ((6.0 * t2 - 6.0 * t) * z0 + (-6.0 * t2 + 6.0 * t) * z1) / h
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (3.0 * t2 - 2.0 * t) * m1
    }

    fn thickness_at_r(&self, r: f64) -> f64 {
        if r <= self.r_c {
            self.cct + (self.t_periph - self.cct) * (r / self.r_c).powi(2)
        } else {
            let s = ((r - self.r_c) / (self.r_l - self.r_c)).clamp(0.0, 1.0);
            let smooth = s * s * (3.0 - 2.0 * s);
            self.t_periph + (self.t_sclera - self.t_periph) * smooth
        }
    }

    /// Evaluate the profile at arc length `tau` from the apex.
    pub fn at(&self, tau: f64) -> MeridianPoint {
        let tau = tau.clamp(0.0, self.tau_end);
        if tau <= self.tau_cornea {
            let r = lookup(&self.cornea_tau, &self.cornea_r, tau);
            self.graph_point(r, self.cornea_z(r), self.cornea_slope(r))
        } else if tau <= self.tau_limbus {
            let r = lookup(&self.limbus_tau, &self.limbus_r, tau);
            self.graph_point(r, self.limbus_z(r), self.limbus_slope(r))
        } else {
            let theta = self.theta_l + (tau - self.tau_limbus) / self.sclera_radius;
            let (s, c) = theta.sin_cos();
            MeridianPoint {
                r: self.sclera_radius * s,
                z: self.sclera_radius * c,
                normal: [s, c],
                thickness: self.t_sclera,
            }
        }
    }

    fn graph_point(&self, r: f64, z: f64, slope: f64) -> MeridianPoint {
        let n = (1.0 + slope * slope).sqrt();
        MeridianPoint {
            r,
            z,
            normal: [-slope / n, 1.0 / n],
            thickness: self.thickness_at_r(r),
        }
    }

    pub fn sclera_radius(&self) -> f64 {
        self.sclera_radius
    }
}

fn arc_table(tau0: f64, r0: f64, r1: f64, z: impl Fn(f64) -> f64) -> (Vec<f64>, Vec<f64>) {
    let mut taus = Vec::with_capacity(TABLE_SAMPLES + 1);
    let mut rs = Vec::with_capacity(TABLE_SAMPLES + 1);
    let mut tau = tau0;
    let mut prev = (r0, z(r0));
    taus.push(tau);
    rs.push(r0);
    for i in 1..=TABLE_SAMPLES {
        let r = r0 + (r1 - r0) * i as f64 / TABLE_SAMPLES as f64;
        let cur = (r, z(r));
        tau += ((cur.0 - prev.0).powi(2) + (cur.1 - prev.1).powi(2)).sqrt();
        taus.push(tau);
        rs.push(r);
        prev = cur;
    }
    (taus, rs)
}

fn lookup(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let i = xs.partition_point(|&v| v < x);
    if i == 0 {
        return ys[0];
    }
    if i >= xs.len() {
        return ys[ys.len() - 1];
    }
    let t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
    ys[i - 1] + t * (ys[i] - ys[i - 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile() -> MeridianProfile {
        MeridianProfile::new(&EyeGeometryConfig::default())
    }

    #[test]
    fn apex_is_on_axis_with_central_thickness() {
        let p = profile();
        let apex = p.at(0.0);
        assert_eq!(apex.r, 0.0);
        assert!((apex.z - p.z_apex).abs() < 1e-12);
        assert_eq!(apex.normal, [0.0, 1.0]);
        assert!((apex.thickness - 0.55).abs() < 1e-15);
    }

    #[test]
    fn profile_is_continuous_across_junctions() {
        let p = profile();
        for tau in [p.tau_cornea, p.tau_limbus] {
            let lo = p.at(tau - 1e-7);
            let hi = p.at(tau + 1e-7);
            assert!((lo.r - hi.r).abs() < 1e-6);
            assert!((lo.z - hi.z).abs() < 1e-6);
            assert!((lo.normal[0] - hi.normal[0]).abs() < 1e-5);
            assert!((lo.thickness - hi.thickness).abs() < 1e-5);
        }
    }

    #[test]
    fn equator_and_pole() {
        let p = profile();
        let eq = p.at(p.tau_equator);
        assert!((eq.r - 12.0).abs() < 1e-12);
        assert!(eq.z.abs() < 1e-12);
        let pole = p.at(p.tau_end);
        assert!(pole.r.abs() < 1e-12);
        assert!((pole.z + 12.0).abs() < 1e-12);
    }

    #[test]
    fn arc_length_matches_point_spacing() {
        let p = profile();
        let n = 2000;
        let mut len = 0.0;
        let mut prev = p.at(0.0);
        for i in 1..=n {
            let q = p.at(p.tau_limbus * i as f64 / n as f64);
            len += ((q.r - prev.r).powi(2) + (q.z - prev.z).powi(2)).sqrt();
            prev = q;
        }
        assert!((len - p.tau_limbus).abs() < 1e-5);
    }

    #[test]
    fn normals_are_unit_and_orthogonal_to_tangent() {
        let p = profile();
        for i in 1..200 {
            let tau = p.tau_end * i as f64 / 200.0;
            let q = p.at(tau);
            let (a, b) = (p.at(tau - 1e-6), p.at(tau + 1e-6));
            let t = [b.r - a.r, b.z - a.z];
            let dot = (t[0] * q.normal[0] + t[1] * q.normal[1]) / (t[0].hypot(t[1]));
            assert!(dot.abs() < 1e-5, "tau {tau}: {dot}");
            assert!((q.normal[0].hypot(q.normal[1]) - 1.0).abs() < 1e-12);
        }
    }
}
