use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::Pchip;
use crate::synthlab::DeformationContour;

/// Axisymmetric anterior and posterior stamp surfaces `z(r)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Stamps {
    pub anterior: Pchip,
    pub posterior: Pchip,
    /// Shift applied to the posterior contour so that the section thickness
    /// at the axis equals the contour's CCT (mm).
    pub posterior_offset: f64,
}

/// Which stamp a surface node is driven onto.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StampSide {
    Anterior,
    Posterior,
}

impl Stamps {
    pub fn side(&self, side: StampSide) -> &Pchip {
        match side {
            StampSide::Anterior => &self.anterior,
            StampSide::Posterior => &self.posterior,
        }
    }

    /// Largest radius covered by the given stamp (mm).
    pub fn extent(&self, side: StampSide) -> f64 {
        self.side(side).x_range().1
    }

    /// Stamp height at radius `r`; radii outside the stamp are an error.
    pub fn height(&self, side: StampSide, r: f64) -> Result<f64> {
        let s = self.side(side);
        if !s.contains(r) {
            let (a, b) = s.x_range();
            return Err(Error::Contour(format!("radius {r:.6} mm lies outside the stamp extent [{a}, {b}]")));
        }
        Ok(s.eval(r))
    }
}

/// Rotate the two section contours into stamp surfaces about the eye axis.
pub fn build_stamps(contour: &DeformationContour) -> Result<Stamps> {
    contour.validate()?;
    let split = |pts: &[[f64; 2]]| -> (Vec<f64>, Vec<f64>) { pts.iter().map(|p| (p[0], p[1])).unzip() };
    let (ra, za) = split(&contour.anterior);
    let (rp, zp) = split(&contour.posterior);
    for (name, r) in [("anterior", &ra), ("posterior", &rp)] {
        if r[0] != 0.0 {
            return Err(Error::Contour(format!("{name} contour must start on the axis (r = {})", r[0])));
        }
    }
    let anterior = Pchip::new(&ra, &za)?;
    let offset = (za[0] - contour.cct) - zp[0];
    let zp: Vec<f64> = zp.iter().map(|z| z + offset).collect();
    let posterior = Pchip::new(&rp, &zp)?;
    Ok(Stamps {
        anterior,
        posterior,
        posterior_offset: offset,
    })
}
