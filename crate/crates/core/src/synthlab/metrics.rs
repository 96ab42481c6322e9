use log::warn;
use serde::{Deserialize, Serialize};

use super::contour::{extract_contours, DeformationContour};
use super::NctHistory;
use crate::error::{Error, Result};
use crate::geometry::Mesh;
use crate::units::mpa_to_mmhg;

/// Half-chord of the applanation fit (mm).
pub const APPLANATION_HALF_CHORD: f64 = 1.0;
/// Curvature below which the central contour counts as flat (1/mm).
pub const APPLANATION_CURVATURE: f64 = 0.02;
/// Fraction of the peak deflection used when no flat contour is found.
pub const APPLANATION_FALLBACK: f64 = 0.4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NctMetrics {
    /// Apex deflection at the peak step relative to the preload (mm).
    pub def_a: f64,
    /// Distance of the bending maxima (mm), absent without an off-axis maximum.
    pub pd: Option<f64>,
    /// Node-spacing uncertainty of `pd` (mm).
    pub pd_uncertainty: Option<f64>,
    pub iop_ac_mmhg: f64,
    pub iop_vb_mmhg: f64,
    pub peak_step: usize,
    pub diagnostics: Vec<String>,
}

/// Inward apex deflection of `u` relative to the preload state.
pub fn def_a(mesh: &Mesh, history: &NctHistory, step: usize) -> Result<f64> {
    let apex = mesh.apex_node()?;
    Ok(history.preload().u[apex].z - history.states[step].u[apex].z)
}

fn peak_step(mesh: &Mesh, history: &NctHistory) -> Result<(usize, Vec<f64>)> {
    if history.states.is_empty() {
        return Err(Error::EmptyHistory);
    }
    let d: Vec<f64> = (0..history.states.len()).map(|s| def_a(mesh, history, s)).collect::<Result<_>>()?;
    let peak = (0..d.len()).fold(0, |best, i| if d[i] > d[best] { i } else { best });
    Ok((peak, d))
}

/// First off-axis local maximum of the anterior contour height.
fn bending_maximum(c: &DeformationContour) -> Option<(f64, f64)> {
    let a = &c.anterior;
    (1..a.len().saturating_sub(1))
        .find(|&i| a[i][1] > a[i - 1][1] && a[i][1] >= a[i + 1][1])
        .map(|i| (a[i][0], 0.5 * (a[i + 1][0] - a[i - 1][0])))
}

pub fn extract_metrics(mesh: &Mesh, history: &NctHistory) -> Result<NctMetrics> {
    let (peak, d) = peak_step(mesh, history)?;
    let state = &history.states[peak];
    let contour = extract_contours(mesh, &state.u, d[peak])?;
    let mut diagnostics = Vec::new();
    let (pd, pd_uncertainty) = match bending_maximum(&contour) {
        Some((r, spacing)) => (Some(2.0 * r), Some(2.0 * spacing)),
        None => {
            diagnostics.push("no off-axis bending maximum on the anterior contour at the peak step".into());
            (None, None)
        }
    };
    Ok(NctMetrics {
        def_a: d[peak],
        pd,
        pd_uncertainty,
        iop_ac_mmhg: mpa_to_mmhg(state.pressures[0]),
        iop_vb_mmhg: mpa_to_mmhg(state.pressures[1]),
        peak_step: peak,
        diagnostics,
    })
}

/// Convex curvature `-z''(0)` of the parabola `z = a + b r^2` fitted to the
/// anterior contour within the half-chord (mirror symmetric by construction).
pub fn central_curvature(c: &DeformationContour, half_chord: f64) -> Option<f64> {
    let pts: Vec<[f64; 2]> = c.anterior.iter().copied().filter(|p| p[0] <= half_chord).collect();
    if pts.len() < 2 {
        return None;
    }
    let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for [r, z] in pts {
        let q = r * r;
        s0 += 1.0;
        s1 += q;
        s2 += q * q;
        t0 += z;
        t1 += q * z;
    }
    let det = s0 * s2 - s1 * s1;
    if det.abs() < 1e-300 {
        return None;
    }
    let b = (s0 * t1 - s1 * t0) / det;
    Some(-2.0 * b)
}

/// The three identification states and how they were found.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSelection {
    /// Applanation, intermediate and peak step indices.
    pub steps: [usize; 3],
    pub def_a: [f64; 3],
    pub applanation_detected: bool,
    /// Fitted central curvature per step (1/mm).
    pub curvatures: Vec<f64>,
}

pub fn select_states(mesh: &Mesh, history: &NctHistory) -> Result<StateSelection> {
    let (_, d) = peak_step(mesh, history)?;
    let curvatures: Vec<f64> = history
        .states
        .iter()
        .map(|s| {
            let c = extract_contours(mesh, &s.u, 0.0)?;
            Ok(central_curvature(&c, APPLANATION_HALF_CHORD).unwrap_or(f64::NAN))
        })
        .collect::<Result<_>>()?;
    select_from_series(&d, &curvatures)
}

/// State selection from per-step deflections and central curvatures; step 0 is the preload.
pub fn select_from_series(d: &[f64], curvatures: &[f64]) -> Result<StateSelection> {
    if d.is_empty() {
        return Err(Error::EmptyHistory);
    }
    let peak = (0..d.len()).fold(0, |best, i| if d[i] > d[best] { i } else { best });
    if peak < 3 {
        return Err(Error::StateSelection(format!("peak deflection at step {peak}; need three distinct loaded steps")));
    }
    let flat = (1..peak).find(|&s| curvatures[s] <= APPLANATION_CURVATURE);
    let (first, detected) = match flat {
        Some(s) => (s, true),
        None => {
            warn!("no applanation found; using the first step beyond {APPLANATION_FALLBACK} of the peak deflection");
            let s = (1..peak)
                .find(|&s| d[s] >= APPLANATION_FALLBACK * d[peak])
                .ok_or_else(|| Error::StateSelection("deflection never reaches the fallback level".into()))?;
            (s, false)
        }
    };
    if first + 1 >= peak {
        return Err(Error::StateSelection(format!(
            "no step between applanation ({first}) and peak ({peak})"
        )));
    }
    let target = 0.5 * (d[first] + d[peak]);
    let mid = (first + 1..peak).fold(first + 1, |best, s| {
        if (d[s] - target).abs() < (d[best] - target).abs() {
            s
        } else {
            best
        }
    });
    Ok(StateSelection {
        steps: [first, mid, peak],
        def_a: [d[first], d[mid], d[peak]],
        applanation_detected: detected,
        curvatures: curvatures.to_vec(),
    })
}
