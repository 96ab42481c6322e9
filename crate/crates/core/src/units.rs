//! Unit conventions: lengths in mm, forces in N, stresses in MPa.

/// MPa per mmHg.
pub const MMHG_TO_MPA: f64 = 133.322e-6;

pub fn mmhg_to_mpa(p: f64) -> f64 {
    p * MMHG_TO_MPA
}

pub fn mpa_to_mmhg(p: f64) -> f64 {
    p / MMHG_TO_MPA
}
