//! Quarter "butterfly" disk: a structured square core blended into polar rings,
//! which avoids degenerate elements at the pole of a polar grid.

use std::f64::consts::FRAC_PI_2;

#[derive(Clone, Debug)]
pub struct QuarterDisk {
    pub points: Vec<[f64; 2]>,
    /// Counter-clockwise quads in the (x, y) plane.
    pub quads: Vec<[usize; 4]>,
    /// Node ids of each ring from angle 0 to pi/2; ring 0 is the square boundary.
    pub rings: Vec<Vec<usize>>,
    /// Radius of each ring; `None` for the square boundary and blend rings.
    pub ring_radius: Vec<Option<f64>>,
    /// Index of the outer ring bounding each quad (0 for the square core).
    pub quad_band: Vec<usize>,
}

/// Build a quarter disk with an `n x n` square core of half side `c`, `p` blend
/// rings reaching the circle `ring_radii[0]`, and pure polar rings at the
/// remaining radii. Every ring carries `2n` circumferential divisions.
pub fn polar_disk(n: usize, p: usize, c: f64, ring_radii: &[f64]) -> QuarterDisk {
    assert!(n >= 1 && p >= 1 && !ring_radii.is_empty());
    let mut points = Vec::new();
    let mut quads = Vec::new();
    let mut quad_band = Vec::new();

    let sq = |i: usize, j: usize| i * (n + 1) + j;
    for i in 0..=n {
        for j in 0..=n {
            points.push([c * i as f64 / n as f64, c * j as f64 / n as f64]);
        }
    }
    for i in 0..n {
        for j in 0..n {
            quads.push([sq(i, j), sq(i + 1, j), sq(i + 1, j + 1), sq(i, j + 1)]);
            quad_band.push(0);
        }
    }

    let m = 2 * n;
    let boundary: Vec<usize> = (0..=m)
        .map(|k| if k <= n { sq(n, k) } else { sq(m - k, n) })
        .collect();
    let angle = |k: usize| FRAC_PI_2 * k as f64 / m as f64;
    let on_circle = |rho: f64, k: usize| {
        let (s, co) = angle(k).sin_cos();
        let (x, y) = (rho * co, rho * s);
        // keep nodes on the symmetry axes exactly on them
        [if k == m { 0.0 } else { x }, if k == 0 { 0.0 } else { y }]
    };

    let mut rings = vec![boundary.clone()];
    let mut ring_radius = vec![None];
    let rho_cap = ring_radii[0];
    for t in 1..=p {
        let s = t as f64 / p as f64;
        let ring: Vec<usize> = (0..=m)
            .map(|k| {
                let a = points[boundary[k]];
                let b = on_circle(rho_cap, k);
                points.push([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]);
                points.len() - 1
            })
            .collect();
        rings.push(ring);
        ring_radius.push(if t == p { Some(rho_cap) } else { None });
    }
    for &rho in &ring_radii[1..] {
        let ring: Vec<usize> = (0..=m)
            .map(|k| {
                points.push(on_circle(rho, k));
                points.len() - 1
            })
            .collect();
        rings.push(ring);
        ring_radius.push(Some(rho));
    }
    for b in 1..rings.len() {
        for k in 0..m {
            let (inner, outer) = (&rings[b - 1], &rings[b]);
            quads.push([inner[k], outer[k], outer[k + 1], inner[k + 1]]);
            quad_band.push(b);
        }
    }

    QuarterDisk {
        points,
        quads,
        rings,
        ring_radius,
        quad_band,
    }
}
