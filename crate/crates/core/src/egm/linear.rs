use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use super::ResidualSplit;
use crate::error::{Error, Result};

/// Scaled normal matrices above this condition number count as degenerate.
pub const CONDITION_THRESHOLD: f64 = 1e12;

pub const PARAMETER_NAMES: [&str; 3] = ["K", "mu", "k1"];

/// Constrained least-squares estimate of `(K, mu, k1)` for one state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearIdentification {
    pub state: usize,
    pub k2: f64,
    /// Volumetric penalty (MPa).
    pub k: f64,
    pub mu: f64,
    pub k1: f64,
    /// `||R||` at the optimum.
    pub residual_norm: f64,
    /// Condition number of the column-scaled normal matrix.
    pub condition_number: f64,
    /// Parameters held at zero by the nonnegativity constraints.
    pub active: [bool; 3],
}

impl LinearIdentification {
    pub fn params(&self) -> [f64; 3] {
        [self.k, self.mu, self.k1]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `||K c_K + mu c_mu + k1 c_k1 + c0 - f_ext||`.
pub fn residual_norm(alpha: &[f64; 3], split: &ResidualSplit) -> f64 {
    let [a, b, c] = split.columns();
    (0..split.len())
        .map(|i| {
            let r = alpha[0] * a[i] + alpha[1] * b[i] + alpha[2] * c[i] + split.c0[i] - split.f_ext[i];
            r * r
        })
        .sum::<f64>()
        .sqrt()
}

/// Solve the normal equations on the free subset `mask` (bit i set = parameter i free).
fn solve_subset(n: &Matrix3<f64>, r: &Vector3<f64>, mask: usize) -> Option<Vector3<f64>> {
    let idx: Vec<usize> = (0..3).filter(|i| mask & (1 << i) != 0).collect();
    let m = idx.len();
    let mut y = Vector3::zeros();
    if m == 0 {
        return Some(y);
    }
    let sub = nalgebra::DMatrix::from_fn(m, m, |i, j| n[(idx[i], idx[j])]);
    let rhs = nalgebra::DVector::from_fn(m, |i, _| r[idx[i]]);
    let sol = sub.cholesky()?.solve(&rhs);
    for (k, &i) in idx.iter().enumerate() {
        y[i] = sol[k];
    }
    Some(y)
}

/// Minimise `R^T R` subject to `K, mu, k1 >= 0`.
///
/// Columns are scaled to unit norm before forming the normal matrix. Every
/// pattern of parameters clamped at zero is solved and the feasible pattern
/// with the lowest objective wins.
pub fn identify_linear(split: &ResidualSplit) -> Result<LinearIdentification> {
    if split.len() < 3 {
        return Err(Error::Mismatch {
            what: "selected dofs",
            expected: "at least 3".into(),
            found: split.len().to_string(),
        });
    }
    let cols = split.columns();
    let b = split.rhs();
    let scale: [f64; 3] = cols.map(|c| dot(c, c).sqrt());
    let zero: Vec<&'static str> = (0..3).filter(|&i| !(scale[i] > 0.0)).map(|i| PARAMETER_NAMES[i]).collect();
    if !zero.is_empty() {
        return Err(Error::DegenerateData {
            condition: f64::INFINITY,
            columns: zero,
        });
    }
    let n = Matrix3::from_fn(|i, j| dot(cols[i], cols[j]) / (scale[i] * scale[j]));
    let r = Vector3::from_fn(|i, _| dot(cols[i], &b) / scale[i]);

    let eig = SymmetricEigen::new(n);
    let (imin, lmin) = eig.eigenvalues.argmin();
    let lmax = eig.eigenvalues.max();
    let condition = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
    if !(condition <= CONDITION_THRESHOLD) {
        let v = eig.eigenvectors.column(imin);
        let columns = (0..3).filter(|&i| v[i].abs() > 0.1).map(|i| PARAMETER_NAMES[i]).collect();
        return Err(Error::DegenerateData { condition, columns });
    }

    let mut best: Option<(f64, Vector3<f64>, usize)> = None;
    for mask in (0..8).rev() {
        let Some(y) = solve_subset(&n, &r, mask) else { continue };
        if y.iter().any(|&v| v < 0.0) {
            continue;
        }
        // R^T R - b^T b = y^T N y - 2 y^T r
        let obj = y.dot(&(n * y)) - 2.0 * y.dot(&r);
        if best.as_ref().is_none_or(|(o, _, _)| obj < *o) {
            best = Some((obj, y, mask));
        }
        if mask == 7 {
            // the unconstrained minimiser is feasible, hence global
            break;
        }
    }
    let (_, y, mask) = best.expect("the all-clamped pattern is always feasible");
    let alpha = [y[0] / scale[0], y[1] / scale[1], y[2] / scale[2]];
    Ok(LinearIdentification {
        state: split.state,
        k2: split.k2,
        k: alpha[0],
        mu: alpha[1],
        k1: alpha[2],
        residual_norm: residual_norm(&alpha, split),
        condition_number: condition,
        active: [0, 1, 2].map(|i| mask & (1 << i) == 0),
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_split(rows: usize, seed: u64, alpha: [f64; 3], noise: f64) -> ResidualSplit {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut col = |s: f64| (0..rows).map(|_| s * rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let c = [col(1e-3), col(0.5), col(2.0)];
        let c0 = col(0.1);
        let eps = col(noise);
        let f: Vec<f64> = (0..rows)
            .map(|i| alpha[0] * c[0][i] + alpha[1] * c[1][i] + alpha[2] * c[2][i] + c0[i] + eps[i])
            .collect();
        ResidualSplit::from_columns(c, c0, f, (0..rows).collect::<Vec<_>>().into(), 200.0, 0).unwrap()
    }

    #[test]
    fn consistent_data_is_recovered() {
        let truth = [10.0, 0.275, 0.04];
        let s = random_split(60, 1, truth, 0.0);
        let id = identify_linear(&s).unwrap();
        for (a, t) in id.params().iter().zip(truth) {
            assert!((a - t).abs() <= 1e-10 * t, "{a} vs {t}");
        }
        assert_eq!(id.active, [false; 3]);
        assert!(id.residual_norm <= 1e-8 * s.f_ext.iter().map(|v| v * v).sum::<f64>().sqrt());
    }

    #[test]
    fn negative_optimum_is_clamped() {
        let s = random_split(40, 2, [10.0, 0.275, -0.01], 0.0);
        let id = identify_linear(&s).unwrap();
        assert!(id.active[2]);
        assert_eq!(id.k1, 0.0);
        assert!(id.k >= 0.0 && id.mu >= 0.0);
    }

    #[test]
    fn dependent_columns_are_reported() {
        let mut s = random_split(30, 3, [1.0, 1.0, 1.0], 0.0);
        s.c_k1 = s.c_mu.iter().map(|v| 3.0 * v).collect();
        match identify_linear(&s) {
            Err(Error::DegenerateData { columns, condition }) => {
                assert!(condition > CONDITION_THRESHOLD);
                assert_eq!(columns, vec!["mu", "k1"]);
            }
            other => panic!("{other:?}"),
        }
        s.c_k = vec![0.0; s.len()];
        assert!(matches!(identify_linear(&s), Err(Error::DegenerateData { .. })));
    }

    #[test]
    fn too_few_rows() {
        let s = ResidualSplit::from_columns(
            [vec![1.0; 2], vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![0.0; 2],
            vec![1.0; 2],
            Arc::from(vec![0, 1]),
            1.0,
            0,
        )
        .unwrap();
        assert!(identify_linear(&s).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn optimum_beats_perturbations(seed in 0u64..1000, noise in 0.0f64..0.05) {
            let s = random_split(25, seed, [10.0, 0.275, 0.04], noise);
            let id = identify_linear(&s).unwrap();
            let base = id.residual_norm;
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
            for _ in 0..100 {
                let p = id.params().map(|v| (v * (1.0 + rng.random_range(-0.1..0.1)) + rng.random_range(-1e-3..1e-3)).max(0.0));
                prop_assert!(residual_norm(&p, &s) >= base * (1.0 - 1e-12));
            }
        }

        #[test]
        fn residual_is_quadratic_along_lines(seed in 0u64..1000, noise in 0.0f64..0.05) {
            let s = random_split(25, seed, [10.0, 0.275, 0.04], noise);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a0: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..12.0));
            let d: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let q = |t: f64| {
                let a = [a0[0] + t * d[0], a0[1] + t * d[1], a0[2] + t * d[2]];
                residual_norm(&a, &s).powi(2)
            };
            // the quadratic through t = 0, 1, 2 predicts t = 3
            let pred = q(0.0) - 3.0 * q(1.0) + 3.0 * q(2.0);
            let scale = q(0.0).abs().max(q(1.0).abs()).max(q(2.0).abs()).max(q(3.0).abs());
            prop_assert!((pred - q(3.0)).abs() <= 1e-10 * scale);
        }

        #[test]
        fn common_scaling_leaves_the_estimate(seed in 0u64..1000, factor in 1e-6f64..1e6) {
            let s = random_split(25, seed, [10.0, 0.275, 0.04], 0.01);
            let a = identify_linear(&s).unwrap().params();
            let b = identify_linear(&s.scaled(factor)).unwrap().params();
            for (x, y) in a.iter().zip(b) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1e-12));
            }
        }
    }
}
