use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fem::DisplacementField;

/// Independent uniform offsets on `[-amplitude, amplitude]` (mm) per component.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub amplitude: f64,
    pub seed: u64,
}

/// Add seeded uniform noise drawn from a ChaCha8 stream. A zero amplitude
/// returns the input unchanged.
pub fn add_noise(u: &[Vector3<f64>], spec: &NoiseSpec) -> DisplacementField {
    if spec.amplitude == 0.0 {
        return u.to_vec();
    }
    let a = spec.amplitude.abs();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    u.iter()
        .map(|v| v + Vector3::from_fn(|_, _| rng.random_range(-a..=a)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(n: usize) -> DisplacementField {
        (0..n).map(|i| Vector3::new(i as f64 * 0.1, -0.2, 0.3 / (1.0 + i as f64))).collect()
    }

    #[test]
    fn zero_amplitude_is_bit_exact() {
        let u = field(50);
        assert_eq!(add_noise(&u, &NoiseSpec { amplitude: 0.0, seed: 9 }), u);
    }

    #[test]
    fn bounds_mean_and_determinism() {
        let u = field(20000);
        let spec = NoiseSpec { amplitude: 1e-4, seed: 42 };
        let a = add_noise(&u, &spec);
        let mut mean = 0.0;
        for (x, y) in a.iter().zip(&u) {
            let d = x - y;
            assert!(d.amax() <= 1e-4 + 1e-15);
            mean += d.sum();
        }
        mean /= 3.0 * u.len() as f64;
        assert!(mean.abs() < 2e-6, "{mean}");
        assert_eq!(add_noise(&u, &spec), a);
        assert_ne!(add_noise(&u, &NoiseSpec { seed: 43, ..spec }), a);
    }
}
