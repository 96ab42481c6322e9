//! Uniaxial stretch along the first fiber family: energy, Cauchy stress and
//! the `(K, mu, k1)` split of the second Piola-Kirchhoff stress.
//!
//! ```text
//! cargo run --release --example constitutive_response -- [k1] [k2]
//! ```

use corneal_egm::material::{energy, kinematics, pk2, pk2_split, stress, MaterialParams};
use nalgebra::{Matrix3, Vector3};

fn main() -> corneal_egm::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse().expect("number")).collect();
    let p = MaterialParams::new(10.0, 0.275, args.first().copied().unwrap_or(0.04), args.get(1).copied().unwrap_or(200.0))?;
    let fibers = [Vector3::x(), Vector3::y()];
    println!("{:>8} {:>12} {:>12} {:>12} {:>10}", "stretch", "W (MPa)", "sigma_xx", "sigma_yy", "split err");
    for i in 0..=10 {
        let l = 1.0 + 0.005 * i as f64;
        // nearly isochoric uniaxial stretch
        let f = Matrix3::from_diagonal(&Vector3::new(l, 1.0 / l.sqrt(), 1.0 / l.sqrt()));
        let s = kinematics(&f, &fibers, p.kappa)?;
        let sigma = stress(&s, &p);
        let [sk, smu, sk1] = pk2_split(&s, p.k2, p.fibers_tension_only, p.dispersion.as_ref());
        let err = (sk * p.k + smu * p.mu + sk1 * p.k1 - pk2(&s, &p)).norm();
        println!(
            "{l:>8.3} {:>12.4e} {:>12.4e} {:>12.4e} {err:>10.1e}",
            energy(&s, &p),
            sigma[(0, 0)],
            sigma[(1, 1)]
        );
    }
    Ok(())
}
