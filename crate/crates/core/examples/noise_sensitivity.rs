//! Identification of set H under seeded uniform displacement noise.
//!
//! ```text
//! cargo run --release --example noise_sensitivity -- [repetitions] [seed]
//! ```

use std::sync::Arc;

use corneal_egm::egm::{identify_nonlinear, DofSelection, MeasuredState, NonlinearOptions, PreparedState};
use corneal_egm::fem::stress_free::{stress_free_geometry, StressFreeOptions};
use corneal_egm::fem::{BoundaryConditions, Model, RegionMaterials};
use corneal_egm::geometry::{build_eye_mesh, EyeGeometryConfig};
use corneal_egm::study::{material_set, NoiseLevel, NoiseRepetition};
use corneal_egm::synthlab::{add_noise, run_virtual_nct, select_states, NctConfig, NoiseSpec};

fn main() -> corneal_egm::Result<()> {
    env_logger::init();
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().expect("integer")).collect();
    let reps = args.first().copied().unwrap_or(10) as usize;
    let seed = args.get(1).copied().unwrap_or(2024);
    let truth = material_set("H")?;
    let target = Model::new(build_eye_mesh(&EyeGeometryConfig::default())?, RegionMaterials::new(truth.clone(), &Default::default()))?;
    let bcs = BoundaryConditions::from_mesh(&target.mesh)?;
    let model = stress_free_geometry(&target, &bcs, &StressFreeOptions::default())?.model;
    let history = run_virtual_nct(&model, &bcs, &NctConfig::default())?;
    let states = select_states(&model.mesh, &history)?
        .steps
        .iter()
        .map(|&s| MeasuredState::from_history(&history, s))
        .collect::<corneal_egm::Result<Vec<_>>>()?;
    let dofs: Arc<[usize]> = DofSelection::Cornea.resolve(&model, &bcs)?.into();

    let reference = [truth.k, truth.mu, truth.k1, truth.k2];
    println!("{:>9} {:>24} {:>24} {:>24} {:>16}", "noise mm", "K", "mu", "k1", "k2");
    for amplitude in [0.0, 1e-5, 1e-4] {
        let mut runs = Vec::new();
        for r in 0..reps {
            let prepared = states
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let noisy = MeasuredState {
                        u: add_noise(&s.u, &NoiseSpec { amplitude, seed: seed + 64 * r as u64 + i as u64 }),
                        ..s.clone()
                    };
                    PreparedState::new(&model, &noisy, dofs.clone())
                })
                .collect::<corneal_egm::Result<Vec<_>>>()?;
            let id = identify_nonlinear(&prepared, &NonlinearOptions::default())?;
            runs.push(NoiseRepetition {
                seed,
                k2_star: id.k2_star,
                means: id.means(),
                per_state: id.best.per_state,
            });
        }
        let l = NoiseLevel::new(amplitude, runs);
        let cells: Vec<String> = (0..4)
            .map(|i| format!("{:.4e} ± {:.1e} ({:+.1}%)", l.mean[i], 2.0 * l.std[i], 100.0 * (l.mean[i] / reference[i] - 1.0)))
            .collect();
        println!("{amplitude:>9.0e} {:>24} {:>24} {:>24} {:>16}", cells[0], cells[1], cells[2], cells[3]);
    }
    Ok(())
}
