//! Contours-only identification: forward runs of the reference sets, section
//! contours at the selected states, morphing onto a surrogate model and the
//! grid search on the morphed fields.
//!
//! ```text
//! cargo run --release --example morphing -- [sets...]
//! ```

use std::sync::Arc;
use std::time::Instant;

use corneal_egm::egm::{identify_nonlinear, DofSelection, MeasuredState, NonlinearOptions, PreparedState};
use corneal_egm::fem::stress_free::{stress_free_geometry, StressFreeOptions};
use corneal_egm::fem::{BoundaryConditions, Model, RegionMaterials};
use corneal_egm::geometry::{build_eye_mesh, EyeGeometryConfig};
use corneal_egm::morph::{morph_pipeline, MorphConfig, MorphInput, MorphStateInput};
use corneal_egm::study::{material_set, SET_NAMES};
use corneal_egm::synthlab::{def_a, extract_contours, run_virtual_nct, select_states, NctConfig};

fn main() -> corneal_egm::Result<()> {
    env_logger::init();
    let mut sets: Vec<String> = std::env::args().skip(1).collect();
    if sets.is_empty() {
        sets = SET_NAMES.iter().map(|s| s.to_string()).collect();
    }
    let geometry = EyeGeometryConfig::default();
    let nct = NctConfig::default();
    let morph = MorphConfig::default();
    for set in &sets {
        let truth = material_set(set)?;
        let target = Model::new(build_eye_mesh(&geometry)?, RegionMaterials::new(truth.clone(), &Default::default()))?;
        let bcs = BoundaryConditions::from_mesh(&target.mesh)?;
        let model = stress_free_geometry(&target, &bcs, &StressFreeOptions::default())?.model;
        let history = run_virtual_nct(&model, &bcs, &nct)?;
        let sel = select_states(&model.mesh, &history)?;

        let states = sel
            .steps
            .iter()
            .map(|&s| {
                let d = def_a(&model.mesh, &history, s)?;
                Ok(MorphStateInput {
                    step: s,
                    contour: extract_contours(&model.mesh, &history.states[s].u, d)?,
                    jet: MeasuredState::from_history(&history, s)?.jet,
                })
            })
            .collect::<corneal_egm::Result<Vec<_>>>()?;
        let t = Instant::now();
        let out = morph_pipeline(
            &MorphInput {
                geometry: geometry.clone(),
                iop_mmhg: nct.iop_mmhg,
                states,
            },
            &morph,
        )?;
        println!("set {set}: morphing {:.1?}", t.elapsed());
        for d in &out.diagnostics {
            println!("  {d}");
        }

        // identification on the surrogate's stress-free mesh
        let id_model = Model::new(out.model.mesh.clone(), RegionMaterials::new(truth.clone(), &Default::default()))?;
        let dofs: Arc<[usize]> = DofSelection::Cornea.resolve(&id_model, &bcs)?.into();
        let prepared = out
            .states
            .iter()
            .map(|s| PreparedState::new(&id_model, &s.measured(), dofs.clone()))
            .collect::<corneal_egm::Result<Vec<_>>>()?;
        let id = identify_nonlinear(&prepared, &NonlinearOptions::default())?;
        let [k, mu, k1] = id.means();
        println!(
            "  identified: k2* = {} K = {k:.4} mu = {mu:.4} k1 = {k1:.4e} (reference k1 = {}, k2 undetermined: {})",
            id.k2_star, truth.k1, id.k2_undetermined
        );
        for p in &id.best.per_state {
            println!("    state {:>2}: K = {:.4} mu = {:.4} k1 = {:.4e}", p.state, p.k, p.mu, p.k1);
        }
    }
    Ok(())
}
