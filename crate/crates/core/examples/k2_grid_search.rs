//! Forward run of one material set, then the nested `k2` grid search on the
//! three selected states.
//!
//! ```text
//! cargo run --release --example k2_grid_search -- [H|KK-I|KK-II|KK-III]
//! ```

use std::sync::Arc;
use std::time::Instant;

use corneal_egm::egm::{identify_nonlinear, DofSelection, MeasuredState, NonlinearOptions, PreparedState};
use corneal_egm::fem::stress_free::{stress_free_geometry, StressFreeOptions};
use corneal_egm::fem::{BoundaryConditions, Model, RegionMaterials};
use corneal_egm::geometry::{build_eye_mesh, EyeGeometryConfig};
use corneal_egm::study::material_set;
use corneal_egm::synthlab::{run_virtual_nct, select_states, NctConfig};

fn main() -> corneal_egm::Result<()> {
    env_logger::init();
    let set = std::env::args().nth(1).unwrap_or_else(|| "H".into());
    let truth = material_set(&set)?;
    let target = Model::new(build_eye_mesh(&EyeGeometryConfig::default())?, RegionMaterials::new(truth.clone(), &Default::default()))?;
    let bcs = BoundaryConditions::from_mesh(&target.mesh)?;
    let model = stress_free_geometry(&target, &bcs, &StressFreeOptions::default())?.model;

    let t = Instant::now();
    let history = run_virtual_nct(&model, &bcs, &NctConfig::default())?;
    let t_fem = t.elapsed();
    let selection = select_states(&model.mesh, &history)?;
    println!("set {set}: states {:?}, forward run {t_fem:.2?}", selection.steps);

    let t = Instant::now();
    let dofs: Arc<[usize]> = DofSelection::Cornea.resolve(&model, &bcs)?.into();
    let prepared = selection
        .steps
        .iter()
        .map(|&s| PreparedState::new(&model, &MeasuredState::from_history(&history, s)?, dofs.clone()))
        .collect::<corneal_egm::Result<Vec<_>>>()?;
    let id = identify_nonlinear(&prepared, &NonlinearOptions::default())?;
    let t_egm = t.elapsed();

    println!("{:>6} {:>12}", "k2", "f_rel");
    for [k2, f] in id.f_rel_curve() {
        println!("{k2:>6.0} {f:>12.5e}");
    }
    println!("k2* = {} (undetermined: {})", id.k2_star, id.k2_undetermined);
    for p in &id.best.per_state {
        println!(
            "  state {:>2}: K = {:.6}  mu = {:.6}  k1 = {:.6e}  |R| = {:.3e}  cond = {:.2e}",
            p.state, p.k, p.mu, p.k1, p.residual_norm, p.condition_number
        );
    }
    let [k, mu, k1] = id.means();
    println!("means: K = {k:.6}, mu = {mu:.6}, k1 = {k1:.6e} (reference k1 = {})", truth.k1);
    if let Some(e) = id.evaluations.iter().flatten().find(|e| e.k2 == truth.k2) {
        println!("at the reference k2 = {}:", truth.k2);
        for p in &e.per_state {
            println!("  state {:>2}: K = {:.6}  mu = {:.6}  k1 = {:.6e}", p.state, p.k, p.mu, p.k1);
        }
    }
    // the low-k2 end below the default grid
    let low = identify_nonlinear(&prepared, &NonlinearOptions { grid: vec![0.0, 2.5, 5.0, 7.5, 10.0], refine: false })?;
    for e in low.evaluations.iter().flatten() {
        println!("  below the grid: k2 = {:>4} f_rel = {:.5e}", e.k2, e.f_rel);
        for p in &e.per_state {
            println!("    state {:>2}: K = {:.6}  mu = {:.6}  k1 = {:.6e}", p.state, p.k, p.mu, p.k1);
        }
    }
    println!("identification {t_egm:.2?} = {:.3} % of the forward run", 100.0 * t_egm.as_secs_f64() / t_fem.as_secs_f64());
    Ok(())
}
