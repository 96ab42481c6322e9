//! Stress-free geometry, preload and a full air-puff ramp for one material set.
//!
//! ```text
//! cargo run --release --example virtual_nct -- [H|KK-I|KK-II|KK-III] [jet peak MPa] [jet width mm]
//! ```

use std::time::Instant;

use corneal_egm::fem::stress_free::{stress_free_geometry, StressFreeOptions};
use corneal_egm::fem::{BoundaryConditions, Model, RegionMaterials};
use corneal_egm::geometry::{build_eye_mesh, EyeGeometryConfig};
use corneal_egm::study::material_set;
use corneal_egm::synthlab::{extract_metrics, run_virtual_nct, select_states, NctConfig};

fn main() -> corneal_egm::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().collect();
    let set = args.get(1).map_or("H", String::as_str);
    let mut cfg = NctConfig::default();
    if let Some(p) = args.get(2) {
        cfg.jet.peak = p.parse().expect("jet peak");
    }
    if let Some(w) = args.get(3) {
        cfg.jet.width = w.parse().expect("jet width");
    }

    let mesh = build_eye_mesh(&EyeGeometryConfig::default())?;
    println!("mesh: {} nodes, {} elements", mesh.num_nodes(), mesh.elements.len());
    let materials = RegionMaterials::new(material_set(set)?, &Default::default());
    let target = Model::new(mesh, materials)?;
    let bcs = BoundaryConditions::from_mesh(&target.mesh)?;

    let t = Instant::now();
    let sf = stress_free_geometry(&target, &bcs, &StressFreeOptions::default())?;
    println!(
        "stress-free geometry: {} iterations, distances {:?} mm ({:.1?})",
        sf.iterations(),
        sf.distances,
        t.elapsed()
    );

    let t = Instant::now();
    let history = run_virtual_nct(&sf.model, &bcs, &cfg)?;
    println!("forward run: {} steps, {} Newton iterations ({:.1?})", history.states.len(), history.newton_iterations, t.elapsed());

    let m = extract_metrics(&sf.model.mesh, &history)?;
    println!("set {set}: DefA = {:.4} mm, PD = {:?} mm, IOP_AC = {:.3} mmHg, IOP_VB = {:.3} mmHg", m.def_a, m.pd, m.iop_ac_mmhg, m.iop_vb_mmhg);
    let sel = select_states(&sf.model.mesh, &history)?;
    println!(
        "states {:?} with DefA {:?} (applanation detected: {})",
        sel.steps, sel.def_a, sel.applanation_detected
    );
    Ok(())
}
