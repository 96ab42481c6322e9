//! Build the quarter-eye mesh, print its quality report and optionally save it.
//!
//! ```text
//! cargo run --release --example eye_mesh -- [refinement level] [out.json]
//! ```

use corneal_egm::geometry::{build_eye_mesh, check_closed, mesh_quality_report, EyeGeometryConfig, SurfaceSet};

fn main() -> corneal_egm::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let mut cfg = EyeGeometryConfig::default();
    if let Some(l) = args.get(1) {
        cfg.refinement_level = l.parse().expect("refinement level");
    }
    let mesh = build_eye_mesh(&cfg)?;
    let q = mesh_quality_report(&mesh);
    println!("{} nodes, {} elements, hash {}", q.num_nodes, q.num_elements, mesh.hash());
    for (region, n) in &q.elements_per_region {
        println!("  {region:>7}: {n} elements");
    }
    println!(
        "scaled Jacobian >= {:.3}, aspect ratio max {:.2} / mean {:.2}, inverted elements: {}",
        q.min_scaled_jacobian,
        q.max_aspect_ratio,
        q.mean_aspect_ratio,
        q.negative_jacobian_elements.len()
    );
    for set in SurfaceSet::ALL {
        println!("  {:<22} {:>5} facets", set.name(), mesh.facet_set(set)?.len());
    }
    for set in [SurfaceSet::AnteriorChamberWall, SurfaceSet::VitreousWall] {
        check_closed(&mesh, set)?;
    }
    println!("both cavity walls close under the symmetry mirrors");
    let (lo, hi) = mesh.bounding_box();
    println!("bounding box {:.3?} .. {:.3?} mm", lo.as_slice(), hi.as_slice());
    if let Some(path) = args.get(2) {
        mesh.save(path.as_ref())?;
        println!("written to {path}");
    }
    Ok(())
}
