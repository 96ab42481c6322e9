//! Linear identification on a two-element block: internal forces of a known
//! material under a homogeneous deformation serve as the measured loads.
//!
//! ```text
//! cargo run --release --example identify_linear
//! ```

use std::collections::BTreeMap;
use std::sync::Arc;

use corneal_egm::egm::{identify_linear, ResidualSplit};
use corneal_egm::fem::assembly::{assemble_internal, assemble_split};
use corneal_egm::fem::hex8::NODE_SIGNS;
use corneal_egm::fem::{Model, RegionMaterials};
use corneal_egm::geometry::{Element, Mesh, Region};
use corneal_egm::material::fibers::FiberField;
use corneal_egm::material::MaterialParams;
use nalgebra::Vector3;

fn block() -> Mesh {
    let id = |i: usize, j: usize, k: usize| k * 6 + j * 3 + i;
    let mut nodes = Vec::new();
    for k in 0..2 {
        for j in 0..2 {
            for i in 0..3 {
                nodes.push(Vector3::new(i as f64, j as f64, k as f64));
            }
        }
    }
    let elements = (0..2)
        .map(|e| Element {
            conn: NODE_SIGNS.map(|s| id(e + (s[0] > 0.0) as usize, (s[1] > 0.0) as usize, (s[2] > 0.0) as usize)),
            region: Region::Cornea,
        })
        .collect();
    Mesh {
        nodes,
        elements,
        facets: BTreeMap::new(),
        node_sets: BTreeMap::new(),
    }
}

fn main() -> corneal_egm::Result<()> {
    let truth = MaterialParams::new(10.0, 0.275, 0.04, 200.0)?;
    let mesh = block();
    let fibers = FiberField {
        directions: vec![[Vector3::x(), Vector3::y()]; mesh.elements.len()],
    };
    let model = Model::with_fibers(mesh, RegionMaterials::new(truth.clone(), &Default::default()), fibers)?;
    let u: Vec<Vector3<f64>> = model
        .mesh
        .nodes
        .iter()
        .map(|x| Vector3::new(0.06 * x.x + 0.01 * x.y, 0.03 * x.y, -0.02 * x.z + 0.01 * x.x))
        .collect();
    let f_ext = assemble_internal(&model, &u)?;
    let dofs: Arc<[usize]> = (0..model.mesh.num_dofs()).collect::<Vec<_>>().into();

    for k2 in [100.0, 200.0, 300.0] {
        let s = assemble_split(&model, &u, k2)?;
        let split = ResidualSplit::from_columns([s.c_k, s.c_mu, s.c_k1], s.c0, f_ext.clone(), dofs.clone(), k2, 0)?;
        let id = identify_linear(&split)?;
        println!(
            "k2 = {k2:>5}: K = {:.8}  mu = {:.8}  k1 = {:.8}  |R| = {:.2e}  cond = {:.2e}  active {:?}",
            id.k, id.mu, id.k1, id.residual_norm, id.condition_number, id.active
        );
    }
    println!("reference: K = {}  mu = {}  k1 = {}", truth.k, truth.mu, truth.k1);
    Ok(())
}
