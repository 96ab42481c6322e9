mod common;

use std::sync::OnceLock;

use common::{coarse_geometry, healthy};
use corneal_egm::fem::stress_free::{stress_free_geometry, StressFreeOptions};
use corneal_egm::fem::{BoundaryConditions, Model, RegionMaterials};
use corneal_egm::geometry::{build_eye_mesh, SurfaceSet};
use corneal_egm::morph::{morph_pipeline, MorphConfig, MorphInput, MorphOutput, MorphStateInput};
use corneal_egm::synthlab::{extract_contours, run_virtual_nct, select_states, NctConfig};

struct Fixture {
    reference: Vec<Vec<nalgebra::Vector3<f64>>>,
    input: MorphInput,
    out: MorphOutput,
}

fn nct() -> NctConfig {
    let mut c = NctConfig::default();
    c.jet.steps = 16;
    c
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let geometry = coarse_geometry();
        let target = Model::new(build_eye_mesh(&geometry).unwrap(), RegionMaterials::new(healthy(), &Default::default())).unwrap();
        let bcs = BoundaryConditions::from_mesh(&target.mesh).unwrap();
        let model = stress_free_geometry(&target, &bcs, &StressFreeOptions::default()).unwrap().model;
        let cfg = nct();
        let history = run_virtual_nct(&model, &bcs, &cfg).unwrap();
        let sel = select_states(&model.mesh, &history).unwrap();
        let states: Vec<MorphStateInput> = sel
            .steps
            .iter()
            .zip(&sel.def_a)
            .map(|(&s, &d)| MorphStateInput {
                step: s,
                contour: extract_contours(&model.mesh, &history.states[s].u, d).unwrap(),
                jet: None,
            })
            .collect();
        let input = MorphInput {
            geometry,
            iop_mmhg: cfg.iop_mmhg,
            states,
        };
        let out = morph_pipeline(&input, &MorphConfig::default()).unwrap();
        let reference = sel.steps.iter().map(|&s| history.states[s].u.clone()).collect();
        Fixture { reference, input, out }
    })
}

#[test]
fn morphed_apex_follows_the_contour() {
    let f = fixture();
    let apex = f.out.model.mesh.apex_node().unwrap();
    for (s, inp) in f.out.states.iter().zip(&f.input.states) {
        let d = f.out.preload.u[apex].z - s.u[apex].z;
        assert!((d - inp.contour.def_a).abs() < 1e-3, "apex {d} vs DefA {}", inp.contour.def_a);
        assert!(s.fit_residual <= MorphConfig::default().radial_tolerance);
        assert!(s.driven_nodes > 0);
    }
}

#[test]
fn morphing_raises_both_cavity_pressures() {
    let f = fixture();
    let mut last = 0.0;
    for s in &f.out.states {
        assert!(s.delta_iop_mmhg[0] > 0.0 && s.delta_iop_mmhg[1] > 0.0, "{:?}", s.delta_iop_mmhg);
        assert!(s.delta_iop_mmhg[0] > last);
        last = s.delta_iop_mmhg[0];
    }
}

#[test]
fn morphed_fields_respect_symmetry() {
    let f = fixture();
    let mesh = &f.out.model.mesh;
    for s in &f.out.states {
        for &n in mesh.node_set(SurfaceSet::SymmetryXz).unwrap() {
            assert_eq!(s.u[n].y, 0.0);
        }
        for &n in mesh.node_set(SurfaceSet::SymmetryYz).unwrap() {
            assert_eq!(s.u[n].x, 0.0);
        }
    }
}

#[test]
fn morphed_field_approximates_the_reference() {
    let f = fixture();
    let mesh = &f.out.model.mesh;
    let nodes = mesh.node_set(SurfaceSet::AnteriorCornea).unwrap();
    for (s, r) in f.out.states.iter().zip(&f.reference) {
        let err: f64 = nodes.iter().map(|&n| (s.u[n].z - r[n].z).abs()).fold(0.0, f64::max);
        // same mesh topology, so surface axial displacements are comparable node by node
        assert!(err < 0.05, "anterior axial deviation {err} mm");
    }
}

#[test]
fn unordered_states_are_rejected() {
    let f = fixture();
    let mut input = f.input.clone();
    input.states.reverse();
    assert!(morph_pipeline(&input, &MorphConfig::default()).is_err());
}

#[test]
fn tangential_clamp_changes_the_field() {
    let f = fixture();
    let bcs = BoundaryConditions::from_mesh(&f.out.model.mesh).unwrap();
    let inp = &f.input.states[0];
    let stamps = corneal_egm::morph::build_stamps(&inp.contour).unwrap();
    let config = MorphConfig {
        tangential_clamp: true,
        ..Default::default()
    };
    let clamped = corneal_egm::morph::morph_state(&f.out.model, &bcs, &f.out.preload, &stamps, inp.step, None, &config).unwrap();
    let free = &f.out.states[0];
    let diff = clamped.u.iter().zip(&free.u).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(diff > 1e-4, "clamping moved nothing ({diff} mm)");
}
