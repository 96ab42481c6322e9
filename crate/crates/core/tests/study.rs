mod common;

use std::path::Path;

use common::coarse_geometry;
use corneal_egm::egm::{identify_nonlinear, DofSelection, MeasuredState, NonlinearOptions, PreparedState};
use corneal_egm::fem::{BoundaryConditions, Model, RegionMaterials};
use corneal_egm::study::{
    cmd_forward, cmd_generate, cmd_noise_study, cmd_report, read_contours_csv, read_json, write_contours_csv, write_json,
    IdentificationResult, Source, Study, StudyConfig, CONTOUR_SPACING,
};
use corneal_egm::synthlab::DeformationContour;
use nalgebra::Vector3;

fn config() -> StudyConfig {
    StudyConfig {
        geometry: coarse_geometry(),
        ..Default::default()
    }
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn config_round_trips_and_hash_is_stable() {
    let c = config();
    let s = serde_json::to_string_pretty(&c).unwrap();
    let back: StudyConfig = serde_json::from_str(&s).unwrap();
    assert_eq!(back, c);
    assert_eq!(back.hash(), c.hash());
    assert_ne!(StudyConfig::default().hash(), c.hash());
    let partial: StudyConfig = serde_json::from_str(r#"{"seed": 5}"#).unwrap();
    assert_eq!(partial.seed, Some(5));
    assert_eq!(partial.sets.len(), 4);
}

#[test]
fn invalid_configs_are_rejected() {
    let mut c = config();
    c.sets.clear();
    assert!(c.validate().is_err());
    let mut c = config();
    c.noise.sets = vec!["nope".into()];
    assert!(c.validate().is_err());
    assert!(serde_json::from_str::<StudyConfig>(r#"{"unknown_field": 1}"#).is_err());
}

fn dome(apex: f64, n: usize) -> DeformationContour {
    let pts = |z0: f64| (0..n).map(|i| {
        let r = i as f64 * CONTOUR_SPACING;
        [r, z0 - r * r / 15.6]
    }).collect::<Vec<_>>();
    DeformationContour {
        plane: "xz".into(),
        anterior: pts(apex),
        posterior: pts(apex - 0.55),
        cct: 0.55,
        def_a: 0.0,
    }
}

#[test]
fn contours_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let study = Study::new(config(), dir.path(), None).unwrap();
    let prov = study.provenance("m");
    let a = dome(0.0, 81);
    let b = dome(-0.3, 81);
    let path = dir.path().join("c.csv");
    write_contours_csv(&path, &prov, &[(0, &a), (7, &b)]).unwrap();
    let first = std::fs::read_to_string(&path).unwrap();
    assert!(first.starts_with(&format!("# corneid {} config=", env!("CARGO_PKG_VERSION"))));
    let back = read_contours_csv(&path).unwrap();
    assert_eq!(back.iter().map(|(s, _)| *s).collect::<Vec<_>>(), vec![0, 7]);
    let c = &back[1].1;
    assert!((c.def_a - 0.3).abs() < 1e-12);
    assert!((c.cct - 0.55).abs() < 1e-12);
    for (p, q) in c.anterior.iter().zip(&b.anterior) {
        assert!((p[0] - q[0]).abs() < 1e-12 && (p[1] - q[1]).abs() < 1e-12);
    }
    assert_eq!(c.posterior.len(), 81);
}

#[test]
fn generate_is_byte_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        cmd_generate(&Study::new(config(), d.path(), None).unwrap()).unwrap();
    }
    for f in ["mesh.json", "mesh_quality.json", "manifest.json"] {
        assert_eq!(read(&a.path().join(f)), read(&b.path().join(f)), "{f}");
    }
    let mesh = std::fs::read_to_string(a.path().join("mesh.json")).unwrap();
    let hash = Study::new(config(), a.path(), None).unwrap().target_mesh().unwrap().hash();
    assert!(mesh.contains(&hash));
}

#[test]
fn commands_check_their_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let study = Study::new(config(), dir.path(), None).unwrap();
    assert!(cmd_forward(&study, &["H".into()]).is_err());
    cmd_generate(&study).unwrap();
    assert!(cmd_forward(&study, &["nope".into()]).is_err());
    // stochastic command without a seed
    let err = cmd_noise_study(&study, &[]).unwrap_err();
    assert!(err.to_string().contains("seed"), "{err}");
    // a different geometry no longer matches mesh.json
    let mut other = config();
    other.geometry.central_thickness = 0.5;
    assert!(Study::new(other, dir.path(), None).unwrap().target_mesh().is_err());
}

#[test]
fn report_emits_the_identification_tables() {
    let dir = tempfile::tempdir().unwrap();
    let study = Study::new(config(), dir.path(), None).unwrap();
    let mesh = cmd_generate(&study).unwrap();
    let params = study.config.sets["H"].clone();
    let model = Model::new(mesh, RegionMaterials::new(params.clone(), &Default::default())).unwrap();
    let bcs = BoundaryConditions::from_mesh(&model.mesh).unwrap();
    let dofs: std::sync::Arc<[usize]> = DofSelection::Cornea.resolve(&model, &bcs).unwrap().into();
    let states: Vec<PreparedState> = [0.5, 1.0, 1.6]
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let u = model
                .mesh
                .nodes
                .iter()
                .map(|x| a * (-(x.x * x.x + x.y * x.y) / 20.0).exp() * Vector3::new(0.02 * x.x, 0.02 * x.y, 0.05 + 0.01 * a))
                .collect();
            let s = MeasuredState { step: i, u, jet: None, pressures: [0.0025; 2] };
            PreparedState::new(&model, &s, dofs.clone()).unwrap()
        })
        .collect();
    let id = identify_nonlinear(&states, &NonlinearOptions::default()).unwrap();
    let result = IdentificationResult::new("H", Source::Forward, Some(params), dofs.len(), id);
    let prov = study.provenance(&model.mesh.hash());
    let path = study.path("identify/forward/H.json");
    write_json(&path, &prov, &result, true).unwrap();
    let back: IdentificationResult = read_json(&path).unwrap().data;
    assert_eq!(back, result);

    cmd_report(&study).unwrap();
    let table4 = std::fs::read_to_string(study.path("report/table4.csv")).unwrap();
    let mut lines = table4.lines();
    assert!(lines.next().unwrap().starts_with("# corneid"));
    assert_eq!(lines.next().unwrap(), "set,state,K,mu,k1");
    assert_eq!(lines.count(), 3);
    let fig5b = std::fs::read_to_string(study.path("report/fig5b.csv")).unwrap();
    assert_eq!(fig5b.lines().nth(1).unwrap(), "k2,f_rel");
    assert_eq!(fig5b.lines().count(), 2 + 40);
    let manifest = std::fs::read_to_string(study.path("manifest.json")).unwrap();
    assert!(manifest.contains("report/table4.csv"));
}
