use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use log::info;

use super::artifacts::{
    read_contours_csv, read_json, write_contours_csv, write_json, write_manifest, Artifact, CsvOut, ForwardSummary,
    HistoryRow, IdentificationResult, Measurement, MeasurementState, MorphSummary, NoiseLevel, NoiseRepetition,
    NoiseStudyResult, Runtime, Source, StateBundle,
};
use super::Study;
use crate::egm::{identify_nonlinear, MeasuredState, PreparedState};
use crate::error::{Error, Result};
use crate::fem::stress_free::stress_free_geometry;
use crate::fem::{BoundaryConditions, Model, RegionMaterials};
use crate::geometry::{build_eye_mesh, mesh_quality_report, Mesh};
use crate::morph::{morph_pipeline, MorphInput, MorphStateInput};
use crate::synthlab::{add_noise, def_a, extract_contours, extract_metrics, run_virtual_nct, select_states, NoiseSpec};
use crate::units::mpa_to_mmhg;

fn runtime(entries: &[(&str, f64)]) -> Runtime {
    Runtime {
        seconds: entries.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
    }
}

fn finish(study: &Study, mesh_hash: &str) -> Result<()> {
    write_manifest(&study.out, &study.provenance(mesh_hash))
}

/// Build the quarter-eye mesh and write `mesh.json` and `mesh_quality.json`.
pub fn cmd_generate(study: &Study) -> Result<Mesh> {
    let mesh = build_eye_mesh(&study.config.geometry)?;
    let hash = mesh.hash();
    let prov = study.provenance(&hash);
    write_json(&study.path("mesh.json"), &prov, &mesh, false)?;
    write_json(&study.path("mesh_quality.json"), &prov, &mesh_quality_report(&mesh), true)?;
    info!("mesh {hash}: {} nodes, {} elements", mesh.num_nodes(), mesh.elements.len());
    finish(study, &hash)?;
    Ok(mesh)
}

/// Stress-free geometry, virtual air-puff run, metrics, state selection and
/// contours for each set.
pub fn cmd_forward(study: &Study, sets: &[String]) -> Result<()> {
    let target_mesh = study.target_mesh()?;
    let hash = target_mesh.hash();
    let prov = study.provenance(&hash);
    let cfg = &study.config;
    for (name, params) in study.sets(sets)? {
        info!("forward run of set {name}");
        let target = Model::new(target_mesh.clone(), RegionMaterials::new(params.clone(), &cfg.aux))?;
        let bcs = BoundaryConditions::from_mesh(&target.mesh)?;
        let t = Instant::now();
        let sf = stress_free_geometry(&target, &bcs, &cfg.stress_free)?;
        let t_sf = t.elapsed().as_secs_f64();
        let t = Instant::now();
        let history = run_virtual_nct(&sf.model, &bcs, &cfg.nct)?;
        let t_fwd = t.elapsed().as_secs_f64();

        let mesh = &sf.model.mesh;
        let metrics = extract_metrics(mesh, &history)?;
        let selection = select_states(mesh, &history)?;
        let rows = (0..history.states.len())
            .map(|s| {
                let st = &history.states[s];
                Ok(HistoryRow {
                    step: s,
                    load_factor: st.load_factor,
                    jet_peak: st.jet_peak,
                    def_a: def_a(mesh, &history, s)?,
                    iop_ac_mmhg: mpa_to_mmhg(st.pressures[0]),
                    iop_vb_mmhg: mpa_to_mmhg(st.pressures[1]),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let states = selection
            .steps
            .iter()
            .map(|&s| MeasuredState::from_history(&history, s))
            .collect::<Result<Vec<_>>>()?;

        let dir = format!("forward/{name}");
        write_json(&study.path(format!("{dir}/reference_mesh.json")), &prov, mesh, false)?;
        let bundle = StateBundle {
            set: name.clone(),
            source: Source::Forward,
            mesh_hash: mesh.hash(),
            iop_mmhg: cfg.nct.iop_mmhg,
            states,
        };
        write_json(&study.path(format!("{dir}/bundle.json")), &prov, &bundle, false)?;
        let mut contours = vec![(0, extract_contours(mesh, &history.states[0].u, 0.0)?)];
        for (&s, &d) in selection.steps.iter().zip(&selection.def_a) {
            contours.push((s, extract_contours(mesh, &history.states[s].u, d)?));
        }
        let refs: Vec<(usize, &_)> = contours.iter().map(|(s, c)| (*s, c)).collect();
        write_contours_csv(&study.path(format!("{dir}/contours.csv")), &prov, &refs)?;
        let measurement = Measurement {
            iop_mmhg: cfg.nct.iop_mmhg,
            states: bundle.states.iter().map(|s| MeasurementState { step: s.step, jet: s.jet }).collect(),
        };
        write_json(&study.path(format!("{dir}/measurement.json")), &prov, &measurement, true)?;
        let mut hist = CsvOut::create(
            &study.path(format!("{dir}/history.csv")),
            &prov,
            &["step", "load_factor", "jet_peak_mpa", "def_a_mm", "iop_ac_mmhg", "iop_vb_mmhg"],
        )?;
        for r in &rows {
            hist.row([
                r.step.to_string(),
                r.load_factor.to_string(),
                r.jet_peak.to_string(),
                r.def_a.to_string(),
                r.iop_ac_mmhg.to_string(),
                r.iop_vb_mmhg.to_string(),
            ])?;
        }
        hist.finish()?;
        let summary = ForwardSummary {
            set: name.clone(),
            reference: params.clone(),
            metrics,
            selection,
            stress_free_distances: sf.distances.clone(),
            newton_iterations: history.newton_iterations,
            history: rows,
        };
        write_json(&study.path(format!("{dir}/summary.json")), &prov, &summary, true)?;
        write_json(
            &study.path(format!("{dir}/runtime.json")),
            &prov,
            &runtime(&[("stress_free", t_sf), ("forward", t_fwd)]),
            true,
        )?;
        info!("set {name}: DefA {:.4} mm, states {:?}", summary.metrics.def_a, summary.selection.steps);
    }
    finish(study, &hash)
}

struct LoadedBundle {
    model: Model,
    bcs: BoundaryConditions,
    bundle: StateBundle,
}

fn load_bundle(study: &Study, source: Source, set: &str) -> Result<LoadedBundle> {
    let dir = format!("{}/{set}", source.dir());
    let mesh: Artifact<Mesh> = read_json(&study.path(format!("{dir}/reference_mesh.json")))?;
    let bundle: Artifact<StateBundle> = read_json(&study.path(format!("{dir}/bundle.json")))?;
    let found = mesh.data.hash();
    if found != bundle.data.mesh_hash {
        return Err(Error::Mismatch {
            what: "bundle mesh",
            expected: bundle.data.mesh_hash,
            found,
        });
    }
    let params = study
        .config
        .sets
        .get(set)
        .ok_or_else(|| Error::Config(format!("unknown material set `{set}`")))?;
    // only the fiber settings of the corneal law enter the identification
    let model = Model::new(mesh.data, RegionMaterials::new(params.clone(), &study.config.aux))?;
    let bcs = BoundaryConditions::from_mesh(&model.mesh)?;
    Ok(LoadedBundle {
        model,
        bcs,
        bundle: bundle.data,
    })
}

fn prepare(study: &Study, b: &LoadedBundle, states: &[MeasuredState]) -> Result<Vec<PreparedState>> {
    let dofs: Arc<[usize]> = study.config.identification.selection.resolve(&b.model, &b.bcs)?.into();
    states
        .iter()
        .map(|s| PreparedState::new(&b.model, s, dofs.clone()))
        .collect()
}

/// Equilibrium gap identification of every bundle of `source`.
pub fn cmd_identify(study: &Study, source: Source, sets: &[String]) -> Result<()> {
    let target_hash = study.target_mesh()?.hash();
    let prov = study.provenance(&target_hash);
    for (name, params) in study.sets(sets)? {
        let b = load_bundle(study, source, &name)?;
        let t = Instant::now();
        let prepared = prepare(study, &b, &b.bundle.states)?;
        let id = identify_nonlinear(&prepared, &study.config.identification.nonlinear)?;
        let t_egm = t.elapsed().as_secs_f64();
        let n = prepared[0].dofs.len();
        let result = IdentificationResult::new(&name, source, Some(params), n, id);
        let dir = format!("identify/{}", source.dir());
        write_json(&study.path(format!("{dir}/{name}.json")), &prov, &result, true)?;
        let mut w = CsvOut::create(&study.path(format!("{dir}/{name}_frel.csv")), &prov, &["k2", "f_rel"])?;
        for [k2, f] in &result.f_rel_curve {
            w.row([k2.to_string(), f.to_string()])?;
        }
        w.finish()?;
        write_json(&study.path(format!("{dir}/{name}_runtime.json")), &prov, &runtime(&[("egm", t_egm)]), true)?;
        info!("set {name} ({}): k2* = {}, means {:?}", source.dir(), result.k2_star, result.means);
    }
    finish(study, &target_hash)
}

/// Morph the forward contours of each set into full fields on the surrogate model.
pub fn cmd_morph(study: &Study, sets: &[String]) -> Result<()> {
    let target_hash = study.target_mesh()?.hash();
    let prov = study.provenance(&target_hash);
    for (name, _) in study.sets(sets)? {
        let dir = format!("forward/{name}");
        let contours = read_contours_csv(&study.path(format!("{dir}/contours.csv")))?;
        let measurement: Artifact<Measurement> = read_json(&study.path(format!("{dir}/measurement.json")))?;
        let jets: BTreeMap<usize, _> = measurement.data.states.iter().map(|s| (s.step, s.jet)).collect();
        let states = contours
            .into_iter()
            .filter_map(|(step, contour)| jets.get(&step).map(|&jet| MorphStateInput { step, contour, jet }))
            .collect::<Vec<_>>();
        if states.is_empty() {
            return Err(Error::Config(format!("no contour of set {name} matches a measured state")));
        }
        let input = MorphInput {
            geometry: study.config.geometry.clone(),
            iop_mmhg: measurement.data.iop_mmhg,
            states,
        };
        let t = Instant::now();
        let out = morph_pipeline(&input, &study.config.morph)?;
        let t_morph = t.elapsed().as_secs_f64();
        let mesh = &out.model.mesh;
        let dir = format!("morph/{name}");
        write_json(&study.path(format!("{dir}/reference_mesh.json")), &prov, mesh, false)?;
        let bundle = StateBundle {
            set: name.clone(),
            source: Source::Morph,
            mesh_hash: mesh.hash(),
            iop_mmhg: input.iop_mmhg,
            states: out.states.iter().map(|s| s.measured()).collect(),
        };
        write_json(&study.path(format!("{dir}/bundle.json")), &prov, &bundle, false)?;
        let summary = MorphSummary {
            set: name.clone(),
            stress_free_distances: out.stress_free_distances.clone(),
            preload_pressures_mmhg: out.preload.pressures.map(mpa_to_mmhg),
            fit_residuals: out.states.iter().map(|s| s.fit_residual).collect(),
            delta_iop_mmhg: out.states.iter().map(|s| s.delta_iop_mmhg).collect(),
            radial_iterations: out.states.iter().map(|s| s.radial_iterations).collect(),
            diagnostics: out.diagnostics.clone(),
        };
        write_json(&study.path(format!("{dir}/summary.json")), &prov, &summary, true)?;
        write_json(&study.path(format!("{dir}/runtime.json")), &prov, &runtime(&[("morph", t_morph)]), true)?;
    }
    finish(study, &target_hash)
}

/// Seed of one noisy field; repetitions share seeds across amplitudes.
pub(crate) fn noise_seed(base: u64, repetition: usize, state: usize) -> u64 {
    base.wrapping_add(64 * repetition as u64 + state as u64)
}

/// Repeated identification on forward fields with seeded uniform noise.
pub fn cmd_noise_study(study: &Study, sets: &[String]) -> Result<()> {
    let Some(base) = study.seed() else {
        return Err(Error::Config("the noise study needs a seed (--seed or `seed` in the config)".into()));
    };
    let target_hash = study.target_mesh()?.hash();
    let prov = study.provenance(&target_hash);
    let cfg = &study.config.noise;
    let names = if sets.is_empty() { cfg.sets.clone() } else { sets.to_vec() };
    for (name, params) in study.sets(&names)? {
        let b = load_bundle(study, Source::Forward, &name)?;
        let mut levels = Vec::new();
        for &a in &cfg.amplitudes {
            let mut reps = Vec::new();
            for r in 0..cfg.repetitions {
                let states: Vec<MeasuredState> = b
                    .bundle
                    .states
                    .iter()
                    .enumerate()
                    .map(|(k, s)| MeasuredState {
                        u: add_noise(&s.u, &NoiseSpec { amplitude: a, seed: noise_seed(base, r, k) }),
                        ..s.clone()
                    })
                    .collect();
                let prepared = prepare(study, &b, &states)?;
                let id = identify_nonlinear(&prepared, &study.config.identification.nonlinear)?;
                reps.push(NoiseRepetition {
                    seed: noise_seed(base, r, 0),
                    k2_star: id.k2_star,
                    means: id.means(),
                    per_state: id.best.per_state,
                });
            }
            let level = NoiseLevel::new(a, reps);
            info!("set {name}, amplitude {a:e} mm: mean (K, mu, k1, k2) = {:?}", level.mean);
            levels.push(level);
        }
        let result = NoiseStudyResult {
            set: name.clone(),
            seed: base,
            reference: params,
            levels,
        };
        write_json(&study.path(format!("noise/{name}.json")), &prov, &result, true)?;
        let mut w = CsvOut::create(
            &study.path(format!("noise/{name}.csv")),
            &prov,
            &["amplitude_mm", "repetition", "seed", "k2", "K", "mu", "k1"],
        )?;
        for l in &result.levels {
            for (i, r) in l.repetitions.iter().enumerate() {
                w.row([
                    l.amplitude.to_string(),
                    i.to_string(),
                    r.seed.to_string(),
                    r.k2_star.to_string(),
                    r.means[0].to_string(),
                    r.means[1].to_string(),
                    r.means[2].to_string(),
                ])?;
            }
        }
        w.finish()?;
    }
    finish(study, &target_hash)
}
