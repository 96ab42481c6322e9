use log::{info, warn};

use super::artifacts::{read_json, write_manifest, CsvOut, ForwardSummary, IdentificationResult, NoiseStudyResult, Runtime, Source};
use super::Study;
use crate::error::{Error, Result};

const PARAMS: [&str; 4] = ["K", "mu", "k1", "k2"];

fn load<T: serde::de::DeserializeOwned>(study: &Study, rel: String) -> Result<Option<T>> {
    let p = study.path(&rel);
    if !p.exists() {
        return Ok(None);
    }
    Ok(Some(read_json::<T>(&p)?.data))
}

fn seconds(rt: &Option<Runtime>, key: &str) -> Option<f64> {
    rt.as_ref().and_then(|r| r.seconds.get(key).copied())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn params_of(r: &IdentificationResult) -> [f64; 4] {
    [r.means[0], r.means[1], r.means[2], r.k2_star]
}

/// Plot-ready CSV tables from the artifacts of a study directory.
///
/// Sections whose inputs are missing are skipped with a warning; the command
/// fails only when no section can be produced.
pub fn cmd_report(study: &Study) -> Result<()> {
    let mesh_hash = study.target_mesh()?.hash();
    let prov = study.provenance(&mesh_hash);
    let names: Vec<String> = study.config.sets.keys().cloned().collect();
    let mut written = Vec::new();

    let forward: Vec<(String, ForwardSummary)> = names
        .iter()
        .filter_map(|n| load::<ForwardSummary>(study, format!("forward/{n}/summary.json")).transpose().map(|r| r.map(|s| (n.clone(), s))))
        .collect::<Result<_>>()?;
    let ident = |source: Source| -> Result<Vec<(String, IdentificationResult)>> {
        names
            .iter()
            .filter_map(|n| {
                load::<IdentificationResult>(study, format!("identify/{}/{n}.json", source.dir()))
                    .transpose()
                    .map(|r| r.map(|s| (n.clone(), s)))
            })
            .collect()
    };
    let id_fwd = ident(Source::Forward)?;
    let id_morph = ident(Source::Morph)?;

    if !forward.is_empty() {
        let mut w = CsvOut::create(
            &study.path("report/table3.csv"),
            &prov,
            &["set", "def_a_mm", "pd_mm", "pd_uncertainty_mm", "iop_ac_mmhg", "iop_vb_mmhg"],
        )?;
        for (n, s) in &forward {
            let m = &s.metrics;
            w.row([n.clone(), m.def_a.to_string(), opt(m.pd), opt(m.pd_uncertainty), m.iop_ac_mmhg.to_string(), m.iop_vb_mmhg.to_string()])?;
        }
        w.finish()?;
        written.push("table3.csv");
    }

    if !id_fwd.is_empty() {
        let mut w = CsvOut::create(&study.path("report/table4.csv"), &prov, &["set", "state", "K", "mu", "k1"])?;
        for (n, r) in &id_fwd {
            for s in &r.per_state {
                w.row([n.clone(), s.state.to_string(), s.k.to_string(), s.mu.to_string(), s.k1.to_string()])?;
            }
        }
        w.finish()?;

        if let Some((_, h)) = id_fwd.iter().find(|(n, _)| n == "H").or(id_fwd.first()) {
            let mut w = CsvOut::create(&study.path("report/fig5b.csv"), &prov, &["k2", "f_rel"])?;
            for [k2, f] in &h.f_rel_curve {
                w.row([k2.to_string(), f.to_string()])?;
            }
            w.finish()?;
        }
        let mut w = CsvOut::create(&study.path("report/fig5b_sets.csv"), &prov, &["set", "k2", "f_rel"])?;
        for (n, r) in &id_fwd {
            for [k2, f] in &r.f_rel_curve {
                w.row([n.clone(), k2.to_string(), f.to_string()])?;
            }
        }
        w.finish()?;

        let mut w = CsvOut::create(
            &study.path("report/fig6.csv"),
            &prov,
            &["set", "param", "reference", "identified", "rel_deviation", "within_10pct"],
        )?;
        for (n, r) in &id_fwd {
            let Some(p) = &r.reference else { continue };
            let reference = [p.k, p.mu, p.k1, p.k2];
            for (i, v) in params_of(r).into_iter().enumerate() {
                let dev = if reference[i] != 0.0 { (v - reference[i]) / reference[i] } else { f64::NAN };
                w.row([
                    n.clone(),
                    PARAMS[i].into(),
                    reference[i].to_string(),
                    v.to_string(),
                    dev.to_string(),
                    (dev.abs() <= 0.1).to_string(),
                ])?;
            }
        }
        w.finish()?;
        written.extend(["table4.csv", "fig5b.csv", "fig5b_sets.csv", "fig6.csv"]);
    }

    let noise: Vec<NoiseStudyResult> = names
        .iter()
        .filter_map(|n| load::<NoiseStudyResult>(study, format!("noise/{n}.json")).transpose())
        .collect::<Result<_>>()?;
    if !noise.is_empty() {
        let mut w = CsvOut::create(
            &study.path("report/fig7.csv"),
            &prov,
            &["set", "amplitude_mm", "param", "reference", "mean", "std", "lower_2std", "upper_2std", "rel_error"],
        )?;
        for r in &noise {
            let reference = [r.reference.k, r.reference.mu, r.reference.k1, r.reference.k2];
            for l in &r.levels {
                for i in 0..4 {
                    let rel = if reference[i] != 0.0 { (l.mean[i] - reference[i]) / reference[i] } else { f64::NAN };
                    w.row([
                        r.set.clone(),
                        l.amplitude.to_string(),
                        PARAMS[i].into(),
                        reference[i].to_string(),
                        l.mean[i].to_string(),
                        l.std[i].to_string(),
                        (l.mean[i] - 2.0 * l.std[i]).to_string(),
                        (l.mean[i] + 2.0 * l.std[i]).to_string(),
                        rel.to_string(),
                    ])?;
                }
            }
        }
        w.finish()?;
        written.push("fig7.csv");
    }

    if !id_morph.is_empty() {
        let mut w = CsvOut::create(
            &study.path("report/fig8.csv"),
            &prov,
            &["set", "param", "reference", "forward", "morph", "deviation_vs_reference"],
        )?;
        for (n, m) in &id_morph {
            let fwd = id_fwd.iter().find(|(f, _)| f == n).map(|(_, r)| params_of(r));
            let reference = m.reference.as_ref().map(|p| [p.k, p.mu, p.k1, p.k2]);
            for (i, v) in params_of(m).into_iter().enumerate() {
                let r = reference.map(|r| r[i]);
                let dev = r.filter(|r| *r != 0.0).map(|r| (v - r) / r);
                w.row([n.clone(), PARAMS[i].into(), opt(r), opt(fwd.map(|f| f[i])), v.to_string(), opt(dev)])?;
            }
        }
        w.finish()?;
        written.push("fig8.csv");
    }

    // Wall-clock numbers go to their own file, outside the byte-identical set.
    let mut rows = Vec::new();
    for n in &names {
        let fwd: Option<Runtime> = load(study, format!("forward/{n}/runtime.json"))?;
        let egm: Option<Runtime> = load(study, format!("identify/forward/{n}_runtime.json"))?;
        let morph: Option<Runtime> = load(study, format!("morph/{n}/runtime.json"))?;
        if fwd.is_none() && egm.is_none() && morph.is_none() {
            continue;
        }
        let (f, e) = (seconds(&fwd, "forward"), seconds(&egm, "egm"));
        let ratio = f.zip(e).map(|(f, e)| e / f);
        rows.push([n.clone(), opt(seconds(&fwd, "stress_free")), opt(f), opt(e), opt(seconds(&morph, "morph")), opt(ratio)]);
    }
    if !rows.is_empty() {
        let mut w = CsvOut::create(
            &study.path("report/runtime.csv"),
            &prov,
            &["set", "stress_free_s", "forward_s", "egm_s", "morph_s", "egm_over_forward"],
        )?;
        for r in rows {
            w.row(r)?;
        }
        w.finish()?;
        written.push("runtime.csv");
    }

    if written.is_empty() {
        return Err(Error::Config(format!("{} holds no study artifacts to report", study.out.display())));
    }
    if id_fwd.is_empty() {
        warn!("no forward identification results; table4 and fig5b/6 skipped");
    }
    info!("report: {}", written.join(", "));
    write_manifest(&study.out, &prov)
}

