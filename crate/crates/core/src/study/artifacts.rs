use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::egm::{LinearIdentification, MeasuredState, NonlinearIdentification};
use crate::error::{Error, Result};
use crate::fem::surface::JetLoad;
use crate::interp::Pchip;
use crate::material::MaterialParams;
use crate::synthlab::{DeformationContour, NctMetrics, StateSelection};

/// Radial spacing of the resampled contours (mm).
pub const CONTOUR_SPACING: f64 = 0.05;

/// Tool, version and the hashes an artifact was produced from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub mesh_hash: String,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} config={} mesh={}", self.tool, self.version, self.config_hash, self.mesh_hash)
    }
}

/// JSON envelope of every emitted document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub provenance: Provenance,
    pub data: T,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_json<T: Serialize>(path: &Path, provenance: &Provenance, data: &T, pretty: bool) -> Result<()> {
    let a = Artifact {
        provenance: provenance.clone(),
        data,
    };
    let mut w = create(path)?;
    if pretty {
        serde_json::to_writer_pretty(&mut w, &a)?;
    } else {
        serde_json::to_writer(&mut w, &a)?;
    }
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<Artifact<T>> {
    let s = std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    Ok(serde_json::from_str(&s)?)
}

/// CSV file whose first line is a `#` comment carrying the provenance.
pub struct CsvOut {
    writer: csv::Writer<BufWriter<File>>,
}

impl CsvOut {
    pub fn create(path: &Path, provenance: &Provenance, header: &[&str]) -> Result<CsvOut> {
        let mut w = create(path)?;
        writeln!(w, "# {provenance}")?;
        let mut writer = csv::Writer::from_writer(w);
        writer.write_record(header)?;
        Ok(CsvOut { writer })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?)
}

/// Where a state bundle came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    /// Full fields of the forward model.
    Forward,
    /// Fields rebuilt from contours.
    Morph,
}

impl Source {
    pub fn dir(self) -> &'static str {
        match self {
            Source::Forward => "forward",
            Source::Morph => "morph",
        }
    }
}

/// Displacement fields plus the load ingredients of `f_ext`, on one mesh.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateBundle {
    pub set: String,
    pub source: Source,
    /// Hash of the reference mesh the fields live on.
    pub mesh_hash: String,
    pub iop_mmhg: f64,
    pub states: Vec<MeasuredState>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub step: usize,
    pub load_factor: f64,
    pub jet_peak: f64,
    pub def_a: f64,
    pub iop_ac_mmhg: f64,
    pub iop_vb_mmhg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForwardSummary {
    pub set: String,
    pub reference: MaterialParams,
    pub metrics: NctMetrics,
    pub selection: StateSelection,
    pub stress_free_distances: Vec<f64>,
    pub newton_iterations: usize,
    pub history: Vec<HistoryRow>,
}

/// What an air-puff device reports next to the contours.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub iop_mmhg: f64,
    pub states: Vec<MeasurementState>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementState {
    pub step: usize,
    pub jet: Option<JetLoad>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorphSummary {
    pub set: String,
    pub stress_free_distances: Vec<f64>,
    pub preload_pressures_mmhg: [f64; 2],
    pub fit_residuals: Vec<f64>,
    pub delta_iop_mmhg: Vec<[f64; 2]>,
    pub radial_iterations: Vec<usize>,
    pub diagnostics: Vec<String>,
}

/// Wall-clock timings in seconds. Kept apart from the deterministic artifacts.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Runtime {
    pub seconds: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentificationResult {
    pub set: String,
    pub source: Source,
    pub reference: Option<MaterialParams>,
    pub k2_star: f64,
    pub k2_undetermined: bool,
    /// Mean `(K, mu, k1)` at `k2_star`.
    pub means: [f64; 3],
    pub per_state: Vec<LinearIdentification>,
    pub f_rel_curve: Vec<[f64; 2]>,
    pub selected_dofs: usize,
    pub diagnostics: Vec<String>,
    pub nonlinear: NonlinearIdentification,
}

impl IdentificationResult {
    pub fn new(set: &str, source: Source, reference: Option<MaterialParams>, selected_dofs: usize, id: NonlinearIdentification) -> Self {
        IdentificationResult {
            set: set.into(),
            source,
            reference,
            k2_star: id.k2_star,
            k2_undetermined: id.k2_undetermined,
            means: id.means(),
            per_state: id.best.per_state.clone(),
            f_rel_curve: id.f_rel_curve(),
            selected_dofs,
            diagnostics: id.diagnostics.clone(),
            nonlinear: id,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseRepetition {
    pub seed: u64,
    pub k2_star: f64,
    /// `(K, mu, k1)` means at `k2_star`.
    pub means: [f64; 3],
    pub per_state: Vec<LinearIdentification>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevel {
    pub amplitude: f64,
    pub repetitions: Vec<NoiseRepetition>,
    /// Mean over repetitions of `(K, mu, k1, k2)`.
    pub mean: [f64; 4],
    /// Population standard deviation over repetitions.
    pub std: [f64; 4],
}

impl NoiseLevel {
    pub fn new(amplitude: f64, repetitions: Vec<NoiseRepetition>) -> NoiseLevel {
        let vals: Vec<[f64; 4]> = repetitions
            .iter()
            .map(|r| [r.means[0], r.means[1], r.means[2], r.k2_star])
            .collect();
        let n = vals.len().max(1) as f64;
        let mean: [f64; 4] = std::array::from_fn(|i| vals.iter().map(|v| v[i]).sum::<f64>() / n);
        let std = std::array::from_fn(|i| (vals.iter().map(|v| (v[i] - mean[i]).powi(2)).sum::<f64>() / n).sqrt());
        NoiseLevel {
            amplitude,
            repetitions,
            mean,
            std,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseStudyResult {
    pub set: String,
    pub seed: u64,
    pub reference: MaterialParams,
    pub levels: Vec<NoiseLevel>,
}

/// Resample a contour pair onto a shared radial grid with [`CONTOUR_SPACING`].
fn resample(c: &DeformationContour) -> Result<Vec<[f64; 3]>> {
    let (ra, za): (Vec<f64>, Vec<f64>) = c.anterior.iter().map(|p| (p[0], p[1])).unzip();
    let (rp, zp): (Vec<f64>, Vec<f64>) = c.posterior.iter().map(|p| (p[0], p[1])).unzip();
    let a = Pchip::new(&ra, &za)?;
    let p = Pchip::new(&rp, &zp)?;
    let end = a.x_range().1.min(p.x_range().1);
    let n = (end / CONTOUR_SPACING + 1e-9).floor() as usize;
    Ok((0..=n)
        .map(|i| {
            let r = i as f64 * CONTOUR_SPACING;
            [r, a.eval(r), p.eval(r)]
        })
        .collect())
}

/// Write `(state, r_mm, z_ant_mm, z_post_mm)` rows; the first contour is the preload.
pub fn write_contours_csv(path: &Path, provenance: &Provenance, contours: &[(usize, &DeformationContour)]) -> Result<()> {
    let mut w = CsvOut::create(path, provenance, &["state", "r_mm", "z_ant_mm", "z_post_mm"])?;
    for (step, c) in contours {
        for [r, za, zp] in resample(c)? {
            w.row([step.to_string(), r.to_string(), za.to_string(), zp.to_string()])?;
        }
    }
    w.finish()
}

#[derive(Deserialize)]
struct ContourRow {
    state: usize,
    r_mm: f64,
    z_ant_mm: f64,
    z_post_mm: f64,
}

/// Contours by state. DefA is taken relative to the first state in the file.
pub fn read_contours_csv(path: &Path) -> Result<Vec<(usize, DeformationContour)>> {
    let mut groups: Vec<(usize, Vec<ContourRow>)> = Vec::new();
    for row in csv_reader(path)?.deserialize() {
        let row: ContourRow = row?;
        match groups.last_mut() {
            Some((s, rows)) if *s == row.state => rows.push(row),
            _ => groups.push((row.state, vec![row])),
        }
    }
    let Some(apex0) = groups.first().map(|(_, rows)| rows[0].z_ant_mm) else {
        return Err(Error::Contour(format!("{} holds no contour rows", path.display())));
    };
    groups
        .into_iter()
        .map(|(state, rows)| {
            let c = DeformationContour {
                plane: "xz".into(),
                anterior: rows.iter().map(|r| [r.r_mm, r.z_ant_mm]).collect(),
                posterior: rows.iter().map(|r| [r.r_mm, r.z_post_mm]).collect(),
                cct: rows[0].z_ant_mm - rows[0].z_post_mm,
                def_a: apex0 - rows[0].z_ant_mm,
            };
            c.validate()?;
            Ok((state, c))
        })
        .collect()
}

#[derive(Serialize)]
struct ManifestEntry {
    path: String,
    bytes: u64,
    sha256: String,
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            walk(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

/// List every file below `out` with its size and SHA-256 in `out/manifest.json`.
pub fn write_manifest(out: &Path, provenance: &Provenance) -> Result<()> {
    let mut files = Vec::new();
    walk(out, &mut files)?;
    let manifest = out.join("manifest.json");
    let entries = files
        .into_iter()
        .filter(|p| *p != manifest)
        .map(|p| {
            let bytes = std::fs::read(&p)?;
            let rel = p.strip_prefix(out).expect("below out").to_string_lossy().replace('\\', "/");
            Ok(ManifestEntry {
                path: rel,
                bytes: bytes.len() as u64,
                sha256: hex::encode(Sha256::digest(&bytes)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_json(&manifest, provenance, &entries, true)
}
