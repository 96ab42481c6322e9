//! Study orchestration: configuration, artifacts and the command implementations.

mod artifacts;
mod commands;
mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::egm::{DofSelection, NonlinearOptions};
use crate::error::{Error, Result};
use crate::fem::stress_free::StressFreeOptions;
use crate::fem::AuxMaterials;
use crate::geometry::{build_eye_mesh, EyeGeometryConfig, Mesh};
use crate::material::MaterialParams;
use crate::morph::MorphConfig;
use crate::synthlab::NctConfig;

pub use artifacts::{
    read_contours_csv, read_json, write_contours_csv, write_json, write_manifest, Artifact, CsvOut, ForwardSummary,
    HistoryRow, IdentificationResult, Measurement, MeasurementState, MorphSummary, NoiseLevel, NoiseRepetition,
    NoiseStudyResult, Provenance, Runtime, Source, StateBundle, CONTOUR_SPACING,
};
pub use commands::{cmd_forward, cmd_generate, cmd_identify, cmd_morph, cmd_noise_study};
pub use report::cmd_report;

/// Names of the reference material sets in increasing degradation.
pub const SET_NAMES: [&str; 4] = ["H", "KK-I", "KK-II", "KK-III"];

/// Reference corneal parameters: healthy and three keratoconus stages with
/// reduced fiber stiffness.
pub fn material_set(name: &str) -> Result<MaterialParams> {
    let k1 = match name {
        "H" => 0.04,
        "KK-I" => 0.02,
        "KK-II" => 0.01,
        "KK-III" => 0.0,
        _ => return Err(Error::Config(format!("unknown material set `{name}`"))),
    };
    MaterialParams::new(10.0, 0.275, k1, 200.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentificationConfig {
    pub selection: DofSelection,
    pub nonlinear: NonlinearOptions,
}

impl Default for IdentificationConfig {
    fn default() -> Self {
        IdentificationConfig {
            selection: DofSelection::Cornea,
            nonlinear: NonlinearOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseStudyConfig {
    pub sets: Vec<String>,
    /// Uniform noise amplitudes (mm).
    pub amplitudes: Vec<f64>,
    pub repetitions: usize,
}

impl Default for NoiseStudyConfig {
    fn default() -> Self {
        NoiseStudyConfig {
            sets: vec!["H".into()],
            amplitudes: vec![0.0, 1e-5, 1e-4],
            repetitions: 10,
        }
    }
}

/// Everything a study run depends on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub geometry: EyeGeometryConfig,
    /// Material sets by name.
    pub sets: BTreeMap<String, MaterialParams>,
    pub aux: AuxMaterials,
    pub nct: NctConfig,
    pub stress_free: StressFreeOptions,
    pub identification: IdentificationConfig,
    pub noise: NoiseStudyConfig,
    pub morph: MorphConfig,
    /// Base seed of the stochastic commands.
    pub seed: Option<u64>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            geometry: EyeGeometryConfig::default(),
            sets: SET_NAMES
                .iter()
                .map(|&n| (n.to_string(), material_set(n).expect("built-in set")))
                .collect(),
            aux: AuxMaterials::default(),
            nct: NctConfig::default(),
            stress_free: StressFreeOptions::default(),
            identification: IdentificationConfig::default(),
            noise: NoiseStudyConfig::default(),
            morph: MorphConfig::default(),
            seed: None,
        }
    }
}

impl StudyConfig {
    pub fn load(path: &Path) -> Result<StudyConfig> {
        let c: StudyConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sets.is_empty() {
            return Err(Error::Config("no material sets".into()));
        }
        for p in self.sets.values() {
            p.validate()?;
        }
        self.geometry.validate()?;
        self.nct.jet.validate()?;
        if self.noise.repetitions == 0 || self.noise.amplitudes.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::Config("noise study needs repetitions > 0 and finite nonnegative amplitudes".into()));
        }
        for s in &self.noise.sets {
            if !self.sets.contains_key(s) {
                return Err(Error::Config(format!("noise study refers to unknown set `{s}`")));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let s = serde_json::to_string(self).expect("config serialization cannot fail");
        hex::encode(Sha256::digest(s.as_bytes()))
    }
}

/// A configured study writing below one output directory.
#[derive(Clone, Debug)]
pub struct Study {
    pub config: StudyConfig,
    pub out: PathBuf,
    /// Seed from the command line, taking precedence over the config.
    pub seed_override: Option<u64>,
    config_hash: String,
}

impl Study {
    pub fn new(config: StudyConfig, out: impl Into<PathBuf>, seed_override: Option<u64>) -> Result<Study> {
        config.validate()?;
        let config_hash = config.hash();
        Ok(Study {
            config,
            out: out.into(),
            seed_override,
            config_hash,
        })
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed_override.or(self.config.seed)
    }

    pub fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.out.join(rel)
    }

    pub fn provenance(&self, mesh_hash: &str) -> Provenance {
        Provenance {
            tool: "corneid".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash: self.config_hash.clone(),
            mesh_hash: mesh_hash.into(),
        }
    }

    /// Generated mesh from `mesh.json`, checked against the geometry config.
    pub fn target_mesh(&self) -> Result<Mesh> {
        let path = self.path("mesh.json");
        if !path.exists() {
            return Err(Error::Config(format!("{} is missing; run `generate` first", path.display())));
        }
        let a: Artifact<Mesh> = read_json(&path)?;
        let expected = build_eye_mesh(&self.config.geometry)?.hash();
        let found = a.data.hash();
        if found != expected {
            return Err(Error::Mismatch {
                what: "mesh.json",
                expected,
                found,
            });
        }
        Ok(a.data)
    }

    /// Sets selected by name, all configured sets when `names` is empty.
    pub fn sets(&self, names: &[String]) -> Result<Vec<(String, MaterialParams)>> {
        if names.is_empty() {
            return Ok(self.config.sets.iter().map(|(k, v)| (k.clone(), v.clone())).collect());
        }
        names
            .iter()
            .map(|n| {
                self.config
                    .sets
                    .get(n)
                    .map(|p| (n.clone(), p.clone()))
                    .ok_or_else(|| Error::Config(format!("unknown material set `{n}`")))
            })
            .collect()
    }
}
