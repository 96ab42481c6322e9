//! Parametric quarter-eye hexahedral mesh.

mod build;
pub mod disk;
pub mod profile;
mod quality;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use build::build_eye_mesh;
pub use quality::{mesh_quality_report, QualityReport};

/// Local node lists of the six hexahedron faces, ordered counter-clockwise when
/// seen from outside the element.
pub const HEX_FACES: [[usize; 4]; 6] = [
    [0, 3, 2, 1],
    [4, 5, 6, 7],
    [0, 1, 5, 4],
    [1, 2, 6, 5],
    [2, 3, 7, 6],
    [3, 0, 4, 7],
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LensProfile {
    pub equator_radius: f64,
    /// Height of the lens equator above the eye center.
    pub equator_height: f64,
    pub anterior_sag: f64,
    pub posterior_sag: f64,
    pub edge_half_thickness: f64,
}

impl Default for LensProfile {
    fn default() -> Self {
        LensProfile {
            equator_radius: 4.0,
            equator_height: 8.3,
            anterior_sag: 1.1,
            posterior_sag: 2.2,
            edge_half_thickness: 0.2,
        }
    }
}

/// Mesh density at refinement level 0. Every level halves all spacings and
/// doubles the element counts through the wall and around the axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshDensity {
    /// Square-core divisions `n`; each quarter ring carries `2n` elements.
    pub circumferential_divisions: usize,
    pub shell_layers: usize,
    /// Lens layers; the zonula rim also spans this many limbus ring intervals.
    pub lens_layers: usize,
    pub cornea_spacing: f64,
    pub limbus_spacing: f64,
    pub sclera_spacing: f64,
    pub lens_spacing: f64,
}

impl Default for MeshDensity {
    fn default() -> Self {
        MeshDensity {
            circumferential_divisions: 8,
            shell_layers: 3,
            lens_layers: 2,
            cornea_spacing: 0.4,
            limbus_spacing: 0.4,
            sclera_spacing: 1.2,
            lens_spacing: 0.4,
        }
    }
}

/// Geometry of the quarter eye. Lengths in mm, angles in degrees.
///
/// The default numbers are placeholders for typical adult eyes; none of them
/// is ground truth for the identification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EyeGeometryConfig {
    /// Anterior corneal ellipsoid semiaxes `[lateral, axial]`.
    pub corneal_anterior_radii: [f64; 2],
    pub central_thickness: f64,
    pub peripheral_thickness: f64,
    pub limbus_start_radius: f64,
    pub limbus_width: f64,
    pub sclera_radius: f64,
    pub sclera_thickness: f64,
    pub lens: LensProfile,
    pub refinement_level: u32,
    pub fixation_cone_angle: f64,
    pub density: MeshDensity,
}

impl Default for EyeGeometryConfig {
    fn default() -> Self {
        // apex radius 7.8 mm with conic constant 0.8
        let (r0, p) = (7.8_f64, 0.8_f64);
        EyeGeometryConfig {
            corneal_anterior_radii: [r0 / p.sqrt(), r0 / p],
            central_thickness: 0.55,
            peripheral_thickness: 0.70,
            limbus_start_radius: 4.6,
            limbus_width: 2.0,
            sclera_radius: 12.0,
            sclera_thickness: 0.6,
            lens: LensProfile::default(),
            refinement_level: 0,
            fixation_cone_angle: 30.0,
            density: MeshDensity::default(),
        }
    }
}

impl EyeGeometryConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        let lengths = [
            self.corneal_anterior_radii[0],
            self.corneal_anterior_radii[1],
            self.central_thickness,
            self.peripheral_thickness,
            self.limbus_start_radius,
            self.limbus_width,
            self.sclera_radius,
            self.sclera_thickness,
            self.lens.equator_radius,
            self.lens.equator_height,
            self.lens.anterior_sag,
            self.lens.posterior_sag,
            self.lens.edge_half_thickness,
            self.density.cornea_spacing,
            self.density.limbus_spacing,
            self.density.sclera_spacing,
            self.density.lens_spacing,
        ];
        if lengths.iter().any(|&l| !(l.is_finite() && l > 0.0)) {
            return bad("all lengths must be positive and finite");
        }
        if self.central_thickness >= self.peripheral_thickness {
            return bad("central corneal thickness must be below the peripheral thickness");
        }
        if self.limbus_start_radius >= self.corneal_anterior_radii[0] {
            return bad("limbus must start inside the corneal ellipsoid");
        }
        if self.limbus_start_radius + self.limbus_width >= self.sclera_radius {
            return bad("limbus must end inside the sclera equatorial extent");
        }
        if !(self.fixation_cone_angle > 0.0 && self.fixation_cone_angle < 90.0) {
            return bad("fixation cone angle must lie in (0, 90) degrees");
        }
        if self.lens.edge_half_thickness >= self.lens.anterior_sag.min(self.lens.posterior_sag) {
            return bad("lens edge half thickness must be below both sags");
        }
        let d = &self.density;
        if d.circumferential_divisions < 2 || d.shell_layers < 1 || d.lens_layers < 1 {
            return bad("mesh density counts are too small");
        }
        if self.refinement_level > 4 {
            return bad("refinement level above 4 is not supported");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Cornea,
    Limbus,
    Sclera,
    Lens,
}

impl Region {
    pub const ALL: [Region; 4] = [Region::Cornea, Region::Limbus, Region::Sclera, Region::Lens];

    pub fn name(self) -> &'static str {
        match self {
            Region::Cornea => "cornea",
            Region::Limbus => "limbus",
            Region::Sclera => "sclera",
            Region::Lens => "lens",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceSet {
    AnteriorCornea,
    PosteriorCornea,
    AnteriorChamberWall,
    VitreousWall,
    Fixation,
    SymmetryXz,
    SymmetryYz,
}

impl SurfaceSet {
    pub const ALL: [SurfaceSet; 7] = [
        SurfaceSet::AnteriorCornea,
        SurfaceSet::PosteriorCornea,
        SurfaceSet::AnteriorChamberWall,
        SurfaceSet::VitreousWall,
        SurfaceSet::Fixation,
        SurfaceSet::SymmetryXz,
        SurfaceSet::SymmetryYz,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SurfaceSet::AnteriorCornea => "anterior_cornea",
            SurfaceSet::PosteriorCornea => "posterior_cornea",
            SurfaceSet::AnteriorChamberWall => "anterior_chamber_wall",
            SurfaceSet::VitreousWall => "vitreous_wall",
            SurfaceSet::Fixation => "fixation",
            SurfaceSet::SymmetryXz => "symmetry_xz",
            SurfaceSet::SymmetryYz => "symmetry_yz",
        }
    }

    pub fn from_name(name: &str) -> Option<SurfaceSet> {
        SurfaceSet::ALL.into_iter().find(|s| s.name() == name)
    }
}

impl fmt::Display for SurfaceSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Facet {
    pub element: usize,
    /// Index into [`HEX_FACES`].
    pub face: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Element {
    pub conn: [usize; 8],
    pub region: Region,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "MeshFile", try_from = "MeshFile")]
pub struct Mesh {
    pub nodes: Vec<Vector3<f64>>,
    pub elements: Vec<Element>,
    pub facets: BTreeMap<SurfaceSet, Vec<Facet>>,
    pub node_sets: BTreeMap<SurfaceSet, Vec<usize>>,
}

impl Mesh {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_dofs(&self) -> usize {
        3 * self.nodes.len()
    }

    pub fn facet_nodes(&self, f: Facet) -> [usize; 4] {
        let conn = &self.elements[f.element].conn;
        HEX_FACES[f.face].map(|i| conn[i])
    }

    pub fn facet_set(&self, set: SurfaceSet) -> Result<&[Facet]> {
        match self.facets.get(&set) {
            Some(f) if !f.is_empty() => Ok(f),
            _ => Err(Error::MissingSurface(set.name().into())),
        }
    }

    pub fn node_set(&self, set: SurfaceSet) -> Result<&[usize]> {
        match self.node_sets.get(&set) {
            Some(n) if !n.is_empty() => Ok(n),
            _ => Err(Error::MissingSurface(set.name().into())),
        }
    }

    pub fn element_coords(&self, e: usize) -> [Vector3<f64>; 8] {
        self.elements[e].conn.map(|n| self.nodes[n])
    }

    /// Same topology with new node positions.
    pub fn with_nodes(&self, nodes: Vec<Vector3<f64>>) -> Mesh {
        assert_eq!(nodes.len(), self.nodes.len());
        Mesh {
            nodes,
            ..self.clone()
        }
    }

    /// Node on the axis belonging to the anterior corneal surface.
    pub fn apex_node(&self) -> Result<usize> {
        self.axis_node(SurfaceSet::AnteriorCornea)
    }

    /// Node on the axis belonging to the posterior corneal surface.
    pub fn posterior_apex_node(&self) -> Result<usize> {
        self.axis_node(SurfaceSet::PosteriorCornea)
    }

    fn axis_node(&self, set: SurfaceSet) -> Result<usize> {
        self.node_set(set)?
            .iter()
            .copied()
            .find(|&n| self.nodes[n].x == 0.0 && self.nodes[n].y == 0.0)
            .ok_or_else(|| Error::Geometry {
                region: "cornea".into(),
                reason: format!("no axis node on {set}"),
            })
    }

    pub fn region_counts(&self) -> BTreeMap<Region, usize> {
        let mut counts = BTreeMap::new();
        for e in &self.elements {
            *counts.entry(e.region).or_insert(0) += 1;
        }
        counts
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounding_box(&self) -> (Vector3<f64>, Vector3<f64>) {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for p in &self.nodes {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }

    fn to_file(&self) -> MeshFile {
        let mut sets = BTreeMap::new();
        for (s, f) in &self.facets {
            sets.insert(
                s.name().to_string(),
                SetRecord::Facets(f.iter().map(|f| [f.element, f.face]).collect()),
            );
        }
        for (s, n) in &self.node_sets {
            sets.insert(format!("{}_nodes", s.name()), SetRecord::Nodes(n.clone()));
        }
        MeshFile {
            nodes: self.nodes.iter().map(|p| [p.x, p.y, p.z]).collect(),
            elements: self
                .elements
                .iter()
                .map(|e| ElementRecord {
                    conn: e.conn,
                    region: e.region,
                })
                .collect(),
            sets,
        }
    }

    fn from_file(file: MeshFile) -> Result<Mesh> {
        let n = file.nodes.len();
        let mut facets = BTreeMap::new();
        let mut node_sets = BTreeMap::new();
        for (name, rec) in file.sets {
            let (base, is_nodes) = match name.strip_suffix("_nodes") {
                Some(b) => (b, true),
                None => (name.as_str(), false),
            };
            let set = SurfaceSet::from_name(base)
                .ok_or_else(|| Error::Config(format!("unknown mesh set `{name}`")))?;
            match (rec, is_nodes) {
                (SetRecord::Nodes(ids), true) => {
                    if ids.iter().any(|&i| i >= n) {
                        return Err(Error::Config(format!("node id out of range in `{name}`")));
                    }
                    node_sets.insert(set, ids);
                }
                (SetRecord::Facets(fs), false) => {
                    let list: Vec<Facet> = fs
                        .into_iter()
                        .map(|[element, face]| Facet { element, face })
                        .collect();
                    if list
                        .iter()
                        .any(|f| f.element >= file.elements.len() || f.face >= 6)
                    {
                        return Err(Error::Config(format!("facet out of range in `{name}`")));
                    }
                    facets.insert(set, list);
                }
                // an empty node list deserializes as a facet list
                (SetRecord::Facets(fs), true) if fs.is_empty() => {
                    node_sets.insert(set, Vec::new());
                }
                _ => return Err(Error::Config(format!("malformed mesh set `{name}`"))),
            }
        }
        let elements: Vec<Element> = file
            .elements
            .into_iter()
            .map(|e| Element {
                conn: e.conn,
                region: e.region,
            })
            .collect();
        if elements.iter().any(|e| e.conn.iter().any(|&i| i >= n)) {
            return Err(Error::Config("element connectivity out of range".into()));
        }
        Ok(Mesh {
            nodes: file.nodes.into_iter().map(Vector3::from).collect(),
            elements,
            facets,
            node_sets,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("mesh serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Mesh> {
        Mesh::from_file(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Mesh> {
        Mesh::from_json(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

impl From<Mesh> for MeshFile {
    fn from(m: Mesh) -> Self {
        m.to_file()
    }
}

impl TryFrom<MeshFile> for Mesh {
    type Error = Error;

    fn try_from(f: MeshFile) -> Result<Self> {
        Mesh::from_file(f)
    }
}

#[derive(Serialize, Deserialize)]
struct MeshFile {
    nodes: Vec<[f64; 3]>,
    elements: Vec<ElementRecord>,
    sets: BTreeMap<String, SetRecord>,
}

#[derive(Serialize, Deserialize)]
struct ElementRecord {
    conn: [usize; 8],
    region: Region,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SetRecord {
    Facets(Vec<[usize; 2]>),
    Nodes(Vec<usize>),
}

/// Mirror a quarter surface across both symmetry planes. Returns the welded
/// node positions and the quads of the full surface.
pub fn mirror_surface(mesh: &Mesh, facets: &[Facet]) -> (Vec<Vector3<f64>>, Vec<[usize; 4]>) {
    let mut index: BTreeMap<[u64; 3], usize> = BTreeMap::new();
    let mut points = Vec::new();
    let mut quads = Vec::new();
    let key = |p: &Vector3<f64>| [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()];
    for (sx, sy) in [(1.0, 1.0), (-1.0, 1.0), (1.0, -1.0), (-1.0, -1.0)] {
        let flip = sx * sy < 0.0;
        for &f in facets {
            let mut q = mesh.facet_nodes(f).map(|n| {
                let p = mesh.nodes[n];
                // 0.0 * -1.0 is -0.0; adding 0.0 normalizes the sign bit
                let m = Vector3::new(sx * p.x + 0.0, sy * p.y + 0.0, p.z);
                *index.entry(key(&m)).or_insert_with(|| {
                    points.push(m);
                    points.len() - 1
                })
            });
            if flip {
                q.swap(1, 3);
            }
            quads.push(q);
        }
    }
    (points, quads)
}

/// Edge use counts of a quad surface, keyed by sorted node pair.
pub fn edge_counts(quads: &[[usize; 4]]) -> BTreeMap<(usize, usize), usize> {
    let mut edges = BTreeMap::new();
    for q in quads {
        for i in 0..4 {
            let (a, b) = (q[i], q[(i + 1) % 4]);
            *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    edges
}

/// Euler characteristic `V - E + F` of a quad surface.
pub fn euler_characteristic(quads: &[[usize; 4]]) -> i64 {
    let used: std::collections::BTreeSet<usize> = quads.iter().flatten().copied().collect();
    used.len() as i64 - edge_counts(quads).len() as i64 + quads.len() as i64
}

/// Check that a quarter surface closes under mirroring: every open edge must lie
/// in one of the symmetry planes.
pub fn check_closed(mesh: &Mesh, set: SurfaceSet) -> Result<()> {
    let facets = mesh.facet_set(set)?;
    let quads: Vec<[usize; 4]> = facets.iter().map(|&f| mesh.facet_nodes(f)).collect();
    for ((a, b), count) in edge_counts(&quads) {
        let (pa, pb) = (mesh.nodes[a], mesh.nodes[b]);
        let on_plane = (pa.x == 0.0 && pb.x == 0.0) || (pa.y == 0.0 && pb.y == 0.0);
        if count > 2 || (count == 1 && !on_plane) {
            return Err(Error::OpenSurface(set.name().into()));
        }
    }
    Ok(())
}
