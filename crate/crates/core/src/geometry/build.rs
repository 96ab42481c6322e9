use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Vector3;

use super::disk::{polar_disk, QuarterDisk};
use super::profile::MeridianProfile;
use super::{Element, EyeGeometryConfig, Facet, Mesh, Region, SurfaceSet, HEX_FACES};
use crate::error::{Error, Result};
use crate::fem::hex8;

const SNAP: f64 = 1e-12;

/// Ring radii from `start` to `end` with `m0 * scale` equal intervals, where
/// `m0` is the level-0 interval count for spacing `h`. `start` is excluded.
fn ring_run(start: f64, end: f64, h: f64, scale: usize) -> Vec<f64> {
    let m0 = ((end - start) / h).ceil().max(1.0) as usize;
    let m = m0 * scale;
    (1..=m)
        .map(|i| if i == m { end } else { start + (end - start) * i as f64 / m as f64 })
        .collect()
}

fn angle_of(p: [f64; 2]) -> f64 {
    if p[1] == 0.0 {
        0.0
    } else if p[0] == 0.0 {
        FRAC_PI_2
    } else {
        p[1].atan2(p[0])
    }
}

fn revolve(r: f64, z: f64, phi: f64) -> Vector3<f64> {
    let snap = |v: f64| if v.abs() < SNAP { 0.0 } else { v };
    let (s, c) = phi.sin_cos();
    Vector3::new(snap(r * c), snap(r * s), z)
}

struct ShellQuad {
    nodes: [usize; 4],
    tau: f64,
}

/// Build the quarter-eye mesh (x >= 0, y >= 0, eye axis along z, apex on top).
pub fn build_eye_mesh(cfg: &EyeGeometryConfig) -> Result<Mesh> {
    cfg.validate()?;
    let prof = MeridianProfile::new(cfg);
    let d = &cfg.density;
    let scale = 1usize << cfg.refinement_level;
    let n0 = d.circumferential_divisions;
    let n = n0 * scale;
    let blend = (n / 2).max(1);
    let layers = d.shell_layers * scale;
    let lens_layers = d.lens_layers * scale;

    // cap radii depend only on level-0 quantities so the caps are nested
    let cap = |h: f64, limit: f64| (4.0 * n0 as f64 * h / PI).min(limit);

    // anterior disk, parametrized by arc length from the apex
    let cap_a = cap(d.cornea_spacing, 0.85 * prof.tau_cornea);
    let mut radii_a = vec![cap_a];
    radii_a.extend(ring_run(cap_a, prof.tau_cornea, d.cornea_spacing, scale));
    radii_a.extend(ring_run(prof.tau_cornea, prof.tau_limbus, d.limbus_spacing, scale));
    radii_a.extend(ring_run(prof.tau_limbus, prof.tau_equator, d.sclera_spacing, scale));
    let disk_a = polar_disk(n, blend, 0.55 * cap_a, &radii_a);

    // posterior disk, parametrized by arc length from the posterior pole
    let back_len = prof.tau_end - prof.tau_equator;
    let cap_p = cap(d.sclera_spacing, 0.8 * back_len);
    let mut radii_p = vec![cap_p];
    radii_p.extend(ring_run(cap_p, back_len, d.sclera_spacing, scale));
    let disk_p = polar_disk(n, blend, 0.55 * cap_p, &radii_p);

    // shell surface nodes as (tau, phi); the posterior equator ring is welded
    let mut surf: Vec<(f64, f64)> = disk_a
        .points
        .iter()
        .map(|p| (p[0].hypot(p[1]), angle_of(*p)))
        .collect();
    let mut map_p = vec![usize::MAX; disk_p.points.len()];
    let eq_a = disk_a.rings.last().unwrap();
    let eq_p = disk_p.rings.last().unwrap();
    for k in 0..eq_p.len() {
        map_p[eq_p[k]] = eq_a[k];
    }
    for (i, p) in disk_p.points.iter().enumerate() {
        if map_p[i] == usize::MAX {
            surf.push((prof.tau_end - p[0].hypot(p[1]), angle_of(*p)));
            map_p[i] = surf.len() - 1;
        }
    }

    let centroid_tau = |q: &[usize; 4], surf: &[(f64, f64)]| q.iter().map(|&i| surf[i].0).sum::<f64>() / 4.0;
    let mut quads: Vec<ShellQuad> = disk_a
        .quads
        .iter()
        .map(|q| ShellQuad {
            nodes: *q,
            tau: centroid_tau(q, &surf),
        })
        .collect();
    for q in &disk_p.quads {
        let nodes = q.map(|i| map_p[i]);
        quads.push(ShellQuad {
            nodes,
            tau: centroid_tau(&nodes, &surf),
        });
    }

    let mut nodes: Vec<Vector3<f64>> = Vec::with_capacity(surf.len() * (layers + 1));
    for &(tau, phi) in &surf {
        let mp = prof.at(tau);
        for l in 0..=layers {
            let [r, z] = mp.through_thickness(l as f64 / layers as f64);
            nodes.push(revolve(r, z, phi));
        }
    }
    let shell_id = |s: usize, l: usize| s * (layers + 1) + l;

    // lens rim: the last `lens_layers` ring intervals of the limbus
    let limbus_ring = ring_index(&disk_a, prof.tau_limbus)?;
    if limbus_ring < lens_layers + blend + 1 {
        return Err(Error::Geometry {
            region: "lens".into(),
            reason: "limbus has too few rings to carry the lens suspension".into(),
        });
    }
    let rim_top = limbus_ring - lens_layers;
    let tau_rim_top = disk_a.ring_radius[rim_top].ok_or_else(|| Error::Geometry {
        region: "lens".into(),
        reason: "lens rim reaches the blended cap rings".into(),
    })?;
    if tau_rim_top <= prof.tau_cornea {
        return Err(Error::Geometry {
            region: "lens".into(),
            reason: "lens rim overlaps the cornea".into(),
        });
    }

    let mut elements = Vec::new();
    let mut facets: BTreeMap<SurfaceSet, Vec<Facet>> = BTreeMap::new();
    let mut push_facet = |set: SurfaceSet, element: usize, face: usize| {
        facets.entry(set).or_default().push(Facet { element, face });
    };
    let mut outer_faces = Vec::new();

    for q in &quads {
        let region = if q.tau < prof.tau_cornea {
            Region::Cornea
        } else if q.tau < prof.tau_limbus {
            Region::Limbus
        } else {
            Region::Sclera
        };
        for l in 0..layers {
            let mut base = q.nodes;
            let coords = |b: &[usize; 4]| -> [Vector3<f64>; 8] {
                let mut c = [Vector3::zeros(); 8];
                for i in 0..4 {
                    c[i] = nodes[shell_id(b[i], l)];
                    c[i + 4] = nodes[shell_id(b[i], l + 1)];
                }
                c
            };
            if hex8::jacobian(&coords(&base), &hex8::shape_derivatives([0.0; 3])).determinant() < 0.0 {
                base.swap(1, 3);
            }
            let mut conn = [0; 8];
            for i in 0..4 {
                conn[i] = shell_id(base[i], l);
                conn[i + 4] = shell_id(base[i], l + 1);
            }
            let e = elements.len();
            elements.push(Element { conn, region });
            if l == 0 {
                if region == Region::Cornea {
                    push_facet(SurfaceSet::PosteriorCornea, e, 0);
                }
                if q.tau < tau_rim_top {
                    push_facet(SurfaceSet::AnteriorChamberWall, e, 0);
                } else if q.tau > prof.tau_limbus {
                    push_facet(SurfaceSet::VitreousWall, e, 0);
                }
            }
            if l == layers - 1 {
                if region == Region::Cornea {
                    push_facet(SurfaceSet::AnteriorCornea, e, 1);
                }
                outer_faces.push(e);
            }
        }
    }

    // lens and zonula
    let lens = &cfg.lens;
    let cap_l = cap(d.lens_spacing, 0.75 * lens.equator_radius);
    let rim_mid = {
        let a = prof.at(prof.tau_limbus).inner();
        let b = prof.at(tau_rim_top).inner();
        [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
    };
    let zonula_len = (rim_mid[0] - lens.equator_radius).hypot(rim_mid[1] - lens.equator_height);
    let rho_rim = lens.equator_radius + zonula_len;
    let mut radii_l = vec![cap_l];
    radii_l.extend(ring_run(cap_l, lens.equator_radius, d.lens_spacing, scale));
    radii_l.extend(ring_run(lens.equator_radius, rho_rim, d.lens_spacing, scale));
    let disk_l = polar_disk(n, blend, 0.55 * cap_l, &radii_l);
    let rim = disk_l.rings.last().unwrap();
    let mut rim_slot = vec![usize::MAX; disk_l.points.len()];
    for (k, &i) in rim.iter().enumerate() {
        rim_slot[i] = k;
    }
    let rim_ring_ids: Vec<&Vec<usize>> = (0..=lens_layers).map(|l| &disk_a.rings[limbus_ring - l]).collect();

    let e_half = lens.edge_half_thickness;
    let lens_z = |rho: f64, s: f64| {
        let t = 1.0 - (rho / lens.equator_radius).powi(2);
        let front = lens.equator_height + e_half + (lens.anterior_sag - e_half) * t;
        let back = lens.equator_height - e_half - (lens.posterior_sag - e_half) * t;
        back + s * (front - back)
    };
    let mut lens_ids = vec![usize::MAX; disk_l.points.len() * (lens_layers + 1)];
    for (i, p) in disk_l.points.iter().enumerate() {
        for l in 0..=lens_layers {
            let slot = i * (lens_layers + 1) + l;
            if rim_slot[i] != usize::MAX {
                lens_ids[slot] = shell_id(rim_ring_ids[l][rim_slot[i]], 0);
                continue;
            }
            let rho = p[0].hypot(p[1]);
            let s = l as f64 / lens_layers as f64;
            let (r, z) = if rho <= lens.equator_radius {
                (rho, lens_z(rho, s))
            } else {
                let w = (rho - lens.equator_radius) / zonula_len;
                let eq = [lens.equator_radius, lens_z(lens.equator_radius, s)];
                let tau = disk_a.ring_radius[limbus_ring - l].expect("pure ring");
                let target = prof.at(tau).inner();
                (eq[0] + w * (target[0] - eq[0]), eq[1] + w * (target[1] - eq[1]))
            };
            nodes.push(revolve(r, z, angle_of(*p)));
            lens_ids[slot] = nodes.len() - 1;
        }
    }
    let lens_id = |i: usize, l: usize| lens_ids[i * (lens_layers + 1) + l];
    for q in &disk_l.quads {
        for l in 0..lens_layers {
            let mut base = *q;
            let mut c = [Vector3::zeros(); 8];
            for i in 0..4 {
                c[i] = nodes[lens_id(base[i], l)];
                c[i + 4] = nodes[lens_id(base[i], l + 1)];
            }
            if hex8::jacobian(&c, &hex8::shape_derivatives([0.0; 3])).determinant() < 0.0 {
                base.swap(1, 3);
            }
            let mut conn = [0; 8];
            for i in 0..4 {
                conn[i] = lens_id(base[i], l);
                conn[i + 4] = lens_id(base[i], l + 1);
            }
            let e = elements.len();
            elements.push(Element {
                conn,
                region: Region::Lens,
            });
            if l == 0 {
                push_facet(SurfaceSet::VitreousWall, e, 0);
            }
            if l == lens_layers - 1 {
                push_facet(SurfaceSet::AnteriorChamberWall, e, 1);
            }
        }
    }

    // every Gauss point must see a positive Jacobian
    for e in &elements {
        let coords = e.conn.map(|i| nodes[i]);
        if let Err((g, det)) = hex8::quadrature(&coords) {
            return Err(Error::Geometry {
                region: e.region.name().into(),
                reason: format!("non-positive Jacobian {det:.3e} at Gauss point {g}"),
            });
        }
    }

    // fixation cone around the posterior pole, measured from the eye center
    let cos_cone = cfg.fixation_cone_angle.to_radians().cos();
    let in_cone = |p: &Vector3<f64>| -p.z >= cos_cone * p.norm();
    let fixation_nodes: Vec<usize> = (0..surf.len())
        .map(|s| shell_id(s, layers))
        .filter(|&i| in_cone(&nodes[i]))
        .collect();
    for &e in &outer_faces {
        let conn = &elements[e].conn;
        if HEX_FACES[1].iter().all(|&i| in_cone(&nodes[conn[i]])) {
            push_facet(SurfaceSet::Fixation, e, 1);
        }
    }

    for (e, el) in elements.iter().enumerate() {
        for (f, face) in HEX_FACES.iter().enumerate() {
            if face.iter().all(|&i| nodes[el.conn[i]].y == 0.0) {
                push_facet(SurfaceSet::SymmetryXz, e, f);
            }
            if face.iter().all(|&i| nodes[el.conn[i]].x == 0.0) {
                push_facet(SurfaceSet::SymmetryYz, e, f);
            }
        }
    }

    let mut mesh = Mesh {
        nodes,
        elements,
        facets,
        node_sets: BTreeMap::new(),
    };
    for set in SurfaceSet::ALL {
        let ids: Vec<usize> = if set == SurfaceSet::Fixation {
            fixation_nodes.clone()
        } else {
            let mut s = BTreeSet::new();
            for &f in mesh.facets.get(&set).map(Vec::as_slice).unwrap_or(&[]) {
                s.extend(mesh.facet_nodes(f));
            }
            s.into_iter().collect()
        };
        mesh.node_sets.insert(set, ids);
    }
    for set in SurfaceSet::ALL {
        if mesh.facets.get(&set).is_none_or(|f| f.is_empty()) {
            return Err(Error::Geometry {
                region: "surface".into(),
                reason: format!("surface set {set} is empty"),
            });
        }
    }
    Ok(mesh)
}

fn ring_index(disk: &QuarterDisk, radius: f64) -> Result<usize> {
    disk.ring_radius
        .iter()
        .position(|r| *r == Some(radius))
        .ok_or_else(|| Error::Geometry {
            region: "limbus".into(),
            reason: "limbus ring missing from the shell layout".into(),
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{check_closed, edge_counts, euler_characteristic, mirror_surface};

    fn mesh() -> Mesh {
        build_eye_mesh(&EyeGeometryConfig::default()).unwrap()
    }

    fn boundary_faces(m: &Mesh) -> Vec<Facet> {
        let mut seen: BTreeMap<[usize; 4], Vec<Facet>> = BTreeMap::new();
        for e in 0..m.elements.len() {
            for face in 0..6 {
                let f = Facet { element: e, face };
                let mut key = m.facet_nodes(f);
                key.sort();
                seen.entry(key).or_default().push(f);
            }
        }
        seen.into_values()
            .filter(|v| v.len() == 1)
            .map(|v| v[0])
            .filter(|&f| {
                let q = m.facet_nodes(f);
                !(q.iter().all(|&i| m.nodes[i].x == 0.0) || q.iter().all(|&i| m.nodes[i].y == 0.0))
            })
            .collect()
    }

    #[test]
    fn boundary_is_outer_surface_plus_cavity_walls() {
        let m = mesh();
        let walls: BTreeSet<Facet> = [SurfaceSet::AnteriorChamberWall, SurfaceSet::VitreousWall]
            .iter()
            .flat_map(|s| m.facet_set(*s).unwrap().to_vec())
            .collect();
        for f in boundary_faces(&m) {
            let outer = f.face == 1 && m.elements[f.element].region != Region::Lens;
            assert!(outer ^ walls.contains(&f), "{f:?}");
        }
    }

    #[test]
    fn all_sets_nonempty_and_regions_present() {
        let m = mesh();
        for set in SurfaceSet::ALL {
            assert!(!m.facet_set(set).unwrap().is_empty(), "{set}");
            assert!(!m.node_set(set).unwrap().is_empty(), "{set}");
        }
        let counts = m.region_counts();
        for r in Region::ALL {
            assert!(counts[&r] > 0, "{r}");
        }
    }

    #[test]
    fn apex_thickness_is_central_thickness() {
        let m = mesh();
        let a = m.nodes[m.apex_node().unwrap()];
        let b = m.nodes[m.posterior_apex_node().unwrap()];
        assert!(((a - b).norm() - 0.55).abs() < 1e-6);
    }

    #[test]
    fn cavity_walls_and_outer_surface_close_when_mirrored() {
        let m = mesh();
        for set in [SurfaceSet::AnteriorChamberWall, SurfaceSet::VitreousWall] {
            check_closed(&m, set).unwrap();
            let (_, quads) = mirror_surface(&m, m.facet_set(set).unwrap());
            assert!(edge_counts(&quads).values().all(|&c| c == 2), "{set}");
            assert_eq!(euler_characteristic(&quads), 2, "{set}");
        }
        let outer: Vec<Facet> = boundary_faces(&m)
            .into_iter()
            .filter(|f| f.face == 1 && m.elements[f.element].region != Region::Lens)
            .collect();
        let (_, quads) = mirror_surface(&m, &outer);
        assert!(edge_counts(&quads).values().all(|&c| c == 2));
        assert_eq!(euler_characteristic(&quads), 2);
    }

    #[test]
    fn anterior_cornea_is_not_closed() {
        let m = mesh();
        assert!(check_closed(&m, SurfaceSet::AnteriorCornea).is_err());
    }

    #[test]
    fn symmetry_nodes_lie_exactly_on_planes() {
        let m = mesh();
        for &i in m.node_set(SurfaceSet::SymmetryXz).unwrap() {
            assert_eq!(m.nodes[i].y, 0.0);
        }
        for &i in m.node_set(SurfaceSet::SymmetryYz).unwrap() {
            assert_eq!(m.nodes[i].x, 0.0);
        }
        assert!(m.nodes.iter().all(|p| p.x >= 0.0 && p.y >= 0.0));
    }

    #[test]
    fn fixation_nodes_are_exactly_the_outer_nodes_in_the_cone() {
        let m = mesh();
        let cos = 30f64.to_radians().cos();
        let fixed: BTreeSet<usize> = m.node_set(SurfaceSet::Fixation).unwrap().iter().copied().collect();
        let outer: BTreeSet<usize> = m
            .elements
            .iter()
            .filter(|e| e.region == Region::Sclera)
            .flat_map(|e| e.conn[4..].to_vec())
            .collect();
        for i in outer {
            let p = m.nodes[i];
            let inside = -p.z >= cos * p.norm() && (p.norm() - 12.0).abs() < 1e-9;
            assert_eq!(inside, fixed.contains(&i), "node {i}");
        }
    }

    #[test]
    fn refinement_grows_and_keeps_bounding_box() {
        let m0 = mesh();
        let m1 = build_eye_mesh(&EyeGeometryConfig {
            refinement_level: 1,
            ..Default::default()
        })
        .unwrap();
        assert!(m1.elements.len() > m0.elements.len());
        let (a0, b0) = m0.bounding_box();
        let (a1, b1) = m1.bounding_box();
        assert!((a0 - a1).norm() < 1e-9 && (b0 - b1).norm() < 1e-9);
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(mesh().to_json(), mesh().to_json());
    }

    #[test]
    fn json_round_trip() {
        let m = mesh();
        let back = Mesh::from_json(&m.to_json()).unwrap();
        assert_eq!(m, back);
        assert_eq!(m.hash(), back.hash());
    }

    #[test]
    fn each_facet_in_a_set_is_unique() {
        let m = mesh();
        for (set, f) in &m.facets {
            let uniq: BTreeSet<_> = f.iter().collect();
            assert_eq!(uniq.len(), f.len(), "{set}");
        }
    }
}
