//! Global assembly over free dofs with a fixed sparse pattern.

use nalgebra::Vector3;
use rayon::prelude::*;

use super::element::{element_force_tangent, element_internal_force, element_split, ElementData, ElementMatrix, ElementVector};
use super::surface::FacetBlock;
use super::{BoundaryConditions, Model};
use crate::error::{Error, Result};
use crate::geometry::{Facet, Region, HEX_FACES};
use crate::material::Constitutive;

const CHUNK: usize = 256;
const NONE: u32 = u32::MAX;

pub(crate) fn element_displacements(model: &Model, e: usize, u: &[Vector3<f64>]) -> [Vector3<f64>; 8] {
    model.mesh.elements[e].conn.map(|n| u[n])
}

fn with_element<R>(model: &Model, e: usize, u: &[Vector3<f64>], f: impl FnOnce(&ElementData) -> R) -> R {
    let d = element_displacements(model, e, u);
    f(&ElementData {
        index: e,
        quadrature: &model.quadrature[e],
        displacements: &d,
        fibers: model.fibers.get(e),
    })
}

fn scatter_vec(out: &mut [f64], conn: &[usize; 8], v: &ElementVector, scale: f64) {
    for (a, n) in conn.iter().enumerate() {
        for k in 0..3 {
            out[3 * n + k] += scale * v[3 * a + k];
        }
    }
}

/// Run `f` on every element in parallel and consume the results in element order.
pub(crate) fn for_each_element<T: Send>(
    n: usize,
    f: impl Fn(usize) -> Result<T> + Sync,
    mut sink: impl FnMut(usize, T),
) -> Result<()> {
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK * rayon::current_num_threads().max(1)).min(n);
        let out: Vec<T> = (start..end).into_par_iter().map(&f).collect::<Result<_>>()?;
        for (i, t) in out.into_iter().enumerate() {
            sink(start + i, t);
        }
        start = end;
    }
    Ok(())
}

/// Global internal force column `f_int` (length `3N`).
pub fn assemble_internal(model: &Model, u: &[Vector3<f64>]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; model.mesh.num_dofs()];
    for_each_element(
        model.mesh.elements.len(),
        |e| with_element(model, e, u, |el| element_internal_force(el, model.materials.get(model.mesh.elements[e].region))),
        |e, f| scatter_vec(&mut out, &model.mesh.elements[e].conn, &f, 1.0),
    )?;
    Ok(out)
}

/// Unit-parameter internal force columns of the corneal elements and the
/// internal force `c0` of all other regions.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitColumns {
    pub c_k: Vec<f64>,
    pub c_mu: Vec<f64>,
    pub c_k1: Vec<f64>,
    pub c0: Vec<f64>,
    pub k2: f64,
}

/// Assemble [`SplitColumns`] at fixed `k2`, using the corneal fiber settings of the model.
pub fn assemble_split(model: &Model, u: &[Vector3<f64>], k2: f64) -> Result<SplitColumns> {
    let Constitutive::FiberReinforced(p) = &model.materials.cornea else {
        return Err(Error::Config("the split needs the fiber-reinforced corneal law".into()));
    };
    let n = model.mesh.num_dofs();
    let mut s = SplitColumns {
        c_k: vec![0.0; n],
        c_mu: vec![0.0; n],
        c_k1: vec![0.0; n],
        c0: vec![0.0; n],
        k2,
    };
    for_each_element(
        model.mesh.elements.len(),
        |e| {
            let region = model.mesh.elements[e].region;
            with_element(model, e, u, |el| {
                if region == Region::Cornea {
                    element_split(el, k2, p.kappa, p.fibers_tension_only, p.dispersion.as_ref())
                } else {
                    let f = element_internal_force(el, model.materials.get(region))?;
                    Ok([f, ElementVector::zeros(), ElementVector::zeros()])
                }
            })
        },
        |e, cols| {
            let conn = &model.mesh.elements[e].conn;
            if model.mesh.elements[e].region == Region::Cornea {
                scatter_vec(&mut s.c_k, conn, &cols[0], 1.0);
                scatter_vec(&mut s.c_mu, conn, &cols[1], 1.0);
                scatter_vec(&mut s.c_k1, conn, &cols[2], 1.0);
            } else {
                scatter_vec(&mut s.c0, conn, &cols[0], 1.0);
            }
        },
    )?;
    Ok(s)
}

/// Free-dof numbering and the CSC pattern of the tangent over free dofs.
#[derive(Debug)]
pub struct Assembler {
    /// Free index of each global dof, `u32::MAX` if constrained.
    pub free_index: Vec<u32>,
    /// Global dof of each free index.
    pub free_dofs: Vec<usize>,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    /// Position in the value array of each local entry `(row, col)` of an element.
    element_maps: Vec<Box<[u32; 576]>>,
}

impl Assembler {
    pub fn new(model: &Model, bcs: &BoundaryConditions) -> Result<Assembler> {
        bcs.validate()?;
        let mesh = &model.mesh;
        let ndofs = mesh.num_dofs();
        let mask = bcs.constrained_mask(ndofs);
        let mut free_index = vec![NONE; ndofs];
        let mut free_dofs = Vec::new();
        for d in 0..ndofs {
            if !mask[d] {
                free_index[d] = free_dofs.len() as u32;
                free_dofs.push(d);
            }
        }
        let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); mesh.num_nodes()];
        for el in &mesh.elements {
            for &a in &el.conn {
                neighbors[a].extend_from_slice(&el.conn);
            }
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
            nb.dedup();
        }
        let mut col_ptr = vec![0];
        let mut row_idx = Vec::new();
        for &d in &free_dofs {
            let mut rows: Vec<usize> = neighbors[d / 3]
                .iter()
                .flat_map(|&m| [3 * m, 3 * m + 1, 3 * m + 2])
                .filter_map(|r| (free_index[r] != NONE).then_some(free_index[r] as usize))
                .collect();
            rows.sort_unstable();
            row_idx.extend(rows);
            col_ptr.push(row_idx.len());
        }
        let element_maps = mesh
            .elements
            .iter()
            .map(|el| {
                let mut map = Box::new([NONE; 576]);
                for i in 0..24 {
                    let r = free_index[3 * el.conn[i / 3] + i % 3];
                    if r == NONE {
                        continue;
                    }
                    for j in 0..24 {
                        let c = free_index[3 * el.conn[j / 3] + j % 3];
                        if c == NONE {
                            continue;
                        }
                        let c = c as usize;
                        let rows = &row_idx[col_ptr[c]..col_ptr[c + 1]];
                        let pos = rows.binary_search(&(r as usize)).expect("pattern covers element");
                        map[24 * i + j] = (col_ptr[c] + pos) as u32;
                    }
                }
                map
            })
            .collect();
        Ok(Assembler {
            free_index,
            free_dofs,
            col_ptr,
            row_idx,
            element_maps,
        })
    }

    pub fn num_free(&self) -> usize {
        self.free_dofs.len()
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free_dofs.iter().map(|&d| full[d]).collect()
    }

    fn scatter_matrix(&self, values: &mut [f64], e: usize, k: &ElementMatrix) {
        let map = &self.element_maps[e];
        for i in 0..24 {
            for j in 0..24 {
                let p = map[24 * i + j];
                if p != NONE {
                    values[p as usize] += k[(i, j)];
                }
            }
        }
    }

    /// Add `scale * block` of a facet into the element's tangent entries.
    pub fn add_facet_block(&self, values: &mut [f64], facet: Facet, block: &FacetBlock, scale: f64) {
        let map = &self.element_maps[facet.element];
        let local = HEX_FACES[facet.face];
        for (a, la) in local.iter().enumerate() {
            for (b, lb) in local.iter().enumerate() {
                for i in 0..3 {
                    for j in 0..3 {
                        let p = map[24 * (3 * la + i) + 3 * lb + j];
                        if p != NONE {
                            values[p as usize] += scale * block[a][b][(i, j)];
                        }
                    }
                }
            }
        }
    }

    /// Internal force (all `3N` dofs) and the material plus geometric tangent over free dofs.
    pub fn internal_with_tangent(&self, model: &Model, u: &[Vector3<f64>], values: &mut [f64]) -> Result<Vec<f64>> {
        values.iter_mut().for_each(|v| *v = 0.0);
        let mut out = vec![0.0; model.mesh.num_dofs()];
        for_each_element(
            model.mesh.elements.len(),
            |e| with_element(model, e, u, |el| element_force_tangent(el, model.materials.get(model.mesh.elements[e].region))),
            |e, (f, k)| {
                scatter_vec(&mut out, &model.mesh.elements[e].conn, &f, 1.0);
                self.scatter_matrix(values, e, &k);
            },
        )?;
        Ok(out)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::fem::hex8::NODE_SIGNS;
    use crate::fem::RegionMaterials;
    use crate::geometry::{Element, Mesh};
    use crate::material::MaterialParams;
    use std::collections::BTreeMap;

    /// Two unit cubes side by side along x.
    pub(crate) fn two_cubes(region: Region) -> Mesh {
        let mut nodes = Vec::new();
        for k in 0..2 {
            for j in 0..2 {
                for i in 0..3 {
                    nodes.push(Vector3::new(i as f64, j as f64, k as f64));
                }
            }
        }
        let id = |i: usize, j: usize, k: usize| k * 6 + j * 3 + i;
        let elements = (0..2)
            .map(|e| Element {
                conn: NODE_SIGNS.map(|s| {
                    id(e + (s[0] > 0.0) as usize, (s[1] > 0.0) as usize, (s[2] > 0.0) as usize)
                }),
                region,
            })
            .collect();
        Mesh {
            nodes,
            elements,
            facets: BTreeMap::new(),
            node_sets: BTreeMap::new(),
        }
    }

    fn materials() -> RegionMaterials {
        RegionMaterials::new(MaterialParams::new(10.0, 0.275, 0.04, 200.0).unwrap(), &Default::default())
    }

    #[test]
    fn patch_test_interface_forces_cancel() {
        let mesh = two_cubes(Region::Limbus);
        let model = Model::new(mesh.clone(), materials()).unwrap();
        let u: Vec<_> = mesh.nodes.iter().map(|x| Vector3::new(0.1 * x.x, -0.03 * x.y, -0.03 * x.z)).collect();
        let f = assemble_internal(&model, &u).unwrap();
        // single-element oracle: one cube under the same homogeneous deformation
        let one = Model::new(
            Mesh {
                nodes: NODE_SIGNS.iter().map(|s| Vector3::new((s[0] + 1.0) / 2.0, (s[1] + 1.0) / 2.0, (s[2] + 1.0) / 2.0)).collect(),
                elements: vec![Element { conn: [0, 1, 2, 3, 4, 5, 6, 7], region: Region::Limbus }],
                facets: BTreeMap::new(),
                node_sets: BTreeMap::new(),
            },
            materials(),
        )
        .unwrap();
        let u1: Vec<_> = one.mesh.nodes.iter().map(|x| Vector3::new(0.1 * x.x, -0.03 * x.y, -0.03 * x.z)).collect();
        let f1 = assemble_internal(&one, &u1).unwrap();
        for (n, x) in mesh.nodes.iter().enumerate() {
            let got = Vector3::new(f[3 * n], f[3 * n + 1], f[3 * n + 2]);
            if x.x == 1.0 {
                // interface nodes: x-forces cancel, y/z forces add from both sides
                assert!(got.x.abs() < 1e-12, "{got}");
            } else {
                let m = one.mesh.nodes.iter().position(|y| (y.x == 0.0) == (x.x == 0.0) && y.y == x.y && y.z == x.z).unwrap();
                let want = Vector3::new(f1[3 * m], f1[3 * m + 1], f1[3 * m + 2]);
                assert!((got - want).norm() < 1e-12, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn permutation_invariance() {
        let mesh = two_cubes(Region::Cornea);
        let mut swapped = mesh.clone();
        swapped.elements.swap(0, 1);
        let u: Vec<_> = mesh.nodes.iter().map(|x| Vector3::new(0.02 * x.y * x.z, 0.01 * x.x, -0.02 * x.x * x.y)).collect();
        let a = assemble_internal(&Model::new(mesh, materials()).unwrap(), &u).unwrap();
        let b = assemble_internal(&Model::new(swapped, materials()).unwrap(), &u).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn split_reassembles_internal_force() {
        let mut mesh = two_cubes(Region::Cornea);
        mesh.elements[1].region = Region::Sclera;
        let model = Model::new(mesh.clone(), materials()).unwrap();
        let u: Vec<_> = mesh.nodes.iter().map(|x| Vector3::new(0.03 * x.x + 0.01 * x.z, -0.01 * x.y, 0.02 * x.x * x.y)).collect();
        let f = assemble_internal(&model, &u).unwrap();
        let s = assemble_split(&model, &u, 200.0).unwrap();
        let scale = f.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for i in 0..f.len() {
            let rec = s.c0[i] + 10.0 * s.c_k[i] + 0.275 * s.c_mu[i] + 0.04 * s.c_k1[i];
            assert!((rec - f[i]).abs() <= 1e-12 * scale);
        }
        // volumetric column equals a direct volumetric-only assembly
        let vol = RegionMaterials::new(MaterialParams::new(1.0, 0.0, 0.0, 200.0).unwrap(), &Default::default());
        let cornea_only = Model::new(
            Mesh { elements: vec![mesh.elements[0]], ..mesh.clone() },
            vol,
        )
        .unwrap();
        let direct = assemble_internal(&cornea_only, &u).unwrap();
        for i in 0..f.len() {
            assert!((direct[i] - s.c_k[i]).abs() < 1e-14);
        }
        let zero = assemble_split(&model, &vec![Vector3::zeros(); mesh.num_nodes()], 200.0).unwrap();
        assert!(zero.c_k.iter().chain(&zero.c_mu).chain(&zero.c_k1).chain(&zero.c0).all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn pattern_is_symmetric_and_covers_elements() {
        let mesh = two_cubes(Region::Lens);
        let model = Model::new(mesh, materials()).unwrap();
        let bcs = BoundaryConditions {
            fixed_nodes: vec![0, 6],
            ..Default::default()
        };
        let asm = Assembler::new(&model, &bcs).unwrap();
        assert_eq!(asm.num_free(), 36 - 6);
        let mut entries = std::collections::BTreeSet::new();
        for c in 0..asm.num_free() {
            for p in asm.col_ptr[c]..asm.col_ptr[c + 1] {
                entries.insert((asm.row_idx[p], c));
            }
        }
        assert!(entries.iter().all(|(r, c)| entries.contains(&(*c, *r))));
    }
}
