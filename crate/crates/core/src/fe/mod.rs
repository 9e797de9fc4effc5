//! Finite element spaces on tetrahedral meshes and their boundary surfaces.
//!
//! Supported families: continuous Lagrange (degree 1..3), discontinuous
//! Galerkin with per-cell orthonormal bases, Raviart-Thomas H(div) elements,
//! first-kind Nedelec H(curl) elements, and the surface counterparts used
//! for trace data (surface Lagrange, surface DG, rotated surface RT).
//!
//! DOF functionals are attached to global mesh entities and defined through
//! the entity's own geometry (ascending vertex order), so no reference-cell
//! orientation bookkeeping is needed and conformity across cells is
//! automatic. Local bases are recovered by inverting the generalized
//! Vandermonde matrix of the functionals against monomial generators.

pub mod assemble;
pub mod entity;
pub mod gens;

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector3};

use crate::mesh::surface::SurfaceMesh;
use crate::mesh::Mesh;
use entity::{CellBasis, EdgeBasis, TriBasis};
use gens::{ScalarGens, SurfScalarGens, SurfVectorGens, VectorGens};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Continuous Lagrange, degree 1..=3.
    Lagrange,
    /// Discontinuous, per-cell L2-orthonormal basis, degree 0..=1.
    Dg,
    /// Raviart-Thomas H(div), index 0..=1.
    RaviartThomas,
    /// First-kind Nedelec H(curl), index 0..=1.
    Nedelec,
    /// Continuous Lagrange on the boundary surface, degree 1..=2.
    SurfLagrange,
    /// Discontinuous orthonormal basis on boundary triangles, degree 0..=1.
    SurfDg,
    /// Rotated Raviart-Thomas on the boundary (tangential trace space),
    /// index 0..=1.
    SurfRt,
}

/// Global mesh entity a DOF is attached to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DofEntity {
    Vertex(usize),
    Edge(usize),
    Face(usize),
    Cell(usize),
    SVertex(usize),
    SEdge(usize),
    STri(usize),
}

#[derive(Debug, Clone)]
pub struct ScalarVals {
    /// values[(local dof, point)]
    pub values: DMatrix<f64>,
    /// grads[local dof][point]; tangential gradient for surface families
    pub grads: Vec<Vec<Vector3<f64>>>,
}

#[derive(Debug, Clone)]
pub struct VectorVals {
    pub values: Vec<Vec<Vector3<f64>>>,
    /// divergence (surface divergence for the rotated surface family)
    pub divs: DMatrix<f64>,
    /// curl; empty for surface families
    pub curls: Vec<Vec<Vector3<f64>>>,
}

#[derive(Debug)]
pub struct FESpace {
    pub family: Family,
    /// Polynomial degree for Lagrange families, family index k otherwise.
    pub degree: u32,
    pub mesh: Option<Arc<Mesh>>,
    pub surf: Option<Arc<SurfaceMesh>>,
    pub ndof: usize,
    /// Global DOF ids per element (volume cell or surface triangle).
    pub elem_dofs: Vec<Vec<usize>>,
    /// coeff[elem][(generator, local dof)]: local basis in generator span.
    pub coeff: Vec<DMatrix<f64>>,
    pub dof_entity: Vec<DofEntity>,
    /// Marks the mean-zero subspace of the surface DG family; enforced by
    /// the operators that consume the space, not by the DOF layout.
    pub mean_zero: bool,
    face_tb: HashMap<usize, TriBasis>,
    edge_eb: HashMap<usize, EdgeBasis>,
    cell_cb: Vec<CellBasis>,
    tri_tb: Vec<TriBasis>,
    sedge_eb: HashMap<usize, EdgeBasis>,
    svertex_ids: Vec<usize>,
    svertex_of: HashMap<usize, usize>,
}

fn vvec(p: [f64; 3]) -> Vector3<f64> {
    Vector3::from(p)
}

impl FESpace {
    /// Build a volume space. `degree` is the Lagrange polynomial degree for
    /// `Family::Lagrange`, otherwise the family index k.
    pub fn volume(mesh: &Arc<Mesh>, family: Family, degree: u32) -> Arc<FESpace> {
        match family {
            Family::Lagrange => assert!((1..=3).contains(&degree), "Lagrange degree 1..=3"),
            Family::Dg | Family::RaviartThomas | Family::Nedelec => {
                assert!(degree <= 1, "family index 0 or 1")
            }
            _ => panic!("{family:?} is a surface family"),
        }
        let mut sp = FESpace {
            family,
            degree,
            mesh: Some(mesh.clone()),
            surf: None,
            ndof: 0,
            elem_dofs: Vec::new(),
            coeff: Vec::new(),
            dof_entity: Vec::new(),
            mean_zero: false,
            face_tb: HashMap::new(),
            edge_eb: HashMap::new(),
            cell_cb: Vec::new(),
            tri_tb: Vec::new(),
            sedge_eb: HashMap::new(),
            svertex_ids: Vec::new(),
            svertex_of: HashMap::new(),
        };
        sp.build_volume_layout();
        sp.fit_local_bases();
        Arc::new(sp)
    }

    /// Build a surface space on the boundary triangulation.
    pub fn surface(surf: &Arc<SurfaceMesh>, family: Family, degree: u32) -> Arc<FESpace> {
        match family {
            Family::SurfLagrange => assert!((1..=2).contains(&degree)),
            Family::SurfDg | Family::SurfRt => assert!(degree <= 1),
            _ => panic!("{family:?} is a volume family"),
        }
        let mut sp = FESpace {
            family,
            degree,
            mesh: None,
            surf: Some(surf.clone()),
            ndof: 0,
            elem_dofs: Vec::new(),
            coeff: Vec::new(),
            dof_entity: Vec::new(),
            mean_zero: false,
            face_tb: HashMap::new(),
            edge_eb: HashMap::new(),
            cell_cb: Vec::new(),
            tri_tb: Vec::new(),
            sedge_eb: HashMap::new(),
            svertex_ids: Vec::new(),
            svertex_of: HashMap::new(),
        };
        sp.build_surface_layout();
        sp.fit_local_bases();
        Arc::new(sp)
    }

    pub fn is_scalar(&self) -> bool {
        matches!(
            self.family,
            Family::Lagrange | Family::Dg | Family::SurfLagrange | Family::SurfDg
        )
    }

    pub fn is_surface(&self) -> bool {
        self.surf.is_some()
    }

    /// Maximal polynomial degree of the local basis.
    pub fn poly_deg(&self) -> u32 {
        match self.family {
            Family::Lagrange | Family::SurfLagrange => self.degree,
            Family::Dg | Family::SurfDg => self.degree,
            Family::RaviartThomas | Family::Nedelec | Family::SurfRt => self.degree + 1,
        }
    }

    pub fn n_elems(&self) -> usize {
        self.elem_dofs.len()
    }

    // ---- layout -----------------------------------------------------------

    fn build_volume_layout(&mut self) {
        let mesh = self.mesh.clone().unwrap();
        let d = self.degree as usize;
        match self.family {
            Family::Lagrange => {
                let nv = mesh.vertices.len();
                let ne = mesh.edges.len();
                let per_edge = d - 1;
                self.ndof = nv
                    + ne * per_edge
                    + if d == 3 { mesh.faces.len() } else { 0 };
                self.dof_entity = Vec::with_capacity(self.ndof);
                for v in 0..nv {
                    self.dof_entity.push(DofEntity::Vertex(v));
                }
                for e in 0..ne {
                    for _ in 0..per_edge {
                        self.dof_entity.push(DofEntity::Edge(e));
                    }
                }
                if d == 3 {
                    for f in 0..mesh.faces.len() {
                        self.dof_entity.push(DofEntity::Face(f));
                    }
                }
                for c in 0..mesh.cells.len() {
                    let mut dofs = Vec::new();
                    for &v in &mesh.cells[c] {
                        dofs.push(v);
                    }
                    for &e in &mesh.cell_edges[c] {
                        for j in 0..per_edge {
                            dofs.push(nv + e * per_edge + j);
                        }
                    }
                    if d == 3 {
                        for &f in &mesh.cell_faces[c] {
                            dofs.push(nv + ne * per_edge + f);
                        }
                    }
                    self.elem_dofs.push(dofs);
                }
            }
            Family::Dg => {
                let nk = gens::exps3(self.degree).len();
                self.ndof = mesh.cells.len() * nk;
                for c in 0..mesh.cells.len() {
                    let dofs: Vec<usize> = (0..nk).map(|j| c * nk + j).collect();
                    for _ in 0..nk {
                        self.dof_entity.push(DofEntity::Cell(c));
                    }
                    self.elem_dofs.push(dofs);
                }
            }
            Family::RaviartThomas => {
                let k = self.degree;
                let nf = ((k + 1) * (k + 2) / 2) as usize;
                let n_face_dofs = mesh.faces.len() * nf;
                let per_cell = if k == 1 { 3 } else { 0 };
                self.ndof = n_face_dofs + mesh.cells.len() * per_cell;
                for f in 0..mesh.faces.len() {
                    for _ in 0..nf {
                        self.dof_entity.push(DofEntity::Face(f));
                    }
                    let [a, b, c] = mesh.faces[f];
                    self.face_tb.insert(
                        f,
                        TriBasis::new(mesh.vertices[a], mesh.vertices[b], mesh.vertices[c], k),
                    );
                }
                for c in 0..mesh.cells.len() {
                    for _ in 0..per_cell {
                        self.dof_entity.push(DofEntity::Cell(c));
                    }
                    let mut dofs = Vec::new();
                    for &f in &mesh.cell_faces[c] {
                        for j in 0..nf {
                            dofs.push(f * nf + j);
                        }
                    }
                    for a in 0..per_cell {
                        dofs.push(n_face_dofs + c * per_cell + a);
                    }
                    self.elem_dofs.push(dofs);
                }
            }
            Family::Nedelec => {
                let k = self.degree;
                let ne_per = (k + 1) as usize;
                let n_edge_dofs = mesh.edges.len() * ne_per;
                let per_face = if k == 1 { 2 } else { 0 };
                self.ndof = n_edge_dofs + mesh.faces.len() * per_face;
                for e in 0..mesh.edges.len() {
                    for _ in 0..ne_per {
                        self.dof_entity.push(DofEntity::Edge(e));
                    }
                    let [a, b] = mesh.edges[e];
                    self.edge_eb
                        .insert(e, EdgeBasis::new(mesh.vertices[a], mesh.vertices[b], k));
                }
                if per_face > 0 {
                    for f in 0..mesh.faces.len() {
                        for _ in 0..per_face {
                            self.dof_entity.push(DofEntity::Face(f));
                        }
                        let [a, b, c] = mesh.faces[f];
                        self.face_tb.insert(
                            f,
                            TriBasis::new(mesh.vertices[a], mesh.vertices[b], mesh.vertices[c], 0),
                        );
                    }
                }
                for c in 0..mesh.cells.len() {
                    let mut dofs = Vec::new();
                    for &e in &mesh.cell_edges[c] {
                        for j in 0..ne_per {
                            dofs.push(e * ne_per + j);
                        }
                    }
                    if per_face > 0 {
                        for &f in &mesh.cell_faces[c] {
                            for a in 0..per_face {
                                dofs.push(n_edge_dofs + f * per_face + a);
                            }
                        }
                    }
                    self.elem_dofs.push(dofs);
                }
            }
            _ => unreachable!(),
        }
        for c in 0..mesh.cells.len() {
            self.cell_cb.push(CellBasis::new(
                mesh.cell_coords(c),
                match self.family {
                    Family::Dg => self.degree,
                    _ => 1,
                },
            ));
        }
    }

    fn build_surface_layout(&mut self) {
        let surf = self.surf.clone().unwrap();
        let verts = &surf.mesh.vertices;
        for t in 0..surf.n_triangles() {
            let [a, b, c] = surf.triangles[t];
            self.tri_tb.push(TriBasis::new(
                verts[a],
                verts[b],
                verts[c],
                match self.family {
                    Family::SurfDg => self.degree,
                    Family::SurfRt => self.degree,
                    Family::SurfLagrange => self.degree.min(1),
                    _ => unreachable!(),
                },
            ));
        }
        match self.family {
            Family::SurfLagrange => {
                let mut vs: Vec<usize> = surf
                    .triangles
                    .iter()
                    .flat_map(|t| t.iter().copied())
                    .collect();
                vs.sort_unstable();
                vs.dedup();
                self.svertex_of = vs.iter().enumerate().map(|(i, &v)| (v, i)).collect();
                self.svertex_ids = vs;
                let nsv = self.svertex_ids.len();
                let d = self.degree as usize;
                let per_edge = d - 1;
                self.ndof = nsv + surf.edges.len() * per_edge;
                for &v in &self.svertex_ids {
                    self.dof_entity.push(DofEntity::SVertex(v));
                }
                for e in 0..surf.edges.len() {
                    for _ in 0..per_edge {
                        self.dof_entity.push(DofEntity::SEdge(e));
                    }
                }
                for t in 0..surf.n_triangles() {
                    let mut dofs = Vec::new();
                    for &v in &surf.triangles[t] {
                        dofs.push(self.svertex_of[&v]);
                    }
                    for &e in &surf.tri_edges[t] {
                        for j in 0..per_edge {
                            dofs.push(nsv + e * per_edge + j);
                        }
                    }
                    self.elem_dofs.push(dofs);
                }
            }
            Family::SurfDg => {
                let nk = gens::exps2(self.degree).len();
                self.ndof = surf.n_triangles() * nk;
                for t in 0..surf.n_triangles() {
                    for _ in 0..nk {
                        self.dof_entity.push(DofEntity::STri(t));
                    }
                    self.elem_dofs.push((0..nk).map(|j| t * nk + j).collect());
                }
            }
            Family::SurfRt => {
                let k = self.degree;
                let ne_per = (k + 1) as usize;
                let n_edge_dofs = surf.edges.len() * ne_per;
                let per_tri = if k == 1 { 2 } else { 0 };
                self.ndof = n_edge_dofs + surf.n_triangles() * per_tri;
                for e in 0..surf.edges.len() {
                    for _ in 0..ne_per {
                        self.dof_entity.push(DofEntity::SEdge(e));
                    }
                    let [a, b] = surf.edges[e];
                    self.sedge_eb
                        .insert(e, EdgeBasis::new(verts[a], verts[b], k));
                }
                for t in 0..surf.n_triangles() {
                    for _ in 0..per_tri {
                        self.dof_entity.push(DofEntity::STri(t));
                    }
                    let mut dofs = Vec::new();
                    for &e in &surf.tri_edges[t] {
                        for j in 0..ne_per {
                            dofs.push(e * ne_per + j);
                        }
                    }
                    for a in 0..per_tri {
                        dofs.push(n_edge_dofs + t * per_tri + a);
                    }
                    self.elem_dofs.push(dofs);
                }
            }
            _ => unreachable!(),
        }
    }

    // ---- local DOF functionals -------------------------------------------

    /// Apply every local DOF functional of element `e` to a scalar field.
    pub fn apply_dofs_scalar(
        &self,
        e: usize,
        f: &dyn Fn(Vector3<f64>) -> f64,
        field_deg: u32,
    ) -> Vec<f64> {
        match self.family {
            Family::Lagrange => self
                .lagrange_nodes(e)
                .into_iter()
                .map(|x| f(x))
                .collect(),
            Family::Dg => {
                let cb = &self.cell_cb[e];
                let (xs, ws) = cb.quad(field_deg + self.degree);
                (0..cb.ndof())
                    .map(|j| {
                        xs.iter()
                            .zip(&ws)
                            .map(|(x, w)| w * f(*x) * cb.val(j, *x))
                            .sum()
                    })
                    .collect()
            }
            Family::SurfLagrange => self
                .surf_lagrange_nodes(e)
                .into_iter()
                .map(|x| f(x))
                .collect(),
            Family::SurfDg => {
                let tb = &self.tri_tb[e];
                let (xs, ws) = tb.quad(field_deg + self.degree);
                (0..tb.ndof())
                    .map(|j| {
                        xs.iter()
                            .zip(&ws)
                            .map(|(x, w)| w * f(*x) * tb.val(j, *x))
                            .sum()
                    })
                    .collect()
            }
            _ => panic!("scalar functionals on a vector family"),
        }
    }

    /// Apply every local DOF functional of element `e` to a vector field.
    pub fn apply_dofs_vector(
        &self,
        e: usize,
        f: &dyn Fn(Vector3<f64>) -> Vector3<f64>,
        field_deg: u32,
    ) -> Vec<f64> {
        let k = self.degree;
        let mut out = Vec::new();
        match self.family {
            Family::RaviartThomas => {
                let mesh = self.mesh.as_ref().unwrap();
                for &fc in &mesh.cell_faces[e] {
                    let tb = &self.face_tb[&fc];
                    let n = tb.frame.n;
                    let (xs, ws) = tb.quad(field_deg + k);
                    for j in 0..tb.ndof() {
                        out.push(
                            xs.iter()
                                .zip(&ws)
                                .map(|(x, w)| w * f(*x).dot(&n) * tb.val(j, *x))
                                .sum(),
                        );
                    }
                }
                if k == 1 {
                    let cb = &self.cell_cb[e];
                    let (xs, ws) = cb.quad(field_deg);
                    let s = 1.0 / cb.volume.sqrt();
                    for a in 0..3 {
                        out.push(
                            xs.iter().zip(&ws).map(|(x, w)| w * f(*x)[a] * s).sum(),
                        );
                    }
                }
            }
            Family::Nedelec => {
                let mesh = self.mesh.as_ref().unwrap();
                for &ed in &mesh.cell_edges[e] {
                    let eb = &self.edge_eb[&ed];
                    let t = eb.tangent();
                    let (ts, xs, ws) = eb.quad(field_deg);
                    for j in 0..eb.ndof() {
                        out.push(
                            (0..xs.len())
                                .map(|q| ws[q] * f(xs[q]).dot(&t) * eb.val(j, ts[q]))
                                .sum(),
                        );
                    }
                }
                if k == 1 {
                    for &fc in &mesh.cell_faces[e] {
                        let tb = &self.face_tb[&fc];
                        let (xs, ws) = tb.quad(field_deg);
                        let s = 1.0 / tb.frame.area.sqrt();
                        for t in [tb.frame.t1, tb.frame.t2] {
                            out.push(
                                xs.iter()
                                    .zip(&ws)
                                    .map(|(x, w)| w * f(*x).dot(&t) * s)
                                    .sum(),
                            );
                        }
                    }
                }
            }
            Family::SurfRt => {
                let surf = self.surf.as_ref().unwrap();
                let n_out = surf.normals[e];
                for &ed in &surf.tri_edges[e] {
                    let eb = &self.sedge_eb[&ed];
                    // conormal in this triangle's plane, from the triangle's
                    // outward normal; single-valued on tangential traces
                    let nu = eb.tangent().cross(&n_out);
                    let (ts, xs, ws) = eb.quad(field_deg);
                    for j in 0..eb.ndof() {
                        out.push(
                            (0..xs.len())
                                .map(|q| ws[q] * f(xs[q]).dot(&nu) * eb.val(j, ts[q]))
                                .sum(),
                        );
                    }
                }
                if k == 1 {
                    let tb = &self.tri_tb[e];
                    let (xs, ws) = tb.quad(field_deg);
                    let s = 1.0 / tb.frame.area.sqrt();
                    for t in [tb.frame.t1, tb.frame.t2] {
                        let m = t.cross(&n_out) * s;
                        out.push(
                            xs.iter().zip(&ws).map(|(x, w)| w * f(*x).dot(&m)).sum(),
                        );
                    }
                }
            }
            _ => panic!("vector functionals on a scalar family"),
        }
        out
    }

    fn lagrange_nodes(&self, c: usize) -> Vec<Vector3<f64>> {
        let mesh = self.mesh.as_ref().unwrap();
        let d = self.degree;
        let mut nodes: Vec<Vector3<f64>> =
            mesh.cells[c].iter().map(|&v| vvec(mesh.vertices[v])).collect();
        if d >= 2 {
            for &e in &mesh.cell_edges[c] {
                let [a, b] = mesh.edges[e];
                let (pa, pb) = (vvec(mesh.vertices[a]), vvec(mesh.vertices[b]));
                if d == 2 {
                    nodes.push((pa + pb) / 2.0);
                } else {
                    nodes.push(pa + (pb - pa) / 3.0);
                    nodes.push(pa + (pb - pa) * (2.0 / 3.0));
                }
            }
        }
        if d == 3 {
            for &f in &mesh.cell_faces[c] {
                let [a, b, cc] = mesh.faces[f];
                nodes.push(
                    (vvec(mesh.vertices[a]) + vvec(mesh.vertices[b]) + vvec(mesh.vertices[cc]))
                        / 3.0,
                );
            }
        }
        nodes
    }

    fn surf_lagrange_nodes(&self, t: usize) -> Vec<Vector3<f64>> {
        let surf = self.surf.as_ref().unwrap();
        let verts = &surf.mesh.vertices;
        let mut nodes: Vec<Vector3<f64>> = surf.triangles[t]
            .iter()
            .map(|&v| vvec(verts[v]))
            .collect();
        if self.degree == 2 {
            for &e in &surf.tri_edges[t] {
                let [a, b] = surf.edges[e];
                nodes.push((vvec(verts[a]) + vvec(verts[b])) / 2.0);
            }
        }
        nodes
    }

    // ---- Vandermonde fit --------------------------------------------------

    fn fit_local_bases(&mut self) {
        let pdeg = self.poly_deg();
        for e in 0..self.n_elems() {
            let nloc = self.elem_dofs[e].len();
            let mut v = DMatrix::zeros(nloc, nloc);
            if self.is_scalar() {
                let g = self.scalar_gens(e);
                assert_eq!(self.scalar_gen_len(&g), nloc, "generator/DOF count mismatch");
                for m in 0..nloc {
                    let col = self.apply_dofs_scalar(e, &|x| self.scalar_gen_val(e, &g, m, x), pdeg);
                    for i in 0..nloc {
                        v[(i, m)] = col[i];
                    }
                }
            } else {
                let g = self.vector_gens(e);
                assert_eq!(self.vec_gen_len(&g), nloc, "generator/DOF count mismatch");
                for m in 0..nloc {
                    let col =
                        self.apply_dofs_vector(e, &|x| self.vec_gen_val(&g, m, x), pdeg);
                    for i in 0..nloc {
                        v[(i, m)] = col[i];
                    }
                }
            }
            let inv = v
                .try_inverse()
                .unwrap_or_else(|| panic!("singular local Vandermonde on element {e}"));
            self.coeff.push(inv);
        }
    }

    // ---- evaluation -------------------------------------------------------

    /// Values and gradients of all local basis functions at physical points.
    pub fn eval_scalar_basis(&self, e: usize, pts: &[Vector3<f64>]) -> ScalarVals {
        assert!(self.is_scalar());
        let g = self.scalar_gens(e);
        let n = self.scalar_gen_len(&g);
        let coeff = &self.coeff[e];
        let mut values = DMatrix::zeros(n, pts.len());
        let mut grads = vec![vec![Vector3::zeros(); pts.len()]; n];
        for (q, x) in pts.iter().enumerate() {
            for m in 0..n {
                let gv = self.scalar_gen_val(e, &g, m, *x);
                let gg = self.scalar_gen_grad(e, &g, m, *x);
                for j in 0..n {
                    let c = coeff[(m, j)];
                    if c != 0.0 {
                        values[(j, q)] += c * gv;
                        grads[j][q] += c * gg;
                    }
                }
            }
        }
        ScalarVals { values, grads }
    }

    /// Values, divergences and curls of all local basis functions.
    pub fn eval_vector_basis(&self, e: usize, pts: &[Vector3<f64>]) -> VectorVals {
        assert!(!self.is_scalar());
        let g = self.vector_gens(e);
        let n = self.vec_gen_len(&g);
        let coeff = &self.coeff[e];
        let with_curl = matches!(self.family, Family::RaviartThomas | Family::Nedelec);
        let mut values = vec![vec![Vector3::zeros(); pts.len()]; n];
        let mut divs = DMatrix::zeros(n, pts.len());
        let mut curls = if with_curl {
            vec![vec![Vector3::zeros(); pts.len()]; n]
        } else {
            Vec::new()
        };
        for (q, x) in pts.iter().enumerate() {
            for m in 0..n {
                let gv = self.vec_gen_val(&g, m, *x);
                let gd = self.vec_gen_div(&g, m, *x);
                let gc = if with_curl {
                    self.vec_gen_curl(&g, m, *x)
                } else {
                    Vector3::zeros()
                };
                for j in 0..n {
                    let c = coeff[(m, j)];
                    if c != 0.0 {
                        values[j][q] += c * gv;
                        divs[(j, q)] += c * gd;
                        if with_curl {
                            curls[j][q] += c * gc;
                        }
                    }
                }
            }
        }
        VectorVals { values, divs, curls }
    }

    /// Physical quadrature points and weights on element `e`, exact for
    /// polynomials of degree `deg`.
    pub fn elem_quad(&self, e: usize, deg: u32) -> (Vec<Vector3<f64>>, Vec<f64>) {
        if self.mesh.is_some() {
            self.cell_cb[e].quad(deg)
        } else {
            self.tri_tb[e].quad(deg)
        }
    }

    /// Outward normal of surface triangle `e` (surface families only).
    pub fn elem_normal(&self, e: usize) -> Vector3<f64> {
        self.surf.as_ref().unwrap().normals[e]
    }

    // ---- interpolation ----------------------------------------------------

    /// DOF interpolation of a scalar field; `field_deg` controls quadrature.
    pub fn interpolate_scalar(
        &self,
        f: &dyn Fn(Vector3<f64>) -> f64,
        field_deg: u32,
    ) -> DVector<f64> {
        let mut out = DVector::zeros(self.ndof);
        let mut seen = vec![false; self.ndof];
        for e in 0..self.n_elems() {
            let vals = self.apply_dofs_scalar(e, f, field_deg);
            for (i, &gd) in self.elem_dofs[e].iter().enumerate() {
                if !seen[gd] {
                    out[gd] = vals[i];
                    seen[gd] = true;
                }
            }
        }
        out
    }

    /// DOF interpolation of a vector field.
    pub fn interpolate_vector(
        &self,
        f: &dyn Fn(Vector3<f64>) -> Vector3<f64>,
        field_deg: u32,
    ) -> DVector<f64> {
        let mut out = DVector::zeros(self.ndof);
        let mut seen = vec![false; self.ndof];
        for e in 0..self.n_elems() {
            let vals = self.apply_dofs_vector(e, f, field_deg);
            for (i, &gd) in self.elem_dofs[e].iter().enumerate() {
                if !seen[gd] {
                    out[gd] = vals[i];
                    seen[gd] = true;
                }
            }
        }
        out
    }

    // ---- boundary ---------------------------------------------------------

    /// Global DOFs whose entity lies on the domain boundary (volume
    /// families). Sorted ascending.
    pub fn boundary_dofs(&self) -> Vec<usize> {
        let mesh = self.mesh.as_ref().expect("volume family");
        let bfaces: HashSet<usize> = mesh.boundary_faces.iter().copied().collect();
        let mut bverts: HashSet<usize> = HashSet::new();
        let mut bpairs: HashSet<(usize, usize)> = HashSet::new();
        for &f in &mesh.boundary_faces {
            let [a, b, c] = mesh.faces[f];
            bverts.extend([a, b, c]);
            for (x, y) in [(a, b), (a, c), (b, c)] {
                bpairs.insert((x.min(y), x.max(y)));
            }
        }
        let bedges: HashSet<usize> = mesh
            .edges
            .iter()
            .enumerate()
            .filter(|(_, &[a, b])| bpairs.contains(&(a, b)))
            .map(|(i, _)| i)
            .collect();
        let mut out = Vec::new();
        for (d, ent) in self.dof_entity.iter().enumerate() {
            let on = match *ent {
                DofEntity::Vertex(v) => bverts.contains(&v),
                DofEntity::Edge(e) => bedges.contains(&e),
                DofEntity::Face(f) => bfaces.contains(&f),
                DofEntity::Cell(_) => false,
                _ => false,
            };
            if on {
                out.push(d);
            }
        }
        out
    }

    /// Triangle orthonormal basis of a surface space (per triangle).
    pub fn tri_basis(&self, t: usize) -> &TriBasis {
        &self.tri_tb[t]
    }

    /// Face orthonormal basis used by the volume RT/Nedelec face DOFs.
    pub fn face_basis(&self, f: usize) -> &TriBasis {
        &self.face_tb[&f]
    }

    /// Per-cell orthonormal scalar basis (volume families).
    pub fn cell_basis(&self, c: usize) -> &CellBasis {
        &self.cell_cb[c]
    }
}

enum GenSet {
    Scalar(ScalarGens),
    DgScalar,
    SurfScalar(SurfScalarGens),
    Vector(VectorGens),
    SurfVector(SurfVectorGens),
}

impl FESpace {
    fn scalar_gens(&self, e: usize) -> GenSet {
        match self.family {
            Family::Lagrange => {
                let cb = &self.cell_cb[e];
                GenSet::Scalar(ScalarGens::new(self.degree, cb.center, cb.scale))
            }
            Family::Dg => GenSet::DgScalar,
            Family::SurfLagrange | Family::SurfDg => {
                let tb = &self.tri_tb[e];
                GenSet::SurfScalar(SurfScalarGens::new(self.degree, tb.frame, tb.scale))
            }
            _ => unreachable!(),
        }
    }

    fn vector_gens(&self, e: usize) -> GenSet {
        match self.family {
            Family::RaviartThomas => {
                let cb = &self.cell_cb[e];
                GenSet::Vector(VectorGens::raviart_thomas(self.degree, cb.center, cb.scale))
            }
            Family::Nedelec => {
                let cb = &self.cell_cb[e];
                GenSet::Vector(VectorGens::nedelec1(self.degree, cb.center, cb.scale))
            }
            Family::SurfRt => {
                let tb = &self.tri_tb[e];
                GenSet::SurfVector(SurfVectorGens::new(self.degree, tb.frame, tb.scale))
            }
            _ => unreachable!(),
        }
    }

    fn scalar_gen_len(&self, g: &GenSet) -> usize {
        match g {
            GenSet::Scalar(s) => s.len(),
            GenSet::DgScalar => gens::exps3(self.degree).len(),
            GenSet::SurfScalar(s) => s.exps.len(),
            _ => unreachable!(),
        }
    }

    fn vec_gen_len(&self, g: &GenSet) -> usize {
        match g {
            GenSet::Vector(v) => v.len(),
            GenSet::SurfVector(v) => v.len(),
            _ => unreachable!(),
        }
    }

    fn scalar_gen_val(&self, e: usize, g: &GenSet, m: usize, x: Vector3<f64>) -> f64 {
        match g {
            GenSet::Scalar(s) => s.val(m, x),
            GenSet::DgScalar => self.cell_cb[e].val(m, x),
            GenSet::SurfScalar(s) => s.val(m, x),
            _ => unreachable!(),
        }
    }

    fn scalar_gen_grad(&self, e: usize, g: &GenSet, m: usize, x: Vector3<f64>) -> Vector3<f64> {
        match g {
            GenSet::Scalar(s) => s.grad(m, x),
            GenSet::DgScalar => {
                // differentiate the monomial expansion of the orthonormal basis
                let cb = &self.cell_cb[e];
                let sg = ScalarGens { exps: cb.exps.clone(), center: cb.center, scale: cb.scale };
                let mut out = Vector3::zeros();
                for mm in 0..cb.exps.len() {
                    out += cb.coeff[(mm, m)] * sg.grad(mm, x);
                }
                out
            }
            GenSet::SurfScalar(s) => s.surf_grad(m, x),
            _ => unreachable!(),
        }
    }

    fn vec_gen_val(&self, g: &GenSet, m: usize, x: Vector3<f64>) -> Vector3<f64> {
        match g {
            GenSet::Vector(v) => v.val(m, x),
            GenSet::SurfVector(v) => v.val(m, x),
            _ => unreachable!(),
        }
    }

    fn vec_gen_div(&self, g: &GenSet, m: usize, x: Vector3<f64>) -> f64 {
        match g {
            GenSet::Vector(v) => v.div(m, x),
            GenSet::SurfVector(v) => v.div(m, x),
            _ => unreachable!(),
        }
    }

    fn vec_gen_curl(&self, g: &GenSet, m: usize, x: Vector3<f64>) -> Vector3<f64> {
        match g {
            GenSet::Vector(v) => v.curl(m, x),
            GenSet::SurfVector(_) => Vector3::zeros(),
            _ => unreachable!(),
        }
    }
}

/// A finite element function: a space plus a coefficient vector.
#[derive(Debug, Clone)]
pub struct FEFunction {
    pub space: Arc<FESpace>,
    pub coeffs: DVector<f64>,
}

impl FEFunction {
    pub fn new(space: Arc<FESpace>, coeffs: DVector<f64>) -> Self {
        assert_eq!(space.ndof, coeffs.len());
        Self { space, coeffs }
    }

    pub fn zero(space: Arc<FESpace>) -> Self {
        let n = space.ndof;
        Self { space, coeffs: DVector::zeros(n) }
    }

    /// Point value on element `e` (scalar families).
    pub fn eval_scalar(&self, e: usize, x: Vector3<f64>) -> f64 {
        let sv = self.space.eval_scalar_basis(e, &[x]);
        self.space.elem_dofs[e]
            .iter()
            .enumerate()
            .map(|(j, &gd)| self.coeffs[gd] * sv.values[(j, 0)])
            .sum()
    }

    /// Point value on element `e` (vector families).
    pub fn eval_vector(&self, e: usize, x: Vector3<f64>) -> Vector3<f64> {
        let vv = self.space.eval_vector_basis(e, &[x]);
        let mut out = Vector3::zeros();
        for (j, &gd) in self.space.elem_dofs[e].iter().enumerate() {
            out += self.coeffs[gd] * vv.values[j][0];
        }
        out
    }

    /// Divergence (or surface divergence) on element `e`.
    pub fn eval_div(&self, e: usize, x: Vector3<f64>) -> f64 {
        let vv = self.space.eval_vector_basis(e, &[x]);
        self.space.elem_dofs[e]
            .iter()
            .enumerate()
            .map(|(j, &gd)| self.coeffs[gd] * vv.divs[(j, 0)])
            .sum()
    }

    /// Curl on element `e` (volume vector families).
    pub fn eval_curl(&self, e: usize, x: Vector3<f64>) -> Vector3<f64> {
        let vv = self.space.eval_vector_basis(e, &[x]);
        let mut out = Vector3::zeros();
        for (j, &gd) in self.space.elem_dofs[e].iter().enumerate() {
            out += self.coeffs[gd] * vv.curls[j][0];
        }
        out
    }
}

/// L2 projection onto a DG space. The per-cell basis is orthonormal, so the
/// projection coefficients are plain moments, i.e. DOF interpolation. For a
/// mean-zero surface DG space the constant component is removed.
pub fn l2_project_dg(space: &Arc<FESpace>, f: &dyn Fn(Vector3<f64>) -> f64, field_deg: u32) -> DVector<f64> {
    assert!(matches!(space.family, Family::Dg | Family::SurfDg));
    let mut c = space.interpolate_scalar(f, field_deg);
    if space.mean_zero {
        remove_surf_dg_mean(space, &mut c);
    }
    c
}

/// Subtract the global mean from a surface DG coefficient vector.
pub fn remove_surf_dg_mean(space: &Arc<FESpace>, c: &mut DVector<f64>) {
    assert_eq!(space.family, Family::SurfDg);
    let surf = space.surf.as_ref().unwrap();
    let nk = gens::exps2(space.degree).len();
    let total_area = surf.total_area();
    // constant mode on triangle t is 1/sqrt(area_t)
    let mut integral = 0.0;
    for t in 0..surf.n_triangles() {
        integral += c[t * nk] * surf.areas[t].sqrt();
    }
    let mean = integral / total_area;
    for t in 0..surf.n_triangles() {
        c[t * nk] -= mean * surf.areas[t].sqrt();
    }
}

/// Integral of a surface DG function over the whole boundary.
pub fn surf_dg_integral(space: &Arc<FESpace>, c: &DVector<f64>) -> f64 {
    assert_eq!(space.family, Family::SurfDg);
    let surf = space.surf.as_ref().unwrap();
    let nk = gens::exps2(space.degree).len();
    (0..surf.n_triangles())
        .map(|t| c[t * nk] * surf.areas[t].sqrt())
        .sum()
}
