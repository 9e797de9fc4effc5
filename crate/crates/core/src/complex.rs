//! Discrete de-Rham differential operators, volume-to-surface trace
//! operators, and exactness verification.
//!
//! All operators here are coefficient-level maps: the codomain DOF
//! functionals are applied to differentiated domain basis functions, so the
//! matrices represent the differentials exactly (the discrete spaces map
//! into each other under grad/curl/div).

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::Vector3;
use serde::Serialize;

use crate::fe::assemble::{assemble, BilinearKind};
use crate::fe::{DofEntity, FESpace, Family};
use crate::la::{rank, SparseBuilder, SparseMat};
use crate::mesh::Mesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffKind {
    /// W_h (Lagrange k+1) -> N_h (Nedelec k)
    Grad,
    /// N_h -> V_h (RT k)
    Curl,
    /// V_h -> U_h (DG k)
    Div,
    /// R_h (surface RT k) -> M_h (surface DG k)
    SurfDiv,
    /// P_h (surface Lagrange k+1) -> R_h
    SurfCurl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    /// gamma_n: V_h -> M_h, v |-> v . n_out
    Normal,
    /// gamma_t: N_h -> R_h, w |-> w x n_out
    Tangential,
}

/// Coefficient matrix of a differential operator (to.ndof x from.ndof).
pub fn diff_operator(kind: DiffKind, from: &Arc<FESpace>, to: &Arc<FESpace>) -> SparseMat {
    match kind {
        DiffKind::Div => {
            assert_eq!(from.family, Family::RaviartThomas);
            assert_eq!(to.family, Family::Dg);
            assert_eq!(from.degree, to.degree);
            // DG basis is orthonormal per cell, so the weak pairing with the
            // divergence IS the coefficient map.
            assemble(to, from, BilinearKind::DivMass, 1)
        }
        DiffKind::SurfDiv => {
            assert_eq!(from.family, Family::SurfRt);
            assert_eq!(to.family, Family::SurfDg);
            assert_eq!(from.degree, to.degree);
            assemble(to, from, BilinearKind::DivMass, 1)
        }
        DiffKind::Grad => {
            assert_eq!(from.family, Family::Lagrange);
            assert_eq!(to.family, Family::Nedelec);
            assert_eq!(from.degree, to.degree + 1);
            interp_map_vector(to, from, Quantity::Grad)
        }
        DiffKind::Curl => {
            assert_eq!(from.family, Family::Nedelec);
            assert_eq!(to.family, Family::RaviartThomas);
            assert_eq!(from.degree, to.degree);
            interp_map_vector(to, from, Quantity::Curl)
        }
        DiffKind::SurfCurl => {
            assert_eq!(from.family, Family::SurfLagrange);
            assert_eq!(to.family, Family::SurfRt);
            assert_eq!(from.degree, to.degree + 1);
            interp_map_vector(to, from, Quantity::SurfCurl)
        }
    }
}

enum Quantity {
    Grad,
    Curl,
    SurfCurl,
}

/// Apply the vector DOF functionals of `target` to a differentiated basis
/// function of `source`, elementwise. Shared target DOFs receive identical
/// values from every incident element (single-valuedness of the mapped
/// quantity), so overwriting is safe.
fn interp_map_vector(target: &Arc<FESpace>, source: &Arc<FESpace>, q: Quantity) -> SparseMat {
    assert_eq!(target.n_elems(), source.n_elems());
    let deg = target.poly_deg() + source.poly_deg();
    let mut b = SparseBuilder::new(target.ndof, source.ndof);
    for e in 0..target.n_elems() {
        let n_src = source.elem_dofs[e].len();
        for j in 0..n_src {
            let closure = |x: Vector3<f64>| -> Vector3<f64> {
                match q {
                    Quantity::Grad => source.eval_scalar_basis(e, &[x]).grads[j][0],
                    Quantity::Curl => source.eval_vector_basis(e, &[x]).curls[j][0],
                    Quantity::SurfCurl => {
                        let g = source.eval_scalar_basis(e, &[x]).grads[j][0];
                        let n = source.elem_normal(e);
                        g.cross(&n)
                    }
                }
            };
            let vals = target.apply_dofs_vector(e, &closure, deg);
            for (i, &td) in target.elem_dofs[e].iter().enumerate() {
                if vals[i].abs() > 1e-14 {
                    b.set(td, source.elem_dofs[e][j], vals[i]);
                }
            }
        }
    }
    b.build()
}

fn entity_dofs(space: &FESpace) -> HashMap<DofEntity, Vec<usize>> {
    let mut map: HashMap<DofEntity, Vec<usize>> = HashMap::new();
    for (d, &e) in space.dof_entity.iter().enumerate() {
        map.entry(e).or_default().push(d);
    }
    map
}

/// Coefficient matrix of a trace operator (to.ndof x from.ndof). By the DOF
/// design these are selection matrices: +-1 entries for the normal trace
/// (sign relating the face's intrinsic normal to the outward one), +1 for
/// the tangential trace.
pub fn trace_operator(kind: TraceKind, from: &Arc<FESpace>, to: &Arc<FESpace>) -> SparseMat {
    let surf = to.surf.as_ref().expect("trace target must be a surface space");
    let mesh = from.mesh.as_ref().expect("trace source must be a volume space");
    let mut b = SparseBuilder::new(to.ndof, from.ndof);
    let from_ents = entity_dofs(from);
    let to_ents = entity_dofs(to);
    match kind {
        TraceKind::Normal => {
            assert_eq!(from.family, Family::RaviartThomas);
            assert_eq!(to.family, Family::SurfDg);
            assert_eq!(from.degree, to.degree);
            for t in 0..surf.n_triangles() {
                let f = surf.parent_faces[t];
                let n_sorted = Vector3::from(mesh.face_normal_sorted(f));
                let sign = if surf.normals[t].dot(&n_sorted) > 0.0 { 1.0 } else { -1.0 };
                let td = &to_ents[&DofEntity::STri(t)];
                let fd = &from_ents[&DofEntity::Face(f)];
                assert_eq!(td.len(), fd.len());
                for (a, b_) in td.iter().zip(fd) {
                    b.set(*a, *b_, sign);
                }
            }
        }
        TraceKind::Tangential => {
            assert_eq!(from.family, Family::Nedelec);
            assert_eq!(to.family, Family::SurfRt);
            assert_eq!(from.degree, to.degree);
            let edge_id: HashMap<[usize; 2], usize> =
                mesh.edges.iter().enumerate().map(|(i, &e)| (e, i)).collect();
            for (se, &[a, bb]) in surf.edges.iter().enumerate() {
                let ve = edge_id[&[a, bb]];
                let td = &to_ents[&DofEntity::SEdge(se)];
                let fd = &from_ents[&DofEntity::Edge(ve)];
                assert_eq!(td.len(), fd.len());
                for (x, y) in td.iter().zip(fd) {
                    b.set(*x, *y, 1.0);
                }
            }
            if from.degree == 1 {
                for t in 0..surf.n_triangles() {
                    let f = surf.parent_faces[t];
                    let td = &to_ents[&DofEntity::STri(t)];
                    let fd = &from_ents[&DofEntity::Face(f)];
                    assert_eq!(td.len(), fd.len());
                    for (x, y) in td.iter().zip(fd) {
                        b.set(*x, *y, 1.0);
                    }
                }
            }
        }
    }
    b.build()
}

/// Exactness diagnostics for the complex W_h -> N_h -> V_h -> U_h, with and
/// without essential (zero-trace) boundary conditions.
#[derive(Debug, Clone, Serialize)]
pub struct ExactnessReport {
    pub k: u32,
    /// [dim W, dim N, dim V, dim U]
    pub dims: [usize; 4],
    /// [dim W0, dim N0, dim V0, dim U] for the zero-trace subcomplex
    pub bc_dims: [usize; 4],
    pub rank_grad: usize,
    pub rank_curl: usize,
    pub rank_div: usize,
    /// ker - range defect at each slot; all zero on a contractible domain
    pub full_defects: [i64; 4],
    /// defects of the essential-BC subcomplex (last slot against mean-zero U)
    pub bc_defects: [i64; 4],
    pub passed: bool,
}

fn submatrix(m: &nalgebra::DMatrix<f64>, rows: &[usize], cols: &[usize]) -> nalgebra::DMatrix<f64> {
    let mut out = nalgebra::DMatrix::zeros(rows.len(), cols.len());
    for (i, &r) in rows.iter().enumerate() {
        for (j, &c) in cols.iter().enumerate() {
            out[(i, j)] = m[(r, c)];
        }
    }
    out
}

fn complement(n: usize, sorted_subset: &[usize]) -> Vec<usize> {
    let mut mark = vec![false; n];
    for &i in sorted_subset {
        mark[i] = true;
    }
    (0..n).filter(|&i| !mark[i]).collect()
}

pub fn verify_exactness(mesh: &Arc<Mesh>, k: u32) -> ExactnessReport {
    let w = FESpace::volume(mesh, Family::Lagrange, k + 1);
    let n = FESpace::volume(mesh, Family::Nedelec, k);
    let v = FESpace::volume(mesh, Family::RaviartThomas, k);
    let u = FESpace::volume(mesh, Family::Dg, k);
    let g = diff_operator(DiffKind::Grad, &w, &n).to_dense();
    let c = diff_operator(DiffKind::Curl, &n, &v).to_dense();
    let d = diff_operator(DiffKind::Div, &v, &u).to_dense();
    let rg = rank(&g, 1e-9);
    let rc = rank(&c, 1e-9);
    let rd = rank(&d, 1e-9);
    let dims = [w.ndof, n.ndof, v.ndof, u.ndof];
    // contractible domain: ker grad = constants; thereafter ker = range
    let full_defects = [
        (w.ndof - rg) as i64 - 1,
        (n.ndof - rc) as i64 - rg as i64,
        (v.ndof - rd) as i64 - rc as i64,
        u.ndof as i64 - rd as i64,
    ];
    // essential-BC subcomplex: restrict to interior DOFs; the divergence of
    // zero-normal-trace fields fills exactly the mean-zero part of U_h
    let wi = complement(w.ndof, &w.boundary_dofs());
    let ni = complement(n.ndof, &n.boundary_dofs());
    let vi = complement(v.ndof, &v.boundary_dofs());
    let all_u: Vec<usize> = (0..u.ndof).collect();
    let g0 = submatrix(&g, &ni, &wi);
    let c0 = submatrix(&c, &vi, &ni);
    let d0 = submatrix(&d, &all_u, &vi);
    let rg0 = rank(&g0, 1e-9);
    let rc0 = rank(&c0, 1e-9);
    let rd0 = rank(&d0, 1e-9);
    let bc_dims = [wi.len(), ni.len(), vi.len(), u.ndof];
    let bc_defects = [
        (wi.len() - rg0) as i64,
        (ni.len() - rc0) as i64 - rg0 as i64,
        (vi.len() - rd0) as i64 - rc0 as i64,
        (u.ndof - 1) as i64 - rd0 as i64,
    ];
    let passed = full_defects.iter().all(|&x| x == 0) && bc_defects.iter().all(|&x| x == 0);
    ExactnessReport {
        k,
        dims,
        bc_dims,
        rank_grad: rg,
        rank_curl: rc,
        rank_div: rd,
        full_defects,
        bc_defects,
        passed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fe::FEFunction;
    use crate::mesh::generate::unit_cube_mesh;
    use crate::mesh::surface::boundary_triangulation;
    use nalgebra::DVector;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cube(n: usize) -> Arc<Mesh> {
        Arc::new(unit_cube_mesh(n))
    }

    fn randv(n: usize, seed: u64) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn grad_map_reproduces_pointwise_gradient() {
        let mesh = cube(1);
        for k in 0..=1u32 {
            let w = FESpace::volume(&mesh, Family::Lagrange, k + 1);
            let n = FESpace::volume(&mesh, Family::Nedelec, k);
            let g = diff_operator(DiffKind::Grad, &w, &n);
            let p = randv(w.ndof, 5);
            let u = FEFunction::new(w.clone(), p.clone());
            let gu = FEFunction::new(n.clone(), g.mul_vec(&p));
            for e in [0, 3] {
                let (pts, _) = w.elem_quad(e, 2);
                for x in pts {
                    let sv = w.eval_scalar_basis(e, &[x]);
                    let mut grad = Vector3::zeros();
                    for (j, &gd) in w.elem_dofs[e].iter().enumerate() {
                        grad += u.coeffs[gd] * sv.grads[j][0];
                    }
                    assert!((gu.eval_vector(e, x) - grad).norm() < 1e-9, "k={k}");
                }
            }
        }
    }

    #[test]
    fn curl_and_div_maps_reproduce_pointwise_values() {
        let mesh = cube(1);
        for k in 0..=1u32 {
            let n = FESpace::volume(&mesh, Family::Nedelec, k);
            let v = FESpace::volume(&mesh, Family::RaviartThomas, k);
            let u = FESpace::volume(&mesh, Family::Dg, k);
            let c = diff_operator(DiffKind::Curl, &n, &v);
            let d = diff_operator(DiffKind::Div, &v, &u);
            let wc = randv(n.ndof, 8);
            let w = FEFunction::new(n.clone(), wc.clone());
            let cw = FEFunction::new(v.clone(), c.mul_vec(&wc));
            let sigma = randv(v.ndof, 9);
            let s = FEFunction::new(v.clone(), sigma.clone());
            let ds = FEFunction::new(u.clone(), d.mul_vec(&sigma));
            for e in [0, 4] {
                let (pts, _) = n.elem_quad(e, 2);
                for x in pts {
                    assert!((cw.eval_vector(e, x) - w.eval_curl(e, x)).norm() < 1e-8, "k={k}");
                    assert!((ds.eval_scalar(e, x) - s.eval_div(e, x)).abs() < 1e-8, "k={k}");
                }
            }
        }
    }

    #[test]
    fn composition_of_differentials_vanishes() {
        let mesh = cube(1);
        for k in 0..=1u32 {
            let w = FESpace::volume(&mesh, Family::Lagrange, k + 1);
            let n = FESpace::volume(&mesh, Family::Nedelec, k);
            let v = FESpace::volume(&mesh, Family::RaviartThomas, k);
            let u = FESpace::volume(&mesh, Family::Dg, k);
            let g = diff_operator(DiffKind::Grad, &w, &n).to_dense();
            let c = diff_operator(DiffKind::Curl, &n, &v).to_dense();
            let d = diff_operator(DiffKind::Div, &v, &u).to_dense();
            assert!((&c * &g).amax() < 1e-11, "curl grad != 0, k={k}");
            assert!((&d * &c).amax() < 1e-11, "div curl != 0, k={k}");
            // grad of a constant
            let ones = DVector::from_element(w.ndof, 1.0);
            assert!((&g * &ones).amax() < 1e-12);
        }
    }

    #[test]
    fn trace_commutation_gamma_n_curl_equals_surf_div_gamma_t() {
        let mesh = cube(2);
        let surf = Arc::new(boundary_triangulation(&mesh));
        for k in 0..=1u32 {
            let n = FESpace::volume(&mesh, Family::Nedelec, k);
            let v = FESpace::volume(&mesh, Family::RaviartThomas, k);
            let mh = FESpace::surface(&surf, Family::SurfDg, k);
            let rh = FESpace::surface(&surf, Family::SurfRt, k);
            let c = diff_operator(DiffKind::Curl, &n, &v).to_dense();
            let sd = diff_operator(DiffKind::SurfDiv, &rh, &mh).to_dense();
            let gn = trace_operator(TraceKind::Normal, &v, &mh).to_dense();
            let gt = trace_operator(TraceKind::Tangential, &n, &rh).to_dense();
            let lhs = &gn * &c;
            let rhs = &sd * &gt;
            assert!((lhs - rhs).amax() < 1e-11, "k={k}");
        }
    }

    #[test]
    fn surf_div_of_surf_curl_vanishes() {
        let mesh = cube(2);
        let surf = Arc::new(boundary_triangulation(&mesh));
        for k in 0..=1u32 {
            let ph = FESpace::surface(&surf, Family::SurfLagrange, k + 1);
            let rh = FESpace::surface(&surf, Family::SurfRt, k);
            let mh = FESpace::surface(&surf, Family::SurfDg, k);
            let sc = diff_operator(DiffKind::SurfCurl, &ph, &rh).to_dense();
            let sd = diff_operator(DiffKind::SurfDiv, &rh, &mh).to_dense();
            assert!((&sd * &sc).amax() < 1e-11, "k={k}");
        }
    }

    #[test]
    fn tangential_trace_matches_pointwise_cross_product() {
        let mesh = cube(1);
        let surf = Arc::new(boundary_triangulation(&mesh));
        for k in 0..=1u32 {
            let n = FESpace::volume(&mesh, Family::Nedelec, k);
            let rh = FESpace::surface(&surf, Family::SurfRt, k);
            let gt = trace_operator(TraceKind::Tangential, &n, &rh);
            let wc = randv(n.ndof, 21);
            let w = FEFunction::new(n.clone(), wc.clone());
            let r = FEFunction::new(rh.clone(), gt.mul_vec(&wc));
            for t in 0..surf.n_triangles() {
                let cell = mesh.face_cells[surf.parent_faces[t]].0;
                let nv = surf.normals[t];
                let (pts, _) = rh.elem_quad(t, 2);
                for x in pts {
                    let want = w.eval_vector(cell, x).cross(&nv);
                    let got = r.eval_vector(t, x);
                    assert!((want - got).norm() < 1e-9, "k={k} t={t}");
                }
            }
        }
    }

    #[test]
    fn normal_trace_matches_pointwise_normal_component() {
        let mesh = cube(1);
        let surf = Arc::new(boundary_triangulation(&mesh));
        for k in 0..=1u32 {
            let v = FESpace::volume(&mesh, Family::RaviartThomas, k);
            let mh = FESpace::surface(&surf, Family::SurfDg, k);
            let gn = trace_operator(TraceKind::Normal, &v, &mh);
            let sc = randv(v.ndof, 23);
            let s = FEFunction::new(v.clone(), sc.clone());
            let g = FEFunction::new(mh.clone(), gn.mul_vec(&sc));
            for t in 0..surf.n_triangles() {
                let cell = mesh.face_cells[surf.parent_faces[t]].0;
                let nv = surf.normals[t];
                let (pts, _) = mh.elem_quad(t, 2);
                for x in pts {
                    let want = s.eval_vector(cell, x).dot(&nv);
                    assert!((want - g.eval_scalar(t, x)).abs() < 1e-9, "k={k} t={t}");
                }
            }
        }
    }

    #[test]
    fn trace_operators_are_surjective() {
        let mesh = cube(1);
        let surf = Arc::new(boundary_triangulation(&mesh));
        let v = FESpace::volume(&mesh, Family::RaviartThomas, 0);
        let mh = FESpace::surface(&surf, Family::SurfDg, 0);
        let gn = trace_operator(TraceKind::Normal, &v, &mh).to_dense();
        assert_eq!(mh.ndof, 12);
        assert_eq!(rank(&gn, 1e-9), 12);
        let n = FESpace::volume(&mesh, Family::Nedelec, 0);
        let rh = FESpace::surface(&surf, Family::SurfRt, 0);
        let gt = trace_operator(TraceKind::Tangential, &n, &rh).to_dense();
        assert_eq!(rank(&gt, 1e-9), rh.ndof);
    }

    #[test]
    fn exactness_on_small_cubes() {
        for k in 0..=1u32 {
            let rep = verify_exactness(&cube(1), k);
            assert!(rep.passed, "k={k}: {rep:?}");
        }
        let rep = verify_exactness(&cube(2), 0);
        assert!(rep.passed, "{rep:?}");
    }
}
