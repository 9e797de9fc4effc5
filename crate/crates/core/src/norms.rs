//! Volume and boundary norm realizations.
//!
//! Local norms (L2, H1, H(div), H(curl)) are sparse Gram matrices. The
//! fractional boundary norms are dense: the Slobodetskij H^s seminorm is
//! assembled by panel-pair quadrature with Duffy-type singular treatment on
//! touching panels, and H^{-1/2} is realized as the Dirichlet energy of a
//! discrete Neumann harmonic extension on a refined auxiliary mesh (plus an
//! explicitly weighted mean term). The two realizations cross-check each
//! other through `dual_norm`.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector3};

use crate::fe::assemble::{assemble, integral_vector, BilinearKind};
use crate::fe::{FESpace, Family};
use crate::la::{SparseBuilder, SparseMat};
use crate::mesh::refine::{refine, RefineMode};
use crate::mesh::surface::{boundary_triangulation, SurfaceMesh};
use crate::mesh::Mesh;
use crate::quadrature::{edge_rule, triangle_rule};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    L2,
    H1,
    Hdiv,
    Hcurl,
}

/// Sparse Gram matrix of a local (integer-order) norm.
pub fn gram(space: &Arc<FESpace>, kind: NormKind) -> SparseMat {
    let mass = assemble(space, space, BilinearKind::Mass, 2);
    match kind {
        NormKind::L2 => mass,
        NormKind::H1 | NormKind::Hdiv | NormKind::Hcurl => {
            match (kind, space.is_scalar(), space.family) {
                (NormKind::H1, true, _) => {}
                (NormKind::Hdiv, _, Family::RaviartThomas | Family::SurfRt) => {}
                (NormKind::Hcurl, _, Family::Nedelec) => {}
                _ => panic!("incompatible (space, norm) pair"),
            }
            let stiff = assemble(space, space, BilinearKind::Stiffness, 2);
            mass.add(&stiff)
        }
    }
}

// ---------------------------------------------------------------------------
// Slobodetskij seminorm
// ---------------------------------------------------------------------------

struct PanelGeom {
    corners: [Vector3<f64>; 3],
    diam: f64,
}

fn panel_geom(surf: &SurfaceMesh, t: usize) -> PanelGeom {
    let c = surf.tri_coords(t);
    let corners = c.map(Vector3::from);
    let diam = surf.h[t];
    PanelGeom { corners, diam }
}

fn tri_quad(corners: &[Vector3<f64>; 3], deg: usize) -> (Vec<Vector3<f64>>, Vec<f64>) {
    let rule = triangle_rule(deg);
    let area2 = (corners[1] - corners[0])
        .cross(&(corners[2] - corners[0]))
        .norm();
    let mut xs = Vec::with_capacity(rule.points.len());
    let mut ws = Vec::with_capacity(rule.points.len());
    for (p, w) in rule.points.iter().zip(&rule.weights) {
        xs.push(corners[0] + (corners[1] - corners[0]) * p[0] + (corners[2] - corners[0]) * p[1]);
        ws.push(w * area2);
    }
    (xs, ws)
}

/// Duffy points on the sub-triangle (apex, a, b), collapsing toward `apex`
/// where the kernel is singular. Weight includes the area Jacobian.
fn duffy_quad(
    apex: Vector3<f64>,
    a: Vector3<f64>,
    b: Vector3<f64>,
    n1d: usize,
) -> (Vec<Vector3<f64>>, Vec<f64>) {
    let (pts, wts) = edge_rule(2 * n1d - 1);
    let area2 = (a - apex).cross(&(b - apex)).norm();
    if area2 < 1e-30 {
        return (Vec::new(), Vec::new());
    }
    let mut xs = Vec::new();
    let mut ws = Vec::new();
    for (&s, &vs) in pts.iter().zip(&wts) {
        for (&t, &wt) in pts.iter().zip(&wts) {
            let dir = (a - apex) * (1.0 - t) + (b - apex) * t;
            xs.push(apex + dir * s);
            ws.push(vs * wt * s * area2);
        }
    }
    (xs, ws)
}

/// Closest point to `x` on segment [a, b].
fn closest_on_segment(x: Vector3<f64>, a: Vector3<f64>, b: Vector3<f64>) -> Vector3<f64> {
    let d = b - a;
    let t = ((x - a).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
    a + d * t
}

/// Inner quadrature over panel `g2` for a fixed outer point `x`, singular at
/// the point of `g2` nearest to the shared entity.
fn inner_quad_singular(
    x: Vector3<f64>,
    g2: &PanelGeom,
    shared: &[usize],
    tri2: &[usize; 3],
    n1d: usize,
) -> (Vec<Vector3<f64>>, Vec<f64>) {
    let [a, b, c] = g2.corners;
    let p = match shared.len() {
        3 => {
            // coincident panel: singular at x itself
            x
        }
        2 => {
            // common edge: singular near the projection of x onto it
            let i0 = tri2.iter().position(|v| *v == shared[0]).unwrap();
            let i1 = tri2.iter().position(|v| *v == shared[1]).unwrap();
            closest_on_segment(x, g2.corners[i0], g2.corners[i1])
        }
        1 => {
            let i0 = tri2.iter().position(|v| *v == shared[0]).unwrap();
            g2.corners[i0]
        }
        _ => unreachable!(),
    };
    let mut xs = Vec::new();
    let mut ws = Vec::new();
    for (u, v) in [(a, b), (b, c), (c, a)] {
        let (mut x2, mut w2) = duffy_quad(p, u, v, n1d);
        xs.append(&mut x2);
        ws.append(&mut w2);
    }
    (xs, ws)
}

/// Outer quadrature on panel `g1`, geometrically graded toward the shared
/// entity (where the inner integral loses smoothness).
fn outer_quad_graded(
    g1: &PanelGeom,
    shared_pts: &[Vector3<f64>],
    deg: usize,
    depth: u32,
) -> (Vec<Vector3<f64>>, Vec<f64>) {
    fn touches(c: &[Vector3<f64>; 3], pts: &[Vector3<f64>], tol: f64) -> bool {
        // does the triangle come close to any shared point / segment?
        for p in pts {
            for v in c {
                if (v - p).norm() < tol {
                    return true;
                }
            }
        }
        if pts.len() == 2 {
            for v in c {
                let q = closest_on_segment(*v, pts[0], pts[1]);
                if (v - q).norm() < tol {
                    return true;
                }
            }
        }
        false
    }
    fn rec(
        c: [Vector3<f64>; 3],
        pts: &[Vector3<f64>],
        tol: f64,
        deg: usize,
        depth: u32,
        xs: &mut Vec<Vector3<f64>>,
        ws: &mut Vec<f64>,
    ) {
        if depth == 0 || !touches(&c, pts, tol) {
            let (mut x2, mut w2) = tri_quad(&c, deg);
            xs.append(&mut x2);
            ws.append(&mut w2);
            return;
        }
        let m01 = (c[0] + c[1]) / 2.0;
        let m02 = (c[0] + c[2]) / 2.0;
        let m12 = (c[1] + c[2]) / 2.0;
        for child in [
            [c[0], m01, m02],
            [m01, c[1], m12],
            [m02, m12, c[2]],
            [m01, m12, m02],
        ] {
            rec(child, pts, tol, deg, depth - 1, xs, ws);
        }
    }
    let mut xs = Vec::new();
    let mut ws = Vec::new();
    let tol = 1e-9 * g1.diam;
    if shared_pts.is_empty() {
        let (mut x2, mut w2) = tri_quad(&g1.corners, deg);
        xs.append(&mut x2);
        ws.append(&mut w2);
    } else {
        rec(g1.corners, shared_pts, tol, deg, depth, &mut xs, &mut ws);
    }
    (xs, ws)
}

/// Dense Gram matrix of the Slobodetskij H^s seminorm
/// `|v|^2 = int int |v(x)-v(y)|^2 / |x-y|^{2+2s}` on a closed boundary
/// surface, for a scalar surface space.
pub fn slobodetskij_gram(space: &Arc<FESpace>, s: f64) -> DMatrix<f64> {
    assert!(space.is_scalar() && space.is_surface());
    assert!(s > 0.0 && s < 1.0);
    let surf = space.surf.as_ref().unwrap().clone();
    let nt = surf.n_triangles();
    let expo = 2.0 + 2.0 * s;
    let mut g = DMatrix::zeros(space.ndof, space.ndof);
    let geoms: Vec<PanelGeom> = (0..nt).map(|t| panel_geom(&surf, t)).collect();
    for t1 in 0..nt {
        for t2 in t1..nt {
            let shared: Vec<usize> = surf.triangles[t1]
                .iter()
                .copied()
                .filter(|v| surf.triangles[t2].contains(v))
                .collect();
            let sym = if t1 == t2 { 1.0 } else { 2.0 };
            let block = pair_block(space, &geoms, t1, t2, &shared, expo, &surf);
            let d1 = &space.elem_dofs[t1];
            let d2 = &space.elem_dofs[t2];
            let mut union: Vec<usize> = d1.iter().chain(d2.iter()).copied().collect();
            union.sort_unstable();
            union.dedup();
            for (bi, &gi) in union.iter().enumerate() {
                for (bj, &gj) in union.iter().enumerate() {
                    g[(gi, gj)] += sym * block[(bi, bj)];
                }
            }
        }
    }
    // exact symmetrization (quadrature is symmetric up to roundoff)
    for i in 0..space.ndof {
        for j in 0..i {
            let m = 0.5 * (g[(i, j)] + g[(j, i)]);
            g[(i, j)] = m;
            g[(j, i)] = m;
        }
    }
    g
}

/// Local block of the seminorm over the ordered pair (t1, t2), indexed by
/// the sorted union of the two panels' DOFs.
fn pair_block(
    space: &Arc<FESpace>,
    geoms: &[PanelGeom],
    t1: usize,
    t2: usize,
    shared: &[usize],
    expo: f64,
    surf: &SurfaceMesh,
) -> DMatrix<f64> {
    let g1 = &geoms[t1];
    let g2 = &geoms[t2];
    let d1 = &space.elem_dofs[t1];
    let d2 = &space.elem_dofs[t2];
    let mut union: Vec<usize> = d1.iter().chain(d2.iter()).copied().collect();
    union.sort_unstable();
    union.dedup();
    let n = union.len();
    let loc1: Vec<Option<usize>> = union
        .iter()
        .map(|g| d1.iter().position(|x| x == g))
        .collect();
    let loc2: Vec<Option<usize>> = union
        .iter()
        .map(|g| d2.iter().position(|x| x == g))
        .collect();

    let touching = !shared.is_empty();
    let (oxs, ows) = if touching {
        let shared_pts: Vec<Vector3<f64>> = shared
            .iter()
            .map(|v| Vector3::from(surf.mesh.vertices[*v]))
            .collect();
        let pts = if shared.len() == 3 { Vec::new() } else { shared_pts };
        if shared.len() == 3 {
            // coincident: singular for every outer point; uniform rule works
            // because the inner Duffy absorbs the singularity at x
            tri_quad(&g1.corners, 6)
        } else {
            outer_quad_graded(g1, &pts, 5, 3)
        }
    } else {
        let dist = (centroid(g1) - centroid(g2)).norm();
        let deg = if dist > 2.0 * g1.diam.max(g2.diam) { 3 } else { 6 };
        tri_quad(&g1.corners, deg)
    };

    let v1 = space.eval_scalar_basis(t1, &oxs);
    let mut block = DMatrix::zeros(n, n);
    let mut phi_x = vec![0.0; n];
    let mut phi_y = vec![0.0; n];
    for (q, &x) in oxs.iter().enumerate() {
        let (iys, iws) = if touching {
            inner_quad_singular(x, g2, shared, &surf.triangles[t2], 6)
        } else {
            let dist = (x - centroid(g2)).norm();
            let deg = if dist > 2.0 * g2.diam { 3 } else { 6 };
            tri_quad(&g2.corners, deg)
        };
        if iys.is_empty() {
            continue;
        }
        let v2 = space.eval_scalar_basis(t2, &iys);
        for i in 0..n {
            phi_x[i] = loc1[i].map_or(0.0, |l| v1.values[(l, q)]);
        }
        for (qy, &y) in iys.iter().enumerate() {
            let r = (x - y).norm();
            if r < 1e-14 {
                continue;
            }
            let k = ows[q] * iws[qy] / r.powf(expo);
            for i in 0..n {
                phi_y[i] = loc2[i].map_or(0.0, |l| v2.values[(l, qy)]);
            }
            for i in 0..n {
                let di = phi_x[i] - phi_y[i];
                if di == 0.0 {
                    continue;
                }
                for j in i..n {
                    block[(i, j)] += k * di * (phi_x[j] - phi_y[j]);
                }
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            block[(i, j)] = block[(j, i)];
        }
    }
    block
}

fn centroid(g: &PanelGeom) -> Vector3<f64> {
    (g.corners[0] + g.corners[1] + g.corners[2]) / 3.0
}

/// Monte-Carlo estimate of the Slobodetskij seminorm of a single surface
/// function (independent oracle for the panel quadrature).
pub fn slobodetskij_montecarlo(
    space: &Arc<FESpace>,
    coeffs: &DVector<f64>,
    s: f64,
    samples: usize,
    seed: u64,
) -> f64 {
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    let surf = space.surf.as_ref().unwrap();
    let nt = surf.n_triangles();
    let total: f64 = surf.total_area();
    let mut cum = Vec::with_capacity(nt);
    let mut acc = 0.0;
    for t in 0..nt {
        acc += surf.areas[t];
        cum.push(acc);
    }
    let pick = |u: f64, cum: &[f64]| -> usize {
        let target = u * total;
        cum.partition_point(|&c| c < target).min(nt - 1)
    };
    let expo = 2.0 + 2.0 * s;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let f = crate::fe::FEFunction::new(space.clone(), coeffs.clone());
    for _ in 0..samples {
        let t1 = pick(rng.random::<f64>(), &cum);
        let t2 = pick(rng.random::<f64>(), &cum);
        let x = random_point(surf, t1, &mut rng);
        let y = random_point(surf, t2, &mut rng);
        let r = (x - y).norm();
        if r < 1e-12 {
            continue;
        }
        let d = f.eval_scalar(t1, x) - f.eval_scalar(t2, y);
        sum += d * d / r.powf(expo);
    }
    total * total * sum / samples as f64
}

fn random_point(surf: &SurfaceMesh, t: usize, rng: &mut impl rand::Rng) -> Vector3<f64> {
    let c = surf.tri_coords(t).map(Vector3::from);
    let mut u: f64 = rng.random();
    let mut v: f64 = rng.random();
    if u + v > 1.0 {
        u = 1.0 - u;
        v = 1.0 - v;
    }
    c[0] + (c[1] - c[0]) * u + (c[2] - c[0]) * v
}

// ---------------------------------------------------------------------------
// H^{-1/2} via Neumann harmonic extension on a refined auxiliary mesh
// ---------------------------------------------------------------------------

/// Auxiliary volume discretization: the mesh refined `r` times uniformly,
/// with the composed cell ancestry back to the original mesh.
pub struct AuxMesh {
    pub mesh: Arc<Mesh>,
    pub surf: Arc<SurfaceMesh>,
    pub ancestor: Vec<usize>,
}

pub fn build_aux_mesh(mesh: &Arc<Mesh>, r: u32) -> AuxMesh {
    let mut cur = mesh.clone();
    let mut anc: Vec<usize> = (0..mesh.cells.len()).collect();
    for _ in 0..r {
        let next = Arc::new(refine(&cur, RefineMode::Uniform, &[]).expect("uniform refine"));
        let parents = next.parent_cells.as_ref().expect("parent map").clone();
        anc = parents.iter().map(|&p| anc[p]).collect();
        cur = next;
    }
    let surf = Arc::new(boundary_triangulation(&cur));
    AuxMesh { mesh: cur, surf, ancestor: anc }
}

/// For each auxiliary boundary triangle, the original surface triangle that
/// contains it.
fn locate_parent_tris(aux: &AuxMesh, orig_surf: &SurfaceMesh) -> Vec<usize> {
    // original surface triangles grouped by their owning volume cell
    let mut by_cell: HashMap<usize, Vec<usize>> = HashMap::new();
    for t in 0..orig_surf.n_triangles() {
        let cell = orig_surf.mesh.face_cells[orig_surf.parent_faces[t]].0;
        by_cell.entry(cell).or_default().push(t);
    }
    let mut out = Vec::with_capacity(aux.surf.n_triangles());
    for at in 0..aux.surf.n_triangles() {
        let owner = aux.surf.mesh.face_cells[aux.surf.parent_faces[at]].0;
        let anc_cell = aux.ancestor[owner];
        let c = aux.surf.tri_coords(at).map(Vector3::from);
        let centroid = (c[0] + c[1] + c[2]) / 3.0;
        let cands = by_cell
            .get(&anc_cell)
            .unwrap_or_else(|| panic!("aux boundary triangle {at} has no ancestor boundary face"));
        let mut best = None;
        let mut best_d = f64::INFINITY;
        for &t in cands {
            let tc = orig_surf.tri_coords(t).map(Vector3::from);
            let n = orig_surf.normals[t];
            let plane_d = (centroid - tc[0]).dot(&n).abs();
            // barycentric containment in the plane
            let d = plane_d + bary_outside(&tc, centroid);
            if d < best_d {
                best_d = d;
                best = Some(t);
            }
        }
        assert!(best_d < 1e-8, "failed to locate parent triangle for {at}");
        out.push(best.unwrap());
    }
    out
}

fn bary_outside(c: &[Vector3<f64>; 3], p: Vector3<f64>) -> f64 {
    let v0 = c[1] - c[0];
    let v1 = c[2] - c[0];
    let v2 = p - c[0];
    let d00 = v0.dot(&v0);
    let d01 = v0.dot(&v1);
    let d11 = v1.dot(&v1);
    let d20 = v2.dot(&v0);
    let d21 = v2.dot(&v1);
    let den = d00 * d11 - d01 * d01;
    let v = (d11 * d20 - d01 * d21) / den;
    let w = (d00 * d21 - d01 * d20) / den;
    let u = 1.0 - v - w;
    (-u).max(0.0) + (-v).max(0.0) + (-w).max(0.0)
}

/// Pairing matrix `B[g_dof, aux_dof] = int_Gamma phi_g * (trace of aux
/// scalar basis)`, with the surface space living on the coarse boundary and
/// the scalar Lagrange space on the refined auxiliary mesh. For a vector
/// surface space, `component` selects the Cartesian component of its basis.
fn boundary_pairing(
    bspace: &Arc<FESpace>,
    aux_space: &Arc<FESpace>,
    aux: &AuxMesh,
    parent_tris: &[usize],
    component: Option<usize>,
) -> SparseMat {
    let deg = (bspace.poly_deg() + aux_space.poly_deg() + 2) as usize;
    let mut b = SparseBuilder::new(bspace.ndof, aux_space.ndof);
    for at in 0..aux.surf.n_triangles() {
        let pt = parent_tris[at];
        let owner = aux.surf.mesh.face_cells[aux.surf.parent_faces[at]].0;
        let c = aux.surf.tri_coords(at).map(Vector3::from);
        let (xs, ws) = tri_quad(&c, deg);
        let av = aux_space.eval_scalar_basis(owner, &xs);
        let nr = bspace.elem_dofs[pt].len();
        let bvals: Vec<Vec<f64>> = match component {
            None => {
                let sv = bspace.eval_scalar_basis(pt, &xs);
                (0..nr)
                    .map(|i| (0..xs.len()).map(|q| sv.values[(i, q)]).collect())
                    .collect()
            }
            Some(comp) => {
                let vv = bspace.eval_vector_basis(pt, &xs);
                (0..nr)
                    .map(|i| (0..xs.len()).map(|q| vv.values[i][q][comp]).collect())
                    .collect()
            }
        };
        for (i, &gd) in bspace.elem_dofs[pt].iter().enumerate() {
            for (j, &ad) in aux_space.elem_dofs[owner].iter().enumerate() {
                let mut s = 0.0;
                for q in 0..xs.len() {
                    s += ws[q] * bvals[i][q] * av.values[(j, q)];
                }
                if s != 0.0 {
                    b.add(gd, ad, s);
                }
            }
        }
    }
    b.build()
}

/// Shared auxiliary solver for the extension-energy norms: Neumann
/// Laplacian with a mean constraint on the refined mesh.
pub struct HminusHalfRealization {
    pub bspace: Arc<FESpace>,
    pub r: u32,
    pub aux_degree: u32,
    pub mean_weight: f64,
    /// dense SPD matrix: quadratic form = squared norm
    pub matrix: DMatrix<f64>,
}

/// Realize `||g||^2_{H^{-1/2}}` on a surface DG space as the Dirichlet
/// energy of the discrete Neumann harmonic extension of the mean-zero part
/// of g (auxiliary Lagrange degree k+2 on the r-times refined mesh), plus
/// `mean_weight * (int g)^2`.
pub fn hminus_half_gram(
    bspace: &Arc<FESpace>,
    mesh: &Arc<Mesh>,
    r: u32,
    mean_weight: f64,
) -> HminusHalfRealization {
    assert_eq!(bspace.family, Family::SurfDg);
    let aux_degree = bspace.degree + 2;
    let aux = build_aux_mesh(mesh, r);
    let aux_space = FESpace::volume(&aux.mesh, Family::Lagrange, aux_degree);
    let parent = locate_parent_tris(&aux, bspace.surf.as_ref().unwrap());
    let b = boundary_pairing(bspace, &aux_space, &aux, &parent, None);
    let stiff = assemble(&aux_space, &aux_space, BilinearKind::Stiffness, 2);
    let ones = integral_vector(&aux_space);
    let lu = bordered_lu(&stiff, &ones);
    let nb = bspace.ndof;
    let na = aux_space.ndof;
    let mut g0 = DMatrix::zeros(nb, nb);
    // column-by-column: solve the bordered Neumann system for each datum
    // basis function, energy = u^T (B^T e)
    let bt = b.to_dense();
    for j in 0..nb {
        let mut rhs = DVector::zeros(na + 1);
        for i in 0..na {
            rhs[i] = bt[(j, i)];
        }
        let u = lu.solve(&rhs);
        for i in 0..nb {
            let mut s = 0.0;
            for a in 0..na {
                s += bt[(i, a)] * u[a];
            }
            g0[(i, j)] = s;
        }
    }
    // energy form is symmetric; symmetrize roundoff
    for i in 0..nb {
        for j in 0..i {
            let m = 0.5 * (g0[(i, j)] + g0[(j, i)]);
            g0[(i, j)] = m;
            g0[(j, i)] = m;
        }
    }
    // mean term: (int g)^2 = (a^T g)^2 with a the boundary integral vector
    let a = integral_vector(bspace);
    for i in 0..nb {
        for j in 0..nb {
            g0[(i, j)] += mean_weight * a[i] * a[j];
        }
    }
    HminusHalfRealization {
        bspace: bspace.clone(),
        r,
        aux_degree,
        mean_weight,
        matrix: g0,
    }
}

/// Sparse LU of the bordered system [[A, a], [a^T, 0]].
pub struct BorderedLu {
    lu: crate::la::SparseLu,
    n: usize,
}

impl BorderedLu {
    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        assert_eq!(rhs.len(), self.n + 1);
        self.lu.solve(rhs)
    }
}

pub fn bordered_lu(a: &SparseMat, border: &DVector<f64>) -> BorderedLu {
    let n = a.nrows();
    let mut b = SparseBuilder::new(n + 1, n + 1);
    for &(i, j, v) in a.triplets().iter() {
        b.add(i, j, v);
    }
    for i in 0..n {
        if border[i] != 0.0 {
            b.add(i, n, border[i]);
            b.add(n, i, border[i]);
        }
    }
    BorderedLu {
        lu: b.build().lu().expect("bordered Neumann system factorizes"),
        n,
    }
}

/// Calibrate the mean weight against the Slobodetskij dual-norm oracle on a
/// coarse mesh: for g = 1 the extension-energy part vanishes, so the weight
/// is `||1||^2_{H^{-1/2}} / |Gamma|^2` with the dual norm measured against
/// the dense H^{1/2} realization.
pub fn calibrate_mean_weight(mesh: &Arc<Mesh>) -> f64 {
    let surf = Arc::new(boundary_triangulation(mesh));
    let ph = FESpace::surface(&surf, Family::SurfLagrange, 1);
    let semi = slobodetskij_gram(&ph, 0.5);
    let mass = assemble(&ph, &ph, BilinearKind::Mass, 2).to_dense();
    let a_primal = semi + mass;
    let a_int = integral_vector(&ph);
    // dual norm of the constant-one density: sup (int v)^2 / ||v||^2
    let chol = a_primal.cholesky().expect("H^{1/2} Gram SPD");
    let x = chol.solve(&a_int);
    let dual_sq = a_int.dot(&x);
    let area = surf.total_area();
    dual_sq / (area * area)
}

/// H^{-1/2}_par(div_Gamma) surrogate on the rotated surface RT space:
/// dual of the tangential field against vector H^1 volume fields, plus the
/// H^{-1/2} norm of the surface divergence.
pub struct HminusHalfParDiv {
    pub rspace: Arc<FESpace>,
    pub r: u32,
    pub matrix: DMatrix<f64>,
}

pub fn hminus_half_par_div_gram(
    rspace: &Arc<FESpace>,
    mspace: &Arc<FESpace>,
    mesh: &Arc<Mesh>,
    r: u32,
    mean_weight: f64,
) -> HminusHalfParDiv {
    assert_eq!(rspace.family, Family::SurfRt);
    assert_eq!(mspace.family, Family::SurfDg);
    let aux_degree = rspace.degree + 2;
    let aux = build_aux_mesh(mesh, r);
    let aux_space = FESpace::volume(&aux.mesh, Family::Lagrange, aux_degree);
    let parent = locate_parent_tris(&aux, rspace.surf.as_ref().unwrap());
    // full H1 Gram (SPD) for each Cartesian component of the test fields
    let h1 = {
        let mass = assemble(&aux_space, &aux_space, BilinearKind::Mass, 2);
        let stiff = assemble(&aux_space, &aux_space, BilinearKind::Stiffness, 2);
        mass.add(&stiff)
    };
    let chol = h1.cholesky().expect("vector H1 Gram SPD");
    let nr = rspace.ndof;
    let mut gpar = DMatrix::zeros(nr, nr);
    for comp in 0..3 {
        let b = boundary_pairing(rspace, &aux_space, &aux, &parent, Some(comp)).to_dense();
        // G_par += B A^{-1} B^T, column by column
        for j in 0..nr {
            let rhs = DVector::from_fn(aux_space.ndof, |i, _| b[(j, i)]);
            let u = chol.solve(&rhs);
            for i in 0..nr {
                let mut s = 0.0;
                for a in 0..aux_space.ndof {
                    s += b[(i, a)] * u[a];
                }
                gpar[(i, j)] += s;
            }
        }
    }
    for i in 0..nr {
        for j in 0..i {
            let m = 0.5 * (gpar[(i, j)] + gpar[(j, i)]);
            gpar[(i, j)] = m;
            gpar[(j, i)] = m;
        }
    }
    // + D^T G_M D with D the surface divergence coefficient map
    let d = crate::complex::diff_operator(crate::complex::DiffKind::SurfDiv, rspace, mspace)
        .to_dense();
    let gm = hminus_half_gram(mspace, mesh, r, mean_weight);
    gpar += d.transpose() * &gm.matrix * &d;
    HminusHalfParDiv { rspace: rspace.clone(), r, matrix: gpar }
}

// ---------------------------------------------------------------------------
// dual norms and quotients
// ---------------------------------------------------------------------------

/// `sqrt(g^T B^T A^{-1} B g)`: dual norm of the density g against the SPD
/// primal Gram A under the pairing B (primal dofs x g dofs).
pub fn dual_norm(g: &DVector<f64>, primal: &DMatrix<f64>, pairing: &DMatrix<f64>) -> f64 {
    let bg = pairing * g;
    let chol = primal
        .clone()
        .cholesky()
        .expect("primal Gram must be SPD for the dual norm");
    let x = chol.solve(&bg);
    bg.dot(&x).max(0.0).sqrt()
}

/// Quotient norm `min_c ||phi - c * one||_A` for an SPD (or PSD with
/// constants in the kernel handled by the seminorm part) Gram A.
pub fn quotient_norm(phi: &DVector<f64>, a: &DMatrix<f64>, one: &DVector<f64>) -> f64 {
    let denom = (a * one).dot(one);
    let num = (a * phi).dot(one);
    let c = if denom > 0.0 { num / denom } else { 0.0 };
    let v = phi - one * c;
    (a * &v).dot(&v).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fe::l2_project_dg;
    use crate::mesh::generate::unit_cube_mesh;

    fn cube(n: usize) -> Arc<Mesh> {
        Arc::new(unit_cube_mesh(n))
    }

    #[test]
    fn local_grams_basic_identities() {
        let mesh = cube(1);
        let dg = FESpace::volume(&mesh, Family::Dg, 0);
        let m = gram(&dg, NormKind::L2).to_dense();
        // orthonormal DG basis: identity
        for i in 0..dg.ndof {
            assert!((m[(i, i)] - 1.0).abs() < 1e-12);
        }
        // Hdiv form of a constant field = |Omega| |c|^2
        let rt = FESpace::volume(&mesh, Family::RaviartThomas, 0);
        let c = Vector3::new(0.4, -1.0, 2.0);
        let cc = rt.interpolate_vector(&|_| c, 1);
        let hd = gram(&rt, NormKind::Hdiv);
        let val = cc.dot(&hd.mul_vec(&cc));
        assert!((val - c.norm_squared()).abs() < 1e-9);
        // Hcurl form of a gradient equals its L2 form
        let ned = FESpace::volume(&mesh, Family::Nedelec, 0);
        let gradf = ned.interpolate_vector(&|_| Vector3::new(1.0, 2.0, -0.5), 1);
        let hc = gram(&ned, NormKind::Hcurl);
        let l2 = gram(&ned, NormKind::L2);
        let a = gradf.dot(&hc.mul_vec(&gradf));
        let b = gradf.dot(&l2.mul_vec(&gradf));
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn slobodetskij_kernel_and_symmetry() {
        let mesh = cube(1);
        let surf = Arc::new(boundary_triangulation(&mesh));
        let ph = FESpace::surface(&surf, Family::SurfLagrange, 1);
        let g = slobodetskij_gram(&ph, 0.5);
        // symmetry and PSD via Gershgorin-free check: x^T G x >= 0 samples
        for i in 0..ph.ndof {
            for j in 0..ph.ndof {
                assert!((g[(i, j)] - g[(j, i)]).abs() < 1e-12);
            }
        }
        // constants in the kernel: row sums ~ 0
        let ones = DVector::from_element(ph.ndof, 1.0);
        let r = (&g * &ones).amax();
        let scale = g.amax();
        assert!(r < 1e-6 * scale, "row sums {r} vs scale {scale}");
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let x = DVector::from_fn(ph.ndof, |_, _| rng.random_range(-1.0_f64..1.0));
            let q = (&g * &x).dot(&x);
            assert!(q > -1e-8 * scale);
        }
    }

    #[test]
    fn slobodetskij_scaling_law() {
        // scaling all coordinates by lambda scales the s=1/2 seminorm Gram
        // of the P1 nodal basis by lambda (and the L2 mass by lambda^2)
        let mesh1 = cube(1);
        let lam = 2.0;
        let scaled: Vec<[f64; 3]> = mesh1
            .vertices
            .iter()
            .map(|v| [v[0] * lam, v[1] * lam, v[2] * lam])
            .collect();
        let mesh2 = Arc::new(
            Mesh::from_cells(scaled, mesh1.cells.clone()).unwrap(),
        );
        let s1 = Arc::new(boundary_triangulation(&mesh1));
        let s2 = Arc::new(boundary_triangulation(&mesh2));
        let p1 = FESpace::surface(&s1, Family::SurfLagrange, 1);
        let p2 = FESpace::surface(&s2, Family::SurfLagrange, 1);
        let g1 = slobodetskij_gram(&p1, 0.5);
        let g2 = slobodetskij_gram(&p2, 0.5);
        let m1 = assemble(&p1, &p1, BilinearKind::Mass, 2).to_dense();
        let m2 = assemble(&p2, &p2, BilinearKind::Mass, 2).to_dense();
        assert!((g2.amax() / g1.amax() - lam).abs() < 0.02 * lam);
        assert!(((&g2 - &g1 * lam).amax()) < 1e-2 * g1.amax());
        assert!(((&m2 - &m1 * lam * lam).amax()) < 1e-10 * m1.amax());
    }

    #[test]
    fn hminus_half_gram_zero_and_spd() {
        let mesh = cube(1);
        let surf = Arc::new(boundary_triangulation(&mesh));
        let mh = FESpace::surface(&surf, Family::SurfDg, 0);
        let w = calibrate_mean_weight(&mesh);
        assert!(w > 0.0);
        let real = hminus_half_gram(&mh, &mesh, 1, w);
        let g = &real.matrix;
        for i in 0..mh.ndof {
            for j in 0..mh.ndof {
                assert!((g[(i, j)] - g[(j, i)]).abs() < 1e-10 * g.amax());
            }
        }
        assert!(g.clone().cholesky().is_some(), "G must be SPD");
        // zero datum -> zero norm
        let z = DVector::zeros(mh.ndof);
        assert_eq!((g * &z).dot(&z), 0.0);
        // projection of a smooth function has a sensible positive norm
        let c = l2_project_dg(&mh, &|x: Vector3<f64>| x.x, 4);
        let v = (g * &c).dot(&c);
        assert!(v > 0.0);
    }

    #[test]
    fn dual_norm_self_duality_for_l2() {
        let mesh = cube(1);
        let surf = Arc::new(boundary_triangulation(&mesh));
        let mh = FESpace::surface(&surf, Family::SurfDg, 0);
        let m = assemble(&mh, &mh, BilinearKind::Mass, 2).to_dense();
        let g = l2_project_dg(&mh, &|x: Vector3<f64>| 1.0 + x.x - x.y, 4);
        // primal = L2 Gram, pairing = L2 mass: dual norm == L2 norm
        let dn = dual_norm(&g, &m, &m);
        let l2 = (&m * &g).dot(&g).sqrt();
        assert!((dn - l2).abs() < 1e-10 * l2);
    }

    #[test]
    fn quotient_norm_kills_constants() {
        let mesh = cube(1);
        let surf = Arc::new(boundary_triangulation(&mesh));
        let ph = FESpace::surface(&surf, Family::SurfLagrange, 1);
        let semi = slobodetskij_gram(&ph, 0.5);
        let mass = assemble(&ph, &ph, BilinearKind::Mass, 2).to_dense();
        let a = semi + mass;
        let one = DVector::from_element(ph.ndof, 1.0);
        let q = quotient_norm(&(one.clone() * 3.5), &a, &one);
        assert!(q < 1e-8);
        let phi = DVector::from_fn(ph.ndof, |i, _| (i as f64).sin());
        let q1 = quotient_norm(&phi, &a, &one);
        let q2 = quotient_norm(&(&phi + &one * 10.0), &a, &one);
        assert!((q1 - q2).abs() < 1e-7 * q1.max(1.0));
    }
}
