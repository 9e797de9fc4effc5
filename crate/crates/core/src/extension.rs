//! Discrete extension (lifting) operators for normal and tangential traces.
//!
//! `RtExtension` lifts boundary data from the normal-trace space into H(div)
//! by a mixed Neumann solve with the trace imposed on boundary DOFs; the
//! result reproduces the trace and is divergence-free coefficient-exactly.
//! `NedExtension` lifts tangential traces into H(curl) through a six-stage
//! pipeline (surface divergence, RT extension, curl right-inverse, surface
//! potential, harmonic lift), and `extension_norm_estimate` measures the
//! operator norm against fractional boundary Grams.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::complex::{diff_operator, trace_operator, DiffKind, TraceKind};
use crate::fe::assemble::{assemble, integral_vector, BilinearKind};
use crate::fe::{DofEntity, FESpace, Family};
use crate::la::{max_gen_eigenvalue, SparseBuilder, SparseLu, SparseMat};
use crate::mesh::surface::{boundary_triangulation, SurfaceMesh};
use crate::mesh::Mesh;

#[derive(Debug, Error)]
pub enum ExtensionError {
    #[error("datum has nonzero mean: |int g| = {0:.3e} relative")]
    NotMeanZero(f64),
    #[error("field is not divergence-free: residual {0:.3e} relative")]
    NotDivFree(f64),
    #[error("pipeline stage '{stage}' residual {residual:.3e} above tolerance")]
    Stage { stage: &'static str, residual: f64 },
}

/// The full compatible family of spaces on one mesh, degree k.
pub struct Spaces {
    pub mesh: Arc<Mesh>,
    pub surf: Arc<SurfaceMesh>,
    pub k: u32,
    /// Raviart-Thomas H(div) space
    pub vh: Arc<FESpace>,
    /// discontinuous pressure space
    pub uh: Arc<FESpace>,
    /// Nedelec H(curl) space
    pub nh: Arc<FESpace>,
    /// Lagrange potential space, degree k+1
    pub wh: Arc<FESpace>,
    /// normal-trace space on the boundary
    pub mh: Arc<FESpace>,
    /// tangential-trace space on the boundary
    pub rh: Arc<FESpace>,
    /// surface potential space, degree k+1
    pub ph: Arc<FESpace>,
}

impl Spaces {
    pub fn new(mesh: &Arc<Mesh>, k: u32) -> Spaces {
        let surf = Arc::new(boundary_triangulation(mesh));
        Spaces {
            mesh: mesh.clone(),
            surf: surf.clone(),
            k,
            vh: FESpace::volume(mesh, Family::RaviartThomas, k),
            uh: FESpace::volume(mesh, Family::Dg, k),
            nh: FESpace::volume(mesh, Family::Nedelec, k),
            wh: FESpace::volume(mesh, Family::Lagrange, k + 1),
            mh: FESpace::surface(&surf, Family::SurfDg, k),
            rh: FESpace::surface(&surf, Family::SurfRt, k),
            ph: FESpace::surface(&surf, Family::SurfLagrange, k + 1),
        }
    }
}

// ---------------------------------------------------------------------------
// RT extension (normal trace)
// ---------------------------------------------------------------------------

/// Mixed-Neumann extension solver, factorized once per mesh.
pub struct RtExtension {
    vh: Arc<FESpace>,
    mh: Arc<FESpace>,
    /// (m_dof, v_dof, sign) of the normal trace selection
    trace: Vec<(usize, usize, f64)>,
    interior: Vec<usize>,
    mass: SparseMat,
    div: SparseMat,
    iv_u: DVector<f64>,
    lu: SparseLu,
    volume: f64,
}

impl RtExtension {
    pub fn new(sp: &Spaces) -> RtExtension {
        let vh = sp.vh.clone();
        let uh = sp.uh.clone();
        let mh = sp.mh.clone();
        let gn = trace_operator(TraceKind::Normal, &vh, &mh);
        let trace = gn.triplets();
        let mut is_boundary = vec![false; vh.ndof];
        for &(_, vj, _) in &trace {
            is_boundary[vj] = true;
        }
        let interior: Vec<usize> = (0..vh.ndof).filter(|&i| !is_boundary[i]).collect();
        let mut pos = vec![None; vh.ndof];
        for (p, &i) in interior.iter().enumerate() {
            pos[i] = Some(p);
        }
        let mass = assemble(&vh, &vh, BilinearKind::Mass, 2);
        let div = assemble(&uh, &vh, BilinearKind::DivMass, 2);
        let iv_u = integral_vector(&uh);
        let ni = interior.len();
        let nu = uh.ndof;
        // symmetric saddle: [[M_II, -D_I^T, 0], [-D_I, 0, c], [0, c^T, 0]]
        let mut b = SparseBuilder::new(ni + nu + 1, ni + nu + 1);
        for (i, j, v) in mass.triplets() {
            if let (Some(pi), Some(pj)) = (pos[i], pos[j]) {
                b.add(pi, pj, v);
            }
        }
        for (u, vj, v) in div.triplets() {
            if let Some(pj) = pos[vj] {
                b.add(pj, ni + u, -v);
                b.add(ni + u, pj, -v);
            }
        }
        for u in 0..nu {
            if iv_u[u] != 0.0 {
                b.add(ni + u, ni + nu, iv_u[u]);
                b.add(ni + nu, ni + u, iv_u[u]);
            }
        }
        let lu = b.build().lu().expect("mixed saddle factorizes");
        RtExtension {
            vh,
            mh,
            trace,
            interior,
            mass,
            div,
            iv_u,
            lu,
            volume: sp.mesh.total_volume(),
        }
    }

    fn solve(&self, g: &DVector<f64>, source: f64) -> DVector<f64> {
        self.solve_mixed(g, &(&self.iv_u * source)).0
    }

    /// Extension of mean-zero data: trace reproduced and divergence zero,
    /// both coefficient-exactly.
    pub fn extend_meanzero(&self, g: &DVector<f64>) -> Result<DVector<f64>, ExtensionError> {
        let total = crate::fe::surf_dg_integral(&self.mh, g);
        let scale = g.norm().max(1e-300);
        if total.abs() > 1e-10 * scale {
            return Err(ExtensionError::NotMeanZero(total.abs() / scale));
        }
        Ok(self.solve(g, 0.0))
    }

    /// Extension of arbitrary data: the mean part is carried by a constant
    /// volume source, so `div sigma = (int g) / |Omega|` cellwise.
    pub fn extend(&self, g: &DVector<f64>) -> DVector<f64> {
        let total = crate::fe::surf_dg_integral(&self.mh, g);
        self.solve(g, total / self.volume)
    }

    /// General mixed Neumann solve: sigma.n = g essentially and
    /// (div sigma, w) = target_w for every w, with u mean-zero. Returns
    /// (sigma, u).
    pub fn solve_mixed(&self, g: &DVector<f64>, target: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let ni = self.interior.len();
        let nu = self.iv_u.len();
        let mut sigma = DVector::zeros(self.vh.ndof);
        for &(mi, vj, sgn) in &self.trace {
            sigma[vj] = sgn * g[mi];
        }
        let msig = self.mass.mul_vec(&sigma);
        let dsig = self.div.mul_vec(&sigma);
        let mut rhs = DVector::zeros(ni + nu + 1);
        for (p, &vi) in self.interior.iter().enumerate() {
            rhs[p] = -msig[vi];
        }
        for u in 0..nu {
            rhs[ni + u] = dsig[u] - target[u];
        }
        let x = self.lu.solve(&rhs);
        for (p, &vi) in self.interior.iter().enumerate() {
            sigma[vi] = x[p];
        }
        let uh = DVector::from_fn(nu, |u, _| x[ni + u]);
        (sigma, uh)
    }

    /// Relative residual of the mixed system against homogeneous-trace test
    /// functions (Galerkin orthogonality check).
    pub fn mixed_residual(
        &self,
        sigma: &DVector<f64>,
        u: &DVector<f64>,
        target: &DVector<f64>,
    ) -> f64 {
        let r1 = self.mass.mul_vec(sigma) - self.div.mul_transpose_vec(u);
        let mut m: f64 = 0.0;
        for &vi in &self.interior {
            m = m.max(r1[vi].abs());
        }
        let r2 = self.div.mul_vec(sigma) - target;
        // the multiplier projects out the constant component of row 2
        let csq = self.iv_u.norm_squared();
        let r2p = &r2 - &self.iv_u * (self.iv_u.dot(&r2) / csq);
        let scale = sigma.norm().max(u.norm()).max(1e-300);
        m.max(r2p.amax()) / scale
    }

    /// Coefficient residuals (relative): trace reproduction and divergence.
    pub fn residuals(&self, g: &DVector<f64>, sigma: &DVector<f64>, source: f64) -> (f64, f64) {
        let mut tr: f64 = 0.0;
        for &(mi, vj, sgn) in &self.trace {
            tr = tr.max((sgn * sigma[vj] - g[mi]).abs());
        }
        let d = self.div.mul_vec(sigma);
        let mut dr: f64 = 0.0;
        for u in 0..d.len() {
            dr = dr.max((d[u] - source * self.iv_u[u]).abs());
        }
        let gs = g.norm().max(1e-300);
        let ss = sigma.norm().max(1e-300);
        (tr / gs, dr / ss)
    }
}

// ---------------------------------------------------------------------------
// curl right-inverse
// ---------------------------------------------------------------------------

/// Minimal-L2 right-inverse of the curl on the Nedelec space, gauged by
/// orthogonality to discrete gradients.
pub struct CurlInverse {
    nh: Arc<FESpace>,
    wh: Arc<FESpace>,
    cm: SparseMat,
    curl_map: SparseMat,
    div_map: SparseMat,
    lu: SparseLu,
}

impl CurlInverse {
    pub fn new(sp: &Spaces) -> CurlInverse {
        let nh = sp.nh.clone();
        let wh = sp.wh.clone();
        let k = assemble(&nh, &nh, BilinearKind::Stiffness, 2);
        let mg = assemble(&nh, &wh, BilinearKind::GradMass, 2);
        let cm = assemble(&sp.vh, &nh, BilinearKind::CurlMass, 2);
        let curl_map = diff_operator(DiffKind::Curl, &nh, &sp.vh);
        let div_map = diff_operator(DiffKind::Div, &sp.vh, &sp.uh);
        let nn = nh.ndof;
        let nw = wh.ndof;
        // [[K, M_N G, 0], [G^T M_N, 0, e], [0, e^T, 0]]
        let mut b = SparseBuilder::new(nn + nw + 1, nn + nw + 1);
        for (i, j, v) in k.triplets() {
            b.add(i, j, v);
        }
        for (i, j, v) in mg.triplets() {
            b.add(i, nn + j, v);
            b.add(nn + j, i, v);
        }
        for j in 0..nw {
            b.add(nn + j, nn + nw, 1.0);
            b.add(nn + nw, nn + j, 1.0);
        }
        let lu = b.build().lu().expect("curl saddle factorizes");
        CurlInverse { nh, wh, cm, curl_map, div_map, lu }
    }

    /// w = argmin ||w||_{L2} s.t. curl w = v (v must be divergence-free).
    pub fn solve(&self, v: &DVector<f64>) -> Result<DVector<f64>, ExtensionError> {
        let scale = v.norm().max(1e-300);
        let d = self.div_map.mul_vec(v);
        let dr = d.amax() / scale;
        if dr > 1e-9 && v.norm() > 0.0 {
            return Err(ExtensionError::NotDivFree(dr));
        }
        let nn = self.nh.ndof;
        let nw = self.wh.ndof;
        let rhs_w = self.cm.mul_transpose_vec(v);
        let mut rhs = DVector::zeros(nn + nw + 1);
        for i in 0..nn {
            rhs[i] = rhs_w[i];
        }
        let x = self.lu.solve(&rhs);
        let w = DVector::from_fn(nn, |i, _| x[i]);
        let res = (self.curl_map.mul_vec(&w) - v).amax() / scale;
        if res > 1e-8 {
            return Err(ExtensionError::Stage { stage: "curl_right_inverse", residual: res });
        }
        Ok(w)
    }
}

// ---------------------------------------------------------------------------
// surface scalar potential
// ---------------------------------------------------------------------------

/// Least-squares inversion of the surface curl, mean-zero gauged.
pub struct PotentialSolver {
    ph: Arc<FESpace>,
    p_pair: SparseMat,
    sc_map: SparseMat,
    sd_map: SparseMat,
    lu: SparseLu,
}

impl PotentialSolver {
    pub fn new(sp: &Spaces) -> PotentialSolver {
        let ph = sp.ph.clone();
        // surface rotation is an isometry, so the surf-curl normal matrix is
        // the surface H1 stiffness
        let s = assemble(&ph, &ph, BilinearKind::Stiffness, 2);
        let p_pair = assemble(&sp.rh, &ph, BilinearKind::SurfCurlMass, 2);
        let sc_map = diff_operator(DiffKind::SurfCurl, &ph, &sp.rh);
        let sd_map = diff_operator(DiffKind::SurfDiv, &sp.rh, &sp.mh);
        let a = integral_vector(&ph);
        let np = ph.ndof;
        let mut b = SparseBuilder::new(np + 1, np + 1);
        for (i, j, v) in s.triplets() {
            b.add(i, j, v);
        }
        for i in 0..np {
            if a[i] != 0.0 {
                b.add(i, np, a[i]);
                b.add(np, i, a[i]);
            }
        }
        let lu = b.build().lu().expect("potential normal equations factorize");
        PotentialSolver { ph, p_pair, sc_map, sd_map, lu }
    }

    /// phi with curl_Gamma phi = m coefficient-exactly, int_Gamma phi = 0.
    pub fn solve(&self, m: &DVector<f64>) -> Result<DVector<f64>, ExtensionError> {
        let scale = m.norm().max(1e-300);
        let sd = self.sd_map.mul_vec(m);
        let dr = sd.amax() / scale;
        if dr > 1e-9 && m.norm() > 0.0 {
            return Err(ExtensionError::NotDivFree(dr));
        }
        let np = self.ph.ndof;
        let rhs_p = self.p_pair.mul_transpose_vec(m);
        let mut rhs = DVector::zeros(np + 1);
        for i in 0..np {
            rhs[i] = rhs_p[i];
        }
        let x = self.lu.solve(&rhs);
        let phi = DVector::from_fn(np, |i, _| x[i]);
        let res = (self.sc_map.mul_vec(&phi) - m).amax() / scale;
        if res > 1e-8 {
            return Err(ExtensionError::Stage { stage: "surface_scalar_potential", residual: res });
        }
        Ok(phi)
    }
}

// ---------------------------------------------------------------------------
// discrete harmonic lift
// ---------------------------------------------------------------------------

/// Discrete harmonic extension of boundary Lagrange data into the volume.
pub struct H1Lift {
    wh: Arc<FESpace>,
    /// surface dof -> volume dof (nodal spaces share their boundary nodes)
    bmap: Vec<usize>,
    stiff: SparseMat,
    interior: Vec<usize>,
    chol: crate::la::SparseCholesky,
}

impl H1Lift {
    pub fn new(sp: &Spaces) -> H1Lift {
        let wh = sp.wh.clone();
        let ph = sp.ph.clone();
        let surf = &sp.surf;
        let mesh = &sp.mesh;
        let d = (sp.k + 1) as usize;
        let per_edge = d - 1;
        let nv = mesh.vertices.len();
        let edge_of: HashMap<[usize; 2], usize> = mesh
            .edges
            .iter()
            .enumerate()
            .map(|(i, e)| (*e, i))
            .collect();
        let nsv = ph
            .dof_entity
            .iter()
            .filter(|e| matches!(e, DofEntity::SVertex(_)))
            .count();
        let mut bmap = Vec::with_capacity(ph.ndof);
        for (i, ent) in ph.dof_entity.iter().enumerate() {
            match *ent {
                DofEntity::SVertex(v) => bmap.push(v),
                DofEntity::SEdge(e) => {
                    let ev = edge_of[&surf.edges[e]];
                    let j = i - (nsv + e * per_edge);
                    bmap.push(nv + ev * per_edge + j);
                }
                _ => panic!("unexpected potential-space dof"),
            }
        }
        let stiff = assemble(&wh, &wh, BilinearKind::Stiffness, 2);
        let mut is_b = vec![false; wh.ndof];
        for &w in &bmap {
            is_b[w] = true;
        }
        let interior: Vec<usize> = (0..wh.ndof).filter(|&i| !is_b[i]).collect();
        let mut pos = vec![None; wh.ndof];
        for (p, &i) in interior.iter().enumerate() {
            pos[i] = Some(p);
        }
        let mut b = SparseBuilder::new(interior.len(), interior.len());
        for (i, j, v) in stiff.triplets() {
            if let (Some(pi), Some(pj)) = (pos[i], pos[j]) {
                b.add(pi, pj, v);
            }
        }
        let chol = b.build().cholesky().expect("interior stiffness SPD");
        H1Lift { wh, bmap, stiff, interior, chol }
    }

    pub fn solve(&self, phi: &DVector<f64>) -> DVector<f64> {
        let mut u = DVector::zeros(self.wh.ndof);
        for (i, &w) in self.bmap.iter().enumerate() {
            u[w] = phi[i];
        }
        let au = self.stiff.mul_vec(&u);
        let rhs = DVector::from_fn(self.interior.len(), |p, _| -au[self.interior[p]]);
        let x = self.chol.solve(&rhs);
        for (p, &i) in self.interior.iter().enumerate() {
            u[i] = x[p];
        }
        u
    }
}

// ---------------------------------------------------------------------------
// Nedelec extension pipeline
// ---------------------------------------------------------------------------

pub struct NedExtension {
    pub rt: RtExtension,
    pub curl_inv: CurlInverse,
    pub potential: PotentialSolver,
    pub lift: H1Lift,
    sdiv: SparseMat,
    gt: SparseMat,
    grad: SparseMat,
}

impl NedExtension {
    pub fn new(sp: &Spaces) -> NedExtension {
        NedExtension {
            rt: RtExtension::new(sp),
            curl_inv: CurlInverse::new(sp),
            potential: PotentialSolver::new(sp),
            lift: H1Lift::new(sp),
            sdiv: diff_operator(DiffKind::SurfDiv, &sp.rh, &sp.mh),
            gt: trace_operator(TraceKind::Tangential, &sp.nh, &sp.rh),
            grad: diff_operator(DiffKind::Grad, &sp.wh, &sp.nh),
        }
    }

    /// Lift a tangential trace r into H(curl): returns coefficients of
    /// w_h + grad u_h with tangential trace exactly r.
    pub fn extend(&self, r: &DVector<f64>) -> Result<DVector<f64>, ExtensionError> {
        let g = self.sdiv.mul_vec(r);
        // a curl-free trace (div_G r = 0 up to roundoff) needs no rotational part
        let w = if g.norm() <= 1e-12 * r.norm().max(1.0) {
            DVector::zeros(self.curl_inv.nh.ndof)
        } else {
            let v = self.rt.extend_meanzero(&g)?;
            self.curl_inv.solve(&v)?
        };
        let m = r - self.gt.mul_vec(&w);
        let phi = self.potential.solve(&m)?;
        let u = self.lift.solve(&phi);
        let out = &w + self.grad.mul_vec(&u);
        let scale = r.norm().max(1e-300);
        let res = (self.gt.mul_vec(&out) - r).amax() / scale;
        if res > 1e-8 {
            return Err(ExtensionError::Stage { stage: "tangential_trace", residual: res });
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// operator norm estimation and reporting
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Rt,
    Nedelec,
}

/// C_L = sqrt of the largest generalized eigenvalue of E^T A E x = l B x:
/// the operator norm of the extension from the boundary Gram B into the
/// volume Gram A, with E built column by column.
pub fn extension_norm_estimate(
    which: Which,
    sp: &Spaces,
    a_gram: &SparseMat,
    b_gram: &DMatrix<f64>,
) -> Result<f64, ExtensionError> {
    let nb = b_gram.nrows();
    let mut eae = DMatrix::zeros(nb, nb);
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(nb);
    match which {
        Which::Rt => {
            let ext = RtExtension::new(sp);
            for i in 0..nb {
                let mut e = DVector::zeros(nb);
                e[i] = 1.0;
                cols.push(ext.extend(&e));
            }
        }
        Which::Nedelec => {
            let ext = NedExtension::new(sp);
            for i in 0..nb {
                let mut e = DVector::zeros(nb);
                e[i] = 1.0;
                cols.push(ext.extend(&e)?);
            }
        }
    }
    for j in 0..nb {
        let acol = a_gram.mul_vec(&cols[j]);
        for i in 0..=j {
            let v = cols[i].dot(&acol);
            eae[(i, j)] = v;
            eae[(j, i)] = v;
        }
    }
    let lam = max_gen_eigenvalue(&eae, b_gram)
        .map_err(|_| ExtensionError::Stage { stage: "generalized_eigen", residual: f64::NAN })?;
    Ok(lam.max(0.0).sqrt())
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelRow {
    pub level: u32,
    pub ndof_v: usize,
    pub ndof_trace: usize,
    pub h_min: f64,
    pub h_max: f64,
    pub shape_reg: f64,
    pub c_l: f64,
    pub trace_residual: f64,
    pub div_residual: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtensionReport {
    pub family: String,
    pub which: String,
    pub degree: u32,
    pub rows: Vec<LevelRow>,
}

impl ExtensionReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "level,ndof_V,ndof_trace,h_min,h_max,shape_reg,C_L,trace_residual,div_residual,wall_time_s\n",
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{:.6e},{:.6e},{:.6e},{:.6e},{:.3e},{:.3e},{:.3}\n",
                r.level,
                r.ndof_v,
                r.ndof_trace,
                r.h_min,
                r.h_max,
                r.shape_reg,
                r.c_l,
                r.trace_residual,
                r.div_residual,
                r.wall_time_s,
            ));
        }
        s
    }

    /// Invariants: residual bounds and strictly increasing levels.
    pub fn check(&self) -> bool {
        let mut ok = true;
        for w in self.rows.windows(2) {
            ok &= w[1].level > w[0].level;
        }
        for r in &self.rows {
            ok &= r.trace_residual <= 1e-9 && r.div_residual <= 1e-9;
        }
        ok
    }
}

/// Run the extension experiment at one level and record the row.
pub fn report_row(
    which: Which,
    level: u32,
    sp: &Spaces,
    a_gram: &SparseMat,
    b_gram: &DMatrix<f64>,
    seed: u64,
) -> Result<LevelRow, ExtensionError> {
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    let t0 = Instant::now();
    let c_l = extension_norm_estimate(which, sp, a_gram, b_gram)?;
    // residuals on a random datum
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (ndof_trace, trace_residual, div_residual) = match which {
        Which::Rt => {
            let ext = RtExtension::new(sp);
            let g = DVector::from_fn(sp.mh.ndof, |_, _| rng.random_range(-1.0..1.0));
            let total = crate::fe::surf_dg_integral(&sp.mh, &g);
            let sigma = ext.extend(&g);
            let (tr, dr) = ext.residuals(&g, &sigma, total / sp.mesh.total_volume());
            (sp.mh.ndof, tr, dr)
        }
        Which::Nedelec => {
            let ext = NedExtension::new(sp);
            let r = DVector::from_fn(sp.rh.ndof, |_, _| rng.random_range(-1.0..1.0));
            let out = ext.extend(&r)?;
            let tr = (ext.gt.mul_vec(&out) - &r).amax() / r.norm();
            // pipeline identity: curl of the lift extends div_Gamma r
            let v = ext.rt.extend_meanzero(&ext.sdiv.mul_vec(&r))?;
            let curl = diff_operator(DiffKind::Curl, &sp.nh, &sp.vh).mul_vec(&out);
            let dr = (curl - &v).amax() / v.norm().max(1e-300);
            (sp.rh.ndof, tr, dr)
        }
    };
    let (h_min, h_max) = sp.mesh.h_min_max();
    Ok(LevelRow {
        level,
        ndof_v: match which {
            Which::Rt => sp.vh.ndof,
            Which::Nedelec => sp.nh.ndof,
        },
        ndof_trace,
        h_min,
        h_max,
        shape_reg: sp.mesh.shape_regularity(),
        c_l,
        trace_residual,
        div_residual,
        wall_time_s: t0.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fe::l2_project_dg;
    use crate::mesh::generate::unit_cube_mesh;
    use nalgebra::Vector3;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;

    fn spaces(n: usize, k: u32) -> Spaces {
        Spaces::new(&Arc::new(unit_cube_mesh(n)), k)
    }

    #[test]
    fn rt_extension_of_constant_normal_trace_is_constant() {
        for k in [0, 1] {
            let sp = spaces(1, k);
            let c = Vector3::new(0.3, -1.1, 0.7);
            // g = c . n is mean-zero on a closed surface
            let g = project_normal_component(&sp, c);
            let ext = RtExtension::new(&sp);
            let sigma = ext.extend_meanzero(&g).unwrap();
            let exact = sp.vh.interpolate_vector(&|_| c, 1);
            let rel = (&sigma - &exact).amax() / exact.amax();
            assert!(rel < 1e-9, "k={k}: constant not reproduced, rel={rel:.2e}");
        }
    }

    fn project_normal_component(sp: &Spaces, c: Vector3<f64>) -> DVector<f64> {
        // interpolate sigma = c into V_h, take the normal trace
        let sigma = sp.vh.interpolate_vector(&|_| c, 1);
        let gn = trace_operator(TraceKind::Normal, &sp.vh, &sp.mh);
        gn.mul_vec(&sigma)
    }

    #[test]
    fn rt_extension_zero_and_mean_rejection() {
        let sp = spaces(1, 0);
        let ext = RtExtension::new(&sp);
        let z = DVector::zeros(sp.mh.ndof);
        let s = ext.extend_meanzero(&z).unwrap();
        assert!(s.amax() == 0.0);
        let one = l2_project_dg(&sp.mh, &|_| 1.0, 2);
        assert!(matches!(
            ext.extend_meanzero(&one),
            Err(ExtensionError::NotMeanZero(_))
        ));
    }

    #[test]
    fn rt_extension_random_data_trace_and_div_exact() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for k in [0, 1] {
            let sp = spaces(2, k);
            let ext = RtExtension::new(&sp);
            for _ in 0..5 {
                let mut g = DVector::from_fn(sp.mh.ndof, |_, _| rng.random_range(-1.0_f64..1.0));
                crate::fe::remove_surf_dg_mean(&sp.mh, &mut g);
                let sigma = ext.extend_meanzero(&g).unwrap();
                let (tr, dr) = ext.residuals(&g, &sigma, 0.0);
                assert!(tr < 1e-10, "trace residual {tr:.2e}");
                assert!(dr < 1e-10, "div residual {dr:.2e}");
            }
        }
    }

    #[test]
    fn rt_extension_unit_mean_gives_constant_divergence_six() {
        let sp = spaces(2, 0);
        let ext = RtExtension::new(&sp);
        let one = l2_project_dg(&sp.mh, &|_| 1.0, 2);
        let sigma = ext.extend(&one);
        // div sigma = |Gamma|/|Omega| = 6 cellwise on the unit cube
        let (tr, dr) = ext.residuals(&one, &sigma, 6.0);
        assert!(tr < 1e-10 && dr < 1e-9, "tr={tr:.2e} dr={dr:.2e}");
    }

    #[test]
    fn curl_inverse_exact_and_minimal() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let sp = spaces(2, 0);
        let ci = CurlInverse::new(&sp);
        let curl_map = diff_operator(DiffKind::Curl, &sp.nh, &sp.vh);
        let mass_n = assemble(&sp.nh, &sp.nh, BilinearKind::Mass, 2);
        for _ in 0..3 {
            let z = DVector::from_fn(sp.nh.ndof, |_, _| rng.random_range(-1.0_f64..1.0));
            let v = curl_map.mul_vec(&z);
            let w = ci.solve(&v).unwrap();
            let res = (curl_map.mul_vec(&w) - &v).amax() / v.norm();
            assert!(res < 1e-9, "curl residual {res:.2e}");
            // minimality against the known feasible point z
            let nw = w.dot(&mass_n.mul_vec(&w));
            let nz = z.dot(&mass_n.mul_vec(&z));
            assert!(nw <= nz * (1.0 + 1e-10), "not minimal: {nw} > {nz}");
        }
        // non-divergence-free input is rejected
        let bad = sp.vh.interpolate_vector(&|x: Vector3<f64>| x, 2);
        assert!(matches!(ci.solve(&bad), Err(ExtensionError::NotDivFree(_))));
    }

    #[test]
    fn surface_potential_inverts_surface_curl() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        for k in [0, 1] {
            let sp = spaces(2, k);
            let pot = PotentialSolver::new(&sp);
            let sc = diff_operator(DiffKind::SurfCurl, &sp.ph, &sp.rh);
            let a = integral_vector(&sp.ph);
            for _ in 0..3 {
                let psi = DVector::from_fn(sp.ph.ndof, |_, _| rng.random_range(-1.0_f64..1.0));
                let m = sc.mul_vec(&psi);
                let phi = pot.solve(&m).unwrap();
                // recovers psi up to its mean, with zero mean itself
                assert!((a.dot(&phi)).abs() < 1e-8 * phi.norm().max(1.0));
                let res = (sc.mul_vec(&phi) - &m).amax() / m.norm();
                assert!(res < 1e-9, "k={k}: curl_G residual {res:.2e}");
            }
            let z = DVector::zeros(sp.rh.ndof);
            assert!(pot.solve(&z).unwrap().amax() == 0.0);
        }
    }

    #[test]
    fn h1_lift_reproduces_affine_and_is_minimal() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let sp = spaces(2, 0);
        let lift = H1Lift::new(&sp);
        let aff = |x: Vector3<f64>| 1.0 + 2.0 * x.x - x.y + 0.5 * x.z;
        let phi = sp.ph.interpolate_scalar(&aff, 1);
        let u = lift.solve(&phi);
        let exact = sp.wh.interpolate_scalar(&aff, 1);
        assert!((&u - &exact).amax() < 1e-10);
        // minimality of the H1 seminorm among same-trace competitors
        let stiff = assemble(&sp.wh, &sp.wh, BilinearKind::Stiffness, 2);
        let phi_r = DVector::from_fn(sp.ph.ndof, |_, _| rng.random_range(-1.0_f64..1.0));
        let ur = lift.solve(&phi_r);
        let base = ur.dot(&stiff.mul_vec(&ur));
        for _ in 0..20 {
            let mut z = ur.clone();
            for &i in &lift.interior {
                z[i] += rng.random_range(-1.0..1.0);
            }
            let e = z.dot(&stiff.mul_vec(&z));
            assert!(base <= e * (1.0 + 1e-12));
        }
    }

    #[test]
    fn nedelec_extension_pipeline_identities() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        for k in [0, 1] {
            let sp = spaces(2, k);
            let ext = NedExtension::new(&sp);
            let gt = trace_operator(TraceKind::Tangential, &sp.nh, &sp.rh);
            let curl_map = diff_operator(DiffKind::Curl, &sp.nh, &sp.vh);
            for _ in 0..3 {
                let r = DVector::from_fn(sp.rh.ndof, |_, _| rng.random_range(-1.0_f64..1.0));
                let out = ext.extend(&r).unwrap();
                let tr = (gt.mul_vec(&out) - &r).amax() / r.norm();
                assert!(tr < 1e-9, "k={k}: trace residual {tr:.2e}");
                // curl(L r) = extend_rt_meanzero(div_G r) coefficientwise
                let v = ext.rt.extend_meanzero(&ext.sdiv.mul_vec(&r)).unwrap();
                let c = curl_map.mul_vec(&out);
                let rel = (&c - &v).amax() / v.norm().max(1e-300);
                assert!(rel < 1e-9, "k={k}: pipeline identity {rel:.2e}");
            }
            // constant-field tangential trace: curl-free branch
            let c = Vector3::new(0.2, 0.9, -0.4);
            let w = sp.nh.interpolate_vector(&|_| c, 1);
            let r = gt.mul_vec(&w);
            let out = ext.extend(&r).unwrap();
            assert!(curl_map.mul_vec(&out).amax() < 1e-9);
            let z = DVector::zeros(sp.rh.ndof);
            assert!(ext.extend(&z).unwrap().amax() < 1e-12);
        }
    }

    #[test]
    fn norm_estimate_is_direct_ratio_in_dimension_one() {
        // 1x1 generalized eigenproblem: C_L equals the single ratio
        let sp = spaces(1, 0);
        let a = gram_hdiv(&sp);
        let ext = RtExtension::new(&sp);
        let nb = sp.mh.ndof;
        let mut b = DMatrix::identity(nb, nb);
        // restrict attention to one basis function by scaling B hugely on
        // the others; cheap proxy for the 1-D statement
        for i in 1..nb {
            b[(i, i)] = 1e12;
        }
        let cl = extension_norm_estimate(Which::Rt, &sp, &a, &b).unwrap();
        let mut e = DVector::zeros(nb);
        e[0] = 1.0;
        let s = ext.extend(&e);
        let direct = s.dot(&a.mul_vec(&s)).sqrt();
        assert!(cl >= direct * (1.0 - 1e-8));
    }

    fn gram_hdiv(sp: &Spaces) -> SparseMat {
        crate::norms::gram(&sp.vh, crate::norms::NormKind::Hdiv)
    }
}
