//! Model boundary value problems driven by discrete trace data: the mixed
//! Neumann Laplacian and the coercive curl-curl problem, plus the decoupled
//! error study separating best-approximation and boundary-datum errors.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::Serialize;
use thiserror::Error;

use crate::complex::{trace_operator, TraceKind};
use crate::fe::assemble::{assemble, load_scalar, load_vector, BilinearKind};
use crate::fe::l2_project_dg;
use crate::la::{SparseBuilder, SparseMat};
use crate::extension::{RtExtension, Spaces};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("incompatible Neumann data: |int f + int_G g| = {0:.3e}")]
    Incompatible(f64),
    #[error("factorization failed")]
    Solver,
}

/// Discrete solution of one of the model problems.
pub struct BVPSolution {
    /// flux sigma_h in V_h (mixed problem only)
    pub flux: Option<DVector<f64>>,
    /// u_h: DG coefficients (mixed) or Nedelec coefficients (curl-curl)
    pub primal: DVector<f64>,
    /// relative residual against homogeneous-trace test functions
    pub residual: f64,
}

/// Mixed Laplacian -div grad u = f with essential flux trace sigma.n = g.
pub fn solve_mixed_neumann(
    sp: &Spaces,
    rt: &RtExtension,
    f: &dyn Fn(Vector3<f64>) -> f64,
    g: &DVector<f64>,
) -> Result<BVPSolution, ProblemError> {
    // constraint target: (div sigma, w) = -(f, w)
    let fw = load_scalar(&sp.uh, f, 4);
    let target = -&fw;
    let int_f = volume_integral(sp, f);
    let int_g = crate::fe::surf_dg_integral(&sp.mh, g);
    let scale = fw.norm().max(g.norm()).max(1.0);
    if (int_f + int_g).abs() > 1e-9 * scale {
        return Err(ProblemError::Incompatible((int_f + int_g).abs()));
    }
    let (sigma, mult) = rt.solve_mixed(g, &target);
    let residual = rt.mixed_residual(&sigma, &mult, &target);
    // the constraint multiplier is the negative of the primal variable
    Ok(BVPSolution { flux: Some(sigma), primal: -mult, residual })
}

/// (f, 1) with the same quadrature accuracy as the load assembly.
pub fn volume_integral(sp: &Spaces, f: &dyn Fn(Vector3<f64>) -> f64) -> f64 {
    let iv = crate::fe::assemble::integral_vector(&sp.uh);
    iv.dot(&l2_project_dg(&sp.uh, f, 4))
}

/// Shift the constant mode of boundary data g so that the discrete
/// compatibility condition int f + int_G g = 0 holds exactly.
pub fn make_compatible(sp: &Spaces, g: &mut DVector<f64>, f: &dyn Fn(Vector3<f64>) -> f64) {
    let one = l2_project_dg(&sp.mh, &|_| 1.0, 2);
    let area = crate::fe::surf_dg_integral(&sp.mh, &one);
    let defect = volume_integral(sp, f) + crate::fe::surf_dg_integral(&sp.mh, g);
    *g -= &one * (defect / area);
}

/// Curl-curl solver with factorization shared across boundary data.
pub struct CurlCurlSolver {
    nh: Arc<FESpaceRef>,
    a: SparseMat,
    trace: Vec<(usize, usize, f64)>,
    interior: Vec<usize>,
    chol: crate::la::SparseCholesky,
}

type FESpaceRef = crate::fe::FESpace;

impl CurlCurlSolver {
    pub fn new(sp: &Spaces) -> CurlCurlSolver {
        let nh = sp.nh.clone();
        let stiff = assemble(&nh, &nh, BilinearKind::Stiffness, 2);
        let mass = assemble(&nh, &nh, BilinearKind::Mass, 2);
        let a = stiff.add(&mass);
        let gt = trace_operator(TraceKind::Tangential, &nh, &sp.rh);
        let trace = gt.triplets();
        let mut is_b = vec![false; nh.ndof];
        for &(_, vj, _) in &trace {
            is_b[vj] = true;
        }
        let interior: Vec<usize> = (0..nh.ndof).filter(|&i| !is_b[i]).collect();
        let mut pos = vec![None; nh.ndof];
        for (p, &i) in interior.iter().enumerate() {
            pos[i] = Some(p);
        }
        let mut b = SparseBuilder::new(interior.len(), interior.len());
        for (i, j, v) in a.triplets() {
            if let (Some(pi), Some(pj)) = (pos[i], pos[j]) {
                b.add(pi, pj, v);
            }
        }
        let chol = b.build().cholesky().expect("curl-curl form is SPD");
        CurlCurlSolver { nh, a, trace, interior, chol }
    }

    /// (curl u, curl z) + (u, z) = (f, z) with gamma_t u = r essential.
    pub fn solve(&self, f: &dyn Fn(Vector3<f64>) -> Vector3<f64>, r: &DVector<f64>) -> BVPSolution {
        let mut u = DVector::zeros(self.nh.ndof);
        for &(mi, vj, sgn) in &self.trace {
            u[vj] = sgn * r[mi];
        }
        let fv = load_vector(&self.nh, f, 4);
        let au = self.a.mul_vec(&u);
        let rhs = DVector::from_fn(self.interior.len(), |p, _| {
            let i = self.interior[p];
            fv[i] - au[i]
        });
        let x = self.chol.solve(&rhs);
        for (p, &i) in self.interior.iter().enumerate() {
            u[i] = x[p];
        }
        let res = self.a.mul_vec(&u) - &fv;
        let mut m: f64 = 0.0;
        for &i in &self.interior {
            m = m.max(res[i].abs());
        }
        let residual = m / u.norm().max(1e-300);
        BVPSolution { flux: None, primal: u, residual }
    }
}

pub fn solve_curlcurl(
    sp: &Spaces,
    f: &dyn Fn(Vector3<f64>) -> Vector3<f64>,
    r: &DVector<f64>,
) -> BVPSolution {
    CurlCurlSolver::new(sp).solve(f, r)
}

// ---------------------------------------------------------------------------
// decoupled error study
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Mixed,
    CurlCurl,
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyRow {
    pub level: u32,
    pub eps: f64,
    pub total_error: f64,
    pub best_approx: f64,
    pub boundary_term: f64,
    pub effectivity: f64,
}

pub fn study_rows_to_csv(rows: &[StudyRow]) -> String {
    let mut s = String::from("level,eps,total_error,best_approx,boundary_term,effectivity\n");
    for r in rows {
        s.push_str(&format!(
            "{},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e}\n",
            r.level, r.eps, r.total_error, r.best_approx, r.boundary_term, r.effectivity
        ));
    }
    s
}

/// A manufactured exact solution for the mixed problem.
pub struct MixedExact {
    pub u: Box<dyn Fn(Vector3<f64>) -> f64>,
    pub grad_u: Box<dyn Fn(Vector3<f64>) -> Vector3<f64>>,
    pub f: Box<dyn Fn(Vector3<f64>) -> f64>,
}

impl MixedExact {
    /// u = sin(pi x) cos(pi y), f = -lap u = 2 pi^2 u.
    pub fn sin_cos() -> MixedExact {
        let pi = std::f64::consts::PI;
        MixedExact {
            u: Box::new(move |x| (pi * x.x).sin() * (pi * x.y).cos()),
            grad_u: Box::new(move |x| {
                Vector3::new(
                    pi * (pi * x.x).cos() * (pi * x.y).cos(),
                    -pi * (pi * x.x).sin() * (pi * x.y).sin(),
                    0.0,
                )
            }),
            f: Box::new(move |x| 2.0 * pi * pi * (pi * x.x).sin() * (pi * x.y).cos()),
        }
    }
}

/// A manufactured exact solution for the curl-curl problem.
pub struct CurlExact {
    pub u: Box<dyn Fn(Vector3<f64>) -> Vector3<f64>>,
    pub curl_u: Box<dyn Fn(Vector3<f64>) -> Vector3<f64>>,
    pub f: Box<dyn Fn(Vector3<f64>) -> Vector3<f64>>,
}

impl CurlExact {
    /// u = (sin pi y, sin pi z, sin pi x): solenoidal, f = (1 + pi^2) u.
    pub fn sin_shift() -> CurlExact {
        let pi = std::f64::consts::PI;
        CurlExact {
            u: Box::new(move |x| {
                Vector3::new((pi * x.y).sin(), (pi * x.z).sin(), (pi * x.x).sin())
            }),
            curl_u: Box::new(move |x| {
                Vector3::new(
                    -pi * (pi * x.z).cos(),
                    -pi * (pi * x.x).cos(),
                    -pi * (pi * x.y).cos(),
                )
            }),
            f: Box::new(move |x| {
                (1.0 + pi * pi)
                    * Vector3::new((pi * x.y).sin(), (pi * x.z).sin(), (pi * x.x).sin())
            }),
        }
    }
}

/// L2 error of a vector FE function against an exact field, by quadrature.
pub fn l2_error_vector(
    space: &Arc<crate::fe::FESpace>,
    coeffs: &DVector<f64>,
    exact: &dyn Fn(Vector3<f64>) -> Vector3<f64>,
    extra_deg: u32,
) -> f64 {
    let mut total = 0.0;
    for e in 0..space.n_elems() {
        let (pts, ws) = space.elem_quad(e, space.poly_deg() + extra_deg);
        let vals = space.eval_vector_basis(e, &pts);
        for (q, &x) in pts.iter().enumerate() {
            let mut v = Vector3::zeros();
            for (i, &gd) in space.elem_dofs[e].iter().enumerate() {
                v += vals.values[i][q] * coeffs[gd];
            }
            total += ws[q] * (v - exact(x)).norm_squared();
        }
    }
    total.sqrt()
}

/// L2 error of a scalar FE function against an exact field.
pub fn l2_error_scalar(
    space: &Arc<crate::fe::FESpace>,
    coeffs: &DVector<f64>,
    exact: &dyn Fn(Vector3<f64>) -> f64,
    extra_deg: u32,
) -> f64 {
    let mut total = 0.0;
    for e in 0..space.n_elems() {
        let (pts, ws) = space.elem_quad(e, space.poly_deg() + extra_deg);
        let vals = space.eval_scalar_basis(e, &pts);
        for (q, &x) in pts.iter().enumerate() {
            let mut v = 0.0;
            for (i, &gd) in space.elem_dofs[e].iter().enumerate() {
                v += vals.values[(i, q)] * coeffs[gd];
            }
            total += ws[q] * (v - exact(x)).powi(2);
        }
    }
    total.sqrt()
}

/// L2 error of the curl of a Nedelec function.
pub fn l2_error_curl(
    space: &Arc<crate::fe::FESpace>,
    coeffs: &DVector<f64>,
    exact_curl: &dyn Fn(Vector3<f64>) -> Vector3<f64>,
    extra_deg: u32,
) -> f64 {
    let mut total = 0.0;
    for e in 0..space.n_elems() {
        let (pts, ws) = space.elem_quad(e, space.poly_deg() + extra_deg);
        let vals = space.eval_vector_basis(e, &pts);
        for (q, &x) in pts.iter().enumerate() {
            let mut v = Vector3::zeros();
            for (i, &gd) in space.elem_dofs[e].iter().enumerate() {
                v += vals.curls[i][q] * coeffs[gd];
            }
            total += ws[q] * (v - exact_curl(x)).norm_squared();
        }
    }
    total.sqrt()
}

/// Best-approximation error in the norm induced by an SPD sparse Gram:
/// distance from the exact field to the space, measured by Gram projection.
/// `pairing[i] = (exact, basis_i)` in the same inner product and
/// `exact_sq = ||exact||^2`.
pub fn best_approx_error(gram: &SparseMat, pairing: &DVector<f64>, exact_sq: f64) -> f64 {
    let chol = gram.cholesky().expect("Gram SPD");
    let p = chol.solve(pairing);
    (exact_sq - pairing.dot(&p)).max(0.0).sqrt()
}

/// Decoupled error study for the mixed problem on a mesh family.
#[allow(clippy::too_many_arguments)]
pub fn decoupled_error_study(
    kind: ProblemKind,
    meshes: &[Arc<crate::mesh::Mesh>],
    k: u32,
    eps_list: &[f64],
    boundary_gram: &dyn Fn(&Spaces) -> DMatrix<f64>,
    seed: u64,
) -> Vec<StudyRow> {
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    let mut rows = Vec::new();
    for (level, mesh) in meshes.iter().enumerate() {
        let sp = Spaces::new(mesh, k);
        let bg = boundary_gram(&sp);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed + level as u64);
        match kind {
            ProblemKind::Mixed => {
                let ex = MixedExact::sin_cos();
                let rt = RtExtension::new(&sp);
                // exact flux trace projected into M_h, compatibility-corrected
                let mut g_exact = project_normal_trace(&sp, &ex.grad_u);
                make_compatible(&sp, &mut g_exact, &ex.f);
                let mut noise =
                    DVector::from_fn(sp.mh.ndof, |_, _| rng.random_range(-1.0_f64..1.0));
                crate::fe::remove_surf_dg_mean(&sp.mh, &mut noise);
                // best approximation of (sigma, u) in L2 x L2
                let mass_v = assemble(&sp.vh, &sp.vh, BilinearKind::Mass, 2);
                let pair_v = load_vector(&sp.vh, &ex.grad_u, 4);
                let sig_sq = l2_sq_vector(&sp, &ex.grad_u);
                let ba_sigma = best_approx_error(&mass_v, &pair_v, sig_sq);
                let u0 = mean_shifted(&sp, &ex.u);
                let pair_u = load_scalar(&sp.uh, &u0, 4);
                let u_sq = l2_sq_scalar(&sp, &u0);
                let mass_u = assemble(&sp.uh, &sp.uh, BilinearKind::Mass, 2);
                let ba_u = best_approx_error(&mass_u, &pair_u, u_sq);
                let best = ba_sigma + ba_u;
                for &eps in eps_list {
                    let g = &g_exact + &noise * eps;
                    let sol = solve_mixed_neumann(&sp, &rt, &ex.f, &g).expect("compatible data");
                    let sig = sol.flux.as_ref().unwrap();
                    let te = l2_error_vector(&sp.vh, sig, &ex.grad_u, 4)
                        + l2_error_scalar(&sp.uh, &sol.primal, &u0, 4);
                    let bt = eps * quad_form(&bg, &noise).sqrt();
                    rows.push(StudyRow {
                        level: level as u32,
                        eps,
                        total_error: te,
                        best_approx: best,
                        boundary_term: bt,
                        effectivity: te / (best + bt).max(1e-300),
                    });
                }
            }
            ProblemKind::CurlCurl => {
                let ex = CurlExact::sin_shift();
                let solver = CurlCurlSolver::new(&sp);
                let r_exact = project_tangential_trace(&sp, &ex.u);
                let noise = DVector::from_fn(sp.rh.ndof, |_, _| rng.random_range(-1.0_f64..1.0));
                // best approximation in H(curl)
                let a = crate::norms::gram(&sp.nh, crate::norms::NormKind::Hcurl);
                let pair = load_vector(&sp.nh, &ex.u, 4)
                    + crate::fe::assemble::load_curl(&sp.nh, &ex.curl_u, 4);
                let ex_sq = l2_sq_vec_field(&sp, &ex.u) + l2_sq_vec_field(&sp, &ex.curl_u);
                let best = best_approx_error(&a, &pair, ex_sq);
                for &eps in eps_list {
                    let r = &r_exact + &noise * eps;
                    let sol = solver.solve(&ex.f, &r);
                    let te = l2_error_vector(&sp.nh, &sol.primal, &ex.u, 4).hypot(
                        l2_error_curl(&sp.nh, &sol.primal, &ex.curl_u, 4),
                    );
                    let bt = eps * quad_form(&bg, &noise).sqrt();
                    rows.push(StudyRow {
                        level: level as u32,
                        eps,
                        total_error: te,
                        best_approx: best,
                        boundary_term: bt,
                        effectivity: te / (best + bt).max(1e-300),
                    });
                }
            }
        }
    }
    rows
}

fn quad_form(g: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    (g * x).dot(x).max(0.0)
}

/// Normal trace of an exact vector field, projected into M_h.
pub fn project_normal_trace(sp: &Spaces, field: &dyn Fn(Vector3<f64>) -> Vector3<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(sp.mh.ndof);
    for t in 0..sp.surf.n_triangles() {
        let n = sp.surf.normals[t];
        let vals = sp.mh.apply_dofs_scalar(t, &|x| field(x).dot(&n), sp.mh.poly_deg() + 4);
        for (i, &gd) in sp.mh.elem_dofs[t].iter().enumerate() {
            out[gd] = vals[i];
        }
    }
    out
}

/// Tangential trace of an exact vector field, interpolated into R_h.
pub fn project_tangential_trace(
    sp: &Spaces,
    field: &dyn Fn(Vector3<f64>) -> Vector3<f64>,
) -> DVector<f64> {
    let surf = &sp.surf;
    let mut out = DVector::zeros(sp.rh.ndof);
    let mut seen = vec![false; sp.rh.ndof];
    for t in 0..surf.n_triangles() {
        let n = surf.normals[t];
        let vals = sp.rh.apply_dofs_vector(t, &|x| field(x).cross(&n), sp.rh.poly_deg() + 4);
        for (i, &gd) in sp.rh.elem_dofs[t].iter().enumerate() {
            if !seen[gd] {
                out[gd] = vals[i];
                seen[gd] = true;
            }
        }
    }
    out
}

fn mean_shifted<'a>(
    sp: &Spaces,
    u: &'a dyn Fn(Vector3<f64>) -> f64,
) -> impl Fn(Vector3<f64>) -> f64 + 'a {
    // the mixed solution normalizes u to zero volume mean
    let mut total = 0.0;
    let mut vol = 0.0;
    for c in 0..sp.mesh.n_cells() {
        let (pts, ws) = sp.uh.elem_quad(c, sp.uh.poly_deg() + 4);
        for (q, &x) in pts.iter().enumerate() {
            total += ws[q] * u(x);
            vol += ws[q];
        }
    }
    let mean = total / vol;
    move |x| u(x) - mean
}

fn l2_sq_vector(sp: &Spaces, f: &dyn Fn(Vector3<f64>) -> Vector3<f64>) -> f64 {
    l2_sq_vec_field(sp, f)
}

fn l2_sq_vec_field(sp: &Spaces, f: &dyn Fn(Vector3<f64>) -> Vector3<f64>) -> f64 {
    let mut total = 0.0;
    for c in 0..sp.mesh.n_cells() {
        let (pts, ws) = sp.uh.elem_quad(c, sp.uh.poly_deg() + 6);
        for (q, &x) in pts.iter().enumerate() {
            total += ws[q] * f(x).norm_squared();
        }
    }
    total
}

fn l2_sq_scalar(sp: &Spaces, f: &dyn Fn(Vector3<f64>) -> f64) -> f64 {
    let mut total = 0.0;
    for c in 0..sp.mesh.n_cells() {
        let (pts, ws) = sp.uh.elem_quad(c, sp.uh.poly_deg() + 6);
        for (q, &x) in pts.iter().enumerate() {
            total += ws[q] * f(x).powi(2);
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate::unit_cube_mesh;

    fn spaces(n: usize, k: u32) -> Spaces {
        Spaces::new(&Arc::new(unit_cube_mesh(n)), k)
    }

    #[test]
    fn mixed_neumann_reproduces_linear_solution() {
        for k in [0, 1] {
            let sp = spaces(2, k);
            let rt = RtExtension::new(&sp);
            // u = x - 1/2, sigma = (1,0,0), f = 0
            let g = project_normal_trace(&sp, &|_| Vector3::new(1.0, 0.0, 0.0));
            let sol = solve_mixed_neumann(&sp, &rt, &|_| 0.0, &g).unwrap();
            let sig = sol.flux.unwrap();
            let e_s = l2_error_vector(&sp.vh, &sig, &|_| Vector3::new(1.0, 0.0, 0.0), 2);
            // the mixed primal is the L2 projection of the exact solution
            let proj = l2_project_dg(&sp.uh, &|x| x.x - 0.5, 4);
            let e_u = (&sol.primal - &proj).amax();
            assert!(e_s < 1e-10, "k={k}: flux error {e_s:.2e}");
            assert!(e_u < 1e-9, "k={k}: primal error {e_u:.2e}");
            assert!(sol.residual < 1e-9);
        }
    }

    #[test]
    fn mixed_neumann_zero_data_zero_solution() {
        let sp = spaces(1, 0);
        let rt = RtExtension::new(&sp);
        let g = DVector::zeros(sp.mh.ndof);
        let sol = solve_mixed_neumann(&sp, &rt, &|_| 0.0, &g).unwrap();
        assert!(sol.flux.unwrap().amax() < 1e-13);
        assert!(sol.primal.amax() < 1e-13);
    }

    #[test]
    fn mixed_neumann_rejects_incompatible_data() {
        let sp = spaces(1, 0);
        let rt = RtExtension::new(&sp);
        let g = l2_project_dg(&sp.mh, &|_| 1.0, 2);
        assert!(matches!(
            solve_mixed_neumann(&sp, &rt, &|_| 0.0, &g),
            Err(ProblemError::Incompatible(_))
        ));
    }

    #[test]
    fn mixed_flux_converges_at_first_order() {
        let ex = MixedExact::sin_cos();
        let mut errs = Vec::new();
        for n in [2, 4, 8] {
            let sp = spaces(n, 0);
            let rt = RtExtension::new(&sp);
            let mut g = project_normal_trace(&sp, &ex.grad_u);
            make_compatible(&sp, &mut g, &ex.f);
            let sol = solve_mixed_neumann(&sp, &rt, &ex.f, &g).unwrap();
            errs.push(l2_error_vector(&sp.vh, sol.flux.as_ref().unwrap(), &ex.grad_u, 4));
        }
        let r1 = (errs[0] / errs[1]).log2();
        let r2 = (errs[1] / errs[2]).log2();
        assert!(r1 > 0.8 && r2 > 0.8, "orders {r1:.2} {r2:.2}");
        assert!(r2 < 1.4, "superconvergent? {r2:.2}");
    }

    #[test]
    fn curlcurl_reproduces_constant_field() {
        for k in [0, 1] {
            let sp = spaces(2, k);
            let c = Vector3::new(0.4, -0.2, 1.0);
            let r = project_tangential_trace(&sp, &|_| c);
            let sol = solve_curlcurl(&sp, &|_| c, &r);
            let e = l2_error_vector(&sp.nh, &sol.primal, &|_| c, 2);
            assert!(e < 1e-10, "k={k}: error {e:.2e}");
            assert!(sol.residual < 1e-9);
        }
    }

    #[test]
    fn curlcurl_converges_in_hcurl() {
        let ex = CurlExact::sin_shift();
        let mut errs = Vec::new();
        for n in [2, 4, 8] {
            let sp = spaces(n, 0);
            let r = project_tangential_trace(&sp, &ex.u);
            let sol = solve_curlcurl(&sp, &ex.f, &r);
            let e = l2_error_vector(&sp.nh, &sol.primal, &ex.u, 4)
                .hypot(l2_error_curl(&sp.nh, &sol.primal, &ex.curl_u, 4));
            errs.push(e);
        }
        let r1 = (errs[0] / errs[1]).log2();
        let r2 = (errs[1] / errs[2]).log2();
        assert!(r1 > 0.8 && r2 > 0.8, "orders {r1:.2} {r2:.2}");
    }

    #[test]
    fn study_boundary_term_is_linear_in_eps() {
        let meshes = vec![Arc::new(unit_cube_mesh(2))];
        let rows = decoupled_error_study(
            ProblemKind::Mixed,
            &meshes,
            0,
            &[0.5, 1.0],
            &|sp| {
                // any SPD boundary Gram demonstrates the exact linearity
                assemble(&sp.mh, &sp.mh, BilinearKind::Mass, 2).to_dense()
            },
            3,
        );
        let b0 = rows[0].boundary_term;
        let b1 = rows[1].boundary_term;
        assert!((b1 / b0 - 2.0).abs() < 1e-12, "not linear: {b0} {b1}");
        for r in &rows {
            assert!(r.total_error.is_finite() && r.effectivity > 0.0);
        }
    }
}
