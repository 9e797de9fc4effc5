//! Acceptance gate: every headline claim of the project, each as one test
//! printing a single PASS line. Run with `--nocapture` to see the lines.

use std::sync::Arc;

use nalgebra::{DVector, Matrix3, Vector3};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tracelift::complex::{diff_operator, verify_exactness, DiffKind};
use tracelift::extension::{report_row, PotentialSolver, RtExtension, Spaces, Which};
use tracelift::fe::assemble::{assemble, BilinearKind};
use tracelift::fe::{l2_project_dg, FESpace, Family};
use tracelift::mesh::generate::{lshape_prism_mesh, unit_cube_mesh};
use tracelift::mesh::Mesh;
use tracelift::norms::{
    calibrate_mean_weight, dual_norm, gram, hminus_half_gram, hminus_half_par_div_gram,
    quotient_norm, slobodetskij_gram, slobodetskij_montecarlo, NormKind,
};
use tracelift::problems::{decoupled_error_study, l2_error_vector, ProblemKind, StudyRow};
use tracelift::study::{mesh_family, run, trend_slope, FamilyKind, StudyConfig, StudyKind};

fn uniform_cubes(levels: u32) -> Vec<Arc<Mesh>> {
    mesh_family("cube", FamilyKind::Uniform, levels).unwrap()
}

/// Trace reproduction and divergence control: coefficient-exact extensions
/// for 100 random boundary data per mesh.
#[test]
fn criterion_01_rt_extension_exactness() {
    let mut worst_t: f64 = 0.0;
    let mut worst_d: f64 = 0.0;
    for domain in ["cube", "lprism"] {
        let base = match domain {
            "cube" => unit_cube_mesh(1),
            _ => lshape_prism_mesh(1),
        };
        let mut mesh = Arc::new(base);
        for _level in 0..3 {
            for k in [0u32, 1] {
                let sp = Spaces::new(&mesh, k);
                let ext = RtExtension::new(&sp);
                let mut rng = ChaCha8Rng::seed_from_u64(42 + k as u64);
                for _ in 0..100 {
                    let g = DVector::from_fn(sp.mh.ndof, |_, _| rng.random_range(-1.0..1.0));
                    let total = tracelift::fe::surf_dg_integral(&sp.mh, &g);
                    let sigma = ext.extend(&g);
                    let (tr, dr) =
                        ext.residuals(&g, &sigma, total / sp.mesh.total_volume());
                    worst_t = worst_t.max(tr);
                    worst_d = worst_d.max(dr);
                }
            }
            mesh = Arc::new(
                tracelift::mesh::refine::refine(
                    &mesh,
                    tracelift::mesh::refine::RefineMode::Uniform,
                    &[],
                )
                .unwrap(),
            );
        }
    }
    assert!(
        worst_t <= 1e-9 && worst_d <= 1e-9,
        "residuals {worst_t:.2e} / {worst_d:.2e}"
    );
    println!(
        "PASS [1] trace/div reproduction: worst residuals {worst_t:.2e} (trace), {worst_d:.2e} (div)"
    );
}

fn cl_sweep(which: Which, family: FamilyKind, levels: u32) -> Vec<f64> {
    let meshes = mesh_family("cube", family, levels).unwrap();
    let w = calibrate_mean_weight(&meshes[0]);
    let mut cls = Vec::new();
    for (level, mesh) in meshes.iter().enumerate() {
        let sp = Spaces::new(mesh, 0);
        let (a, b) = match which {
            Which::Rt => (
                gram(&sp.vh, NormKind::Hdiv),
                hminus_half_gram(&sp.mh, mesh, 1, w).matrix,
            ),
            Which::Nedelec => (
                gram(&sp.nh, NormKind::Hcurl),
                hminus_half_par_div_gram(&sp.rh, &sp.mh, mesh, 1, w).matrix,
            ),
        };
        let row = report_row(which, level as u32, &sp, &a, &b, 17).unwrap();
        assert!(
            row.trace_residual <= 1e-8 && row.div_residual <= 1e-8,
            "{which:?} level {level}: residuals {:.2e} / {:.2e}",
            row.trace_residual,
            row.div_residual
        );
        cls.push(row.c_l);
    }
    cls
}

fn assert_bounded(cls: &[f64], label: &str) {
    let lo = cls.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = cls.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let slope = trend_slope(cls);
    assert!(hi / lo <= 3.0, "{label}: C_L drift {:.3} > 3", hi / lo);
    assert!(
        slope <= 0.05 * cls[0],
        "{label}: slope {slope:.4} > {:.4}",
        0.05 * cls[0]
    );
}

#[test]
fn criterion_02_rt_uniform_boundedness() {
    let u = cl_sweep(Which::Rt, FamilyKind::Uniform, 4);
    assert_bounded(&u, "rt/uniform");
    let g = cl_sweep(Which::Rt, FamilyKind::VertexGraded, 4);
    assert_bounded(&g, "rt/vertex_graded");
    println!(
        "PASS [2] H(div) extension norm bounded: uniform C_L {:?}, graded C_L {:?}",
        u.iter().map(|c| (c * 1e3).round() / 1e3).collect::<Vec<_>>(),
        g.iter().map(|c| (c * 1e3).round() / 1e3).collect::<Vec<_>>()
    );
}

#[test]
fn criterion_03_nedelec_uniform_boundedness() {
    let u = cl_sweep(Which::Nedelec, FamilyKind::Uniform, 4);
    assert_bounded(&u, "nedelec/uniform");
    let g = cl_sweep(Which::Nedelec, FamilyKind::VertexGraded, 4);
    assert_bounded(&g, "nedelec/vertex_graded");
    println!(
        "PASS [3] H(curl) extension norm bounded and pipeline identity holds: uniform C_L {:?}, graded C_L {:?}",
        u.iter().map(|c| (c * 1e3).round() / 1e3).collect::<Vec<_>>(),
        g.iter().map(|c| (c * 1e3).round() / 1e3).collect::<Vec<_>>()
    );
}

#[test]
fn criterion_04_inverse_inequality() {
    for (family, bound) in [(FamilyKind::Uniform, 2.0), (FamilyKind::BoundaryGraded, 3.0)] {
        let meshes = mesh_family("cube", family, 4).unwrap();
        let w = calibrate_mean_weight(&meshes[0]);
        let rows =
            tracelift::study::verify_inverse_inequality(&meshes, 0, 40, 1, w, 23, 600);
        let vals: Vec<f64> = rows.iter().map(|r| r.max_ratio_sampled).collect();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(
            hi / lo <= bound,
            "{}: max-ratio drift {:.3} > {bound}",
            family.name(),
            hi / lo
        );
    }
    println!("PASS [4] inverse inequality ratios bounded on uniform and boundary-graded families");
}

/// Random vector polynomial of total degree <= d.
fn random_poly_field(d: u32, rng: &mut ChaCha8Rng) -> (Box<dyn Fn(Vector3<f64>) -> Vector3<f64>>, Box<dyn Fn(Vector3<f64>) -> f64>) {
    let c0 = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let m = Matrix3::from_fn(|_, _| rng.random_range(-1.0_f64..1.0));
    let q = if d >= 2 {
        Matrix3::from_fn(|_, _| rng.random_range(-1.0_f64..1.0))
    } else {
        Matrix3::zeros()
    };
    let field = move |x: Vector3<f64>| -> Vector3<f64> {
        let x2 = Vector3::new(x.x * x.x, x.y * x.y, x.z * x.z);
        c0 + m * x + q * x2
    };
    let div = move |x: Vector3<f64>| -> f64 {
        m.trace() + 2.0 * (q[(0, 0)] * x.x + q[(1, 1)] * x.y + q[(2, 2)] * x.z)
    };
    (Box::new(field), Box::new(div))
}

#[test]
fn criterion_05_commuting_projection_and_order() {
    // exact commutation on polynomial fields
    for k in [0u32, 1] {
        let mesh = Arc::new(unit_cube_mesh(2));
        let sp = Spaces::new(&mesh, k);
        let dmap = diff_operator(DiffKind::Div, &sp.vh, &sp.uh);
        let mut rng = ChaCha8Rng::seed_from_u64(5 + k as u64);
        for _ in 0..20 {
            let (f, divf) = random_poly_field(k + 1, &mut rng);
            let pi = sp.vh.interpolate_vector(&*f, 4);
            let lhs = dmap.mul_vec(&pi);
            let rhs = l2_project_dg(&sp.uh, &*divf, k + 1);
            let err = (&lhs - &rhs).amax() / rhs.amax().max(1.0);
            assert!(err <= 1e-8, "k={k}: commutation defect {err:.2e}");
        }
    }
    // interpolation order in L2
    let pi_ = std::f64::consts::PI;
    let smooth = |x: Vector3<f64>| {
        Vector3::new((pi_ * x.y).sin(), (pi_ * x.z).sin(), (pi_ * x.x).sin())
    };
    for k in [0u32, 1] {
        let mut errs = Vec::new();
        for n in [2usize, 4, 8] {
            let mesh = Arc::new(unit_cube_mesh(n));
            let sp = Spaces::new(&mesh, k);
            let pi = sp.vh.interpolate_vector(&smooth, k + 3);
            errs.push(l2_error_vector(&sp.vh, &pi, &smooth, 4));
        }
        let order = (errs[1] / errs[2]).log2();
        assert!(
            order >= 0.9 * (k as f64 + 1.0),
            "k={k}: observed order {order:.2}"
        );
    }
    println!("PASS [5] RT projection commutes with div and converges at the expected order");
}

#[test]
fn criterion_06_derham_exactness_and_potential() {
    for k in [0u32, 1] {
        for n in [1usize, 2] {
            let mesh = Arc::new(unit_cube_mesh(n));
            let rep = verify_exactness(&mesh, k);
            assert!(
                rep.passed && rep.full_defects == [0; 4] && rep.bc_defects == [0; 4],
                "k={k}, n={n}: defects {:?} / {:?}",
                rep.full_defects,
                rep.bc_defects
            );
        }
    }
    // surface potential on 50 random divergence-free tangential fields
    let mesh = Arc::new(unit_cube_mesh(2));
    let sp = Spaces::new(&mesh, 0);
    let pot = PotentialSolver::new(&sp);
    let sc = assemble(&sp.rh, &sp.ph, BilinearKind::SurfCurlMass, 2);
    let mr = assemble(&sp.rh, &sp.rh, BilinearKind::Mass, 2)
        .cholesky()
        .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..50 {
        let phi = DVector::from_fn(sp.ph.ndof, |_, _| rng.random_range(-1.0..1.0));
        let m = mr.solve(&sc.mul_vec(&phi));
        pot.solve(&m).expect("potential residual within tolerance");
    }
    println!("PASS [6] de Rham complexes exact and surface potentials recovered");
}

#[test]
fn criterion_07_surface_poincare_ratio() {
    let meshes = uniform_cubes(3);
    let w = calibrate_mean_weight(&meshes[0]);
    let mut maxima = Vec::new();
    for mesh in &meshes {
        let sp = Spaces::new(mesh, 0);
        let a = slobodetskij_gram(&sp.ph, 0.5)
            + assemble(&sp.ph, &sp.ph, BilinearKind::Mass, 2).to_dense();
        let one = DVector::from_element(sp.ph.ndof, 1.0);
        let g_par = hminus_half_par_div_gram(&sp.rh, &sp.mh, mesh, 1, w).matrix;
        let sc = assemble(&sp.rh, &sp.ph, BilinearKind::SurfCurlMass, 2);
        let mr = assemble(&sp.rh, &sp.rh, BilinearKind::Mass, 2)
            .cholesky()
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut worst: f64 = 0.0;
        for _ in 0..50 {
            let phi = DVector::from_fn(sp.ph.ndof, |_, _| rng.random_range(-1.0..1.0));
            let num = quotient_norm(&phi, &a, &one);
            let c = mr.solve(&sc.mul_vec(&phi));
            let den = (&g_par * &c).dot(&c).max(0.0).sqrt();
            if den > 1e-12 {
                worst = worst.max(num / den);
            }
        }
        maxima.push(worst);
    }
    let lo = maxima.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = maxima.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!(hi / lo <= 3.0, "ratio drift {:.3} across levels", hi / lo);
    println!(
        "PASS [7] surface Poincare-type ratio stable across levels (drift {:.3})",
        hi / lo
    );
}

#[test]
fn criterion_08_decoupled_error_estimates() {
    let meshes = uniform_cubes(4);
    let w = calibrate_mean_weight(&meshes[0]);
    let rows: Vec<StudyRow> = decoupled_error_study(
        ProblemKind::Mixed,
        &meshes,
        0,
        &[0.0, 1e-2, 1.0, 2.0, 4.0],
        &|sp| hminus_half_gram(&sp.mh, &sp.mesh, 1, w).matrix,
        8,
    );
    // effectivity drift at the small-perturbation operating point
    let effs: Vec<f64> = rows
        .iter()
        .filter(|r| r.eps == 1e-2)
        .map(|r| r.effectivity)
        .collect();
    let lo = effs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = effs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!(hi / lo <= 3.0, "effectivity drift {:.3}", hi / lo);
    // boundary-dominated regime: total error linear in eps on the finest level
    let last = rows.iter().map(|r| r.level).max().unwrap();
    let big: Vec<&StudyRow> = rows
        .iter()
        .filter(|r| r.level == last && r.eps >= 1.0)
        .collect();
    let slope = ((big[2].total_error / big[0].total_error).ln())
        / ((big[2].eps / big[0].eps).ln());
    assert!(
        (slope - 1.0).abs() <= 0.2,
        "boundary-term slope {slope:.3} not within 1 +- 0.2"
    );
    // manufactured convergence order from the unperturbed rows
    let pure: Vec<f64> = rows
        .iter()
        .filter(|r| r.eps == 0.0)
        .map(|r| r.total_error)
        .collect();
    let order = (pure[pure.len() - 2] / pure[pure.len() - 1]).log2();
    assert!(
        (order - 1.0).abs() <= 0.2,
        "manufactured order {order:.3} not within 1 +- 0.2"
    );
    println!(
        "PASS [8] decoupled estimates: effectivity drift {:.3}, eps-slope {slope:.3}, order {order:.3}",
        hi / lo
    );
}

#[test]
fn criterion_09_norm_realizations_cross_checked() {
    // dense Slobodetskij Gram vs Monte-Carlo on one hat function
    let mesh = Arc::new(unit_cube_mesh(2));
    let surf = Arc::new(tracelift::mesh::boundary_triangulation(&mesh));
    let ph = FESpace::surface(&surf, Family::SurfLagrange, 1);
    let g = slobodetskij_gram(&ph, 0.5);
    let mut hat = DVector::zeros(ph.ndof);
    hat[0] = 1.0;
    let dense = (&g * &hat).dot(&hat);
    let mc = slobodetskij_montecarlo(&ph, &hat, 0.5, 40_000_000, 97);
    let rel = (mc - dense).abs() / dense;
    assert!(rel <= 0.02, "MC {mc:.5} vs dense {dense:.5}: rel {rel:.4}");

    // duality-based vs extension-based H^{-1/2} norms
    let meshes = uniform_cubes(3);
    let w = calibrate_mean_weight(&meshes[0]);
    let mut worst: f64 = 1.0;
    for mesh in &meshes {
        let sp = Spaces::new(mesh, 0);
        let hh = hminus_half_gram(&sp.mh, mesh, 1, w).matrix;
        let p1 = FESpace::surface(&sp.surf, Family::SurfLagrange, 1);
        let primal = slobodetskij_gram(&p1, 0.5)
            + assemble(&p1, &p1, BilinearKind::Mass, 2).to_dense();
        let pairing = assemble(&p1, &sp.mh, BilinearKind::Mass, 2).to_dense();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let gh = DVector::from_fn(sp.mh.ndof, |_, _| rng.random_range(-1.0..1.0));
            let d = dual_norm(&gh, &primal, &pairing);
            let e = (&hh * &gh).dot(&gh).max(0.0).sqrt();
            let r = (d / e).max(e / d);
            worst = worst.max(r);
        }
    }
    assert!(worst <= 5.0, "equivalence constant {worst:.3} > 5");
    println!(
        "PASS [9] norm realizations agree: MC rel {rel:.4}, equivalence constant {worst:.3}"
    );
}

#[test]
fn criterion_10_determinism() {
    let cfg = |dir: &str| StudyConfig {
        domain: "cube".into(),
        family: FamilyKind::Uniform,
        levels: 2,
        degree: 0,
        resolution: 1,
        studies: vec![StudyKind::Exactness, StudyKind::Lemma32],
        seed: 1234,
        out_dir: dir.into(),
        dense_limit: 600,
    };
    let d1 = std::env::temp_dir().join("tracelift-accept-run1");
    let d2 = std::env::temp_dir().join("tracelift-accept-run2");
    run(&cfg(d1.to_str().unwrap())).unwrap();
    run(&cfg(d2.to_str().unwrap())).unwrap();
    for name in ["exactness.csv", "inverse_inequality.csv", "summary.md"] {
        let a = std::fs::read(d1.join(name)).unwrap();
        let b = std::fs::read(d2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between reruns");
    }
    println!("PASS [10] identical configs reproduce byte-identical reports");
}
