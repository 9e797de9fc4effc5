//! Element-loop assembly of bilinear forms between finite element spaces.

use nalgebra::{DMatrix, DVector, Vector3};

use super::{FESpace, Family};
use crate::la::{SparseBuilder, SparseMat};

/// Which local quantities are paired under the element integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BilinearKind {
    /// (value, value); scalar product for scalar spaces, dot product for
    /// vector spaces.
    Mass,
    /// (grad, grad) for scalar families, (div, div) for RT and surface RT,
    /// (curl, curl) for Nedelec.
    Stiffness,
    /// Row scalar vs column vector: (value, div). Surface divergence on
    /// surface spaces.
    DivMass,
    /// Row vector vs column scalar: (value, grad).
    GradMass,
    /// Row vector vs column vector: (value, curl).
    CurlMass,
    /// Row surface vector vs column surface scalar: (value, grad x n),
    /// i.e. pairing with the surface curl of the scalar.
    SurfCurlMass,
}

enum LocalEval {
    Scalar(super::ScalarVals),
    Vector(super::VectorVals),
}

fn eval(space: &FESpace, e: usize, pts: &[Vector3<f64>]) -> LocalEval {
    if space.is_scalar() {
        LocalEval::Scalar(space.eval_scalar_basis(e, pts))
    } else {
        LocalEval::Vector(space.eval_vector_basis(e, pts))
    }
}

/// Assemble the matrix of `sum_elems int_elem  q_row(phi_i) . q_col(psi_j)`
/// where the paired quantities are selected by `kind`. Row and column spaces
/// must live on the same element list.
pub fn assemble(row: &FESpace, col: &FESpace, kind: BilinearKind, extra_deg: u32) -> SparseMat {
    assert_eq!(row.n_elems(), col.n_elems(), "spaces on different meshes");
    let deg = row.poly_deg() + col.poly_deg() + extra_deg;
    let mut b = SparseBuilder::new(row.ndof, col.ndof);
    for e in 0..row.n_elems() {
        let (pts, ws) = row.elem_quad(e, deg);
        let re = eval(row, e, &pts);
        let ce = eval(col, e, &pts);
        let nr = row.elem_dofs[e].len();
        let nc = col.elem_dofs[e].len();
        let mut local = DMatrix::zeros(nr, nc);
        for q in 0..pts.len() {
            let w = ws[q];
            for i in 0..nr {
                for j in 0..nc {
                    local[(i, j)] += w * pair_at(row, col, kind, &re, &ce, e, i, j, q);
                }
            }
        }
        for i in 0..nr {
            for j in 0..nc {
                let v = local[(i, j)];
                if v != 0.0 {
                    b.add(row.elem_dofs[e][i], col.elem_dofs[e][j], v);
                }
            }
        }
    }
    b.build()
}

#[allow(clippy::too_many_arguments)]
fn pair_at(
    row: &FESpace,
    col: &FESpace,
    kind: BilinearKind,
    re: &LocalEval,
    ce: &LocalEval,
    e: usize,
    i: usize,
    j: usize,
    q: usize,
) -> f64 {
    match kind {
        BilinearKind::Mass => match (re, ce) {
            (LocalEval::Scalar(a), LocalEval::Scalar(b)) => a.values[(i, q)] * b.values[(j, q)],
            (LocalEval::Vector(a), LocalEval::Vector(b)) => a.values[i][q].dot(&b.values[j][q]),
            _ => panic!("mass pairing needs matching kinds"),
        },
        BilinearKind::Stiffness => match (re, ce) {
            (LocalEval::Scalar(a), LocalEval::Scalar(b)) => a.grads[i][q].dot(&b.grads[j][q]),
            (LocalEval::Vector(a), LocalEval::Vector(b)) => {
                match (row.family, col.family) {
                    (Family::Nedelec, Family::Nedelec) => a.curls[i][q].dot(&b.curls[j][q]),
                    _ => a.divs[(i, q)] * b.divs[(j, q)],
                }
            }
            _ => panic!("stiffness pairing needs matching kinds"),
        },
        BilinearKind::DivMass => match (re, ce) {
            (LocalEval::Scalar(a), LocalEval::Vector(b)) => a.values[(i, q)] * b.divs[(j, q)],
            _ => panic!("DivMass needs scalar rows, vector columns"),
        },
        BilinearKind::GradMass => match (re, ce) {
            (LocalEval::Vector(a), LocalEval::Scalar(b)) => a.values[i][q].dot(&b.grads[j][q]),
            _ => panic!("GradMass needs vector rows, scalar columns"),
        },
        BilinearKind::CurlMass => match (re, ce) {
            (LocalEval::Vector(a), LocalEval::Vector(b)) => a.values[i][q].dot(&b.curls[j][q]),
            _ => panic!("CurlMass needs vector spaces"),
        },
        BilinearKind::SurfCurlMass => match (re, ce) {
            (LocalEval::Vector(a), LocalEval::Scalar(b)) => {
                let n = row.elem_normal(e);
                a.values[i][q].dot(&b.grads[j][q].cross(&n))
            }
            _ => panic!("SurfCurlMass needs surface vector rows, scalar columns"),
        },
    }
}

/// Load vector `int f phi_j` for a scalar space.
pub fn load_scalar(space: &FESpace, f: &dyn Fn(Vector3<f64>) -> f64, extra_deg: u32) -> DVector<f64> {
    let deg = space.poly_deg() + extra_deg;
    let mut out = DVector::zeros(space.ndof);
    for e in 0..space.n_elems() {
        let (pts, ws) = space.elem_quad(e, deg);
        let sv = space.eval_scalar_basis(e, &pts);
        for (j, &gd) in space.elem_dofs[e].iter().enumerate() {
            let mut s = 0.0;
            for q in 0..pts.len() {
                s += ws[q] * f(pts[q]) * sv.values[(j, q)];
            }
            out[gd] += s;
        }
    }
    out
}

/// Load vector `int f . v_j` for a vector space.
pub fn load_vector(
    space: &FESpace,
    f: &dyn Fn(Vector3<f64>) -> Vector3<f64>,
    extra_deg: u32,
) -> DVector<f64> {
    let deg = space.poly_deg() + extra_deg;
    let mut out = DVector::zeros(space.ndof);
    for e in 0..space.n_elems() {
        let (pts, ws) = space.elem_quad(e, deg);
        let vv = space.eval_vector_basis(e, &pts);
        for (j, &gd) in space.elem_dofs[e].iter().enumerate() {
            let mut s = 0.0;
            for q in 0..pts.len() {
                s += ws[q] * f(pts[q]).dot(&vv.values[j][q]);
            }
            out[gd] += s;
        }
    }
    out
}

/// Load vector `int f . curl v_j` for a volume vector space.
pub fn load_curl(
    space: &FESpace,
    f: &dyn Fn(Vector3<f64>) -> Vector3<f64>,
    extra_deg: u32,
) -> DVector<f64> {
    let deg = space.poly_deg() + extra_deg;
    let mut out = DVector::zeros(space.ndof);
    for e in 0..space.n_elems() {
        let (pts, ws) = space.elem_quad(e, deg);
        let vv = space.eval_vector_basis(e, &pts);
        for (j, &gd) in space.elem_dofs[e].iter().enumerate() {
            let mut s = 0.0;
            for q in 0..pts.len() {
                s += ws[q] * f(pts[q]).dot(&vv.curls[j][q]);
            }
            out[gd] += s;
        }
    }
    out
}

/// Vector with entries `int phi_j` (scalar space): used for mean-value
/// constraints.
pub fn integral_vector(space: &FESpace) -> DVector<f64> {
    load_scalar(space, &|_| 1.0, 0)
}
