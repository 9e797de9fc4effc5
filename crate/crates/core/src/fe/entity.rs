//! Orthonormal moment bases attached to global mesh entities.
//!
//! DOF functionals for the vector-valued families are moments against an
//! L2-orthonormal polynomial basis of the entity (edge, face, or cell).
//! Each basis is built from the entity's own geometry with ascending global
//! vertex order, so every incident cell produces the same functional.

use nalgebra::{DMatrix, Vector3};

use super::gens::{exps2, exps3, TriFrame};
use crate::quadrature::{edge_rule, triangle_rule};

/// Orthonormal P_k basis on a straight edge parameterized by arclength from
/// the lower-indexed endpoint.
#[derive(Debug, Clone)]
pub struct EdgeBasis {
    pub a: Vector3<f64>,
    pub b: Vector3<f64>,
    pub len: f64,
    pub degree: u32,
}

impl EdgeBasis {
    pub fn new(a: [f64; 3], b: [f64; 3], degree: u32) -> Self {
        let a = Vector3::from(a);
        let b = Vector3::from(b);
        Self { a, b, len: (b - a).norm(), degree }
    }

    pub fn ndof(&self) -> usize {
        self.degree as usize + 1
    }

    pub fn tangent(&self) -> Vector3<f64> {
        (self.b - self.a) / self.len
    }

    /// Value of the i-th orthonormal polynomial at parameter t in [0,1].
    pub fn val(&self, i: usize, t: f64) -> f64 {
        let l = self.len;
        match i {
            0 => 1.0 / l.sqrt(),
            1 => (12.0 / l).sqrt() * (t - 0.5),
            _ => unreachable!("edge basis supports degree <= 1"),
        }
    }

    /// Quadrature points (physical) and weights for moments of degree
    /// `extra` polynomials against this basis.
    pub fn quad(&self, extra: u32) -> (Vec<f64>, Vec<Vector3<f64>>, Vec<f64>) {
        let (pts, wts) = edge_rule((self.degree + extra) as usize);
        let mut ts = Vec::with_capacity(pts.len());
        let mut xs = Vec::with_capacity(pts.len());
        let mut ws = Vec::with_capacity(pts.len());
        for (&t, &w) in pts.iter().zip(&wts) {
            ts.push(t);
            xs.push(self.a + (self.b - self.a) * t);
            ws.push(w * self.len);
        }
        (ts, xs, ws)
    }
}

/// Orthonormal P_k basis on a planar triangle, expressed in the intrinsic
/// frame coordinates; coefficients from Gram-Schmidt against the exact
/// triangle L2 inner product.
#[derive(Debug, Clone)]
pub struct TriBasis {
    pub frame: TriFrame,
    pub corners: [Vector3<f64>; 3],
    /// coeff[(m, j)]: weight of monomial m in orthonormal function j.
    pub coeff: DMatrix<f64>,
    pub exps: Vec<[u32; 2]>,
    pub scale: f64,
}

impl TriBasis {
    pub fn new(p0: [f64; 3], p1: [f64; 3], p2: [f64; 3], degree: u32) -> Self {
        let frame = TriFrame::new(p0, p1, p2);
        let corners = [Vector3::from(p0), Vector3::from(p1), Vector3::from(p2)];
        let scale = frame.area.sqrt();
        let exps = exps2(degree);
        let n = exps.len();
        // Monomial Gram matrix on the triangle in scaled frame coordinates.
        let rule = triangle_rule((2 * degree) as usize);
        let mut gram = DMatrix::zeros(n, n);
        let (xs, ws) = Self::phys_quad(&corners, &rule);
        let mut vals = DMatrix::zeros(n, xs.len());
        for (q, x) in xs.iter().enumerate() {
            let (u, v) = frame.local(*x);
            for (m, e) in exps.iter().enumerate() {
                vals[(m, q)] =
                    (u / scale).powi(e[0] as i32) * (v / scale).powi(e[1] as i32);
            }
        }
        for a in 0..n {
            for b in 0..n {
                let mut s = 0.0;
                for q in 0..xs.len() {
                    s += ws[q] * vals[(a, q)] * vals[(b, q)];
                }
                gram[(a, b)] = s;
            }
        }
        let chol = gram.cholesky().expect("triangle monomial gram is SPD");
        // G = L L^T; columns of L^{-T} are orthonormal combinations.
        let linv_t = chol
            .l()
            .transpose()
            .try_inverse()
            .expect("triangular inverse");
        Self { frame, corners, coeff: linv_t, exps, scale }
    }

    fn phys_quad(
        corners: &[Vector3<f64>; 3],
        rule: &crate::quadrature::Rule,
    ) -> (Vec<Vector3<f64>>, Vec<f64>) {
        let area2 = (corners[1] - corners[0]).cross(&(corners[2] - corners[0])).norm();
        let mut xs = Vec::with_capacity(rule.points.len());
        let mut ws = Vec::with_capacity(rule.points.len());
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let x = corners[0]
                + (corners[1] - corners[0]) * p[0]
                + (corners[2] - corners[0]) * p[1];
            xs.push(x);
            ws.push(w * area2);
        }
        (xs, ws)
    }

    pub fn ndof(&self) -> usize {
        self.exps.len()
    }

    /// Value of the j-th orthonormal polynomial at a physical point on the
    /// face plane.
    pub fn val(&self, j: usize, x: Vector3<f64>) -> f64 {
        let (u, v) = self.frame.local(x);
        let mut s = 0.0;
        for (m, e) in self.exps.iter().enumerate() {
            s += self.coeff[(m, j)]
                * (u / self.scale).powi(e[0] as i32)
                * (v / self.scale).powi(e[1] as i32);
        }
        s
    }

    /// Tangential gradient of the j-th orthonormal polynomial.
    pub fn surf_grad(&self, j: usize, x: Vector3<f64>) -> Vector3<f64> {
        let (u, v) = self.frame.local(x);
        let (us, vs) = (u / self.scale, v / self.scale);
        let mut g = Vector3::zeros();
        for (m, e) in self.exps.iter().enumerate() {
            let du = if e[0] == 0 {
                0.0
            } else {
                e[0] as f64 * us.powi(e[0] as i32 - 1) * vs.powi(e[1] as i32)
            };
            let dv = if e[1] == 0 {
                0.0
            } else {
                e[1] as f64 * us.powi(e[0] as i32) * vs.powi(e[1] as i32 - 1)
            };
            g += self.coeff[(m, j)] * (self.frame.t1 * du + self.frame.t2 * dv);
        }
        g / self.scale
    }

    /// Physical quadrature on the triangle exact for degree `deg`.
    pub fn quad(&self, deg: u32) -> (Vec<Vector3<f64>>, Vec<f64>) {
        let rule = triangle_rule(deg as usize);
        Self::phys_quad(&self.corners, &rule)
    }
}

/// L2-orthonormal P_k basis on a tetrahedron (for DG spaces and interior
/// RT moments).
#[derive(Debug, Clone)]
pub struct CellBasis {
    pub corners: [Vector3<f64>; 4],
    pub center: Vector3<f64>,
    pub scale: f64,
    pub coeff: DMatrix<f64>,
    pub exps: Vec<[u32; 3]>,
    pub volume: f64,
}

impl CellBasis {
    pub fn new(coords: [[f64; 3]; 4], degree: u32) -> Self {
        let corners = coords.map(Vector3::from);
        let center = (corners[0] + corners[1] + corners[2] + corners[3]) / 4.0;
        let mut scale: f64 = 0.0;
        for i in 0..4 {
            for j in (i + 1)..4 {
                scale = scale.max((corners[i] - corners[j]).norm());
            }
        }
        let volume = (corners[1] - corners[0])
            .cross(&(corners[2] - corners[0]))
            .dot(&(corners[3] - corners[0]))
            .abs()
            / 6.0;
        let exps = exps3(degree);
        let n = exps.len();
        let rule = crate::quadrature::tet_rule((2 * degree) as usize);
        let (xs, ws) = Self::phys_quad_inner(&corners, volume, &rule);
        let mut gram = DMatrix::zeros(n, n);
        let mut vals = DMatrix::zeros(n, xs.len());
        for (q, x) in xs.iter().enumerate() {
            let xi = (x - center) / scale;
            for (m, e) in exps.iter().enumerate() {
                vals[(m, q)] = xi.x.powi(e[0] as i32)
                    * xi.y.powi(e[1] as i32)
                    * xi.z.powi(e[2] as i32);
            }
        }
        for a in 0..n {
            for b in 0..n {
                let mut s = 0.0;
                for q in 0..xs.len() {
                    s += ws[q] * vals[(a, q)] * vals[(b, q)];
                }
                gram[(a, b)] = s;
            }
        }
        let chol = gram.cholesky().expect("cell monomial gram is SPD");
        let coeff = chol.l().transpose().try_inverse().expect("triangular inverse");
        Self { corners, center, scale, coeff, exps, volume }
    }

    fn phys_quad_inner(
        corners: &[Vector3<f64>; 4],
        volume: f64,
        rule: &crate::quadrature::Rule,
    ) -> (Vec<Vector3<f64>>, Vec<f64>) {
        let mut xs = Vec::with_capacity(rule.points.len());
        let mut ws = Vec::with_capacity(rule.points.len());
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let x = corners[0]
                + (corners[1] - corners[0]) * p[0]
                + (corners[2] - corners[0]) * p[1]
                + (corners[3] - corners[0]) * p[2];
            xs.push(x);
            // reference tet volume is 1/6
            ws.push(w * 6.0 * volume);
        }
        (xs, ws)
    }

    pub fn ndof(&self) -> usize {
        self.exps.len()
    }

    pub fn val(&self, j: usize, x: Vector3<f64>) -> f64 {
        let xi = (x - self.center) / self.scale;
        let mut s = 0.0;
        for (m, e) in self.exps.iter().enumerate() {
            s += self.coeff[(m, j)]
                * xi.x.powi(e[0] as i32)
                * xi.y.powi(e[1] as i32)
                * xi.z.powi(e[2] as i32);
        }
        s
    }

    pub fn quad(&self, deg: u32) -> (Vec<Vector3<f64>>, Vec<f64>) {
        let rule = crate::quadrature::tet_rule(deg as usize);
        Self::phys_quad_inner(&self.corners, self.volume, &rule)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_basis_orthonormal() {
        let eb = EdgeBasis::new([0.0, 0.0, 0.0], [0.3, 0.4, 0.0], 1);
        let (ts, _, ws) = eb.quad(4);
        for i in 0..2 {
            for j in 0..2 {
                let mut s = 0.0;
                for (q, t) in ts.iter().enumerate() {
                    s += ws[q] * eb.val(i, *t) * eb.val(j, *t);
                }
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((s - want).abs() < 1e-12, "({i},{j}) -> {s}");
            }
        }
    }

    #[test]
    fn tri_basis_orthonormal_and_frame_independent_of_cell() {
        let tb = TriBasis::new([0.1, 0.0, 0.2], [1.0, 0.3, 0.0], [0.2, 1.1, 0.4], 1);
        let (xs, ws) = tb.quad(4);
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for (q, x) in xs.iter().enumerate() {
                    s += ws[q] * tb.val(i, *x) * tb.val(j, *x);
                }
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((s - want).abs() < 1e-11, "({i},{j}) -> {s}");
            }
        }
        // constant mode must equal 1/sqrt(area)
        let area = tb.frame.area;
        assert!((tb.val(0, xs[0]) - 1.0 / area.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn cell_basis_orthonormal() {
        let cb = CellBasis::new(
            [[0.0, 0.0, 0.0], [1.0, 0.1, 0.0], [0.2, 0.9, 0.05], [0.1, 0.3, 1.2]],
            1,
        );
        let (xs, ws) = cb.quad(4);
        for i in 0..4 {
            for j in 0..4 {
                let mut s = 0.0;
                for (q, x) in xs.iter().enumerate() {
                    s += ws[q] * cb.val(i, *x) * cb.val(j, *x);
                }
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((s - want).abs() < 1e-11, "({i},{j}) -> {s}");
            }
        }
        // total volume from quadrature weights
        let vsum: f64 = ws.iter().sum();
        assert!((vsum - cb.volume).abs() < 1e-13);
    }

    #[test]
    fn tri_basis_gradient_matches_fd() {
        let tb = TriBasis::new([0.0, 0.0, 0.0], [1.0, 0.0, 0.5], [0.0, 1.0, 0.2], 1);
        let x = tb.corners[0] * 0.5 + tb.corners[1] * 0.3 + tb.corners[2] * 0.2;
        let h = 1e-6;
        for j in 0..3 {
            let g = tb.surf_grad(j, x);
            let fd1 = (tb.val(j, x + tb.frame.t1 * h) - tb.val(j, x - tb.frame.t1 * h)) / (2.0 * h);
            let fd2 = (tb.val(j, x + tb.frame.t2 * h) - tb.val(j, x - tb.frame.t2 * h)) / (2.0 * h);
            assert!((g.dot(&tb.frame.t1) - fd1).abs() < 1e-6);
            assert!((g.dot(&tb.frame.t2) - fd2).abs() < 1e-6);
            assert!(g.dot(&tb.frame.n).abs() < 1e-12);
        }
    }
}
