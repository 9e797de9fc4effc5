//! Quadrature rules on the interval, triangle, and tetrahedron.
//!
//! Rules are conical products of Gauss-Legendre / Gauss-Jacobi 1D rules
//! (Duffy collapse of the simplex onto the unit cube), so a rule exact to
//! any requested polynomial degree is available. Nodes come from the
//! Golub-Welsch eigenvalue construction.

use nalgebra::DMatrix;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// 1D Gauss rule on [0,1] with weight (1-x)^alpha, exact to degree 2n-1.
fn gauss_jacobi_01(n: usize, alpha: u32) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let a = alpha as f64;
    // Recurrence coefficients for Jacobi (alpha, 0) on [-1, 1].
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n.saturating_sub(1)];
    diag[0] = -a / (a + 2.0);
    for k in 1..n {
        let kk = k as f64;
        let s = 2.0 * kk + a;
        diag[k] = if a == 0.0 { 0.0 } else { -(a * a) / (s * (s + 2.0)) };
    }
    for k in 1..n {
        let kk = k as f64;
        let b2 = if k == 1 {
            4.0 * (1.0 + a) / ((2.0 + a) * (2.0 + a) * (3.0 + a))
        } else {
            let s = 2.0 * kk + a;
            4.0 * kk * (kk + a) * kk * (kk + a) / (s * s * (s + 1.0) * (s - 1.0))
        };
        off[k - 1] = b2.sqrt();
    }
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = diag[i];
        if i + 1 < n {
            m[(i, i + 1)] = off[i];
            m[(i + 1, i)] = off[i];
        }
    }
    let eig = m.symmetric_eigen();
    let mu0 = 2f64.powi(alpha as i32 + 1) / (a + 1.0);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|j| {
            let t = eig.eigenvalues[j];
            let w = mu0 * eig.eigenvectors[(0, j)] * eig.eigenvectors[(0, j)];
            // map [-1,1] -> [0,1], absorbing the weight rescaling
            ((1.0 + t) / 2.0, w / 2f64.powi(alpha as i32 + 1))
        })
        .collect();
    pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    (pairs.iter().map(|p| p.0).collect(), pairs.iter().map(|p| p.1).collect())
}

/// Gauss-Legendre on [0,1], exact to degree 2n-1.
pub fn gauss_legendre_01(n: usize) -> (Vec<f64>, Vec<f64>) {
    gauss_jacobi_01(n, 0)
}

/// Quadrature rule on a reference simplex.
#[derive(Debug, Clone)]
pub struct Rule {
    /// Barycentric-free reference coordinates; for the triangle only the
    /// first two components are used.
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

fn triangle_rule_uncached(degree: usize) -> Rule {
    let n = degree / 2 + 1;
    let (xu, wu) = gauss_jacobi_01(n, 0);
    let (xv, wv) = gauss_jacobi_01(n, 1);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (v, wvj) in xv.iter().zip(&wv) {
        for (u, wui) in xu.iter().zip(&wu) {
            // x = u (1 - v), y = v ; weight carries the (1 - v) Jacobian
            points.push([u * (1.0 - v), *v, 0.0]);
            weights.push(wui * wvj);
        }
    }
    Rule { points, weights }
}

fn tet_rule_uncached(degree: usize) -> Rule {
    let n = degree / 2 + 1;
    let (xu, wu) = gauss_jacobi_01(n, 0);
    let (xv, wv) = gauss_jacobi_01(n, 1);
    let (xw, ww) = gauss_jacobi_01(n, 2);
    let mut points = Vec::with_capacity(n * n * n);
    let mut weights = Vec::with_capacity(n * n * n);
    for (z, wzk) in xw.iter().zip(&ww) {
        for (v, wvj) in xv.iter().zip(&wv) {
            for (u, wui) in xu.iter().zip(&wu) {
                let y = v * (1.0 - z);
                let x = u * (1.0 - z) * (1.0 - v);
                points.push([x, y, *z]);
                weights.push(wui * wvj * wzk);
            }
        }
    }
    Rule { points, weights }
}

type Cache = Mutex<HashMap<(u8, usize), Arc<Rule>>>;

fn cache() -> &'static Cache {
    static CACHE: OnceLock<Cache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Rule on the reference triangle {x,y >= 0, x+y <= 1}, weights sum to 1/2.
pub fn triangle_rule(degree: usize) -> Arc<Rule> {
    let mut c = cache().lock().unwrap();
    c.entry((2, degree))
        .or_insert_with(|| Arc::new(triangle_rule_uncached(degree)))
        .clone()
}

/// Rule on the reference tetrahedron, weights sum to 1/6.
pub fn tet_rule(degree: usize) -> Arc<Rule> {
    let mut c = cache().lock().unwrap();
    c.entry((3, degree))
        .or_insert_with(|| Arc::new(tet_rule_uncached(degree)))
        .clone()
}

/// Rule on [0,1]; weights sum to 1.
pub fn edge_rule(degree: usize) -> (Vec<f64>, Vec<f64>) {
    gauss_legendre_01(degree / 2 + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn monomial_integral_tri(p: u32, q: u32) -> f64 {
        // int_T x^p y^q = p! q! / (p+q+2)!
        let fact = |n: u32| (1..=n).map(|k| k as f64).product::<f64>().max(1.0);
        fact(p) * fact(q) / fact(p + q + 2)
    }

    fn monomial_integral_tet(p: u32, q: u32, r: u32) -> f64 {
        let fact = |n: u32| (1..=n).map(|k| k as f64).product::<f64>().max(1.0);
        fact(p) * fact(q) * fact(r) / fact(p + q + r + 3)
    }

    #[test]
    fn gauss_legendre_exactness() {
        let (x, w) = gauss_legendre_01(4);
        for d in 0..=7u32 {
            let s: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(d as i32)).sum();
            let exact = 1.0 / (d as f64 + 1.0);
            assert!((s - exact).abs() < 1e-14, "degree {d}: {s} vs {exact}");
        }
    }

    #[test]
    fn triangle_exactness() {
        for degree in [1usize, 3, 5, 8] {
            let rule = triangle_rule(degree);
            for p in 0..=degree as u32 {
                for q in 0..=(degree as u32 - p) {
                    let s: f64 = rule
                        .points
                        .iter()
                        .zip(&rule.weights)
                        .map(|(pt, w)| w * pt[0].powi(p as i32) * pt[1].powi(q as i32))
                        .sum();
                    let exact = monomial_integral_tri(p, q);
                    assert!(
                        (s - exact).abs() < 1e-13,
                        "deg {degree} x^{p} y^{q}: {s} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn tet_exactness() {
        for degree in [1usize, 2, 4, 6] {
            let rule = tet_rule(degree);
            for p in 0..=degree as u32 {
                for q in 0..=(degree as u32 - p) {
                    for r in 0..=(degree as u32 - p - q) {
                        let s: f64 = rule
                            .points
                            .iter()
                            .zip(&rule.weights)
                            .map(|(pt, w)| {
                                w * pt[0].powi(p as i32)
                                    * pt[1].powi(q as i32)
                                    * pt[2].powi(r as i32)
                            })
                            .sum();
                        let exact = monomial_integral_tet(p, q, r);
                        assert!(
                            (s - exact).abs() < 1e-13,
                            "deg {degree} x^{p} y^{q} z^{r}: {s} vs {exact}"
                        );
                    }
                }
            }
        }
    }
}
