//! Local polynomial generator sets for the supported element families.
//!
//! Cell-local bases are built by moment fitting: the span is written in
//! monomial generators around the cell center (scaled by the diameter), and
//! the basis dual to the global DOF functionals is obtained by inverting the
//! generalized Vandermonde matrix. Working in physical coordinates with
//! globally oriented DOFs makes inter-element conformity automatic.

use nalgebra::Vector3;

/// Monomial exponents with total degree <= d, ordered by degree then lex.
pub fn exps3(d: u32) -> Vec<[u32; 3]> {
    let mut out = Vec::new();
    for total in 0..=d {
        for i in (0..=total).rev() {
            for j in (0..=(total - i)).rev() {
                let k = total - i - j;
                out.push([i, j, k]);
            }
        }
    }
    out
}

/// Monomial exponents with total degree exactly d.
pub fn hom_exps3(d: u32) -> Vec<[u32; 3]> {
    exps3(d).into_iter().filter(|e| e[0] + e[1] + e[2] == d).collect()
}

pub fn exps2(d: u32) -> Vec<[u32; 2]> {
    let mut out = Vec::new();
    for total in 0..=d {
        for i in (0..=total).rev() {
            out.push([i, total - i]);
        }
    }
    out
}

pub fn hom_exps2(d: u32) -> Vec<[u32; 2]> {
    exps2(d).into_iter().filter(|e| e[0] + e[1] == d).collect()
}

fn powi(x: f64, n: u32) -> f64 {
    x.powi(n as i32)
}

fn mono3(e: [u32; 3], p: Vector3<f64>) -> f64 {
    powi(p.x, e[0]) * powi(p.y, e[1]) * powi(p.z, e[2])
}

fn mono3_grad(e: [u32; 3], p: Vector3<f64>) -> Vector3<f64> {
    let dx = if e[0] == 0 {
        0.0
    } else {
        e[0] as f64 * powi(p.x, e[0] - 1) * powi(p.y, e[1]) * powi(p.z, e[2])
    };
    let dy = if e[1] == 0 {
        0.0
    } else {
        e[1] as f64 * powi(p.x, e[0]) * powi(p.y, e[1] - 1) * powi(p.z, e[2])
    };
    let dz = if e[2] == 0 {
        0.0
    } else {
        e[2] as f64 * powi(p.x, e[0]) * powi(p.y, e[1]) * powi(p.z, e[2] - 1)
    };
    Vector3::new(dx, dy, dz)
}

/// Scalar monomial generators around `center` with length scale `scale`.
#[derive(Debug, Clone)]
pub struct ScalarGens {
    pub exps: Vec<[u32; 3]>,
    pub center: Vector3<f64>,
    pub scale: f64,
}

impl ScalarGens {
    pub fn new(degree: u32, center: Vector3<f64>, scale: f64) -> Self {
        Self { exps: exps3(degree), center, scale }
    }

    pub fn len(&self) -> usize {
        self.exps.len()
    }

    fn local(&self, x: Vector3<f64>) -> Vector3<f64> {
        (x - self.center) / self.scale
    }

    pub fn val(&self, i: usize, x: Vector3<f64>) -> f64 {
        mono3(self.exps[i], self.local(x))
    }

    pub fn grad(&self, i: usize, x: Vector3<f64>) -> Vector3<f64> {
        mono3_grad(self.exps[i], self.local(x)) / self.scale
    }
}

/// One vector-valued generator: value plus div and curl.
#[derive(Debug, Clone, Copy)]
enum VecGen {
    /// e_axis * mono(e)
    Mono { axis: usize, e: [u32; 3] },
    /// xi * mono(e)  (Raviart-Thomas cone part)
    RadialMono { e: [u32; 3] },
    /// mono(e) * (e_axis x xi)  (Nedelec rotational part)
    CrossMono { axis: usize, e: [u32; 3] },
}

/// Vector generators for RT_k or first-kind Nedelec N_k on a cell.
#[derive(Debug, Clone)]
pub struct VectorGens {
    gens: Vec<VecGen>,
    pub center: Vector3<f64>,
    pub scale: f64,
}

impl VectorGens {
    pub fn raviart_thomas(k: u32, center: Vector3<f64>, scale: f64) -> Self {
        let mut gens = Vec::new();
        for axis in 0..3 {
            for e in exps3(k) {
                gens.push(VecGen::Mono { axis, e });
            }
        }
        for e in hom_exps3(k) {
            gens.push(VecGen::RadialMono { e });
        }
        Self { gens, center, scale }
    }

    pub fn nedelec1(k: u32, center: Vector3<f64>, scale: f64) -> Self {
        let mut gens = Vec::new();
        for axis in 0..3 {
            for e in exps3(k) {
                gens.push(VecGen::Mono { axis, e });
            }
        }
        // [hom P_k]^3 x xi, dropping one generator in the kernel direction
        // (q e_a with q the a-th coordinate summed gives xi, and xi x xi = 0)
        let hom = hom_exps3(k);
        for axis in 0..3 {
            for (qi, e) in hom.iter().enumerate() {
                if k >= 1 && axis == 2 && qi == hom.len() - 1 {
                    // skip zeta * e3 for k = 1 (linearly dependent)
                    continue;
                }
                gens.push(VecGen::CrossMono { axis, e: *e });
            }
        }
        Self { gens, center, scale }
    }

    pub fn len(&self) -> usize {
        self.gens.len()
    }

    fn local(&self, x: Vector3<f64>) -> Vector3<f64> {
        (x - self.center) / self.scale
    }

    pub fn val(&self, i: usize, x: Vector3<f64>) -> Vector3<f64> {
        let xi = self.local(x);
        match self.gens[i] {
            VecGen::Mono { axis, e } => {
                let mut v = Vector3::zeros();
                v[axis] = mono3(e, xi);
                v
            }
            VecGen::RadialMono { e } => xi * mono3(e, xi),
            VecGen::CrossMono { axis, e } => {
                let mut a = Vector3::zeros();
                a[axis] = 1.0;
                a.cross(&xi) * mono3(e, xi)
            }
        }
    }

    pub fn div(&self, i: usize, x: Vector3<f64>) -> f64 {
        let xi = self.local(x);
        match self.gens[i] {
            VecGen::Mono { axis, e } => mono3_grad(e, xi)[axis] / self.scale,
            VecGen::RadialMono { e } => {
                (3.0 * mono3(e, xi) + xi.dot(&mono3_grad(e, xi))) / self.scale
            }
            VecGen::CrossMono { axis, e } => {
                // div(m (a x xi)) = grad m . (a x xi); div(a x xi) = 0
                let mut a = Vector3::zeros();
                a[axis] = 1.0;
                mono3_grad(e, xi).dot(&a.cross(&xi)) / self.scale
            }
        }
    }

    pub fn curl(&self, i: usize, x: Vector3<f64>) -> Vector3<f64> {
        let xi = self.local(x);
        match self.gens[i] {
            VecGen::Mono { axis, e } => {
                let mut a = Vector3::zeros();
                a[axis] = 1.0;
                mono3_grad(e, xi).cross(&a) / self.scale
            }
            VecGen::RadialMono { e } => {
                // curl(m xi) = grad m x xi
                mono3_grad(e, xi).cross(&xi) / self.scale
            }
            VecGen::CrossMono { axis, e } => {
                let mut a = Vector3::zeros();
                a[axis] = 1.0;
                // curl(m (a x xi)) = grad m x (a x xi) + 2 m a
                (mono3_grad(e, xi).cross(&a.cross(&xi)) + 2.0 * mono3(e, xi) * a) / self.scale
            }
        }
    }
}

/// Orthonormal frame of a planar triangle built from its ascending vertex
/// triple; identical from every cell that sees the face.
#[derive(Debug, Clone, Copy)]
pub struct TriFrame {
    pub origin: Vector3<f64>,
    pub t1: Vector3<f64>,
    pub t2: Vector3<f64>,
    /// t1 x t2 (the "sorted" normal, not necessarily outward).
    pub n: Vector3<f64>,
    pub area: f64,
}

impl TriFrame {
    pub fn new(p0: [f64; 3], p1: [f64; 3], p2: [f64; 3]) -> Self {
        let o = Vector3::from(p0);
        let a = Vector3::from(p1) - o;
        let b = Vector3::from(p2) - o;
        let t1 = a.normalize();
        let n_raw = a.cross(&b);
        let area = n_raw.norm() / 2.0;
        let n = n_raw.normalize();
        let t2 = n.cross(&t1);
        Self { origin: o, t1, t2, n, area }
    }

    /// In-plane coordinates of a physical point.
    pub fn local(&self, x: Vector3<f64>) -> (f64, f64) {
        let d = x - self.origin;
        (d.dot(&self.t1), d.dot(&self.t2))
    }

    pub fn tangential_part(&self, v: Vector3<f64>) -> Vector3<f64> {
        v - self.n * v.dot(&self.n)
    }
}

/// Tangential vector generators for the surface RT space on one triangle:
/// [P_k]^2 in the face frame plus the radial cone part.
#[derive(Debug, Clone)]
pub struct SurfVectorGens {
    pub frame: TriFrame,
    pub scale: f64,
    gens: Vec<SurfVecGen>,
}

#[derive(Debug, Clone, Copy)]
enum SurfVecGen {
    Frame { axis: usize, e: [u32; 2] },
    Radial { e: [u32; 2] },
}

impl SurfVectorGens {
    pub fn new(k: u32, frame: TriFrame, scale: f64) -> Self {
        let mut gens = Vec::new();
        for axis in 0..2 {
            for e in exps2(k) {
                gens.push(SurfVecGen::Frame { axis, e });
            }
        }
        for e in hom_exps2(k) {
            gens.push(SurfVecGen::Radial { e });
        }
        Self { frame, scale, gens }
    }

    pub fn len(&self) -> usize {
        self.gens.len()
    }

    fn local(&self, x: Vector3<f64>) -> (f64, f64) {
        let (u, v) = self.frame.local(x);
        (u / self.scale, v / self.scale)
    }

    fn mono2(e: [u32; 2], u: f64, v: f64) -> f64 {
        powi(u, e[0]) * powi(v, e[1])
    }

    fn mono2_grad(e: [u32; 2], u: f64, v: f64) -> (f64, f64) {
        let du = if e[0] == 0 { 0.0 } else { e[0] as f64 * powi(u, e[0] - 1) * powi(v, e[1]) };
        let dv = if e[1] == 0 { 0.0 } else { e[1] as f64 * powi(u, e[0]) * powi(v, e[1] - 1) };
        (du, dv)
    }

    pub fn val(&self, i: usize, x: Vector3<f64>) -> Vector3<f64> {
        let (u, v) = self.local(x);
        match self.gens[i] {
            SurfVecGen::Frame { axis, e } => {
                let m = Self::mono2(e, u, v);
                if axis == 0 { self.frame.t1 * m } else { self.frame.t2 * m }
            }
            SurfVecGen::Radial { e } => {
                (self.frame.t1 * u + self.frame.t2 * v) * Self::mono2(e, u, v)
            }
        }
    }

    /// In-plane (surface) divergence.
    pub fn div(&self, i: usize, x: Vector3<f64>) -> f64 {
        let (u, v) = self.local(x);
        match self.gens[i] {
            SurfVecGen::Frame { axis, e } => {
                let (du, dv) = Self::mono2_grad(e, u, v);
                (if axis == 0 { du } else { dv }) / self.scale
            }
            SurfVecGen::Radial { e } => {
                let (du, dv) = Self::mono2_grad(e, u, v);
                (2.0 * Self::mono2(e, u, v) + u * du + v * dv) / self.scale
            }
        }
    }
}

/// Scalar generators on a triangle in its intrinsic frame.
#[derive(Debug, Clone)]
pub struct SurfScalarGens {
    pub frame: TriFrame,
    pub scale: f64,
    pub exps: Vec<[u32; 2]>,
}

impl SurfScalarGens {
    pub fn new(degree: u32, frame: TriFrame, scale: f64) -> Self {
        Self { frame, scale, exps: exps2(degree) }
    }

    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn val(&self, i: usize, x: Vector3<f64>) -> f64 {
        let (u, v) = self.frame.local(x);
        let e = self.exps[i];
        powi(u / self.scale, e[0]) * powi(v / self.scale, e[1])
    }

    /// Tangential (surface) gradient as a 3D vector.
    pub fn surf_grad(&self, i: usize, x: Vector3<f64>) -> Vector3<f64> {
        let (u, v) = self.frame.local(x);
        let (us, vs) = (u / self.scale, v / self.scale);
        let e = self.exps[i];
        let du = if e[0] == 0 { 0.0 } else { e[0] as f64 * powi(us, e[0] - 1) * powi(vs, e[1]) };
        let dv = if e[1] == 0 { 0.0 } else { e[1] as f64 * powi(us, e[0]) * powi(vs, e[1] - 1) };
        (self.frame.t1 * du + self.frame.t2 * dv) / self.scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gen_counts() {
        let c = Vector3::zeros();
        assert_eq!(VectorGens::raviart_thomas(0, c, 1.0).len(), 4);
        assert_eq!(VectorGens::raviart_thomas(1, c, 1.0).len(), 15);
        assert_eq!(VectorGens::nedelec1(0, c, 1.0).len(), 6);
        assert_eq!(VectorGens::nedelec1(1, c, 1.0).len(), 20);
        assert_eq!(exps3(2).len(), 10);
        assert_eq!(exps3(3).len(), 20);
    }

    #[test]
    fn div_and_curl_consistent_with_finite_differences() {
        let c = Vector3::new(0.2, -0.1, 0.4);
        for gens in [
            VectorGens::raviart_thomas(1, c, 0.7),
            VectorGens::nedelec1(1, c, 0.7),
        ] {
            let x = Vector3::new(0.31, 0.12, -0.05);
            let h = 1e-6;
            for i in 0..gens.len() {
                let mut div_fd = 0.0;
                let mut curl_fd = Vector3::zeros();
                for a in 0..3 {
                    let mut xp = x;
                    let mut xm = x;
                    xp[a] += h;
                    xm[a] -= h;
                    let dp = (gens.val(i, xp) - gens.val(i, xm)) / (2.0 * h);
                    div_fd += dp[a];
                    // curl contribution: d/dx_a of v enters rows (a+2)%3,(a+1)%3
                    let e_a = {
                        let mut v = Vector3::zeros();
                        v[a] = 1.0;
                        v
                    };
                    curl_fd += e_a.cross(&dp);
                }
                assert!((div_fd - gens.div(i, x)).abs() < 1e-6, "gen {i} div");
                assert!((curl_fd - gens.curl(i, x)).norm() < 1e-6, "gen {i} curl");
            }
        }
    }

    #[test]
    fn nedelec_k0_is_curl_free_iff_constant_part() {
        let gens = VectorGens::nedelec1(0, Vector3::zeros(), 1.0);
        let x = Vector3::new(0.3, 0.5, 0.7);
        for i in 0..3 {
            assert!(gens.curl(i, x).norm() < 1e-14);
        }
        for i in 3..6 {
            assert!(gens.curl(i, x).norm() > 1.0);
        }
    }
}
