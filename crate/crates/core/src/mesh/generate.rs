//! Built-in test domains: reference tet, Kuhn-decomposed cube, L-shaped prism.

use super::{BisectTag, Mesh};

/// The unit reference tetrahedron as a one-cell mesh.
pub fn reference_tet_mesh() -> Mesh {
    let verts = vec![
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
    ];
    Mesh::from_cells(verts, vec![[0, 1, 2, 3]]).expect("reference tet")
}

const PERMS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

/// Kuhn decomposition of an axis-aligned box grid: 6 tets per subcube.
/// Every tet runs along the main diagonal of its subcube, which makes the
/// family compatible with newest-vertex bisection (tags of type 0 with the
/// diagonal as refinement edge).
fn kuhn_boxes(nx: usize, ny: usize, nz: usize, keep: impl Fn(usize, usize, usize) -> bool) -> Mesh {
    let vid = |i: usize, j: usize, k: usize| (k * (ny + 1) + j) * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push([i as f64, j as f64, k as f64]);
            }
        }
    }
    let mut tags = Vec::new();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                if !keep(i, j, k) {
                    continue;
                }
                for perm in PERMS {
                    let mut p = [i, j, k];
                    let mut path = [vid(p[0], p[1], p[2]), 0, 0, 0];
                    for (step, &axis) in perm.iter().enumerate() {
                        p[axis] += 1;
                        path[step + 1] = vid(p[0], p[1], p[2]);
                    }
                    tags.push(BisectTag { verts: path, gamma: 0 });
                }
            }
        }
    }
    // drop unused vertices
    let mut used = vec![false; vertices.len()];
    for t in &tags {
        for &v in &t.verts {
            used[v] = true;
        }
    }
    let mut remap = vec![usize::MAX; vertices.len()];
    let mut new_verts = Vec::new();
    for (v, &u) in used.iter().enumerate() {
        if u {
            remap[v] = new_verts.len();
            new_verts.push(vertices[v]);
        }
    }
    for t in &mut tags {
        for v in &mut t.verts {
            *v = remap[*v];
        }
    }
    Mesh::from_tagged(new_verts, tags, None).expect("kuhn mesh")
}

/// Kuhn decomposition of the unit cube into an n^3 grid of subcubes,
/// 6 tets each. Shape regularity is independent of n.
pub fn unit_cube_mesh(n: usize) -> Mesh {
    assert!(n >= 1, "unit_cube_mesh requires n >= 1");
    let mut m = kuhn_boxes(n, n, n, |_, _, _| true);
    let s = 1.0 / n as f64;
    for v in &mut m.vertices {
        v[0] *= s;
        v[1] *= s;
        v[2] *= s;
    }
    // rebuild metric data after scaling
    Mesh::from_tagged(m.vertices, m.tags, None).expect("unit cube")
}

/// L-shaped prism: ([0,2]^2 \ [1,2]^2) x [0,1], Kuhn-decomposed with `n`
/// subcubes per unit edge. A non-convex Lipschitz polyhedron.
pub fn lshape_prism_mesh(n: usize) -> Mesh {
    assert!(n >= 1);
    let mut m = kuhn_boxes(2 * n, 2 * n, n, |i, j, _| i < n || j < n);
    let s = 1.0 / n as f64;
    for v in &mut m.vertices {
        v[0] *= s;
        v[1] *= s;
        v[2] *= s;
    }
    Mesh::from_tagged(m.vertices, m.tags, None).expect("lshape prism")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lshape_counts_and_volume() {
        let m = lshape_prism_mesh(1);
        assert_eq!(m.n_cells(), 18);
        assert!((m.total_volume() - 3.0).abs() < 1e-12);
        // surface area: top+bottom 2*3, outer sides 2+2+1+1+1+1 = 8
        assert!((m.boundary_area() - 14.0).abs() < 1e-12);
    }

    #[test]
    fn kuhn_tets_positive() {
        let m = unit_cube_mesh(3);
        for c in 0..m.n_cells() {
            assert!(m.cell_volume(c) > 0.0);
        }
    }
}
