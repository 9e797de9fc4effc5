//! Induced boundary triangulation of a tetrahedral mesh.

use super::Mesh;
use nalgebra::Vector3;
use std::collections::HashMap;
use std::sync::Arc;

/// Boundary triangulation of a parent mesh, with outward normals and the
/// surface edge connectivity needed by the trace spaces.
#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    pub mesh: Arc<Mesh>,
    /// Ascending vertex triples, one per boundary face of the parent.
    pub triangles: Vec<[usize; 3]>,
    /// Parent face index of each triangle.
    pub parent_faces: Vec<usize>,
    /// Outward unit normal per triangle.
    pub normals: Vec<Vector3<f64>>,
    pub areas: Vec<f64>,
    /// Triangle diameters h_F.
    pub h: Vec<f64>,
    /// Deduplicated surface edges, ascending vertex pairs.
    pub edges: Vec<[usize; 2]>,
    /// Edge indices per triangle in local order (0,1),(0,2),(1,2).
    pub tri_edges: Vec<[usize; 3]>,
    /// (first, second) incident triangles of each surface edge.
    pub edge_tris: Vec<(usize, usize)>,
}

pub(crate) const TRI_EDGE_VERTS: [[usize; 2]; 3] = [[0, 1], [0, 2], [1, 2]];

/// Build the surface mesh over exactly the boundary faces of `mesh`.
pub fn boundary_triangulation(mesh: &Arc<Mesh>) -> SurfaceMesh {
    let mut triangles = Vec::with_capacity(mesh.boundary_faces.len());
    let mut parent_faces = Vec::with_capacity(mesh.boundary_faces.len());
    let mut normals = Vec::with_capacity(mesh.boundary_faces.len());
    let mut areas = Vec::new();
    let mut h = Vec::new();
    for &fi in &mesh.boundary_faces {
        triangles.push(mesh.faces[fi]);
        parent_faces.push(fi);
        normals.push(mesh.outward_normal(fi));
        areas.push(mesh.face_area(fi));
        h.push(mesh.face_diameter(fi));
    }
    let mut edge_map: HashMap<[usize; 2], usize> = HashMap::new();
    let mut edges = Vec::new();
    let mut tri_edges = vec![[0usize; 3]; triangles.len()];
    let mut edge_tris_raw: Vec<Vec<usize>> = Vec::new();
    for (ti, t) in triangles.iter().enumerate() {
        for (le, ev) in TRI_EDGE_VERTS.iter().enumerate() {
            let e = [t[ev[0]], t[ev[1]]]; // already ascending: t is sorted
            let ei = *edge_map.entry(e).or_insert_with(|| {
                edges.push(e);
                edge_tris_raw.push(Vec::new());
                edges.len() - 1
            });
            tri_edges[ti][le] = ei;
            edge_tris_raw[ei].push(ti);
        }
    }
    let edge_tris = edge_tris_raw
        .iter()
        .map(|v| {
            assert_eq!(v.len(), 2, "surface edge not shared by two triangles");
            (v[0], v[1])
        })
        .collect();
    SurfaceMesh {
        mesh: mesh.clone(),
        triangles,
        parent_faces,
        normals,
        areas,
        h,
        edges,
        tri_edges,
        edge_tris,
    }
}

impl SurfaceMesh {
    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn tri_coords(&self, ti: usize) -> [[f64; 3]; 3] {
        let t = self.triangles[ti];
        [
            self.mesh.vertices[t[0]],
            self.mesh.vertices[t[1]],
            self.mesh.vertices[t[2]],
        ]
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Tangential part of a position vector on triangle `ti`.
    pub fn tangential(&self, ti: usize, x: Vector3<f64>) -> Vector3<f64> {
        let n = self.normals[ti];
        x - n * x.dot(&n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::vec3;
    use crate::mesh::{reference_tet_mesh, unit_cube_mesh};

    #[test]
    fn cube_boundary_counts() {
        let m = Arc::new(unit_cube_mesh(1));
        let s = boundary_triangulation(&m);
        assert_eq!(s.n_triangles(), 12);
        assert!((s.total_area() - 6.0).abs() < 1e-12);
        // Euler characteristic of a sphere-like surface
        let v: std::collections::HashSet<usize> =
            s.triangles.iter().flatten().copied().collect();
        let chi = v.len() as i64 - s.edges.len() as i64 + s.n_triangles() as i64;
        assert_eq!(chi, 2);
    }

    #[test]
    fn single_tet_surface() {
        let m = Arc::new(reference_tet_mesh());
        let s = boundary_triangulation(&m);
        assert_eq!(s.n_triangles(), 4);
        let exact = 1.5 + 0.75f64.sqrt(); // three legs (1/2 each) + sqrt(3)/2
        assert!((s.total_area() - exact).abs() < 1e-12);
    }

    #[test]
    fn normals_point_outward_and_xt_tangential() {
        let m = Arc::new(unit_cube_mesh(2));
        let s = boundary_triangulation(&m);
        for ti in 0..s.n_triangles() {
            let c = s.tri_coords(ti);
            let centroid = (vec3(c[0]) + vec3(c[1]) + vec3(c[2])) / 3.0;
            // outward from the unit cube center
            let dir = centroid - Vector3::new(0.5, 0.5, 0.5);
            assert!(s.normals[ti].dot(&dir) > 0.0);
            let xt = s.tangential(ti, centroid);
            assert!(xt.dot(&s.normals[ti]).abs() < 1e-12);
        }
    }
}
