//! Conforming tetrahedral meshes: construction, interrogation, refinement,
//! and the induced boundary triangulation.

pub mod generate;
pub mod io;
pub mod refine;
pub mod surface;

pub use generate::{lshape_prism_mesh, reference_tet_mesh, unit_cube_mesh};
pub use io::{load_mesh, MeshFormat};
pub use refine::{refine, RefineMode};
pub use surface::{boundary_triangulation, SurfaceMesh};

use nalgebra::Vector3;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("parse failure: {0}")]
    Parse(String),
    #[error("non-tet cell: {0}")]
    NonTetCell(String),
    #[error("non-conforming connectivity: {0}")]
    NonConforming(String),
    #[error("degenerate cell {0} (zero volume)")]
    DegenerateCell(usize),
    #[error("boundary is not a closed surface: {0}")]
    OpenBoundary(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}

/// Per-cell bookkeeping for newest-vertex (Maubach/Traxler style) bisection:
/// ordered vertex list and type; the refinement edge is (verts[0], verts[3]).
#[derive(Debug, Clone, Copy)]
pub struct BisectTag {
    pub verts: [usize; 4],
    pub gamma: u8,
}

/// Conforming tetrahedral mesh. Immutable after construction.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
    /// Positively oriented vertex quadruples.
    pub cells: Vec<[usize; 4]>,
    /// Deduplicated faces as ascending vertex triples.
    pub faces: Vec<[usize; 3]>,
    /// Deduplicated edges as ascending vertex pairs.
    pub edges: Vec<[usize; 2]>,
    /// (owner, neighbor) cells of each face.
    pub face_cells: Vec<(usize, Option<usize>)>,
    /// Face indices of each cell; entry i is the face opposite local vertex i.
    pub cell_faces: Vec<[usize; 4]>,
    /// Edge indices of each cell in the local order
    /// (0,1),(0,2),(0,3),(1,2),(1,3),(2,3).
    pub cell_edges: Vec<[usize; 6]>,
    /// Indices into `faces` with exactly one incident cell.
    pub boundary_faces: Vec<usize>,
    /// Cell diameters (largest edge length).
    pub h: Vec<f64>,
    /// Bisection tags, parallel to `cells`.
    pub tags: Vec<BisectTag>,
    /// Parent cell in the mesh this one was refined from, if any.
    pub parent_cells: Option<Vec<usize>>,
}

pub(crate) const CELL_EDGE_VERTS: [[usize; 2]; 6] =
    [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]];

pub fn vec3(p: [f64; 3]) -> Vector3<f64> {
    Vector3::new(p[0], p[1], p[2])
}

pub(crate) fn signed_volume(v: &[[f64; 3]; 4]) -> f64 {
    let a = vec3(v[1]) - vec3(v[0]);
    let b = vec3(v[2]) - vec3(v[0]);
    let c = vec3(v[3]) - vec3(v[0]);
    a.cross(&b).dot(&c) / 6.0
}

impl Mesh {
    /// Build a mesh from raw vertex/cell data, reorienting inverted cells.
    /// Cells keep their given order for bisection tags (type 0).
    pub fn from_cells(
        vertices: Vec<[f64; 3]>,
        cells: Vec<[usize; 4]>,
    ) -> Result<Self, MeshError> {
        let tags = cells
            .iter()
            .map(|c| BisectTag { verts: *c, gamma: 0 })
            .collect();
        Self::from_tagged(vertices, tags, None)
    }

    pub(crate) fn from_tagged(
        vertices: Vec<[f64; 3]>,
        tags: Vec<BisectTag>,
        parent_cells: Option<Vec<usize>>,
    ) -> Result<Self, MeshError> {
        let nv = vertices.len();
        let mut cells = Vec::with_capacity(tags.len());
        for (i, t) in tags.iter().enumerate() {
            let c = t.verts;
            if c.iter().any(|&v| v >= nv) {
                return Err(MeshError::Invalid(format!("cell {i} references missing vertex")));
            }
            let coords = [
                vertices[c[0]],
                vertices[c[1]],
                vertices[c[2]],
                vertices[c[3]],
            ];
            let vol = signed_volume(&coords);
            if vol.abs() < 1e-300 {
                return Err(MeshError::DegenerateCell(i));
            }
            // positive orientation by swapping the last two vertices
            if vol > 0.0 {
                cells.push(c);
            } else {
                cells.push([c[0], c[1], c[3], c[2]]);
            }
        }

        // deduplicate faces and edges
        let mut face_map: HashMap<[usize; 3], usize> = HashMap::new();
        let mut faces: Vec<[usize; 3]> = Vec::new();
        let mut face_cells: Vec<(usize, Option<usize>)> = Vec::new();
        let mut cell_faces = vec![[0usize; 4]; cells.len()];
        for (ci, c) in cells.iter().enumerate() {
            for li in 0..4 {
                let mut f = [c[(li + 1) % 4], c[(li + 2) % 4], c[(li + 3) % 4]];
                f.sort_unstable();
                let fi = *face_map.entry(f).or_insert_with(|| {
                    faces.push(f);
                    face_cells.push((usize::MAX, None));
                    faces.len() - 1
                });
                cell_faces[ci][li] = fi;
                if face_cells[fi].0 == usize::MAX {
                    face_cells[fi].0 = ci;
                } else if face_cells[fi].1.is_none() {
                    face_cells[fi].1 = Some(ci);
                } else {
                    return Err(MeshError::NonConforming(format!(
                        "face {f:?} has more than two incident cells"
                    )));
                }
            }
        }

        let mut edge_map: HashMap<[usize; 2], usize> = HashMap::new();
        let mut edges: Vec<[usize; 2]> = Vec::new();
        let mut cell_edges = vec![[0usize; 6]; cells.len()];
        for (ci, c) in cells.iter().enumerate() {
            for (le, ev) in CELL_EDGE_VERTS.iter().enumerate() {
                let mut e = [c[ev[0]], c[ev[1]]];
                e.sort_unstable();
                let ei = *edge_map.entry(e).or_insert_with(|| {
                    edges.push(e);
                    edges.len() - 1
                });
                cell_edges[ci][le] = ei;
            }
        }

        let boundary_faces: Vec<usize> = (0..faces.len())
            .filter(|&fi| face_cells[fi].1.is_none())
            .collect();

        // closed-boundary check: every boundary edge in exactly two boundary faces
        let mut bedge_count: HashMap<[usize; 2], usize> = HashMap::new();
        for &fi in &boundary_faces {
            let f = faces[fi];
            for (a, b) in [(f[0], f[1]), (f[0], f[2]), (f[1], f[2])] {
                *bedge_count.entry([a, b]).or_insert(0) += 1;
            }
        }
        for (e, n) in &bedge_count {
            if *n != 2 {
                return Err(MeshError::OpenBoundary(format!(
                    "boundary edge {e:?} lies on {n} boundary faces"
                )));
            }
        }

        let h = cells
            .iter()
            .map(|c| {
                CELL_EDGE_VERTS
                    .iter()
                    .map(|ev| (vec3(vertices[c[ev[0]]]) - vec3(vertices[c[ev[1]]])).norm())
                    .fold(0.0, f64::max)
            })
            .collect();

        Ok(Mesh {
            vertices,
            cells,
            faces,
            edges,
            face_cells,
            cell_faces,
            cell_edges,
            boundary_faces,
            h,
            tags,
            parent_cells,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_coords(&self, ci: usize) -> [[f64; 3]; 4] {
        let c = self.cells[ci];
        [
            self.vertices[c[0]],
            self.vertices[c[1]],
            self.vertices[c[2]],
            self.vertices[c[3]],
        ]
    }

    pub fn cell_volume(&self, ci: usize) -> f64 {
        signed_volume(&self.cell_coords(ci))
    }

    pub fn cell_centroid(&self, ci: usize) -> Vector3<f64> {
        let c = self.cell_coords(ci);
        (vec3(c[0]) + vec3(c[1]) + vec3(c[2]) + vec3(c[3])) / 4.0
    }

    pub fn face_area(&self, fi: usize) -> f64 {
        let f = self.faces[fi];
        let a = vec3(self.vertices[f[1]]) - vec3(self.vertices[f[0]]);
        let b = vec3(self.vertices[f[2]]) - vec3(self.vertices[f[0]]);
        a.cross(&b).norm() / 2.0
    }

    /// Unit normal of the face under the global ascending-vertex orientation.
    pub fn face_normal_sorted(&self, fi: usize) -> Vector3<f64> {
        let f = self.faces[fi];
        let a = vec3(self.vertices[f[1]]) - vec3(self.vertices[f[0]]);
        let b = vec3(self.vertices[f[2]]) - vec3(self.vertices[f[0]]);
        a.cross(&b).normalize()
    }

    pub fn face_diameter(&self, fi: usize) -> f64 {
        let f = self.faces[fi];
        let p: Vec<Vector3<f64>> = f.iter().map(|&v| vec3(self.vertices[v])).collect();
        (p[0] - p[1])
            .norm()
            .max((p[0] - p[2]).norm())
            .max((p[1] - p[2]).norm())
    }

    /// Outward unit normal of a boundary face (points away from its owner cell).
    pub fn outward_normal(&self, fi: usize) -> Vector3<f64> {
        let n = self.face_normal_sorted(fi);
        let (owner, _) = self.face_cells[fi];
        let centroid_f = {
            let f = self.faces[fi];
            (vec3(self.vertices[f[0]]) + vec3(self.vertices[f[1]]) + vec3(self.vertices[f[2]]))
                / 3.0
        };
        if n.dot(&(centroid_f - self.cell_centroid(owner))) >= 0.0 {
            n
        } else {
            -n
        }
    }

    /// max over cells of h_K / inradius(K); larger is worse.
    pub fn shape_regularity(&self) -> f64 {
        (0..self.n_cells())
            .map(|ci| {
                let vol = self.cell_volume(ci);
                let area: f64 = self.cell_faces[ci]
                    .iter()
                    .map(|&fi| self.face_area(fi))
                    .sum();
                let inradius = 3.0 * vol / area;
                self.h[ci] / inradius
            })
            .fold(0.0, f64::max)
    }

    pub fn h_min_max(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for &h in &self.h {
            lo = lo.min(h);
            hi = hi.max(h);
        }
        (lo, hi)
    }

    /// D_K: all cells sharing at least one vertex with `cell` (including it).
    pub fn vertex_patch(&self, cell: usize) -> Vec<usize> {
        let cv = self.cells[cell];
        let mut out: Vec<usize> = (0..self.n_cells())
            .filter(|&cj| self.cells[cj].iter().any(|v| cv.contains(v)))
            .collect();
        out.sort_unstable();
        out
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.n_cells()).map(|c| self.cell_volume(c)).sum()
    }

    pub fn boundary_area(&self) -> f64 {
        self.boundary_faces.iter().map(|&f| self.face_area(f)).sum()
    }
}
