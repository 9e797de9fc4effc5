//! Mesh refinement: uniform 8-split (red) and newest-vertex bisection with
//! conforming closure.

use super::{BisectTag, Mesh, MeshError, CELL_EDGE_VERTS};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefineMode {
    /// Red refinement: every tet split into 8 children.
    Uniform,
    /// Newest-vertex bisection of the marked cells plus conforming closure.
    Bisection,
}

/// Refine a mesh. `marked` is ignored for uniform refinement; for bisection
/// it must be nonempty.
pub fn refine(mesh: &Mesh, mode: RefineMode, marked: &[usize]) -> Result<Mesh, MeshError> {
    match mode {
        RefineMode::Uniform => Ok(refine_uniform(mesh)),
        RefineMode::Bisection => {
            if marked.is_empty() {
                return Err(MeshError::Invalid("bisection requires marked cells".into()));
            }
            Ok(refine_bisection(mesh, marked))
        }
    }
}

fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

fn refine_uniform(mesh: &Mesh) -> Mesh {
    let mut vertices = mesh.vertices.clone();
    let mut midpoint: HashMap<[usize; 2], usize> = HashMap::new();
    let mut mid = |a: usize, b: usize, vertices: &mut Vec<[f64; 3]>| -> usize {
        let key = if a < b { [a, b] } else { [b, a] };
        *midpoint.entry(key).or_insert_with(|| {
            let pa = vertices[a];
            let pb = vertices[b];
            vertices.push([
                (pa[0] + pb[0]) / 2.0,
                (pa[1] + pb[1]) / 2.0,
                (pa[2] + pb[2]) / 2.0,
            ]);
            vertices.len() - 1
        })
    };

    let mut tags = Vec::with_capacity(8 * mesh.n_cells());
    let mut parents = Vec::with_capacity(8 * mesh.n_cells());
    for (ci, c) in mesh.cells.iter().enumerate() {
        let [v0, v1, v2, v3] = *c;
        let m01 = mid(v0, v1, &mut vertices);
        let m02 = mid(v0, v2, &mut vertices);
        let m03 = mid(v0, v3, &mut vertices);
        let m12 = mid(v1, v2, &mut vertices);
        let m13 = mid(v1, v3, &mut vertices);
        let m23 = mid(v2, v3, &mut vertices);
        // four corner children
        let mut children = vec![
            [v0, m01, m02, m03],
            [v1, m01, m12, m13],
            [v2, m02, m12, m23],
            [v3, m03, m13, m23],
        ];
        // split the interior octahedron along its shortest diagonal
        let diags = [
            ([m01, m23], dist2(vertices[m01], vertices[m23])),
            ([m02, m13], dist2(vertices[m02], vertices[m13])),
            ([m03, m12], dist2(vertices[m03], vertices[m12])),
        ];
        let &(d, _) = diags
            .iter()
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        // the four octahedron tets around the chosen diagonal
        let ring: [usize; 4] = match (d[0], d[1]) {
            _ if d == [m01, m23] => [m02, m13, m03, m12],
            _ if d == [m02, m13] => [m01, m23, m03, m12],
            _ => [m01, m23, m02, m13],
        };
        // ring pairs adjacent to both diagonal ends
        let quads = [
            [d[0], d[1], ring[0], ring[2]],
            [d[0], d[1], ring[0], ring[3]],
            [d[0], d[1], ring[1], ring[2]],
            [d[0], d[1], ring[1], ring[3]],
        ];
        for q in quads {
            children.push(q);
        }
        for ch in children {
            tags.push(BisectTag { verts: ch, gamma: 0 });
            parents.push(ci);
        }
    }
    Mesh::from_tagged(vertices, tags, Some(parents)).expect("uniform refinement")
}

struct Bisector {
    vertices: Vec<[f64; 3]>,
    /// (tag, parent in the input mesh, alive)
    cells: Vec<(BisectTag, usize, bool)>,
    midpoint: HashMap<[usize; 2], usize>,
}

impl Bisector {
    fn midpoint_of(&mut self, a: usize, b: usize) -> usize {
        let key = if a < b { [a, b] } else { [b, a] };
        if let Some(&m) = self.midpoint.get(&key) {
            return m;
        }
        let pa = self.vertices[a];
        let pb = self.vertices[b];
        self.vertices.push([
            (pa[0] + pb[0]) / 2.0,
            (pa[1] + pb[1]) / 2.0,
            (pa[2] + pb[2]) / 2.0,
        ]);
        let m = self.vertices.len() - 1;
        self.midpoint.insert(key, m);
        m
    }

    fn is_split(&self, a: usize, b: usize) -> bool {
        let key = if a < b { [a, b] } else { [b, a] };
        self.midpoint.contains_key(&key)
    }

    /// Bisect cell `i` along its refinement edge (verts[0], verts[3]).
    fn bisect(&mut self, i: usize) -> (usize, usize) {
        let (tag, parent, alive) = self.cells[i];
        assert!(alive, "bisecting a dead cell");
        let [x0, x1, x2, x3] = tag.verts;
        let z = self.midpoint_of(x0, x3);
        let g = tag.gamma;
        // Maubach/Traxler recursion: children of a type-g tagged tet
        let c1 = [x0, z, x1, x2];
        let c2 = if g == 0 { [x3, z, x2, x1] } else { [x3, z, x1, x2] };
        let g2 = (g + 1) % 3;
        self.cells[i].2 = false;
        self.cells.push((BisectTag { verts: c1, gamma: g2 }, parent, true));
        self.cells.push((BisectTag { verts: c2, gamma: g2 }, parent, true));
        (self.cells.len() - 2, self.cells.len() - 1)
    }
}

fn refine_bisection(mesh: &Mesh, marked: &[usize]) -> Mesh {
    let mut b = Bisector {
        vertices: mesh.vertices.clone(),
        cells: mesh
            .tags
            .iter()
            .enumerate()
            .map(|(i, t)| (*t, i, true))
            .collect(),
        midpoint: HashMap::new(),
    };
    for &m in marked {
        if b.cells[m].2 {
            b.bisect(m);
        }
    }
    // conforming closure: any alive cell with a split edge gets bisected
    // (always along its own refinement edge). Terminates for compatible tags.
    let mut sweeps = 0usize;
    loop {
        let mut changed = false;
        let mut i = 0;
        while i < b.cells.len() {
            if b.cells[i].2 {
                let verts = b.cells[i].0.verts;
                let split = CELL_EDGE_VERTS
                    .iter()
                    .any(|ev| b.is_split(verts[ev[0]], verts[ev[1]]));
                if split {
                    b.bisect(i);
                    changed = true;
                }
            }
            i += 1;
        }
        if !changed {
            break;
        }
        sweeps += 1;
        assert!(sweeps < 1000, "bisection closure failed to terminate");
    }
    let mut tags = Vec::new();
    let mut parents = Vec::new();
    for (tag, parent, alive) in &b.cells {
        if *alive {
            tags.push(*tag);
            parents.push(*parent);
        }
    }
    Mesh::from_tagged(b.vertices, tags, Some(parents)).expect("bisection refinement")
}
