//! Mesh loading: Gmsh MSH 2.2 ASCII subset and an internal JSON format.

use super::{Mesh, MeshError};
use serde::Deserialize;
use std::collections::HashMap;
use std::io::Read;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Gmsh22,
    InternalJson,
}

#[derive(Deserialize)]
struct JsonMesh {
    vertices: Vec<[f64; 3]>,
    cells: Vec<Vec<usize>>,
}

/// Load a tetrahedral mesh from a byte stream in the declared format.
pub fn load_mesh(mut source: impl Read, format: MeshFormat) -> Result<Mesh, MeshError> {
    let mut buf = String::new();
    source
        .read_to_string(&mut buf)
        .map_err(|e| MeshError::Parse(e.to_string()))?;
    match format {
        MeshFormat::InternalJson => {
            let jm: JsonMesh =
                serde_json::from_str(&buf).map_err(|e| MeshError::Parse(e.to_string()))?;
            let mut cells = Vec::with_capacity(jm.cells.len());
            for (i, c) in jm.cells.iter().enumerate() {
                if c.len() != 4 {
                    return Err(MeshError::NonTetCell(format!(
                        "cell {i} has {} vertices",
                        c.len()
                    )));
                }
                cells.push([c[0], c[1], c[2], c[3]]);
            }
            Mesh::from_cells(jm.vertices, cells)
        }
        MeshFormat::Gmsh22 => parse_gmsh22(&buf),
    }
}

fn parse_gmsh22(text: &str) -> Result<Mesh, MeshError> {
    let mut lines = text.lines().map(str::trim);
    let mut nodes: Vec<(u64, [f64; 3])> = Vec::new();
    let mut cells_raw: Vec<[u64; 4]> = Vec::new();
    while let Some(line) = lines.next() {
        match line {
            "$MeshFormat" => {
                let header = lines
                    .next()
                    .ok_or_else(|| MeshError::Parse("missing $MeshFormat body".into()))?;
                let mut it = header.split_whitespace();
                let version = it.next().unwrap_or("");
                if !version.starts_with("2.2") {
                    return Err(MeshError::Parse(format!(
                        "unsupported MSH version {version}, need 2.2"
                    )));
                }
                skip_until(&mut lines, "$EndMeshFormat")?;
            }
            "$Nodes" => {
                let n: usize = next_count(&mut lines)?;
                for _ in 0..n {
                    let l = lines
                        .next()
                        .ok_or_else(|| MeshError::Parse("truncated $Nodes".into()))?;
                    let mut it = l.split_whitespace();
                    let id: u64 = parse_tok(it.next())?;
                    let x: f64 = parse_tok(it.next())?;
                    let y: f64 = parse_tok(it.next())?;
                    let z: f64 = parse_tok(it.next())?;
                    nodes.push((id, [x, y, z]));
                }
                skip_until(&mut lines, "$EndNodes")?;
            }
            "$Elements" => {
                let n: usize = next_count(&mut lines)?;
                for _ in 0..n {
                    let l = lines
                        .next()
                        .ok_or_else(|| MeshError::Parse("truncated $Elements".into()))?;
                    let mut it = l.split_whitespace();
                    let _id: u64 = parse_tok(it.next())?;
                    let etype: u64 = parse_tok(it.next())?;
                    let ntags: usize = parse_tok(it.next())?;
                    for _ in 0..ntags {
                        let _: i64 = parse_tok(it.next())?;
                    }
                    let rest: Vec<u64> = it
                        .map(|t| t.parse().map_err(|_| MeshError::Parse(format!("bad token {t}"))))
                        .collect::<Result<_, _>>()?;
                    match etype {
                        4 => {
                            if rest.len() != 4 {
                                return Err(MeshError::Parse("tet4 needs 4 nodes".into()));
                            }
                            cells_raw.push([rest[0], rest[1], rest[2], rest[3]]);
                        }
                        // points, lines and surface triangles are ignored on load
                        1 | 2 | 15 => {}
                        other => {
                            return Err(MeshError::NonTetCell(format!(
                                "element type {other} is not tet4"
                            )))
                        }
                    }
                }
                skip_until(&mut lines, "$EndElements")?;
            }
            "" => {}
            other if other.starts_with('$') && !other.starts_with("$End") => {
                let end = format!("$End{}", &other[1..]);
                skip_until(&mut lines, &end)?;
            }
            _ => {}
        }
    }
    if nodes.is_empty() {
        return Err(MeshError::Parse("no $Nodes section".into()));
    }
    if cells_raw.is_empty() {
        return Err(MeshError::Parse("no tetrahedra in $Elements".into()));
    }
    let mut id_map: HashMap<u64, usize> = HashMap::new();
    let mut vertices = Vec::with_capacity(nodes.len());
    for (id, p) in nodes {
        id_map.insert(id, vertices.len());
        vertices.push(p);
    }
    let mut cells = Vec::with_capacity(cells_raw.len());
    for c in cells_raw {
        let mut cc = [0usize; 4];
        for (k, id) in c.iter().enumerate() {
            cc[k] = *id_map
                .get(id)
                .ok_or_else(|| MeshError::Parse(format!("element references missing node {id}")))?;
        }
        cells.push(cc);
    }
    Mesh::from_cells(vertices, cells)
}

fn next_count<'a>(lines: &mut impl Iterator<Item = &'a str>) -> Result<usize, MeshError> {
    lines
        .next()
        .ok_or_else(|| MeshError::Parse("missing count line".into()))?
        .parse()
        .map_err(|_| MeshError::Parse("bad count".into()))
}

fn parse_tok<T: std::str::FromStr>(tok: Option<&str>) -> Result<T, MeshError> {
    tok.ok_or_else(|| MeshError::Parse("truncated line".into()))?
        .parse()
        .map_err(|_| MeshError::Parse(format!("bad token {tok:?}")))
}

fn skip_until<'a>(
    lines: &mut impl Iterator<Item = &'a str>,
    end: &str,
) -> Result<(), MeshError> {
    for l in lines {
        if l == end {
            return Ok(());
        }
    }
    Err(MeshError::Parse(format!("missing {end}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_reference_tet() {
        let src = r#"{"vertices": [[0,0,0],[1,0,0],[0,1,0],[0,0,1]], "cells": [[0,1,2,3]]}"#;
        let m = load_mesh(src.as_bytes(), MeshFormat::InternalJson).unwrap();
        assert_eq!(m.n_cells(), 1);
        assert_eq!(m.boundary_faces.len(), 4);
        assert_eq!(m.edges.len(), 6);
    }

    #[test]
    fn json_swapped_vertices_reoriented() {
        let src = r#"{"vertices": [[0,0,0],[1,0,0],[0,1,0],[0,0,1]], "cells": [[1,0,2,3]]}"#;
        let m = load_mesh(src.as_bytes(), MeshFormat::InternalJson).unwrap();
        assert!((m.cell_volume(0) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn json_non_tet_rejected() {
        let src = r#"{"vertices": [[0,0,0],[1,0,0],[0,1,0],[0,0,1]], "cells": [[0,1,2]]}"#;
        match load_mesh(src.as_bytes(), MeshFormat::InternalJson) {
            Err(MeshError::NonTetCell(_)) => {}
            other => panic!("expected NonTetCell, got {other:?}"),
        }
    }

    #[test]
    fn gmsh_tet_loads() {
        let src = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n4\n1 0 0 0\n2 1 0 0\n3 0 1 0\n4 0 0 1\n$EndNodes\n$Elements\n2\n1 2 2 0 1 1 2 3\n2 4 2 0 1 1 2 3 4\n$EndElements\n";
        let m = load_mesh(src.as_bytes(), MeshFormat::Gmsh22).unwrap();
        assert_eq!(m.n_cells(), 1);
    }

    #[test]
    fn gmsh_hex_rejected() {
        let src = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n8\n1 0 0 0\n2 1 0 0\n3 1 1 0\n4 0 1 0\n5 0 0 1\n6 1 0 1\n7 1 1 1\n8 0 1 1\n$EndNodes\n$Elements\n1\n1 5 2 0 1 1 2 3 4 5 6 7 8\n$EndElements\n";
        match load_mesh(src.as_bytes(), MeshFormat::Gmsh22) {
            Err(MeshError::NonTetCell(_)) => {}
            other => panic!("expected NonTetCell, got {other:?}"),
        }
    }

    #[test]
    fn json_hanging_face_rejected() {
        // three tets sharing one face
        let src = r#"{"vertices": [[0,0,0],[1,0,0],[0,1,0],[0,0,1],[0,0,-1],[1,1,1]],
                      "cells": [[0,1,2,3],[0,1,2,4],[0,1,2,5]]}"#;
        match load_mesh(src.as_bytes(), MeshFormat::InternalJson) {
            Err(MeshError::NonConforming(_)) => {}
            other => panic!("expected NonConforming, got {other:?}"),
        }
    }
}
