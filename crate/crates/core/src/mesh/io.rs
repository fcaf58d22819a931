//! Line-oriented mesh text format.
//!
//! ```text
//! # comment
//! nv nc ne_b
//! x y              (nv lines)
//! m v0 v1 ... vm-1 (nc lines, CCW, 0-based)
//! va vb T          (ne_b lines, T in {D, N})
//! ```

use std::collections::HashSet;
use std::io::{BufRead, Write};

use super::{shoelace, BoundaryTag, MeshError, PolyMesh};
use crate::Vec2;

fn format_err(line: usize, msg: impl Into<String>) -> MeshError {
    MeshError::Format { line, msg: msg.into() }
}

fn parse_num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T, MeshError> {
    tok.ok_or_else(|| format_err(line, format!("missing {what}")))?
        .parse()
        .map_err(|_| format_err(line, format!("cannot parse {what}")))
}

/// Reads a mesh. Clockwise cells are reversed with a warning.
pub fn load_mesh<R: BufRead>(reader: R) -> Result<PolyMesh, MeshError> {
    let mut lines = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim().to_string();
        if !content.is_empty() {
            lines.push((i + 1, content));
        }
    }
    let mut it = lines.into_iter();
    let (hl, header) = it.next().ok_or_else(|| format_err(1, "empty mesh file"))?;
    let mut toks = header.split_whitespace();
    let nv: usize = parse_num(toks.next(), hl, "vertex count")?;
    let nc: usize = parse_num(toks.next(), hl, "cell count")?;
    let nb: usize = parse_num(toks.next(), hl, "boundary edge count")?;
    if toks.next().is_some() {
        return Err(format_err(hl, "header must have exactly three fields"));
    }

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = it.next().ok_or_else(|| format_err(hl, "unexpected end of file in vertices"))?;
        let mut t = l.split_whitespace();
        let x: f64 = parse_num(t.next(), ln, "x")?;
        let y: f64 = parse_num(t.next(), ln, "y")?;
        vertices.push(Vec2::new(x, y));
    }
    let mut cells = Vec::with_capacity(nc);
    for c in 0..nc {
        let (ln, l) = it.next().ok_or_else(|| format_err(hl, "unexpected end of file in cells"))?;
        let mut t = l.split_whitespace();
        let m: usize = parse_num(t.next(), ln, "cell size")?;
        let mut cell = Vec::with_capacity(m);
        for _ in 0..m {
            let v: usize = parse_num(t.next(), ln, "vertex index")?;
            if v >= nv {
                return Err(format_err(ln, format!("vertex index {v} out of range")));
            }
            cell.push(v);
        }
        if t.next().is_some() {
            return Err(format_err(ln, "too many vertex indices"));
        }
        let pts: Vec<Vec2> = cell.iter().map(|&v| vertices[v]).collect();
        if shoelace(&pts) < 0.0 {
            log::warn!("cell {c} (line {ln}) is clockwise; reversing");
            cell.reverse();
        }
        cells.push(cell);
    }
    let mut mesh = PolyMesh::new(vertices, cells)?;

    let mut seen = HashSet::new();
    for _ in 0..nb {
        let (ln, l) = it.next().ok_or_else(|| format_err(hl, "unexpected end of file in boundary tags"))?;
        let mut t = l.split_whitespace();
        let va: usize = parse_num(t.next(), ln, "edge vertex")?;
        let vb: usize = parse_num(t.next(), ln, "edge vertex")?;
        let tag = match t.next() {
            Some("D") => BoundaryTag::Dirichlet,
            Some("N") => BoundaryTag::Neumann,
            _ => return Err(format_err(ln, "tag must be D or N")),
        };
        let key = (va.min(vb), va.max(vb));
        if !seen.insert(key) {
            return Err(MeshError::DuplicateTag(key.0, key.1));
        }
        let e = mesh
            .edges
            .iter()
            .position(|e| (e.a, e.b) == key)
            .ok_or_else(|| format_err(ln, format!("edge ({va}, {vb}) does not exist")))?;
        if !mesh.edges[e].is_boundary() {
            return Err(MeshError::TagOnInterior(key.0, key.1));
        }
        mesh.boundary_tag[e] = Some(tag);
    }
    if let Some((ln, _)) = it.next() {
        return Err(format_err(ln, "trailing content"));
    }
    Ok(mesh)
}

/// Writes a mesh; coordinates carry 17 significant digits so that
/// `load_mesh(write_mesh(m))` reproduces them bit for bit.
pub fn write_mesh<W: Write>(mesh: &PolyMesh, mut w: W) -> std::io::Result<()> {
    let tagged: Vec<usize> = mesh.boundary_edges().filter(|&e| mesh.boundary_tag[e].is_some()).collect();
    writeln!(w, "{} {} {}", mesh.num_vertices(), mesh.num_cells(), tagged.len())?;
    for p in &mesh.vertices {
        writeln!(w, "{:.16e} {:.16e}", p.x, p.y)?;
    }
    for cell in &mesh.cells {
        write!(w, "{}", cell.len())?;
        for v in cell {
            write!(w, " {v}")?;
        }
        writeln!(w)?;
    }
    for e in tagged {
        let edge = &mesh.edges[e];
        writeln!(w, "{} {} {}", edge.a, edge.b, mesh.boundary_tag[e].unwrap().letter())?;
    }
    Ok(())
}
