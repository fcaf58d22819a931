//! Polygonal meshes.
//!
//! Cells are counter-clockwise vertex cycles. Every edge is stored once as a
//! vertex pair `(a, b)` with `a < b`; its global unit normal is the tangent
//! `(b - a) / |b - a|` rotated by -90 degrees. A cell sees an edge with sign
//! `+1` when its outward normal coincides with the global normal, i.e. when the
//! cell traverses the edge from `a` to `b`.

mod generate;
mod io;

pub use generate::{build_structured_quad, build_triangular, distort_quad};
pub use io::{load_mesh, write_mesh};

use std::collections::HashMap;

use thiserror::Error;

use crate::Vec2;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("cell {cell}: degenerate polygon (area {area:e})")]
    Degenerate { cell: usize, area: f64 },
    #[error("cell {cell}: polygon is not simple")]
    NotSimple { cell: usize },
    #[error("cell {cell}: polygon is clockwise")]
    Clockwise { cell: usize },
    #[error("cell {cell}: vertex index {vertex} out of range")]
    BadVertex { cell: usize, vertex: usize },
    #[error("edge ({0}, {1}) is shared by more than two cells or traversed twice in the same direction")]
    BadEdgeIncidence(usize, usize),
    #[error("vertex {0} is not used by any cell")]
    DanglingVertex(usize),
    #[error("total cell area {cells} differs from domain area {domain}")]
    AreaMismatch { cells: f64, domain: f64 },
    #[error("boundary edge ({0}, {1}) has no tag")]
    Untagged(usize, usize),
    #[error("edge ({0}, {1}) tagged more than once")]
    DuplicateTag(usize, usize),
    #[error("tagged edge ({0}, {1}) is not a boundary edge")]
    TagOnInterior(usize, usize),
    #[error("distortion amplitude {amplitude} inverts a cell (limit {limit})")]
    Inverted { amplitude: f64, limit: f64 },
    #[error("mesh format error on line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Boundary condition class of a boundary edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    /// Natural data: displacement, pressure and concentration are prescribed.
    Dirichlet,
    /// Essential data: traction, Darcy flux and diffusive flux normal components.
    Neumann,
}

impl BoundaryTag {
    pub fn letter(self) -> char {
        match self {
            BoundaryTag::Dirichlet => 'D',
            BoundaryTag::Neumann => 'N',
        }
    }
}

/// A global edge `(a, b)` with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    /// Incident cells; `cells[1]` is `None` on the boundary.
    pub cells: [Option<usize>; 2],
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.cells[1].is_none()
    }
}

/// Oriented reference from a cell to one of its global edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellEdge {
    pub edge: usize,
    /// `+1` iff the cell's outward normal equals the global edge normal.
    pub sign: i8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolyMesh {
    pub vertices: Vec<Vec2>,
    pub cells: Vec<Vec<usize>>,
    pub edges: Vec<Edge>,
    /// `cell_edges[c][i]` is the edge from local vertex `i` to `i + 1`.
    pub cell_edges: Vec<Vec<CellEdge>>,
    /// Per edge; only boundary edges may carry a tag.
    pub boundary_tag: Vec<Option<BoundaryTag>>,
}

/// Geometric quantities of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGeometry {
    pub area: f64,
    /// Area-weighted barycentre.
    pub centroid: Vec2,
    /// Maximum pairwise vertex distance.
    pub diameter: f64,
    pub vertices: Vec<Vec2>,
    /// Per local edge (vertex `i` to `i + 1`).
    pub edge_lengths: Vec<f64>,
    pub outward_normals: Vec<Vec2>,
    /// `min_f h_f / h_K`; monitors the edge-to-diameter mesh regularity.
    pub eta: f64,
}

fn shoelace(pts: &[Vec2]) -> f64 {
    let n = pts.len();
    (0..n)
        .map(|i| {
            let p = pts[i];
            let q = pts[(i + 1) % n];
            p.x * q.y - q.x * p.y
        })
        .sum::<f64>()
        * 0.5
}

fn segments_intersect(p1: Vec2, p2: Vec2, q1: Vec2, q2: Vec2) -> bool {
    let orient = |a: Vec2, b: Vec2, c: Vec2| (b - a).perp(&(c - a));
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    (d1 * d2 < 0.0) && (d3 * d4 < 0.0)
}

fn is_simple(pts: &[Vec2]) -> bool {
    let n = pts.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            // adjacent edges share a vertex
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_intersect(pts[i], pts[(i + 1) % n], pts[j], pts[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

impl PolyMesh {
    /// Builds the edge structure from vertices and CCW cells. Boundary edges
    /// are left untagged.
    pub fn new(vertices: Vec<Vec2>, cells: Vec<Vec<usize>>) -> Result<Self, MeshError> {
        let mut edge_index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        let mut cell_edges = Vec::with_capacity(cells.len());
        let mut used = vec![false; vertices.len()];
        for (c, cell) in cells.iter().enumerate() {
            let m = cell.len();
            if m < 3 {
                return Err(MeshError::NotSimple { cell: c });
            }
            let mut ces = Vec::with_capacity(m);
            for i in 0..m {
                let (v0, v1) = (cell[i], cell[(i + 1) % m]);
                for v in [v0, v1] {
                    if v >= vertices.len() {
                        return Err(MeshError::BadVertex { cell: c, vertex: v });
                    }
                    used[v] = true;
                }
                let key = (v0.min(v1), v0.max(v1));
                let sign = if v0 < v1 { 1 } else { -1 };
                let e = match edge_index.get(&key) {
                    Some(&e) => {
                        let edge = &mut edges[e];
                        if edge.cells[1].is_some() {
                            return Err(MeshError::BadEdgeIncidence(key.0, key.1));
                        }
                        edge.cells[1] = Some(c);
                        e
                    }
                    None => {
                        edges.push(Edge { a: key.0, b: key.1, cells: [Some(c), None] });
                        edge_index.insert(key, edges.len() - 1);
                        edges.len() - 1
                    }
                };
                ces.push(CellEdge { edge: e, sign });
            }
            cell_edges.push(ces);
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(MeshError::DanglingVertex(v));
        }
        let ne = edges.len();
        let mesh = PolyMesh { vertices, cells, edges, cell_edges, boundary_tag: vec![None; ne] };
        // opposite signs on interior edges
        for (e, edge) in mesh.edges.iter().enumerate() {
            if let [Some(c0), Some(c1)] = edge.cells {
                if mesh.edge_sign(c0, e) == mesh.edge_sign(c1, e) {
                    return Err(MeshError::BadEdgeIncidence(edge.a, edge.b));
                }
            }
        }
        Ok(mesh)
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn boundary_edges(&self) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().enumerate().filter(|(_, e)| e.is_boundary()).map(|(i, _)| i)
    }

    fn edge_sign(&self, cell: usize, edge: usize) -> i8 {
        self.cell_edges[cell].iter().find(|ce| ce.edge == edge).map(|ce| ce.sign).unwrap_or(0)
    }

    pub fn cell_points(&self, cell: usize) -> Vec<Vec2> {
        self.cells[cell].iter().map(|&v| self.vertices[v]).collect()
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let edge = &self.edges[e];
        (self.vertices[edge.b] - self.vertices[edge.a]).norm()
    }

    pub fn edge_midpoint(&self, e: usize) -> Vec2 {
        let edge = &self.edges[e];
        (self.vertices[edge.a] + self.vertices[edge.b]) * 0.5
    }

    /// Unit tangent from `a` to `b`.
    pub fn edge_tangent(&self, e: usize) -> Vec2 {
        let edge = &self.edges[e];
        (self.vertices[edge.b] - self.vertices[edge.a]).normalize()
    }

    /// Global unit normal: the tangent rotated by -90 degrees.
    pub fn edge_normal(&self, e: usize) -> Vec2 {
        let t = self.edge_tangent(e);
        Vec2::new(t.y, -t.x)
    }

    /// Maximum cell diameter.
    pub fn h(&self) -> f64 {
        (0..self.num_cells())
            .map(|c| diameter(&self.cell_points(c)))
            .fold(0.0, f64::max)
    }

    /// Area enclosed by the boundary edges, computed from their outward orientation.
    pub fn domain_area(&self) -> f64 {
        let mut twice = 0.0;
        for e in self.boundary_edges() {
            let edge = &self.edges[e];
            let c = edge.cells[0].expect("boundary edge has one cell");
            let (p, q) = if self.edge_sign(c, e) > 0 {
                (self.vertices[edge.a], self.vertices[edge.b])
            } else {
                (self.vertices[edge.b], self.vertices[edge.a])
            };
            twice += p.x * q.y - q.x * p.y;
        }
        0.5 * twice
    }

    pub fn is_fully_tagged(&self) -> bool {
        self.boundary_edges().all(|e| self.boundary_tag[e].is_some())
    }

    /// Checks the structural invariants: simple CCW cells with positive area,
    /// consistent edge incidence, area balance, and tags only on boundary edges.
    pub fn validate(&self) -> Result<(), MeshError> {
        let mut total = 0.0;
        for c in 0..self.num_cells() {
            let pts = self.cell_points(c);
            let area = shoelace(&pts);
            if area < 0.0 {
                return Err(MeshError::Clockwise { cell: c });
            }
            if area <= 1e-300 {
                return Err(MeshError::Degenerate { cell: c, area });
            }
            if !is_simple(&pts) {
                return Err(MeshError::NotSimple { cell: c });
            }
            total += area;
        }
        for (e, edge) in self.edges.iter().enumerate() {
            let count = edge.cells.iter().flatten().count();
            if count == 0 {
                return Err(MeshError::BadEdgeIncidence(edge.a, edge.b));
            }
            if let [Some(c0), Some(c1)] = edge.cells {
                if self.edge_sign(c0, e) + self.edge_sign(c1, e) != 0 {
                    return Err(MeshError::BadEdgeIncidence(edge.a, edge.b));
                }
            }
            if !edge.is_boundary() && self.boundary_tag[e].is_some() {
                return Err(MeshError::TagOnInterior(edge.a, edge.b));
            }
        }
        let domain = self.domain_area();
        if (total - domain).abs() > 1e-10 * domain.abs().max(1e-300) {
            return Err(MeshError::AreaMismatch { cells: total, domain });
        }
        Ok(())
    }

    /// Like [`PolyMesh::validate`], and additionally requires every boundary edge to be tagged.
    pub fn validate_tagged(&self) -> Result<(), MeshError> {
        self.validate()?;
        for e in self.boundary_edges() {
            if self.boundary_tag[e].is_none() {
                let edge = &self.edges[e];
                return Err(MeshError::Untagged(edge.a, edge.b));
            }
        }
        Ok(())
    }

    /// Tags every boundary edge by evaluating `predicate` at its midpoint.
    pub fn tag_boundary(mut self, predicate: impl Fn(Vec2) -> BoundaryTag) -> Self {
        let boundary: Vec<usize> = self.boundary_edges().collect();
        for e in boundary {
            self.boundary_tag[e] = Some(predicate(self.edge_midpoint(e)));
        }
        self
    }

    pub fn cell_geometry(&self, cell: usize) -> Result<CellGeometry, MeshError> {
        compute_cell_geometry(&self.cell_points(cell)).map_err(|e| match e {
            MeshError::Degenerate { area, .. } => MeshError::Degenerate { cell, area },
            other => other,
        })
    }
}

fn diameter(pts: &[Vec2]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            d = d.max((pts[i] - pts[j]).norm());
        }
    }
    d
}

/// Shoelace area, fan-triangulation barycentre, vertex-pair diameter and
/// outward edge normals of a CCW polygon.
pub fn compute_cell_geometry(pts: &[Vec2]) -> Result<CellGeometry, MeshError> {
    let n = pts.len();
    let area = if n >= 3 { shoelace(pts) } else { 0.0 };
    let diameter = diameter(pts);
    if !(area > 1e-14 * diameter * diameter) {
        return Err(MeshError::Degenerate { cell: usize::MAX, area });
    }
    let mut centroid = Vec2::zeros();
    for i in 0..n {
        let p = pts[i];
        let q = pts[(i + 1) % n];
        let cross = p.x * q.y - q.x * p.y;
        centroid += (p + q) * cross;
    }
    centroid /= 6.0 * area;
    let mut edge_lengths = Vec::with_capacity(n);
    let mut outward_normals = Vec::with_capacity(n);
    for i in 0..n {
        let t = pts[(i + 1) % n] - pts[i];
        let len = t.norm();
        edge_lengths.push(len);
        outward_normals.push(Vec2::new(t.y, -t.x) / len);
    }
    let eta = edge_lengths.iter().cloned().fold(f64::INFINITY, f64::min) / diameter;
    Ok(CellGeometry { area, centroid, diameter, vertices: pts.to_vec(), edge_lengths, outward_normals, eta })
}

/// The Example-1 split of the unit square boundary: `x1 = 0` or `x2 = 0` is
/// Neumann, the rest Dirichlet.
pub fn example1_boundary(x: Vec2) -> BoundaryTag {
    if x.x.abs() < 1e-12 || x.y.abs() < 1e-12 {
        BoundaryTag::Neumann
    } else {
        BoundaryTag::Dirichlet
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn hexagon() -> Vec<Vec2> {
        (0..6)
            .map(|i| {
                let t = std::f64::consts::PI / 3.0 * i as f64;
                Vec2::new(t.cos(), t.sin())
            })
            .collect()
    }

    #[test]
    fn geometry_of_unit_square() {
        let g = compute_cell_geometry(&[
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        ])
        .unwrap();
        assert_relative_eq!(g.area, 1.0);
        assert_relative_eq!(g.centroid, Vec2::new(0.5, 0.5), epsilon = 1e-15);
        assert_relative_eq!(g.diameter, 2f64.sqrt());
        assert_relative_eq!(g.outward_normals[0], Vec2::new(0.0, -1.0));
    }

    #[test]
    fn geometry_of_triangle() {
        let g = compute_cell_geometry(&[Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)])
            .unwrap();
        assert_relative_eq!(g.area, 0.5);
        assert_relative_eq!(g.centroid, Vec2::new(1.0 / 3.0, 1.0 / 3.0), epsilon = 1e-15);
    }

    #[test]
    fn geometry_of_regular_hexagon() {
        let g = compute_cell_geometry(&hexagon()).unwrap();
        assert_relative_eq!(g.diameter, 2.0, epsilon = 1e-15);
        assert_relative_eq!(g.area, 3.0 * 3f64.sqrt() / 2.0, epsilon = 1e-14);
        assert!(g.centroid.norm() < 1e-15);
    }

    #[test]
    fn degenerate_cell_rejected() {
        let r = compute_cell_geometry(&[Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(2.0, 0.0)]);
        assert!(matches!(r, Err(MeshError::Degenerate { .. })));
    }

    #[test]
    fn normals_close_around_every_cell() {
        let mesh = distort_quad(&build_structured_quad(5), 0.05, 3).unwrap();
        for c in 0..mesh.num_cells() {
            let g = mesh.cell_geometry(c).unwrap();
            let mut s = Vec2::zeros();
            let mut perimeter = 0.0;
            for (l, n) in g.edge_lengths.iter().zip(&g.outward_normals) {
                s += n * *l;
                perimeter += l;
            }
            assert!(s.norm() <= 1e-12 * perimeter);
        }
    }

    #[test]
    fn outward_sign_matches_global_normal() {
        let mesh = build_structured_quad(3);
        for c in 0..mesh.num_cells() {
            let g = mesh.cell_geometry(c).unwrap();
            for (i, ce) in mesh.cell_edges[c].iter().enumerate() {
                let n = mesh.edge_normal(ce.edge) * ce.sign as f64;
                assert_relative_eq!(n, g.outward_normals[i], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn example1_tagging_on_two_by_two() {
        let mesh = build_structured_quad(2).tag_boundary(example1_boundary);
        let tags: Vec<_> = mesh.boundary_edges().map(|e| mesh.boundary_tag[e].unwrap()).collect();
        assert_eq!(tags.len(), 8);
        assert_eq!(tags.iter().filter(|t| **t == BoundaryTag::Neumann).count(), 4);
        assert_eq!(tags.iter().filter(|t| **t == BoundaryTag::Dirichlet).count(), 4);
        mesh.validate_tagged().unwrap();
    }

    #[test]
    fn single_cell_gets_all_four_tags() {
        let mesh = build_structured_quad(1).tag_boundary(|_| BoundaryTag::Dirichlet);
        assert_eq!(mesh.boundary_tag.iter().flatten().count(), 4);
        assert!(mesh.is_fully_tagged());
    }

    #[test]
    fn untagged_boundary_fails_tagged_validation() {
        let mesh = build_structured_quad(2);
        assert!(mesh.validate().is_ok());
        assert!(matches!(mesh.validate_tagged(), Err(MeshError::Untagged(..))));
    }

    #[test]
    fn clockwise_cell_rejected() {
        let v = vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)];
        let mesh = PolyMesh::new(v, vec![vec![0, 2, 1]]).unwrap();
        assert!(matches!(mesh.validate(), Err(MeshError::Clockwise { .. })));
    }

    #[test]
    fn self_intersecting_cell_rejected() {
        let v = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(2.0, 0.0),
            Vec2::new(2.0, 1.0),
            Vec2::new(1.0, -1.0),
            Vec2::new(0.0, 1.0),
        ];
        assert!(!is_simple(&v));
    }
}
