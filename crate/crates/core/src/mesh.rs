//! Structured triangulations of the unit square and P1/P2 dof numbering.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::{Error, Result};

/// Boundary classification of a vertex or an edge.
///
/// `DirichletU` covers `x = 0` and `x = 1` (including the four corners),
/// `NeumannU` covers the remaining points of `y = 0` and `y = 1`. Both
/// boundary tags imply homogeneous Dirichlet data for `p` and `T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    Interior,
    DirichletU,
    NeumannU,
}

impl BoundaryTag {
    pub fn on_boundary(self) -> bool {
        self != BoundaryTag::Interior
    }

    fn label(self) -> &'static str {
        match self {
            BoundaryTag::Interior => "interior",
            BoundaryTag::DirichletU => "dirichlet_u",
            BoundaryTag::NeumannU => "neumann_u",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub vertices: [usize; 2],
}

/// Uniform triangulation of `[0,1]^2` with `n` cells per side, each cell split
/// along its lower-left to upper-right diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub n: usize,
    pub vertices: Vec<[f64; 2]>,
    /// Counterclockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    pub edges: Vec<Edge>,
    /// Local edge `k` of a triangle joins local vertices `k` and `(k + 1) % 3`.
    pub triangle_edges: Vec<[usize; 3]>,
    pub vertex_tags: Vec<BoundaryTag>,
    pub edge_tags: Vec<BoundaryTag>,
}

impl Mesh {
    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn edge_midpoint(&self, e: usize) -> [f64; 2] {
        let [a, b] = self.edges[e].vertices;
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]
    }

    pub fn triangle_coords(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_coords(t);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    /// Coordinates of the six P2 nodes of triangle `t` in local order
    /// (three vertices, then midpoints of local edges 0, 1, 2).
    pub fn p2_node_coords(&self, t: usize) -> [[f64; 2]; 6] {
        let v = self.triangle_coords(t);
        let e = self.triangle_edges[t];
        [
            v[0],
            v[1],
            v[2],
            self.edge_midpoint(e[0]),
            self.edge_midpoint(e[1]),
            self.edge_midpoint(e[2]),
        ]
    }

    /// Plain-text dump for debugging: `v x y tag` and `t i j k` lines.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (v, tag) in self.vertices.iter().zip(&self.vertex_tags) {
            let _ = writeln!(out, "v {} {} {}", v[0], v[1], tag.label());
        }
        for t in &self.triangles {
            let _ = writeln!(out, "t {} {} {}", t[0], t[1], t[2]);
        }
        out
    }
}

/// Builds the uniform mesh with `n` subdivisions per side and tags its boundary.
pub fn build_uniform_mesh(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "mesh needs at least one subdivision per side".into(),
        ));
    }
    let np = n + 1;
    let vid = |i: usize, j: usize| j * np + i;
    let mut vertices = Vec::with_capacity(np * np);
    for j in 0..np {
        for i in 0..np {
            vertices.push([i as f64 / n as f64, j as f64 / n as f64]);
        }
    }

    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (v00, v10, v01, v11) = (vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1));
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }

    let mut edges = Vec::with_capacity(3 * n * n + 2 * n);
    let mut lookup: HashMap<(usize, usize), usize> = HashMap::with_capacity(3 * n * n + 2 * n);
    let mut triangle_edges = Vec::with_capacity(triangles.len());
    for tri in &triangles {
        let mut local = [0usize; 3];
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let key = (a.min(b), a.max(b));
            local[k] = *lookup.entry(key).or_insert_with(|| {
                edges.push(Edge { vertices: [key.0, key.1] });
                edges.len() - 1
            });
        }
        triangle_edges.push(local);
    }

    let mut mesh = Mesh {
        n,
        vertices,
        triangles,
        edges,
        triangle_edges,
        vertex_tags: Vec::new(),
        edge_tags: Vec::new(),
    };
    classify_boundary(&mut mesh);
    Ok(mesh)
}

fn on_line(v: f64) -> bool {
    v == 0.0 || v == 1.0
}

fn classify_point(p: [f64; 2]) -> BoundaryTag {
    if on_line(p[0]) {
        BoundaryTag::DirichletU
    } else if on_line(p[1]) {
        BoundaryTag::NeumannU
    } else {
        BoundaryTag::Interior
    }
}

/// Tags vertices and edges. Corners go to `DirichletU`; an edge is a boundary
/// edge only if both endpoints lie on the same side of the square.
pub fn classify_boundary(mesh: &mut Mesh) {
    mesh.vertex_tags = mesh.vertices.iter().map(|&p| classify_point(p)).collect();
    mesh.edge_tags = mesh
        .edges
        .iter()
        .map(|e| {
            let (a, b) = (mesh.vertices[e.vertices[0]], mesh.vertices[e.vertices[1]]);
            if on_line(a[0]) && a[0] == b[0] {
                BoundaryTag::DirichletU
            } else if on_line(a[1]) && a[1] == b[1] {
                BoundaryTag::NeumannU
            } else {
                BoundaryTag::Interior
            }
        })
        .collect();
}

/// Which unknown a constrained-dof set refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    U,
    Xi,
    P,
    T,
}

/// Global numbering of P1 and P2 scalar dofs and the Dirichlet constraints of
/// each field.
///
/// P1 dofs coincide with vertex indices. P2 dofs are vertices first, then edge
/// midpoints (`num_vertices + edge`). Vector fields interleave components:
/// dof `2 * node + component`.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    pub num_vertices: usize,
    pub num_edges: usize,
    /// Per-triangle local-to-global P1 numbering.
    pub p1_cells: Vec<[usize; 3]>,
    /// Per-triangle local-to-global P2 numbering.
    pub p2_cells: Vec<[usize; 6]>,
    /// Constrained flags on the vector-P2 dofs of `u`.
    pub u_constrained: Vec<bool>,
    /// Constrained flags on the P1 dofs shared by `p` and `T`.
    pub pt_constrained: Vec<bool>,
}

impl DofMap {
    pub fn num_p1(&self) -> usize {
        self.num_vertices
    }

    pub fn num_p2(&self) -> usize {
        self.num_vertices + self.num_edges
    }

    pub fn num_u(&self) -> usize {
        2 * self.num_p2()
    }

    pub fn vector_dof(node: usize, component: usize) -> usize {
        2 * node + component
    }

    /// Constrained flags for `field`; `xi` carries no constraints.
    pub fn constrained(&self, field: Field) -> Vec<bool> {
        match field {
            Field::U => self.u_constrained.clone(),
            Field::Xi => vec![false; self.num_p1()],
            Field::P | Field::T => self.pt_constrained.clone(),
        }
    }

    pub fn constrained_indices(&self, field: Field) -> Vec<usize> {
        self.constrained(field)
            .iter()
            .enumerate()
            .filter_map(|(i, &c)| c.then_some(i))
            .collect()
    }

    pub fn free_indices(&self, field: Field) -> Vec<usize> {
        self.constrained(field)
            .iter()
            .enumerate()
            .filter_map(|(i, &c)| (!c).then_some(i))
            .collect()
    }

    /// Coordinates of every P2 node in global order.
    pub fn p2_node_coords(&self, mesh: &Mesh) -> Vec<[f64; 2]> {
        let mut out = mesh.vertices.clone();
        out.extend((0..mesh.num_edges()).map(|e| mesh.edge_midpoint(e)));
        out
    }
}

pub fn build_dof_maps(mesh: &Mesh) -> DofMap {
    let nv = mesh.num_vertices();
    let ne = mesh.num_edges();
    let p1_cells = mesh.triangles.clone();
    let p2_cells = mesh
        .triangles
        .iter()
        .zip(&mesh.triangle_edges)
        .map(|(v, e)| [v[0], v[1], v[2], nv + e[0], nv + e[1], nv + e[2]])
        .collect();

    let mut u_constrained = vec![false; 2 * (nv + ne)];
    let node_tags = mesh.vertex_tags.iter().chain(&mesh.edge_tags);
    for (node, tag) in node_tags.enumerate() {
        if *tag == BoundaryTag::DirichletU {
            u_constrained[2 * node] = true;
            u_constrained[2 * node + 1] = true;
        }
    }
    let pt_constrained = mesh.vertex_tags.iter().map(|t| t.on_boundary()).collect();

    DofMap {
        num_vertices: nv,
        num_edges: ne,
        p1_cells,
        p2_cells,
        u_constrained,
        pt_constrained,
    }
}
