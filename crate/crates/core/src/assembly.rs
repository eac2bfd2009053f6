//! Global matrices and load vectors.
//!
//! Vector-P2 dofs are interleaved, `2 * node + component`; the divergence
//! coupling `B` is `num_u x num_p1` with `B[(a,c), j] = int d_c phi_a psi_j`.

use crate::basis::{element_map, gauss3_unit, quadrature_rule, shape_p1, shape_p2, ElementMap};
use crate::mesh::{BoundaryTag, DofMap, Mesh};
use crate::model::{check_spd, Mat2, MaterialParams, ProblemData};
use crate::sparse::{compress, SparseMatrix, TripletBuffer};
use crate::{Error, Result};

/// Quadrature degree for load vectors; sources are smooth but not polynomial.
const LOAD_DEGREE: usize = 5;

/// Time-independent matrices of the four-field system, before elimination.
#[derive(Debug, Clone)]
pub struct FormSet {
    /// `2 mu (eps(u), eps(v))` on vector-P2.
    pub elasticity: SparseMatrix,
    /// `(div v, phi)`, vector-P2 rows by P1 columns.
    pub div_coupling: SparseMatrix,
    /// P1 mass matrix.
    pub mass: SparseMatrix,
    /// `(K grad p, grad q)`.
    pub diffusion_p: SparseMatrix,
    /// `(Theta grad T, grad S)`.
    pub diffusion_t: SparseMatrix,
}

/// Right-hand sides at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadSet {
    pub t: f64,
    /// `(f, v)` plus the traction integral over the Neumann sides.
    pub f_u: Vec<f64>,
    /// `(g, q)`.
    pub g_p: Vec<f64>,
    /// `(Hs, S)`.
    pub h_t: Vec<f64>,
}

fn element_maps(mesh: &Mesh) -> Result<Vec<ElementMap>> {
    (0..mesh.num_triangles()).map(|t| element_map(mesh.triangle_coords(t))).collect()
}

/// Local P2 elasticity matrix, 12x12 in interleaved local numbering.
pub fn element_elasticity(map: &ElementMap, mu: f64) -> [[f64; 12]; 12] {
    let rule = quadrature_rule(2).expect("degree 2 rule exists");
    let mut ke = [[0.0; 12]; 12];
    for (q, w) in rule.iter() {
        let (_, dref) = shape_p2(q);
        let g: Vec<[f64; 2]> = dref.iter().map(|&d| map.grad(d)).collect();
        let wq = w * map.det;
        for a in 0..6 {
            for b in 0..6 {
                let dot = g[a][0] * g[b][0] + g[a][1] * g[b][1];
                for c in 0..2 {
                    for d in 0..2 {
                        let delta = if c == d { dot } else { 0.0 };
                        ke[2 * a + c][2 * b + d] += wq * mu * (delta + g[a][d] * g[b][c]);
                    }
                }
            }
        }
    }
    ke
}

/// Local divergence coupling, 12x3.
pub fn element_div_coupling(map: &ElementMap) -> [[f64; 3]; 12] {
    let rule = quadrature_rule(2).expect("degree 2 rule exists");
    let mut be = [[0.0; 3]; 12];
    for (q, w) in rule.iter() {
        let (_, dref) = shape_p2(q);
        let (psi, _) = shape_p1(q);
        let wq = w * map.det;
        for a in 0..6 {
            let g = map.grad(dref[a]);
            for c in 0..2 {
                for j in 0..3 {
                    be[2 * a + c][j] += wq * g[c] * psi[j];
                }
            }
        }
    }
    be
}

/// Local P1 mass matrix.
pub fn element_mass(map: &ElementMap) -> [[f64; 3]; 3] {
    let area = 0.5 * map.det;
    let mut me = [[area / 12.0; 3]; 3];
    for (i, row) in me.iter_mut().enumerate() {
        row[i] = area / 6.0;
    }
    me
}

/// Local P1 stiffness with a constant coefficient matrix.
pub fn element_diffusion(map: &ElementMap, coeff: &Mat2) -> [[f64; 3]; 3] {
    let (_, dref) = shape_p1([0.0, 0.0]);
    let g: Vec<[f64; 2]> = dref.iter().map(|&d| map.grad(d)).collect();
    let area = 0.5 * map.det;
    let mut ke = [[0.0; 3]; 3];
    for i in 0..3 {
        let kg = [
            coeff[0][0] * g[i][0] + coeff[0][1] * g[i][1],
            coeff[1][0] * g[i][0] + coeff[1][1] * g[i][1],
        ];
        for j in 0..3 {
            ke[j][i] = area * (kg[0] * g[j][0] + kg[1] * g[j][1]);
        }
    }
    ke
}

fn local_u_dofs(cell: &[usize; 6]) -> [usize; 12] {
    let mut out = [0; 12];
    for a in 0..6 {
        out[2 * a] = DofMap::vector_dof(cell[a], 0);
        out[2 * a + 1] = DofMap::vector_dof(cell[a], 1);
    }
    out
}

pub fn assemble_elasticity(mesh: &Mesh, dofs: &DofMap, mu: f64) -> Result<SparseMatrix> {
    let maps = element_maps(mesh)?;
    let mut buf = TripletBuffer::with_capacity(144 * maps.len());
    for (map, cell) in maps.iter().zip(&dofs.p2_cells) {
        let ke = element_elasticity(map, mu);
        let ids = local_u_dofs(cell);
        for (i, row) in ke.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                buf.push(ids[i], ids[j], v);
            }
        }
    }
    compress(&buf, dofs.num_u(), dofs.num_u())
}

pub fn assemble_div_coupling(mesh: &Mesh, dofs: &DofMap) -> Result<SparseMatrix> {
    let maps = element_maps(mesh)?;
    let mut buf = TripletBuffer::with_capacity(36 * maps.len());
    for ((map, cell), pcell) in maps.iter().zip(&dofs.p2_cells).zip(&dofs.p1_cells) {
        let be = element_div_coupling(map);
        let ids = local_u_dofs(cell);
        for (i, row) in be.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                buf.push(ids[i], pcell[j], v);
            }
        }
    }
    compress(&buf, dofs.num_u(), dofs.num_p1())
}

fn assemble_p1(dofs: &DofMap, maps: &[ElementMap], element: impl Fn(&ElementMap) -> [[f64; 3]; 3]) -> Result<SparseMatrix> {
    let mut buf = TripletBuffer::with_capacity(9 * maps.len());
    for (map, cell) in maps.iter().zip(&dofs.p1_cells) {
        let me = element(map);
        for i in 0..3 {
            for j in 0..3 {
                buf.push(cell[i], cell[j], me[i][j]);
            }
        }
    }
    compress(&buf, dofs.num_p1(), dofs.num_p1())
}

pub fn assemble_mass_p1(mesh: &Mesh, dofs: &DofMap) -> Result<SparseMatrix> {
    assemble_p1(dofs, &element_maps(mesh)?, element_mass)
}

pub fn assemble_diffusion(mesh: &Mesh, dofs: &DofMap, coeff: &Mat2) -> Result<SparseMatrix> {
    if !check_spd(coeff) {
        return Err(Error::InvalidArgument(format!("diffusion coefficient {coeff:?} is not SPD")));
    }
    assemble_p1(dofs, &element_maps(mesh)?, |m| element_diffusion(m, coeff))
}

pub fn assemble_forms(mesh: &Mesh, dofs: &DofMap, params: &MaterialParams) -> Result<FormSet> {
    Ok(FormSet {
        elasticity: assemble_elasticity(mesh, dofs, params.mu)?,
        div_coupling: assemble_div_coupling(mesh, dofs)?,
        mass: assemble_mass_p1(mesh, dofs)?,
        diffusion_p: assemble_diffusion(mesh, dofs, &params.conductivity)?,
        diffusion_t: assemble_diffusion(mesh, dofs, &params.thermal_conductivity)?,
    })
}

/// Body, mass and heat loads at time `t`, including the traction integral
/// over the Neumann sides. Dirichlet rows are left untouched.
pub fn assemble_loads(mesh: &Mesh, dofs: &DofMap, data: &dyn ProblemData, t: f64) -> Result<LoadSet> {
    let rule = quadrature_rule(LOAD_DEGREE)?;
    let mut f_u = vec![0.0; dofs.num_u()];
    let mut g_p = vec![0.0; dofs.num_p1()];
    let mut h_t = vec![0.0; dofs.num_p1()];
    for tri in 0..mesh.num_triangles() {
        let map = element_map(mesh.triangle_coords(tri))?;
        let cell = &dofs.p2_cells[tri];
        let pcell = &dofs.p1_cells[tri];
        for (q, w) in rule.iter() {
            let [x, y] = map.to_physical(q);
            let (f, g, hs) = data.sources(x, y, t);
            let wq = w * map.det;
            let (phi, _) = shape_p2(q);
            for a in 0..6 {
                f_u[DofMap::vector_dof(cell[a], 0)] += wq * f[0] * phi[a];
                f_u[DofMap::vector_dof(cell[a], 1)] += wq * f[1] * phi[a];
            }
            let (psi, _) = shape_p1(q);
            for j in 0..3 {
                g_p[pcell[j]] += wq * g * psi[j];
                h_t[pcell[j]] += wq * hs * psi[j];
            }
        }
    }

    let nv = mesh.num_vertices();
    for (e, edge) in mesh.edges.iter().enumerate() {
        if mesh.edge_tags[e] != BoundaryTag::NeumannU {
            continue;
        }
        let [va, vb] = edge.vertices;
        let (a, b) = (mesh.vertices[va], mesh.vertices[vb]);
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        let normal = if a[1] < 0.5 { [0.0, -1.0] } else { [0.0, 1.0] };
        let nodes = [va, vb, nv + e];
        for (s, w) in gauss3_unit() {
            let x = a[0] + s * (b[0] - a[0]);
            let y = a[1] + s * (b[1] - a[1]);
            let gn = data.traction(x, y, t, normal)?;
            let trace = [(1.0 - s) * (1.0 - 2.0 * s), s * (2.0 * s - 1.0), 4.0 * s * (1.0 - s)];
            for (k, &node) in nodes.iter().enumerate() {
                for c in 0..2 {
                    f_u[DofMap::vector_dof(node, c)] += w * len * gn[c] * trace[k];
                }
            }
        }
    }
    Ok(LoadSet { t, f_u, g_p, h_t })
}

/// Symmetric elimination of constrained dofs: constrained rows and columns are
/// zeroed, the diagonal set to one, and known values lifted into the rhs.
pub fn apply_dirichlet(
    matrix: &SparseMatrix,
    rhs: &[f64],
    constrained: &[bool],
    values: &[f64],
) -> Result<(SparseMatrix, Vec<f64>)> {
    let n = matrix.nrows();
    if matrix.ncols() != n || rhs.len() != n || constrained.len() != n || values.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "elimination needs a square matrix and length-{n} vectors"
        )));
    }
    let mut out_rhs = rhs.to_vec();
    let mut buf = TripletBuffer::with_capacity(matrix.nnz());
    for (i, j, v) in matrix.triplets() {
        match (constrained[i], constrained[j]) {
            (false, false) => buf.push(i, j, v),
            (false, true) => out_rhs[i] -= v * values[j],
            _ => {}
        }
    }
    for i in 0..n {
        if constrained[i] {
            buf.push(i, i, 1.0);
            out_rhs[i] = values[i];
        }
    }
    Ok((compress(&buf, n, n)?, out_rhs))
}

/// Matrix part of [`apply_dirichlet`] for homogeneous data.
pub fn eliminate(matrix: &SparseMatrix, constrained: &[bool]) -> Result<SparseMatrix> {
    let n = matrix.nrows();
    Ok(apply_dirichlet(matrix, &vec![0.0; n], constrained, &vec![0.0; n])?.0)
}
