//! Reference-triangle Lagrange bases, affine maps and quadrature.
//!
//! The reference triangle has vertices `(0,0)`, `(1,0)`, `(0,1)`. P2 nodes are
//! the three vertices followed by the midpoints of edges `(0,1)`, `(1,2)`,
//! `(2,0)`, matching [`crate::mesh::Mesh::p2_node_coords`].

use crate::{Error, Result};

pub type Point = [f64; 2];

/// Values and reference gradients of the three linear shape functions.
pub fn shape_p1(p: Point) -> ([f64; 3], [[f64; 2]; 3]) {
    let [x, y] = p;
    ([1.0 - x - y, x, y], [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
}

/// Values and reference gradients of the six quadratic shape functions.
pub fn shape_p2(p: Point) -> ([f64; 6], [[f64; 2]; 6]) {
    let [x, y] = p;
    let l = [1.0 - x - y, x, y];
    let dl = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
    let mut val = [0.0; 6];
    let mut grad = [[0.0; 2]; 6];
    for i in 0..3 {
        val[i] = l[i] * (2.0 * l[i] - 1.0);
        for d in 0..2 {
            grad[i][d] = (4.0 * l[i] - 1.0) * dl[i][d];
        }
    }
    for k in 0..3 {
        let (a, b) = (k, (k + 1) % 3);
        val[3 + k] = 4.0 * l[a] * l[b];
        for d in 0..2 {
            grad[3 + k][d] = 4.0 * (dl[a][d] * l[b] + l[a] * dl[b][d]);
        }
    }
    (val, grad)
}

/// Reference coordinates of the six P2 nodes.
pub const P2_NODES: [Point; 6] = [
    [0.0, 0.0],
    [1.0, 0.0],
    [0.0, 1.0],
    [0.5, 0.0],
    [0.5, 0.5],
    [0.0, 0.5],
];

/// Symmetric triangle quadrature with positive weights summing to 1/2.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub degree: usize,
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Point, f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }
}

fn push_orbit3(pts: &mut Vec<Point>, wts: &mut Vec<f64>, a: f64, w: f64) {
    let b = 1.0 - 2.0 * a;
    for p in [[a, a], [a, b], [b, a]] {
        pts.push(p);
        wts.push(w);
    }
}

fn push_orbit6(pts: &mut Vec<Point>, wts: &mut Vec<f64>, a: f64, b: f64, w: f64) {
    let c = 1.0 - a - b;
    for p in [[a, b], [b, a], [a, c], [c, a], [b, c], [c, b]] {
        pts.push(p);
        wts.push(w);
    }
}

/// Smallest built-in rule exact for polynomials of degree `min_degree`.
///
/// Available exact degrees are 1, 2, 4, 5 and 6; a request for degree 3 is
/// served by the degree-4 rule.
pub fn quadrature_rule(min_degree: usize) -> Result<QuadratureRule> {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let degree = match min_degree {
        0 | 1 => {
            points.push([1.0 / 3.0, 1.0 / 3.0]);
            weights.push(0.5);
            1
        }
        2 => {
            push_orbit3(&mut points, &mut weights, 1.0 / 6.0, 1.0 / 6.0);
            2
        }
        3 | 4 => {
            push_orbit3(&mut points, &mut weights, 0.445_948_490_915_964_886, 0.111_690_794_839_005_733);
            push_orbit3(&mut points, &mut weights, 0.091_576_213_509_770_743, 0.054_975_871_827_660_934);
            4
        }
        5 => {
            let s = 15f64.sqrt();
            points.push([1.0 / 3.0, 1.0 / 3.0]);
            weights.push(9.0 / 80.0);
            push_orbit3(&mut points, &mut weights, (6.0 - s) / 21.0, (155.0 - s) / 2400.0);
            push_orbit3(&mut points, &mut weights, (6.0 + s) / 21.0, (155.0 + s) / 2400.0);
            5
        }
        6 => {
            push_orbit3(&mut points, &mut weights, 0.249_286_745_170_910_421, 0.058_393_137_863_189_683);
            push_orbit3(&mut points, &mut weights, 0.063_089_014_491_502_228, 0.025_422_453_185_103_408);
            push_orbit6(
                &mut points,
                &mut weights,
                0.053_145_049_844_816_947,
                0.310_352_451_033_784_405,
                0.041_425_537_809_186_788,
            );
            6
        }
        d => {
            return Err(Error::InvalidArgument(format!(
                "no triangle quadrature rule of degree {d} (maximum 6)"
            )))
        }
    };
    Ok(QuadratureRule { degree, points, weights })
}

/// Three-point Gauss rule on `[0, 1]` (exact to degree 5).
pub fn gauss3_unit() -> [(f64, f64); 3] {
    let r = (0.6f64).sqrt();
    [
        (0.5 * (1.0 - r), 5.0 / 18.0),
        (0.5, 8.0 / 18.0),
        (0.5 * (1.0 + r), 5.0 / 18.0),
    ]
}

/// Affine map from the reference triangle onto a physical triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementMap {
    pub origin: Point,
    /// Columns are the physical images of the reference edge vectors.
    pub jacobian: [[f64; 2]; 2],
    pub det: f64,
    pub inv_transpose: [[f64; 2]; 2],
}

impl ElementMap {
    pub fn new(vertices: [Point; 3]) -> Result<Self> {
        let [a, b, c] = vertices;
        let jacobian = [[b[0] - a[0], c[0] - a[0]], [b[1] - a[1], c[1] - a[1]]];
        let det = jacobian[0][0] * jacobian[1][1] - jacobian[0][1] * jacobian[1][0];
        if !(det > 0.0) || !det.is_finite() {
            return Err(Error::DegenerateElement { det });
        }
        let inv_transpose = [
            [jacobian[1][1] / det, -jacobian[1][0] / det],
            [-jacobian[0][1] / det, jacobian[0][0] / det],
        ];
        Ok(Self { origin: a, jacobian, det, inv_transpose })
    }

    pub fn to_physical(&self, p: Point) -> Point {
        let j = &self.jacobian;
        [
            self.origin[0] + j[0][0] * p[0] + j[0][1] * p[1],
            self.origin[1] + j[1][0] * p[0] + j[1][1] * p[1],
        ]
    }

    /// Maps a reference gradient to physical coordinates.
    pub fn grad(&self, g: [f64; 2]) -> [f64; 2] {
        let m = &self.inv_transpose;
        [m[0][0] * g[0] + m[0][1] * g[1], m[1][0] * g[0] + m[1][1] * g[1]]
    }
}

pub fn element_map(vertices: [Point; 3]) -> Result<ElementMap> {
    ElementMap::new(vertices)
}
