//! Reference-element shape functions, quadrature rules, and the mapping to
//! physical coordinates.
//!
//! Conventions: 1D bars use `xi` in `[-1, 1]`; triangles use area
//! coordinates `(xi, eta)` with vertices (0,0), (1,0), (0,1);
//! quadrilaterals use `(xi, eta)` in `[-1, 1]^2` with counterclockwise
//! corners starting at `(-1, -1)`. Eight-node quadrilaterals are serendipity
//! elements with midside nodes 4..7 between corner pairs (0,1), (1,2),
//! (2,3), (3,0).

use crate::mesh::ElementKind;

/// One quadrature point of the reference element.
#[derive(Clone, Copy, Debug)]
pub struct QuadPoint {
    pub xi: [f64; 2],
    pub weight: f64,
}

const GAUSS_2: [f64; 2] = [-0.577_350_269_189_625_8, 0.577_350_269_189_625_8];
const GAUSS_3: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
const GAUSS_3_W: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];

/// Volume quadrature rule for stiffness, internal forces, and strain
/// histories. Quadratic bars deliberately use two Gauss points (exact for
/// their stiffness); the consistent mass gets its own richer rule from
/// [`mass_quadrature`].
pub fn quadrature(kind: ElementKind) -> Vec<QuadPoint> {
    match kind {
        ElementKind::Bar2 | ElementKind::Bar3 => GAUSS_2
            .iter()
            .map(|&x| QuadPoint {
                xi: [x, 0.0],
                weight: 1.0,
            })
            .collect(),
        ElementKind::Tri3 => vec![QuadPoint {
            xi: [1.0 / 3.0, 1.0 / 3.0],
            weight: 0.5,
        }],
        ElementKind::Quad4 => {
            let mut pts = Vec::with_capacity(4);
            for &x in &GAUSS_2 {
                for &y in &GAUSS_2 {
                    pts.push(QuadPoint {
                        xi: [x, y],
                        weight: 1.0,
                    });
                }
            }
            pts
        }
        ElementKind::Quad8 => {
            let mut pts = Vec::with_capacity(9);
            for (i, &x) in GAUSS_3.iter().enumerate() {
                for (j, &y) in GAUSS_3.iter().enumerate() {
                    pts.push(QuadPoint {
                        xi: [x, y],
                        weight: GAUSS_3_W[i] * GAUSS_3_W[j],
                    });
                }
            }
            pts
        }
    }
}

/// Quadrature for the consistent mass matrix: exact for products of two
/// shape functions on undistorted elements. Quadratic bars and linear
/// triangles need richer rules than the volume rule here, otherwise the
/// assembled mass turns near-singular and the initial-acceleration solve
/// amplifies point loads into garbage.
pub fn mass_quadrature(kind: ElementKind) -> Vec<QuadPoint> {
    match kind {
        ElementKind::Bar3 => GAUSS_3
            .iter()
            .zip(GAUSS_3_W.iter())
            .map(|(&x, &w)| QuadPoint {
                xi: [x, 0.0],
                weight: w,
            })
            .collect(),
        ElementKind::Tri3 => {
            // Interior three-point rule, exact through quadratics.
            [
                [1.0 / 6.0, 1.0 / 6.0],
                [2.0 / 3.0, 1.0 / 6.0],
                [1.0 / 6.0, 2.0 / 3.0],
            ]
            .iter()
            .map(|&xi| QuadPoint {
                xi,
                weight: 1.0 / 6.0,
            })
            .collect()
        }
        other => quadrature(other),
    }
}

/// Gauss rule on a boundary edge (line) of a 2D element: two points for
/// straight two-node edges, three for quadratic three-node edges.
pub fn edge_quadrature(nodes_per_edge: usize) -> Vec<(f64, f64)> {
    match nodes_per_edge {
        2 => GAUSS_2.iter().map(|&x| (x, 1.0)).collect(),
        3 => GAUSS_3
            .iter()
            .zip(GAUSS_3_W.iter())
            .map(|(&x, &w)| (x, w))
            .collect(),
        n => panic!("unsupported edge arity {n}"),
    }
}

/// Shape functions of a (possibly quadratic) edge at line coordinate `xi`,
/// in (corner, corner[, mid]) node order, plus their derivatives.
pub fn edge_shape(nodes_per_edge: usize, xi: f64) -> (Vec<f64>, Vec<f64>) {
    match nodes_per_edge {
        2 => (
            vec![0.5 * (1.0 - xi), 0.5 * (1.0 + xi)],
            vec![-0.5, 0.5],
        ),
        3 => (
            vec![
                0.5 * xi * (xi - 1.0),
                0.5 * xi * (xi + 1.0),
                1.0 - xi * xi,
            ],
            vec![xi - 0.5, xi + 0.5, -2.0 * xi],
        ),
        n => panic!("unsupported edge arity {n}"),
    }
}

/// Shape function values and reference-coordinate gradients at `xi`.
pub fn shape(kind: ElementKind, xi: [f64; 2]) -> (Vec<f64>, Vec<[f64; 2]>) {
    let (x, y) = (xi[0], xi[1]);
    match kind {
        ElementKind::Bar2 => (
            vec![0.5 * (1.0 - x), 0.5 * (1.0 + x)],
            vec![[-0.5, 0.0], [0.5, 0.0]],
        ),
        ElementKind::Bar3 => (
            vec![
                0.5 * x * (x - 1.0),
                0.5 * x * (x + 1.0),
                1.0 - x * x,
            ],
            vec![[x - 0.5, 0.0], [x + 0.5, 0.0], [-2.0 * x, 0.0]],
        ),
        ElementKind::Tri3 => (
            vec![1.0 - x - y, x, y],
            vec![[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]],
        ),
        ElementKind::Quad4 => {
            let xs = [-1.0, 1.0, 1.0, -1.0];
            let ys = [-1.0, -1.0, 1.0, 1.0];
            let mut n = Vec::with_capacity(4);
            let mut g = Vec::with_capacity(4);
            for i in 0..4 {
                n.push(0.25 * (1.0 + xs[i] * x) * (1.0 + ys[i] * y));
                g.push([
                    0.25 * xs[i] * (1.0 + ys[i] * y),
                    0.25 * ys[i] * (1.0 + xs[i] * x),
                ]);
            }
            (n, g)
        }
        ElementKind::Quad8 => {
            let xs = [-1.0, 1.0, 1.0, -1.0];
            let ys = [-1.0, -1.0, 1.0, 1.0];
            let mut n = vec![0.0; 8];
            let mut g = vec![[0.0; 2]; 8];
            for i in 0..4 {
                let (xi_i, et_i) = (xs[i], ys[i]);
                n[i] = 0.25 * (1.0 + xi_i * x) * (1.0 + et_i * y) * (xi_i * x + et_i * y - 1.0);
                g[i] = [
                    0.25 * xi_i * (1.0 + et_i * y) * (2.0 * xi_i * x + et_i * y),
                    0.25 * et_i * (1.0 + xi_i * x) * (xi_i * x + 2.0 * et_i * y),
                ];
            }
            // Midsides 4 and 6: xi_i = 0 edges (bottom, top).
            for (idx, et_i) in [(4, -1.0), (6, 1.0)] {
                n[idx] = 0.5 * (1.0 - x * x) * (1.0 + et_i * y);
                g[idx] = [-x * (1.0 + et_i * y), 0.5 * (1.0 - x * x) * et_i];
            }
            // Midsides 5 and 7: eta_i = 0 edges (right, left).
            for (idx, xi_i) in [(5, 1.0), (7, -1.0)] {
                n[idx] = 0.5 * (1.0 + xi_i * x) * (1.0 - y * y);
                g[idx] = [0.5 * xi_i * (1.0 - y * y), -(1.0 + xi_i * x) * y];
            }
            (n, g)
        }
    }
}

/// Shape data mapped to one physical element at one quadrature point.
#[derive(Clone, Debug)]
pub struct MappedShape {
    /// Shape function values.
    pub n: Vec<f64>,
    /// Physical-coordinate gradients dN/dx (second slot unused in 1D).
    pub grad: Vec<[f64; 2]>,
    /// Jacobian determinant times the quadrature weight (length/area
    /// measure; the cross-section multiplier is applied by the assembler).
    pub jxw: f64,
}

/// Map the reference shape data onto the element with the given node
/// coordinates. Returns `None` when the Jacobian determinant is not strictly
/// positive (inverted or degenerate geometry).
pub fn map_shape(
    kind: ElementKind,
    coords: &[[f64; 2]],
    qp: &QuadPoint,
) -> Option<MappedShape> {
    let (n, gref) = shape(kind, qp.xi);
    debug_assert_eq!(coords.len(), n.len());
    match kind {
        ElementKind::Bar2 | ElementKind::Bar3 => {
            // 1D map: dx/dxi.
            let j: f64 = gref
                .iter()
                .zip(coords)
                .map(|(g, c)| g[0] * c[0])
                .sum();
            if !(j > 0.0) {
                return None;
            }
            let grad = gref.iter().map(|g| [g[0] / j, 0.0]).collect();
            Some(MappedShape {
                n,
                grad,
                jxw: j * qp.weight,
            })
        }
        _ => {
            let mut jac = [[0.0_f64; 2]; 2];
            for (g, c) in gref.iter().zip(coords) {
                for a in 0..2 {
                    for b in 0..2 {
                        jac[a][b] += c[a] * g[b];
                    }
                }
            }
            let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
            if !(det > 0.0) {
                return None;
            }
            let inv = [
                [jac[1][1] / det, -jac[0][1] / det],
                [-jac[1][0] / det, jac[0][0] / det],
            ];
            // dN/dx_a = dN/dxi_b * dxi_b/dx_a; dxi/dx is the inverse
            // transpose acting from the right here.
            let grad = gref
                .iter()
                .map(|g| {
                    [
                        g[0] * inv[0][0] + g[1] * inv[1][0],
                        g[0] * inv[0][1] + g[1] * inv[1][1],
                    ]
                })
                .collect();
            Some(MappedShape {
                n,
                grad,
                jxw: det * qp.weight,
            })
        }
    }
}
