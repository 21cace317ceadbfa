//! Element-level and global assembly of the coupled motion and damage
//! systems.
//!
//! Discretization conventions:
//!
//! - Displacement dofs are interleaved, `dof = node * ncomp + component`.
//! - The momentum balance is divided by the reference density, so the
//!   consistent mass matrix carries no density factor, internal and external
//!   forces carry `1/rho`, and reported reactions multiply the converged
//!   residual back by `rho`.
//! - Everything is total Lagrangian: shape gradients live in the reference
//!   configuration and are precomputed once per mesh, and stresses are
//!   second Piola-Kirchhoff against Green-Lagrange strain.
//! - Dirichlet constraints are applied by symmetric elimination: constrained
//!   rows and columns are dropped and replaced by an identity diagonal. The
//!   displacement candidate is expected to already satisfy the constraint, so
//!   Newton updates keep it satisfied exactly.

use crate::element::{
    edge_quadrature, edge_shape, map_shape, mass_quadrature, quadrature, MappedShape, QuadPoint,
};
use crate::fractional::{FractionalError, G1Coefficients, StrainHistory};
use crate::material::{
    caputo_history_tail, driving_energy, second_piola, tangent_stiffness, Material, StressMode,
    StressState,
};
use crate::mesh::{Mesh, MeshError};
use crate::tensor::{
    build_fbar, build_sbar, green_lagrange, right_cauchy_green, stress_voigt,
    DeformationGradient, Dim, SymTensor2,
};
use nalgebra::DMatrix;
use sprs::{CsMat, TriMat};
use thiserror::Error;

/// Largest element dof count (quad8 with two components per node).
pub const MAX_EL_DOF: usize = 16;
/// Largest per-element node count.
pub const MAX_EL_NODES: usize = 8;
/// Systems up to this many dofs are assembled and factorized densely;
/// larger ones go through the sparse path.
pub const DENSE_LIMIT: usize = 200;

#[derive(Debug, Error)]
pub enum AssemblyError {
    /// The undeformed mesh itself is invalid; fatal at setup time.
    #[error("element {element} has a non-positive reference Jacobian")]
    BadReferenceGeometry { element: usize },
    /// The current displacement iterate inverted an element; the time
    /// stepper treats this as a recoverable step rejection.
    #[error("element {element} inverted (det F <= 0) at the current iterate")]
    InvertedElement { element: usize },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Fractional(#[from] FractionalError),
}

/// Reference-configuration shape data for every element and quadrature
/// point. Computed once per mesh; the total Lagrangian formulation never
/// remaps it.
pub fn precompute_shapes(mesh: &Mesh) -> Result<Vec<Vec<MappedShape>>, AssemblyError> {
    map_rule(mesh, &quadrature(mesh.kind))
}

/// Shape data on the mass-exact rule of
/// [`mass_quadrature`](crate::element::mass_quadrature); the consistent
/// mass and the inertia term integrate on this grid.
pub fn precompute_mass_shapes(mesh: &Mesh) -> Result<Vec<Vec<MappedShape>>, AssemblyError> {
    map_rule(mesh, &mass_quadrature(mesh.kind))
}

fn map_rule(mesh: &Mesh, qps: &[QuadPoint]) -> Result<Vec<Vec<MappedShape>>, AssemblyError> {
    mesh.elements
        .iter()
        .enumerate()
        .map(|(el, nodes)| {
            let coords: Vec<[f64; 2]> = nodes.iter().map(|&n| mesh.coords[n]).collect();
            qps.iter()
                .map(|qp| {
                    map_shape(mesh.kind, &coords, qp)
                        .ok_or(AssemblyError::BadReferenceGeometry { element: el })
                })
                .collect()
        })
        .collect()
}

/// Fresh zero-seeded strain histories, one per element and quadrature point.
pub fn initial_histories(
    mesh: &Mesh,
    dt: f64,
) -> Result<Vec<Vec<StrainHistory>>, FractionalError> {
    let n_qp = quadrature(mesh.kind).len();
    let dim = mesh.dim();
    (0..mesh.n_elements())
        .map(|_| (0..n_qp).map(|_| StrainHistory::new(dim, dt)).collect())
        .collect()
}

/// Precomputed history part of the Caputo sum for every quadrature point,
/// refreshed once per time step so stress evaluations inside Newton cost
/// O(1) in the history length.
pub fn compute_caputo_tails(
    histories: &[Vec<StrainHistory>],
    coeffs: &G1Coefficients,
) -> Vec<Vec<SymTensor2<f64>>> {
    histories
        .iter()
        .map(|row| row.iter().map(|h| caputo_history_tail(h, coeffs)).collect())
        .collect()
}

/// Undegraded driving energy (hyperelastic plus memory potential) for every
/// quadrature point at the committed mechanical state. The damage solve
/// reuses these values across all of its Newton iterations.
pub fn compute_driving_energies(
    mat: &Material,
    histories: &[Vec<StrainHistory>],
) -> Result<Vec<Vec<f64>>, FractionalError> {
    histories
        .iter()
        .map(|row| row.iter().map(|h| driving_energy(mat, h)).collect())
        .collect()
}

/// Newmark contribution to the motion residual. The candidate acceleration
/// is `a1 * u - predictor` with `predictor = a1 u_n + a2 v_n + a3 a_n`
/// evaluated at the last committed state.
pub struct Dynamics<'a> {
    pub a1: f64,
    pub predictor: &'a [f64],
    /// Shape table on the mass-exact rule (see [`precompute_mass_shapes`]).
    pub mass_shapes: &'a [Vec<MappedShape>],
}

/// Everything the motion assembly needs besides the displacement iterate.
pub struct MotionContext<'a> {
    pub mesh: &'a Mesh,
    pub material: &'a Material,
    pub mode: StressMode,
    pub shapes: &'a [Vec<MappedShape>],
    pub coeffs: &'a G1Coefficients,
    pub histories: &'a [Vec<StrainHistory>],
    /// Per-point Caputo history tails; `None` falls back to the full sum.
    pub tails: Option<&'a [Vec<SymTensor2<f64>>]>,
    /// Nodal damage field entering the degradation and gradient stresses.
    pub phi: &'a [f64],
    /// `None` runs quasi-static (no inertia term).
    pub dynamics: Option<Dynamics<'a>>,
}

/// Everything the damage assembly needs besides the two damage fields.
pub struct DamageContext<'a> {
    pub mesh: &'a Mesh,
    pub material: &'a Material,
    pub shapes: &'a [Vec<MappedShape>],
    /// Committed strain histories; the staggered scheme evaluates all
    /// mechanical quantities of the damage equation at the last committed
    /// displacement state.
    pub histories: &'a [Vec<StrainHistory>],
    /// Driving energies from [`compute_driving_energies`].
    pub psi: &'a [Vec<f64>],
    pub dt: f64,
}

/// One element's residual and Jacobian contribution in fixed-size storage
/// (only the first `ndof` rows/columns are meaningful).
#[derive(Debug)]
pub struct ElementSystem {
    pub ndof: usize,
    pub r: [f64; MAX_EL_DOF],
    pub k: [[f64; MAX_EL_DOF]; MAX_EL_DOF],
}

impl ElementSystem {
    fn zero(ndof: usize) -> Self {
        Self {
            ndof,
            r: [0.0; MAX_EL_DOF],
            k: [[0.0; MAX_EL_DOF]; MAX_EL_DOF],
        }
    }
}

fn displacement_gradient(
    nodes: &[usize],
    sh: &MappedShape,
    nc: usize,
    u: &[f64],
) -> [[f64; 2]; 2] {
    let mut grad = [[0.0; 2]; 2];
    for (i, &n) in nodes.iter().enumerate() {
        for a in 0..nc {
            let ua = u[n * nc + a];
            for b in 0..nc {
                grad[a][b] += ua * sh.grad[i][b];
            }
        }
    }
    grad
}

/// Residual and Jacobian of one element of the momentum balance at the
/// displacement iterate `u`.
pub fn motion_element(
    ctx: &MotionContext<'_>,
    el: usize,
    u: &[f64],
) -> Result<ElementSystem, AssemblyError> {
    let dim = ctx.mesh.dim();
    let nc = dim.coords();
    let nv = dim.voigt_len();
    let nodes = &ctx.mesh.elements[el];
    let nn = nodes.len();
    let mut es = ElementSystem::zero(nn * nc);
    let inv_rho = 1.0 / ctx.material.density;

    for (q, sh) in ctx.shapes[el].iter().enumerate() {
        let grad_u = displacement_gradient(nodes, sh, nc, u);
        let f = DeformationGradient::from_grad_u(dim, &grad_u);
        if f.det_in_plane() <= 0.0 {
            return Err(AssemblyError::InvertedElement { element: el });
        }
        let e = green_lagrange(dim, &grad_u);
        let history = &ctx.histories[el][q];
        // Backward-difference strain rate; only the viscous `theta_0 b Edot`
        // stress sees it, and the tangent treats it as frozen.
        let e_rate = (e - *history.last()).scale(1.0 / history.dt());

        let mut phi_qp = 0.0;
        let mut grad_phi = [0.0; 2];
        for (i, &n) in nodes.iter().enumerate() {
            let p = ctx.phi[n];
            phi_qp += sh.n[i] * p;
            grad_phi[0] += sh.grad[i][0] * p;
            grad_phi[1] += sh.grad[i][1] * p;
        }

        let st = StressState {
            strain: e,
            strain_rate: e_rate,
            damage: phi_qp,
            damage_grad: grad_phi,
            history,
            coeffs: ctx.coeffs,
            caputo_tail: ctx.tails.map(|t| t[el][q]),
        };
        let s = second_piola(ctx.material, ctx.mode, &st);
        let d = tangent_stiffness(ctx.material, ctx.mode, &st);
        let w = sh.jxw * ctx.mesh.section;
        let wr = w * inv_rho;

        match dim {
            Dim::One => {
                let f11 = 1.0 + grad_u[0][0];
                let s11 = s[0];
                let d11 = d.get(0, 0);
                for i in 0..nn {
                    let gi = sh.grad[i][0];
                    es.r[i] += wr * f11 * gi * s11;
                    for j in 0..nn {
                        let gj = sh.grad[j][0];
                        es.k[i][j] += wr * gj * gi * (s11 + f11 * d11 * f11);
                    }
                }
            }
            Dim::Two => {
                let fbar = build_fbar(&f);
                let sbar = build_sbar(&s);
                let s_plain = stress_voigt(&s);
                // Strain-variation columns (F-bar * B-hat) per node and
                // component, and their product with the tangent.
                let mut bf = [[[0.0; 3]; 2]; MAX_EL_NODES];
                let mut dbf = [[[0.0; 3]; 2]; MAX_EL_NODES];
                for i in 0..nn {
                    let g = sh.grad[i];
                    for c in 0..2 {
                        for p in 0..nv {
                            bf[i][c][p] = fbar[p][2 * c] * g[0] + fbar[p][2 * c + 1] * g[1];
                        }
                        for p in 0..nv {
                            let mut acc = 0.0;
                            for qv in 0..nv {
                                acc += d.get(p, qv) * bf[i][c][qv];
                            }
                            dbf[i][c][p] = acc;
                        }
                    }
                }
                for i in 0..nn {
                    for c in 0..2 {
                        let row = i * 2 + c;
                        let bfc = &bf[i][c];
                        es.r[row] += wr
                            * (bfc[0] * s_plain[0] + bfc[1] * s_plain[1] + bfc[2] * s_plain[2]);
                        for j in 0..nn {
                            let gj = sh.grad[j];
                            for ec in 0..2 {
                                let col = j * 2 + ec;
                                // Geometric part beta_i^T Sbar beta_j.
                                let mut kk = 0.0;
                                for r1 in 0..2 {
                                    for r2 in 0..2 {
                                        kk += sh.grad[i][r1]
                                            * sbar[2 * c + r1][2 * ec + r2]
                                            * gj[r2];
                                    }
                                }
                                // Material part bf_i^T D bf_j.
                                let dbj = &dbf[j][ec];
                                kk += bfc[0] * dbj[0] + bfc[1] * dbj[1] + bfc[2] * dbj[2];
                                es.k[row][col] += wr * kk;
                            }
                        }
                    }
                }
            }
        }

    }

    if let Some(dynamics) = &ctx.dynamics {
        // Density-free consistent mass against a1 u - predictor, integrated
        // on its own exact rule.
        for sh in &dynamics.mass_shapes[el] {
            let w = sh.jxw * ctx.mesh.section;
            for i in 0..nn {
                for j in 0..nn {
                    let mij = w * sh.n[i] * sh.n[j];
                    for a in 0..nc {
                        let dof_j = nodes[j] * nc + a;
                        es.r[i * nc + a] +=
                            mij * (dynamics.a1 * u[dof_j] - dynamics.predictor[dof_j]);
                        es.k[i * nc + a][j * nc + a] += dynamics.a1 * mij;
                    }
                }
            }
        }
    }
    Ok(es)
}

/// Residual and Jacobian of one element of the backward-Euler damage
/// equation at damage iterate `phi_new`, committed field `phi_old`.
pub fn damage_element(
    ctx: &DamageContext<'_>,
    el: usize,
    phi_new: &[f64],
    phi_old: &[f64],
) -> ElementSystem {
    let mat = ctx.material;
    let gc = mat.gc();
    let gamma = mat.layer_width;
    let theta0 = mat.reference_temperature;
    let dt = ctx.dt;
    let nodes = &ctx.mesh.elements[el];
    let nn = nodes.len();
    let mut es = ElementSystem::zero(nn);

    for (q, sh) in ctx.shapes[el].iter().enumerate() {
        let c_inv = right_cauchy_green(ctx.histories[el][q].last()).inverse();
        let mut phi_qp = 0.0;
        let mut phin_qp = 0.0;
        let mut grad_new = [0.0; 2];
        let mut grad_old = [0.0; 2];
        for (i, &n) in nodes.iter().enumerate() {
            phi_qp += sh.n[i] * phi_new[n];
            phin_qp += sh.n[i] * phi_old[n];
            grad_new[0] += sh.grad[i][0] * phi_new[n];
            grad_new[1] += sh.grad[i][1] * phi_new[n];
            grad_old[0] += sh.grad[i][0] * phi_old[n];
            grad_old[1] += sh.grad[i][1] * phi_old[n];
        }
        // Semi-implicit pieces: mobility and its phi-derivative are frozen
        // at the committed damage, so only the reaction, diffusion, and
        // degradation terms see the iterate.
        let fac = mat.inverse_mobility(phin_qp) / theta0;
        let mob_grad = mat.inverse_mobility_dphi(phin_qp) / theta0;
        let (_, gp, gpp) = mat.degradation_triple(phi_qp);
        let psi = ctx.psi[el][q];
        let w = sh.jxw * ctx.mesh.section;
        let ci_new = c_inv.apply(&grad_new);
        let ci_old = c_inv.apply(&grad_old);
        let source_old = grad_old[0] * ci_old[0] + grad_old[1] * ci_old[1];

        for i in 0..nn {
            let ni = sh.n[i];
            let gi = sh.grad[i];
            es.r[i] += w
                * (ni * (phi_qp - phin_qp)
                    + dt * (gc / gamma) * fac * ni * phi_qp
                    + dt * gc * gamma * fac * (gi[0] * ci_new[0] + gi[1] * ci_new[1])
                    + dt * gc * gamma * mob_grad * ni * source_old
                    + dt * fac * ni * gp * psi);
            for j in 0..nn {
                let nj = sh.n[j];
                let ci_gj = c_inv.apply(&sh.grad[j]);
                es.k[i][j] += w
                    * (ni * nj * (1.0 + dt * (gc / gamma) * fac)
                        + dt * gc * gamma * fac * (gi[0] * ci_gj[0] + gi[1] * ci_gj[1])
                        + dt * fac * gpp * psi * ni * nj);
            }
        }
    }
    es
}

/// Assembled matrix in whichever storage the problem size calls for.
pub enum SystemMatrix {
    Dense(DMatrix<f64>),
    Sparse(CsMat<f64>),
}

impl SystemMatrix {
    pub fn ndof(&self) -> usize {
        match self {
            SystemMatrix::Dense(a) => a.nrows(),
            SystemMatrix::Sparse(a) => a.rows(),
        }
    }
}

/// Residual and Jacobian ready for one Newton linear solve.
pub struct AssembledSystem {
    /// Residual with constrained entries zeroed.
    pub residual: Vec<f64>,
    /// Residual before constraint elimination; reactions come from here.
    pub raw_residual: Vec<f64>,
    pub matrix: SystemMatrix,
}

fn assemble_global(
    ndof: usize,
    n_elements: usize,
    fixed: &[bool],
    f_ext: Option<&[f64]>,
    dof_of: impl Fn(usize, usize) -> usize,
    mut element_fn: impl FnMut(usize) -> Result<ElementSystem, AssemblyError>,
) -> Result<AssembledSystem, AssemblyError> {
    let mut raw = vec![0.0; ndof];
    let matrix = if ndof <= DENSE_LIMIT {
        let mut a = DMatrix::zeros(ndof, ndof);
        for el in 0..n_elements {
            let es = element_fn(el)?;
            for lr in 0..es.ndof {
                let gr = dof_of(el, lr);
                raw[gr] += es.r[lr];
                if fixed[gr] {
                    continue;
                }
                for lc in 0..es.ndof {
                    let gc = dof_of(el, lc);
                    if !fixed[gc] {
                        a[(gr, gc)] += es.k[lr][lc];
                    }
                }
            }
        }
        for (d, &fix) in fixed.iter().enumerate() {
            if fix {
                a[(d, d)] = 1.0;
            }
        }
        SystemMatrix::Dense(a)
    } else {
        let mut tri = TriMat::new((ndof, ndof));
        for el in 0..n_elements {
            let es = element_fn(el)?;
            for lr in 0..es.ndof {
                let gr = dof_of(el, lr);
                raw[gr] += es.r[lr];
                if fixed[gr] {
                    continue;
                }
                for lc in 0..es.ndof {
                    let gc = dof_of(el, lc);
                    if !fixed[gc] {
                        tri.add_triplet(gr, gc, es.k[lr][lc]);
                    }
                }
            }
        }
        for (d, &fix) in fixed.iter().enumerate() {
            if fix {
                tri.add_triplet(d, d, 1.0);
            }
        }
        SystemMatrix::Sparse(tri.to_csr())
    };

    if let Some(f) = f_ext {
        for (r, &fv) in raw.iter_mut().zip(f) {
            *r -= fv;
        }
    }
    let mut residual = raw.clone();
    for (r, &fix) in residual.iter_mut().zip(fixed) {
        if fix {
            *r = 0.0;
        }
    }
    Ok(AssembledSystem {
        residual,
        raw_residual: raw,
        matrix,
    })
}

/// Assemble the full motion system at displacement iterate `u`.
pub fn assemble_motion_system(
    ctx: &MotionContext<'_>,
    u: &[f64],
    f_ext: &[f64],
    fixed: &[bool],
) -> Result<AssembledSystem, AssemblyError> {
    let nc = ctx.mesh.dim().coords();
    let mesh = ctx.mesh;
    assemble_global(
        mesh.n_nodes() * nc,
        mesh.n_elements(),
        fixed,
        Some(f_ext),
        |el, local| mesh.elements[el][local / nc] * nc + local % nc,
        |el| motion_element(ctx, el, u),
    )
}

/// Assemble the full damage system at damage iterate `phi_new`.
pub fn assemble_damage_system(
    ctx: &DamageContext<'_>,
    phi_new: &[f64],
    phi_old: &[f64],
) -> Result<AssembledSystem, AssemblyError> {
    let mesh = ctx.mesh;
    let fixed = vec![false; mesh.n_nodes()];
    assemble_global(
        mesh.n_nodes(),
        mesh.n_elements(),
        &fixed,
        None,
        |el, local| mesh.elements[el][local],
        |el| Ok(damage_element(ctx, el, phi_new, phi_old)),
    )
}

/// Assemble the density-free consistent mass matrix alone (used once to
/// recover the initial acceleration from the initial loads). `shapes` must
/// come from [`precompute_mass_shapes`].
pub fn assemble_mass(
    mesh: &Mesh,
    shapes: &[Vec<MappedShape>],
    fixed: &[bool],
) -> Result<SystemMatrix, AssemblyError> {
    let nc = mesh.dim().coords();
    let sys = assemble_global(
        mesh.n_nodes() * nc,
        mesh.n_elements(),
        fixed,
        None,
        |el, local| mesh.elements[el][local / nc] * nc + local % nc,
        |el| {
            let nodes = &mesh.elements[el];
            let nn = nodes.len();
            let mut es = ElementSystem::zero(nn * nc);
            for sh in &shapes[el] {
                let w = sh.jxw * mesh.section;
                for i in 0..nn {
                    for j in 0..nn {
                        let mij = w * sh.n[i] * sh.n[j];
                        for a in 0..nc {
                            es.k[i * nc + a][j * nc + a] += mij;
                        }
                    }
                }
            }
            Ok(es)
        },
    )?;
    Ok(sys.matrix)
}

/// Add a total point force, split equally over a node set, to the
/// density-scaled external force vector.
pub fn add_nodal_force(
    mesh: &Mesh,
    f: &mut [f64],
    set: &str,
    force: [f64; 2],
    density: f64,
) -> Result<(), AssemblyError> {
    let nodes = mesh.node_set(set)?;
    let nc = mesh.dim().coords();
    let share = 1.0 / (nodes.len() as f64 * density);
    for &n in nodes {
        for a in 0..nc {
            f[n * nc + a] += force[a] * share;
        }
    }
    Ok(())
}

/// Add a constant reference traction (force per reference area) integrated
/// over an edge set to the density-scaled external force vector. 2-D only;
/// 1-D meshes take point loads instead.
pub fn add_traction(
    mesh: &Mesh,
    f: &mut [f64],
    set: &str,
    traction: [f64; 2],
    density: f64,
) -> Result<(), AssemblyError> {
    let npe = mesh.kind.nodes_per_edge();
    if mesh.dim() != Dim::Two {
        return Err(AssemblyError::Mesh(MeshError::Inconsistent(
            "tractions require a 2-D mesh; use a point force in 1-D".into(),
        )));
    }
    let edges = mesh.edge_set(set)?;
    let quad = edge_quadrature(npe);
    let scale = mesh.section / density;
    for edge in edges {
        for &(xi, wq) in &quad {
            let (n, dn) = edge_shape(npe, xi);
            let mut tangent = [0.0; 2];
            for (k, &node) in edge.iter().enumerate() {
                tangent[0] += dn[k] * mesh.coords[node][0];
                tangent[1] += dn[k] * mesh.coords[node][1];
            }
            let jac = (tangent[0] * tangent[0] + tangent[1] * tangent[1]).sqrt();
            for (k, &node) in edge.iter().enumerate() {
                for a in 0..2 {
                    f[node * 2 + a] += n[k] * traction[a] * wq * jac * scale;
                }
            }
        }
    }
    Ok(())
}

/// Sum of reaction forces (physical units) over a node set along one
/// component, recovered from the unconstrained residual at convergence.
pub fn reaction_sum(
    mesh: &Mesh,
    raw_residual: &[f64],
    density: f64,
    set: &str,
    comp: usize,
) -> Result<f64, AssemblyError> {
    let nc = mesh.dim().coords();
    Ok(mesh
        .node_set(set)?
        .iter()
        .map(|&n| density * raw_residual[n * nc + comp])
        .sum())
}

/// Displacement gradient `d u_i / d X_j` at one quadrature point.
pub fn displacement_gradient_at(
    mesh: &Mesh,
    shapes: &[Vec<MappedShape>],
    el: usize,
    q: usize,
    u: &[f64],
) -> [[f64; 2]; 2] {
    displacement_gradient(&mesh.elements[el], &shapes[el][q], mesh.dim().coords(), u)
}

/// Green-Lagrange strain at one quadrature point of the displaced mesh.
pub fn strain_at(
    mesh: &Mesh,
    shapes: &[Vec<MappedShape>],
    el: usize,
    q: usize,
    u: &[f64],
) -> Result<SymTensor2<f64>, AssemblyError> {
    let dim = mesh.dim();
    let grad_u = displacement_gradient(&mesh.elements[el], &shapes[el][q], dim.coords(), u);
    let f = DeformationGradient::from_grad_u(dim, &grad_u);
    if f.det_in_plane() <= 0.0 {
        return Err(AssemblyError::InvertedElement { element: el });
    }
    Ok(green_lagrange(dim, &grad_u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::{Elasticity, MemoryForm, Plane};
    use crate::mesh::{rod_1d, rod_2d_strip, ElementKind};
    use approx::assert_relative_eq;
    use std::collections::BTreeMap;

    fn bar_material() -> Material {
        Material {
            density: 1.0,
            youngs_modulus: 2.0,
            poisson_ratio: 0.3,
            plane: Plane::Uniaxial,
            elasticity: Elasticity::LinearSpring,
            memory_modulus: 0.0,
            alpha: 0.5,
            ..Material::default()
        }
    }

    fn plane_material() -> Material {
        Material {
            density: 1.3,
            youngs_modulus: 5.0,
            poisson_ratio: 0.3,
            plane: Plane::Strain,
            elasticity: Elasticity::NeoHookean,
            memory_modulus: 0.8,
            memory_form: MemoryForm::Full,
            alpha: 0.4,
            ..Material::default()
        }
    }

    /// 3x3-node square patch of four quad4 elements on [0,1]^2.
    fn quad4_patch() -> Mesh {
        let mut coords = Vec::new();
        for j in 0..3 {
            for i in 0..3 {
                coords.push([i as f64 * 0.5, j as f64 * 0.5]);
            }
        }
        let n = |i: usize, j: usize| j * 3 + i;
        let mut elements = Vec::new();
        for j in 0..2 {
            for i in 0..2 {
                elements.push(vec![n(i, j), n(i + 1, j), n(i + 1, j + 1), n(i, j + 1)]);
            }
        }
        Mesh {
            kind: ElementKind::Quad4,
            section: 1.0,
            coords,
            elements,
            node_sets: BTreeMap::new(),
            edge_sets: BTreeMap::new(),
        }
    }

    fn motion_ctx_parts(
        mesh: &Mesh,
        dt: f64,
    ) -> (Vec<Vec<MappedShape>>, Vec<Vec<StrainHistory>>, G1Coefficients) {
        let shapes = precompute_shapes(mesh).unwrap();
        let histories = initial_histories(mesh, dt).unwrap();
        let coeffs = G1Coefficients::with_len(0.5, 4).unwrap();
        (shapes, histories, coeffs)
    }

    #[test]
    fn single_bar_element_internal_force_matches_hand_value() {
        // One linear spring bar, L = 1, A = 1, E_Y = 2: with tip displacement
        // 0.1 the Green-Lagrange strain is 0.105, S = 0.21, and the nodal
        // internal force is F11 * S = 1.1 * 0.21 = 0.231.
        let mesh = rod_1d(1, 1.0, 1.0);
        let mat = bar_material();
        let (shapes, histories, _) = motion_ctx_parts(&mesh, 0.01);
        let coeffs = G1Coefficients::with_len(mat.alpha, 4).unwrap();
        let ctx = MotionContext {
            mesh: &mesh,
            material: &mat,
            mode: StressMode::Partial,
            shapes: &shapes,
            coeffs: &coeffs,
            histories: &histories,
            tails: None,
            phi: &[0.0; 2],
            dynamics: None,
        };
        let es = motion_element(&ctx, 0, &[0.0, 0.1]).unwrap();
        assert_eq!(es.ndof, 2);
        assert_relative_eq!(es.r[1], 0.231, max_relative = 1e-13);
        assert_relative_eq!(es.r[0], -0.231, max_relative = 1e-13);
    }

    #[test]
    fn motion_jacobian_matches_finite_differences_of_residual() {
        // Full nonlinear check on a distorted quad4 patch with memory
        // stress, damage field, and inertia all active.
        let mesh = quad4_patch();
        let mat = plane_material();
        let shapes = precompute_shapes(&mesh).unwrap();
        let dt = 0.02;
        let mut histories = initial_histories(&mesh, dt).unwrap();
        for row in &mut histories {
            for h in row.iter_mut() {
                h.push(SymTensor2::from_voigt(Dim::Two, &[0.01, -0.004, 0.006]));
            }
        }
        let coeffs = G1Coefficients::with_len(mat.alpha, 8).unwrap();
        let tails = compute_caputo_tails(&histories, &coeffs);
        let ndof = mesh.n_nodes() * 2;
        let phi: Vec<f64> = (0..mesh.n_nodes()).map(|i| 0.03 * i as f64).collect();
        let u0: Vec<f64> = (0..ndof)
            .map(|i| 0.01 * ((i * 7 % 5) as f64 - 2.0))
            .collect();
        let predictor: Vec<f64> = (0..ndof).map(|i| 0.1 * (i as f64).sin()).collect();
        let mass_shapes = precompute_mass_shapes(&mesh).unwrap();
        let dynamics = Dynamics {
            a1: 4.0 / (dt * dt),
            predictor: &predictor,
            mass_shapes: &mass_shapes,
        };
        let ctx = MotionContext {
            mesh: &mesh,
            material: &mat,
            mode: StressMode::Partial,
            shapes: &shapes,
            coeffs: &coeffs,
            histories: &histories,
            tails: Some(&tails),
            phi: &phi,
            dynamics: Some(dynamics),
        };
        let fixed = vec![false; ndof];
        let f_ext = vec![0.0; ndof];
        let base = assemble_motion_system(&ctx, &u0, &f_ext, &fixed).unwrap();
        let a = match &base.matrix {
            SystemMatrix::Dense(a) => a.clone(),
            _ => panic!("expected a dense matrix at this size"),
        };
        let h = 1e-6;
        for dof in 0..ndof {
            let mut up = u0.clone();
            up[dof] += h;
            let mut um = u0.clone();
            um[dof] -= h;
            let rp = assemble_motion_system(&ctx, &up, &f_ext, &fixed).unwrap();
            let rm = assemble_motion_system(&ctx, &um, &f_ext, &fixed).unwrap();
            for row in 0..ndof {
                let fd = (rp.residual[row] - rm.residual[row]) / (2.0 * h);
                let scale = a[(row, dof)].abs().max(1e3);
                assert!(
                    (a[(row, dof)] - fd).abs() <= 2e-4 * scale,
                    "J[{row},{dof}] = {} vs FD {}",
                    a[(row, dof)],
                    fd
                );
            }
        }
    }

    #[test]
    fn uniform_strain_patch_has_zero_interior_residual() {
        // Linear displacement field => constant stress => the interior node
        // of the patch is in exact equilibrium.
        let mesh = quad4_patch();
        let mat = plane_material();
        let (shapes, histories, _) = motion_ctx_parts(&mesh, 0.01);
        let coeffs = G1Coefficients::with_len(mat.alpha, 4).unwrap();
        let ctx = MotionContext {
            mesh: &mesh,
            material: &mat,
            mode: StressMode::Partial,
            shapes: &shapes,
            coeffs: &coeffs,
            histories: &histories,
            tails: None,
            phi: &vec![0.0; mesh.n_nodes()],
            dynamics: None,
        };
        let grad = [[0.03, 0.01], [-0.02, 0.04]];
        let u: Vec<f64> = mesh
            .coords
            .iter()
            .flat_map(|x| {
                [
                    grad[0][0] * x[0] + grad[0][1] * x[1],
                    grad[1][0] * x[0] + grad[1][1] * x[1],
                ]
            })
            .collect();
        let fixed = vec![false; u.len()];
        let f_ext = vec![0.0; u.len()];
        let sys = assemble_motion_system(&ctx, &u, &f_ext, &fixed).unwrap();
        // Node 4 is the interior node of the 3x3 grid.
        let scale = sys.residual.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(scale > 0.0, "boundary nodes must carry the stress flux");
        assert!(sys.residual[8].abs() <= 1e-13 * scale);
        assert!(sys.residual[9].abs() <= 1e-13 * scale);
    }

    #[test]
    fn consistent_mass_row_sums_reproduce_total_volume() {
        // sum_ij M_ij per component = integral of 1 dV (density-free mass).
        let mesh = rod_2d_strip(3, 2, 0.2, 0.05, 0.01);
        let shapes = precompute_mass_shapes(&mesh).unwrap();
        let fixed = vec![false; mesh.n_nodes() * 2];
        let m = assemble_mass(&mesh, &shapes, &fixed).unwrap();
        let a = match m {
            SystemMatrix::Dense(a) => a,
            _ => panic!("expected dense mass at this size"),
        };
        let volume = 0.2 * 0.05 * 0.01;
        let mut per_comp = [0.0; 2];
        for r in 0..a.nrows() {
            for c in 0..a.ncols() {
                per_comp[r % 2] += a[(r, c)];
            }
        }
        assert_relative_eq!(per_comp[0], volume, max_relative = 1e-12);
        assert_relative_eq!(per_comp[1], volume, max_relative = 1e-12);
    }

    #[test]
    fn mass_rule_reproduces_textbook_element_masses() {
        // Quadratic bar of length h; global node numbering runs left, mid,
        // right, so M = (A h / 30) [[4, 2, -1], [2, 16, 2], [-1, 2, 4]].
        let (h, area) = (0.7, 3.0e-4);
        let mesh = crate::mesh::rod_1d_quadratic(1, h, area);
        let shapes = precompute_mass_shapes(&mesh).unwrap();
        let m = assemble_mass(&mesh, &shapes, &[false; 3]).unwrap();
        let a = match m {
            SystemMatrix::Dense(a) => a,
            _ => panic!("expected dense mass at this size"),
        };
        let pattern = [[4.0, 2.0, -1.0], [2.0, 16.0, 2.0], [-1.0, 2.0, 4.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(
                    a[(i, j)],
                    area * h / 30.0 * pattern[i][j],
                    max_relative = 1e-13,
                    epsilon = 1e-18
                );
            }
        }
        // Linear triangle of area A and thickness t:
        // M = (t A / 12) [[2, 1, 1], [1, 2, 1], [1, 1, 2]] per component.
        let tri = Mesh {
            kind: ElementKind::Tri3,
            section: 0.01,
            coords: vec![[0.0, 0.0], [0.4, 0.1], [0.1, 0.5]],
            elements: vec![vec![0, 1, 2]],
            node_sets: BTreeMap::new(),
            edge_sets: BTreeMap::new(),
        };
        let tri_area = 0.5 * (0.4 * 0.5 - 0.1 * 0.1);
        let shapes = precompute_mass_shapes(&tri).unwrap();
        let m = assemble_mass(&tri, &shapes, &[false; 6]).unwrap();
        let a = match m {
            SystemMatrix::Dense(a) => a,
            _ => panic!("expected dense mass at this size"),
        };
        for i in 0..3 {
            for j in 0..3 {
                let expect = 0.01 * tri_area / 12.0 * if i == j { 2.0 } else { 1.0 };
                for c in 0..2 {
                    assert_relative_eq!(
                        a[(2 * i + c, 2 * j + c)],
                        expect,
                        max_relative = 1e-13
                    );
                }
                assert_eq!(a[(2 * i, 2 * j + 1)], 0.0);
            }
        }
    }

    #[test]
    fn damage_jacobian_matches_finite_differences_of_residual() {
        let mesh = quad4_patch();
        let mat = Material {
            toughness: Some(0.7),
            layer_width: 0.06,
            mobility_scale: 0.4,
            mobility_exponent: 1.5,
            mobility_offset: 1e-4,
            ..plane_material()
        };
        let shapes = precompute_shapes(&mesh).unwrap();
        let dt = 0.05;
        let mut histories = initial_histories(&mesh, dt).unwrap();
        for row in &mut histories {
            for h in row.iter_mut() {
                h.push(SymTensor2::from_voigt(Dim::Two, &[0.03, -0.01, 0.02]));
            }
        }
        let psi = compute_driving_energies(&mat, &histories).unwrap();
        let ctx = DamageContext {
            mesh: &mesh,
            material: &mat,
            shapes: &shapes,
            histories: &histories,
            psi: &psi,
            dt,
        };
        let nn = mesh.n_nodes();
        let phi_old: Vec<f64> = (0..nn).map(|i| 0.05 + 0.02 * (i % 3) as f64).collect();
        let phi0: Vec<f64> = (0..nn).map(|i| 0.08 + 0.03 * ((i * 2) % 4) as f64).collect();
        let base = assemble_damage_system(&ctx, &phi0, &phi_old).unwrap();
        let a = match &base.matrix {
            SystemMatrix::Dense(a) => a.clone(),
            _ => panic!("expected dense damage matrix"),
        };
        // The matrix must be symmetric by construction.
        for r in 0..nn {
            for c in 0..nn {
                assert_relative_eq!(a[(r, c)], a[(c, r)], max_relative = 1e-12);
            }
        }
        let h = 1e-7;
        for dof in 0..nn {
            let mut pp = phi0.clone();
            pp[dof] += h;
            let mut pm = phi0.clone();
            pm[dof] -= h;
            let rp = assemble_damage_system(&ctx, &pp, &phi_old).unwrap();
            let rm = assemble_damage_system(&ctx, &pm, &phi_old).unwrap();
            for row in 0..nn {
                let fd = (rp.residual[row] - rm.residual[row]) / (2.0 * h);
                let scale = a[(row, dof)].abs().max(1e-6);
                assert!(
                    (a[(row, dof)] - fd).abs() <= 1e-5 * scale,
                    "J[{row},{dof}] = {} vs FD {}",
                    a[(row, dof)],
                    fd
                );
            }
        }
    }

    #[test]
    fn traction_resultant_matches_edge_area() {
        // Uniform traction on the right edge of a strip: the assembled nodal
        // forces must sum to traction * height * thickness / density.
        let mesh = rod_2d_strip(4, 3, 0.4, 0.12, 0.02);
        let density = 2.5;
        let mut f = vec![0.0; mesh.n_nodes() * 2];
        add_traction(&mesh, &mut f, "right", [3.0e5, 4.0e4], density).unwrap();
        let total: [f64; 2] = [
            f.iter().step_by(2).sum::<f64>(),
            f.iter().skip(1).step_by(2).sum(),
        ];
        let area = 0.12 * 0.02;
        assert_relative_eq!(total[0], 3.0e5 * area / density, max_relative = 1e-12);
        assert_relative_eq!(total[1], 4.0e4 * area / density, max_relative = 1e-12);
        // Only right-edge nodes are loaded.
        let right: std::collections::BTreeSet<_> =
            mesh.node_set("right").unwrap().iter().copied().collect();
        for (n, chunk) in f.chunks(2).enumerate() {
            if !right.contains(&n) {
                assert_eq!(chunk, [0.0, 0.0]);
            }
        }
    }

    #[test]
    fn point_force_splits_evenly_across_the_set() {
        let mesh = rod_1d(4, 2.0, 1.0);
        let mut f = vec![0.0; mesh.n_nodes()];
        add_nodal_force(&mesh, &mut f, "right", [10.0, 0.0], 4.0).unwrap();
        assert_relative_eq!(f[mesh.n_nodes() - 1], 2.5, max_relative = 1e-14);
        assert_relative_eq!(f.iter().sum::<f64>(), 2.5, max_relative = 1e-14);
    }

    #[test]
    fn dirichlet_elimination_keeps_matrix_symmetric_with_unit_diagonal() {
        let mesh = rod_1d(3, 1.0, 1.0);
        let mat = bar_material();
        let (shapes, histories, _) = motion_ctx_parts(&mesh, 0.01);
        let coeffs = G1Coefficients::with_len(mat.alpha, 4).unwrap();
        let ctx = MotionContext {
            mesh: &mesh,
            material: &mat,
            mode: StressMode::Partial,
            shapes: &shapes,
            coeffs: &coeffs,
            histories: &histories,
            tails: None,
            phi: &[0.0; 4],
            dynamics: None,
        };
        let mut fixed = vec![false; 4];
        fixed[0] = true;
        let u = [0.0, 0.02, 0.05, 0.09];
        let f_ext = vec![0.0; 4];
        let sys = assemble_motion_system(&ctx, &u, &f_ext, &fixed).unwrap();
        let a = match sys.matrix {
            SystemMatrix::Dense(a) => a,
            _ => panic!("expected dense"),
        };
        assert_relative_eq!(a[(0, 0)], 1.0);
        assert_eq!(a[(0, 1)], 0.0);
        assert_eq!(a[(1, 0)], 0.0);
        assert_eq!(sys.residual[0], 0.0);
        // The raw residual keeps the clamped row for reaction recovery, and
        // static equilibrium is not yet satisfied at this arbitrary state.
        assert!(sys.raw_residual[0] != 0.0);
    }

    #[test]
    fn inverted_configuration_is_reported_as_recoverable() {
        let mesh = rod_1d(1, 1.0, 1.0);
        let mat = bar_material();
        let (shapes, histories, _) = motion_ctx_parts(&mesh, 0.01);
        let coeffs = G1Coefficients::with_len(mat.alpha, 4).unwrap();
        let ctx = MotionContext {
            mesh: &mesh,
            material: &mat,
            mode: StressMode::Partial,
            shapes: &shapes,
            coeffs: &coeffs,
            histories: &histories,
            tails: None,
            phi: &[0.0; 2],
            dynamics: None,
        };
        // Compressing the bar past its own length inverts it.
        let err = motion_element(&ctx, 0, &[0.0, -1.2]).unwrap_err();
        assert!(matches!(err, AssemblyError::InvertedElement { element: 0 }));
    }
}
