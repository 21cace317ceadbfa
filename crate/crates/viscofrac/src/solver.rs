//! Newton solves, Newmark time integration, the staggered damage/motion
//! update, and adaptive time-step halving.
//!
//! One time step runs:
//!
//! 1. an implicit (backward Euler) damage solve at the committed mechanical
//!    state, followed by the irreversibility clamp,
//! 2. an implicit motion solve at the fresh damage field, dynamic via
//!    Newmark or quasi-static,
//! 3. the Newmark velocity/acceleration update, and
//! 4. the strain commit that appends to every quadrature-point history.
//!
//! The step is transactional: nothing is committed until both solves have
//! converged, so a rejected step (non-convergence or element inversion)
//! can halve the time step, refine the histories, and retry from the same
//! committed state. Halvings are permanent — the run never coarsens back.

use crate::assembly::{
    assemble_damage_system, assemble_mass, assemble_motion_system, compute_caputo_tails,
    compute_driving_energies, initial_histories, precompute_mass_shapes, precompute_shapes,
    strain_at, AssembledSystem, AssemblyError, DamageContext, Dynamics, MotionContext,
    SystemMatrix,
};
use crate::element::MappedShape;
use crate::fractional::{FractionalError, G1Coefficients, StrainHistory};
use crate::material::{Material, StressMode};
use crate::mesh::Mesh;
use nalgebra::DVector;
use sprs::FillInReduction;
use sprs_ldl::Ldl;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("linear solver failed: {0}")]
    Linear(String),
    #[error(
        "{system} solve failed to converge at t = {time:.6e} \
         after {halvings} time-step halvings"
    )]
    Nonconvergence {
        system: &'static str,
        time: f64,
        halvings: usize,
    },
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Fractional(#[from] FractionalError),
}

/// Direct solve of the assembled (symmetric) system: dense LU below the
/// size threshold, sparse LDL^T above it.
pub fn solve_linear(matrix: &SystemMatrix, rhs: &[f64]) -> Result<Vec<f64>, SolverError> {
    let x = match matrix {
        SystemMatrix::Dense(a) => a
            .clone()
            .lu()
            .solve(&DVector::from_column_slice(rhs))
            .map(|x| x.as_slice().to_vec())
            .ok_or_else(|| SolverError::Linear("dense LU factorization is singular".into()))?,
        SystemMatrix::Sparse(a) => {
            // The assembled matrix is symmetric by construction up to
            // summation-order roundoff; the strict equality check would
            // reject that noise, so it stays off.
            let ldl = Ldl::new()
                .check_symmetry(sprs::SymmetryCheck::DontCheckSymmetry)
                .fill_in_reduction(FillInReduction::ReverseCuthillMcKee)
                .numeric(a.view())
                .map_err(|e| SolverError::Linear(format!("LDL^T factorization failed: {e}")))?;
            ldl.solve(rhs)
        }
    };
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(SolverError::Linear(
            "linear solve produced non-finite entries".into(),
        ))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonSettings {
    /// Converged when the l2 norm of the Newton update drops to this.
    pub tol: f64,
    pub max_iter: usize,
}

pub struct NewtonResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Pre-elimination residual of a final assembly at the converged state;
    /// reactions are recovered from it.
    pub raw_residual: Vec<f64>,
}

/// A failed Newton solve is either worth retrying with a smaller time step
/// or fatal (bad mesh, bad configuration).
pub enum NewtonError {
    Recoverable(String),
    Fatal(SolverError),
}

fn recoverable_assembly(e: AssemblyError) -> NewtonError {
    match e {
        AssemblyError::InvertedElement { .. } => NewtonError::Recoverable(e.to_string()),
        other => NewtonError::Fatal(other.into()),
    }
}

/// Full-step Newton iteration `J dx = -R` on whatever `assemble` produces.
pub fn newton_solve(
    x0: Vec<f64>,
    settings: &NewtonSettings,
    mut assemble: impl FnMut(&[f64]) -> Result<AssembledSystem, AssemblyError>,
) -> Result<NewtonResult, NewtonError> {
    let mut x = x0;
    for it in 0..settings.max_iter {
        let sys = assemble(&x).map_err(recoverable_assembly)?;
        let rhs: Vec<f64> = sys.residual.iter().map(|r| -r).collect();
        let delta = match solve_linear(&sys.matrix, &rhs) {
            Ok(d) => d,
            // A singular or indefinite-breakdown system at some iterate is
            // treated like any other bad iterate: retry on a shorter step.
            Err(SolverError::Linear(msg)) => return Err(NewtonError::Recoverable(msg)),
            Err(other) => return Err(NewtonError::Fatal(other)),
        };
        for (xi, di) in x.iter_mut().zip(&delta) {
            *xi += di;
        }
        let norm = delta.iter().map(|d| d * d).sum::<f64>().sqrt();
        if norm <= settings.tol {
            let fin = assemble(&x).map_err(recoverable_assembly)?;
            return Ok(NewtonResult {
                x,
                iterations: it + 1,
                raw_residual: fin.raw_residual,
            });
        }
    }
    Err(NewtonError::Recoverable(format!(
        "no convergence within {} Newton iterations",
        settings.max_iter
    )))
}

#[derive(Debug, Clone, Copy)]
pub struct SolverSettings {
    pub motion_tol: f64,
    pub damage_tol: f64,
    pub max_iter: usize,
    /// Cap on cumulative time-step halvings before the run gives up.
    pub max_halvings: usize,
    /// Newmark beta; 1/4 is the unconditionally stable average-acceleration
    /// rule used everywhere.
    pub newmark_beta: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            motion_tol: 1e-10,
            damage_tol: 1e-10,
            max_iter: 30,
            max_halvings: 5,
            newmark_beta: 0.25,
        }
    }
}

/// Everything the time stepper reports about one accepted step.
pub struct StepReport {
    pub t: f64,
    pub dt: f64,
    pub motion_iterations: usize,
    pub damage_iterations: usize,
    /// Cumulative halvings so far.
    pub halvings: usize,
    /// Pre-elimination motion residual at convergence (per unit density);
    /// feed to `reaction_sum` for support reactions.
    pub raw_residual: Vec<f64>,
}

enum TryError {
    Recoverable,
    Fatal(SolverError),
}

impl From<NewtonError> for TryError {
    fn from(e: NewtonError) -> Self {
        match e {
            NewtonError::Recoverable(_) => TryError::Recoverable,
            NewtonError::Fatal(err) => TryError::Fatal(err),
        }
    }
}

/// Owns the discrete state and advances it step by step.
pub struct Simulation {
    pub mesh: Mesh,
    pub material: Material,
    pub mode: StressMode,
    pub dynamic: bool,
    pub damage_enabled: bool,
    /// Nodewise irreversibility clamp `phi_{n+1} >= phi_n`.
    pub irreversible: bool,
    pub settings: SolverSettings,
    pub shapes: Vec<Vec<MappedShape>>,
    /// Shape table on the mass-exact quadrature rule.
    pub mass_shapes: Vec<Vec<MappedShape>>,
    pub coeffs: G1Coefficients,
    /// Dirichlet mask over displacement dofs.
    pub fixed: Vec<bool>,
    pub t: f64,
    pub dt: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
    pub phi: Vec<f64>,
    pub histories: Vec<Vec<StrainHistory>>,
    pub halvings: usize,
    pub step_index: usize,
}

impl Simulation {
    pub fn new(
        mesh: Mesh,
        material: Material,
        mode: StressMode,
        dynamic: bool,
        damage_enabled: bool,
        irreversible: bool,
        settings: SolverSettings,
        dt: f64,
    ) -> Result<Self, SolverError> {
        mesh.validate().map_err(AssemblyError::from)?;
        let shapes = precompute_shapes(&mesh)?;
        let mass_shapes = precompute_mass_shapes(&mesh)?;
        let coeffs = G1Coefficients::new(material.alpha)?;
        let histories = initial_histories(&mesh, dt)?;
        let ndof = mesh.n_nodes() * mesh.dim().coords();
        let n_nodes = mesh.n_nodes();
        Ok(Self {
            mesh,
            material,
            mode,
            dynamic,
            damage_enabled,
            irreversible,
            settings,
            shapes,
            mass_shapes,
            coeffs,
            fixed: vec![false; ndof],
            t: 0.0,
            dt,
            u: vec![0.0; ndof],
            v: vec![0.0; ndof],
            a: vec![0.0; ndof],
            phi: vec![0.0; n_nodes],
            histories,
            halvings: 0,
            step_index: 0,
        })
    }

    pub fn ndof(&self) -> usize {
        self.u.len()
    }

    /// Constrain the listed components of every node in a set.
    pub fn mark_fixed(&mut self, set: &str, comps: &[usize]) -> Result<(), SolverError> {
        let nc = self.mesh.dim().coords();
        let nodes = self
            .mesh
            .node_set(set)
            .map_err(AssemblyError::from)?
            .to_vec();
        for n in nodes {
            for &c in comps {
                self.fixed[n * nc + c] = true;
            }
        }
        Ok(())
    }

    /// Recover the consistent initial acceleration `M a0 = f0` from the
    /// external load at t = 0 (the body starts at rest and stress-free, so
    /// internal forces vanish). No-op for quasi-static runs.
    pub fn set_initial_acceleration(&mut self, f0: &[f64]) -> Result<(), SolverError> {
        if !self.dynamic {
            return Ok(());
        }
        let m = assemble_mass(&self.mesh, &self.mass_shapes, &self.fixed)?;
        let mut rhs = f0.to_vec();
        for (r, &fix) in rhs.iter_mut().zip(&self.fixed) {
            if fix {
                *r = 0.0;
            }
        }
        self.a = solve_linear(&m, &rhs)?;
        Ok(())
    }

    /// Advance one step, halving the time step on rejection until it either
    /// converges or the halving budget runs out. `loads` fills the external
    /// force vector (per unit density) at a given time; `prescribe` writes
    /// prescribed displacement values into the candidate at constrained dofs.
    pub fn step(
        &mut self,
        loads: &mut dyn FnMut(f64, &mut [f64]),
        prescribe: &mut dyn FnMut(f64, &mut [f64]),
    ) -> Result<StepReport, SolverError> {
        loop {
            match self.try_step(loads, prescribe) {
                Ok(report) => return Ok(report),
                Err(TryError::Recoverable) => {
                    if self.halvings >= self.settings.max_halvings {
                        return Err(SolverError::Nonconvergence {
                            system: "staggered step",
                            time: self.t,
                            halvings: self.halvings,
                        });
                    }
                    self.halve();
                }
                Err(TryError::Fatal(e)) => return Err(e),
            }
        }
    }

    /// Permanently halve the time step and refine every strain history onto
    /// the finer grid.
    fn halve(&mut self) {
        self.dt *= 0.5;
        for row in &mut self.histories {
            for h in row.iter_mut() {
                h.refine_halve();
            }
        }
        self.halvings += 1;
    }

    fn try_step(
        &mut self,
        loads: &mut dyn FnMut(f64, &mut [f64]),
        prescribe: &mut dyn FnMut(f64, &mut [f64]),
    ) -> Result<StepReport, TryError> {
        let dt = self.dt;
        let t_next = self.t + dt;
        let steps_committed = self.histories[0][0].steps();
        self.coeffs.ensure(steps_committed + 2);

        // Damage pass at the committed mechanical state.
        let mut phi_next = self.phi.clone();
        let mut damage_iterations = 0;
        if self.damage_enabled {
            let psi = compute_driving_energies(&self.material, &self.histories)
                .map_err(|e| TryError::Fatal(e.into()))?;
            let ctx = DamageContext {
                mesh: &self.mesh,
                material: &self.material,
                shapes: &self.shapes,
                histories: &self.histories,
                psi: &psi,
                dt,
            };
            let settings = NewtonSettings {
                tol: self.settings.damage_tol,
                max_iter: self.settings.max_iter,
            };
            let phi_old = &self.phi;
            let res = newton_solve(phi_next, &settings, |cand| {
                assemble_damage_system(&ctx, cand, phi_old)
            })
            .map_err(TryError::from)?;
            damage_iterations = res.iterations;
            phi_next = res.x;
            for (p, &po) in phi_next.iter_mut().zip(&self.phi) {
                if self.irreversible && *p < po {
                    *p = po;
                }
                *p = p.clamp(0.0, 1.0);
            }
        }

        // Motion pass at the fresh damage field.
        let ndof = self.u.len();
        let mut f_ext = vec![0.0; ndof];
        loads(t_next, &mut f_ext);
        let beta = self.settings.newmark_beta;
        let a1 = 1.0 / (beta * dt * dt);
        let a2 = 1.0 / (beta * dt);
        let a3 = (1.0 - 2.0 * beta) / (2.0 * beta);
        let mut guess = self.u.clone();
        let mut predictor = Vec::new();
        if self.dynamic {
            predictor = (0..ndof)
                .map(|i| a1 * self.u[i] + a2 * self.v[i] + a3 * self.a[i])
                .collect();
            // Velocity-consistent warm start for Newton. This deliberately
            // omits the acceleration term: right after a load jump the
            // consistent-mass acceleration oscillates node to node, and a
            // fully ballistic guess built from it can invert elements
            // before the first Newton correction pulls it back.
            for i in 0..ndof {
                guess[i] = self.u[i] + dt * self.v[i];
            }
        }
        prescribe(t_next, &mut guess);
        let tails = compute_caputo_tails(&self.histories, &self.coeffs);
        let dynamics = self.dynamic.then(|| Dynamics {
            a1,
            predictor: &predictor,
            mass_shapes: &self.mass_shapes,
        });
        let ctx = MotionContext {
            mesh: &self.mesh,
            material: &self.material,
            mode: self.mode,
            shapes: &self.shapes,
            coeffs: &self.coeffs,
            histories: &self.histories,
            tails: Some(&tails),
            phi: &phi_next,
            dynamics,
        };
        let settings = NewtonSettings {
            tol: self.settings.motion_tol,
            max_iter: self.settings.max_iter,
        };
        let res = newton_solve(guess, &settings, |cand| {
            assemble_motion_system(&ctx, cand, &f_ext, &self.fixed)
        })
        .map_err(TryError::from)?;

        // Commit: strains first (they can still reject), then the state.
        let mut new_strains = Vec::with_capacity(self.histories.len());
        for el in 0..self.histories.len() {
            let mut row = Vec::with_capacity(self.histories[el].len());
            for q in 0..self.histories[el].len() {
                let e = strain_at(&self.mesh, &self.shapes, el, q, &res.x)
                    .map_err(recoverable_assembly)
                    .map_err(TryError::from)?;
                row.push(e);
            }
            new_strains.push(row);
        }
        for (hr, er) in self.histories.iter_mut().zip(new_strains) {
            for (h, e) in hr.iter_mut().zip(er) {
                h.push(e);
            }
        }
        if self.dynamic {
            let mut a_new = vec![0.0; ndof];
            for i in 0..ndof {
                a_new[i] = a1 * res.x[i] - predictor[i];
                self.v[i] += 0.5 * dt * (self.a[i] + a_new[i]);
            }
            self.a = a_new;
        }
        self.u = res.x;
        self.phi = phi_next;
        self.t = t_next;
        self.step_index += 1;
        Ok(StepReport {
            t: t_next,
            dt,
            motion_iterations: res.iterations,
            damage_iterations,
            halvings: self.halvings,
            raw_residual: res.raw_residual,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::{Elasticity, MemoryForm, Plane};
    use crate::mesh::rod_1d;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use sprs::TriMat;

    fn bar_material() -> Material {
        Material {
            density: 2.0,
            youngs_modulus: 10.0,
            poisson_ratio: 0.3,
            plane: Plane::Uniaxial,
            elasticity: Elasticity::LinearSpring,
            memory_modulus: 0.0,
            alpha: 0.5,
            ..Material::default()
        }
    }

    #[test]
    fn sparse_and_dense_solvers_agree_on_a_known_symmetric_system() {
        // Tridiagonal (2, -1) system: well-conditioned, SPD, exact solution
        // known through the dense path.
        let n = 12;
        let mut dense = DMatrix::zeros(n, n);
        let mut tri = TriMat::new((n, n));
        for i in 0..n {
            dense[(i, i)] = 2.0;
            tri.add_triplet(i, i, 2.0);
            if i + 1 < n {
                dense[(i, i + 1)] = -1.0;
                dense[(i + 1, i)] = -1.0;
                tri.add_triplet(i, i + 1, -1.0);
                tri.add_triplet(i + 1, i, -1.0);
            }
        }
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let xd = solve_linear(&SystemMatrix::Dense(dense), &rhs).unwrap();
        let xs = solve_linear(&SystemMatrix::Sparse(tri.to_csr()), &rhs).unwrap();
        for (a, b) in xd.iter().zip(&xs) {
            assert_relative_eq!(a, b, max_relative = 1e-12, epsilon = 1e-13);
        }
    }

    #[test]
    fn quiescent_simulation_stays_at_rest() {
        let mesh = rod_1d(4, 1.0, 1.0);
        let mat = Material {
            memory_modulus: 5.0,
            memory_form: MemoryForm::Scalar,
            ..bar_material()
        };
        let mut sim = Simulation::new(
            mesh,
            mat,
            StressMode::Partial,
            true,
            false,
            true,
            SolverSettings::default(),
            0.01,
        )
        .unwrap();
        sim.mark_fixed("left", &[0]).unwrap();
        for _ in 0..10 {
            let rep = sim
                .step(&mut |_t, _f| {}, &mut |_t, _u| {})
                .unwrap();
            assert_eq!(rep.motion_iterations, 1);
        }
        assert!(sim.u.iter().all(|&u| u.abs() < 1e-14));
        assert!(sim.v.iter().all(|&v| v.abs() < 1e-14));
        assert_relative_eq!(sim.t, 0.1, max_relative = 1e-12);
    }

    #[test]
    fn static_bar_under_tip_force_matches_analytic_root() {
        // Uniaxial linear spring: S = E_Y (e + e^2/2) with uniform strain e,
        // equilibrium F11 S A = F. Solve the cubic by bisection and compare
        // the FEM tip displacement.
        let length = 2.0;
        let area = 0.5;
        let force = 0.8;
        let mesh = rod_1d(6, length, area);
        let mat = bar_material();
        let mut sim = Simulation::new(
            mesh,
            mat.clone(),
            StressMode::Partial,
            false,
            false,
            true,
            SolverSettings::default(),
            0.1,
        )
        .unwrap();
        sim.mark_fixed("left", &[0]).unwrap();
        let tip = *sim.mesh.node_set("right").unwrap().last().unwrap();
        let rho = mat.density;
        let mut loads = |_t: f64, f: &mut [f64]| {
            f[tip] += force / rho;
        };
        let rep = sim.step(&mut loads, &mut |_t, _u| {}).unwrap();
        // Reference: solve (1 + e)(e + e^2/2) E_Y A = F for uniform strain e.
        let resid = |e: f64| (1.0 + e) * (e + 0.5 * e * e) * mat.youngs_modulus * area - force;
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if resid(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let e_exact = 0.5 * (lo + hi);
        let u_tip = sim.u[tip];
        assert_relative_eq!(u_tip, e_exact * length, max_relative = 1e-9);
        // Support reaction balances the applied force.
        let r = crate::assembly::reaction_sum(&sim.mesh, &rep.raw_residual, rho, "left", 0)
            .unwrap();
        assert_relative_eq!(r, -force, max_relative = 1e-9);
    }

    #[test]
    fn constant_force_trajectory_is_quadratic_to_machine_precision() {
        // A free rigid bar under spatially consistent constant load
        // accelerates uniformly; the average-acceleration Newmark rule is
        // exact for constant acceleration, so u(t) = g t^2 / 2 to roundoff.
        let mesh = rod_1d(2, 1.0, 0.3);
        let mat = bar_material();
        let rho = mat.density;
        let g = 2.5; // target acceleration
        let dt = 0.05;
        let mut sim = Simulation::new(
            mesh,
            mat,
            StressMode::Partial,
            true,
            false,
            true,
            SolverSettings {
                motion_tol: 1e-13,
                ..SolverSettings::default()
            },
            dt,
        )
        .unwrap();
        // Consistent load f = M (g 1): row sums of the element mass matrix
        // put A L / 4 on the ends and A L / 2 in the middle (no density in
        // the divided-through form; physical force is rho times that).
        let (area, length) = (0.3, 1.0);
        let m_row = |node: usize| {
            let end = area * length / (2.0 * 2.0);
            match node {
                0 | 2 => end,
                _ => 2.0 * end,
            }
        };
        let mut loads = |_t: f64, f: &mut [f64]| {
            for (n, fv) in f.iter_mut().enumerate() {
                *fv += g * m_row(n) * rho / rho;
            }
        };
        let f0: Vec<f64> = (0..3).map(|n| g * m_row(n)).collect();
        sim.set_initial_acceleration(&f0).unwrap();
        for a in &sim.a {
            assert_relative_eq!(*a, g, max_relative = 1e-12);
        }
        for _ in 0..10 {
            sim.step(&mut loads, &mut |_t, _u| {}).unwrap();
        }
        let t = sim.t;
        for u in &sim.u {
            assert_relative_eq!(*u, 0.5 * g * t * t, max_relative = 1e-10);
        }
        for v in &sim.v {
            assert_relative_eq!(*v, g * t, max_relative = 1e-10);
        }
    }

    #[test]
    fn halving_refines_histories_and_is_permanent() {
        let mesh = rod_1d(2, 1.0, 1.0);
        let mut sim = Simulation::new(
            mesh,
            bar_material(),
            StressMode::Partial,
            false,
            false,
            true,
            SolverSettings::default(),
            0.2,
        )
        .unwrap();
        sim.mark_fixed("left", &[0]).unwrap();
        sim.step(&mut |_t, _f| {}, &mut |_t, _u| {}).unwrap();
        assert_eq!(sim.histories[0][0].steps(), 1);
        sim.halve();
        assert_relative_eq!(sim.dt, 0.1);
        assert_eq!(sim.histories[0][0].steps(), 2);
        assert_eq!(sim.halvings, 1);
        sim.step(&mut |_t, _f| {}, &mut |_t, _u| {}).unwrap();
        assert_relative_eq!(sim.t, 0.2 + 0.1, max_relative = 1e-12);
        assert_relative_eq!(sim.histories[0][0].dt(), 0.1, max_relative = 1e-14);
    }

    #[test]
    fn prescribed_ramp_pulls_the_bar_uniformly() {
        // Displacement-driven stretch: with the right end ramped at rate r,
        // the quasi-static bar strains uniformly at every step.
        let mesh = rod_1d(5, 1.0, 1.0);
        let mut sim = Simulation::new(
            mesh,
            bar_material(),
            StressMode::Partial,
            false,
            false,
            true,
            SolverSettings::default(),
            0.1,
        )
        .unwrap();
        sim.mark_fixed("left", &[0]).unwrap();
        sim.mark_fixed("right", &[0]).unwrap();
        let tip = *sim.mesh.node_set("right").unwrap().last().unwrap();
        let rate = 0.3;
        let mut prescribe = |t: f64, u: &mut [f64]| {
            u[tip] = rate * t;
        };
        for _ in 0..4 {
            sim.step(&mut |_t, _f| {}, &mut prescribe).unwrap();
        }
        assert_relative_eq!(sim.u[tip], 0.3 * 0.4, max_relative = 1e-12);
        // Interior nodes follow linearly in the reference coordinate.
        for (n, x) in sim.mesh.coords.iter().enumerate() {
            assert_relative_eq!(
                sim.u[n],
                0.12 * x[0],
                max_relative = 1e-8,
                epsilon = 1e-12
            );
        }
    }
}
