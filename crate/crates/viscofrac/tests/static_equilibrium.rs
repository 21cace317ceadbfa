//! Static single-element problems solved twice: once by the Newton solver on
//! the weak form, once by direct brute-force minimization of the total
//! potential energy. The two routes share only the element geometry and the
//! stored-energy function, so agreement validates the assembled residual,
//! the consistent tangent, and the solver plumbing end to end.

use approx::assert_relative_eq;
use std::collections::BTreeMap;
use viscofrac::element::{map_shape, quadrature};
use viscofrac::material::{hyperelastic_energy, Elasticity, Material, Plane, StressMode};
use viscofrac::mesh::{rod_1d, ElementKind, Mesh};
use viscofrac::solver::{Simulation, SolverSettings};
use viscofrac::tensor::green_lagrange;

/// Hyperelastic strain energy of the whole mesh at a displacement state,
/// integrated with the same quadrature the solver uses.
fn strain_energy(mesh: &Mesh, mat: &Material, u: &[f64]) -> f64 {
    let nc = mesh.dim().coords();
    let rule = quadrature(mesh.kind);
    let mut energy = 0.0;
    for conn in &mesh.elements {
        let coords: Vec<[f64; 2]> = conn.iter().map(|&n| mesh.coords[n]).collect();
        for qp in &rule {
            let sh = map_shape(mesh.kind, &coords, qp).expect("reference geometry is valid");
            let mut grad_u = [[0.0_f64; 2]; 2];
            for (i, &n) in conn.iter().enumerate() {
                for a in 0..nc {
                    for b in 0..2 {
                        grad_u[a][b] += u[n * nc + a] * sh.grad[i][b];
                    }
                }
            }
            let e = green_lagrange(mesh.dim(), &grad_u);
            energy += hyperelastic_energy(mat, &e) * sh.jxw * mesh.section;
        }
    }
    energy
}

/// Golden-section minimization of a smooth single-variable function.
fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let inv_phi = 0.5 * (5.0_f64.sqrt() - 1.0);
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Cyclic coordinate descent, each line search by golden section. Slow and
/// simple on purpose: the reference answer must not reuse any solver code.
/// Each coordinate keeps its own bracket width, widened after large moves
/// and narrowed when the coordinate stalls, so the search tracks the true
/// contraction rate instead of a fixed schedule.
fn coordinate_descent(
    f: impl Fn(&[f64]) -> f64,
    mut x: Vec<f64>,
    span: f64,
    sweeps: usize,
) -> Vec<f64> {
    let mut window = vec![span; x.len()];
    for _ in 0..sweeps {
        for i in 0..x.len() {
            let xi = x[i];
            let probe = x.clone();
            let best = golden_min(
                |v| {
                    let mut trial = probe.clone();
                    trial[i] = v;
                    f(&trial)
                },
                xi - window[i],
                xi + window[i],
            );
            let moved = (best - xi).abs();
            x[i] = best;
            window[i] = (8.0 * moved).max(0.25 * window[i]);
        }
    }
    x
}

/// Final sharpening pass: per coordinate, fit a least-squares parabola
/// through nine symmetric samples and jump to its vertex. The averaging
/// suppresses the float-rounding noise that limits pure golden-section
/// searches to ~1e-10, pushing the minimizer to machine-level accuracy.
fn parabolic_polish(
    f: impl Fn(&[f64]) -> f64,
    mut x: Vec<f64>,
    h: f64,
    sweeps: usize,
) -> Vec<f64> {
    // For offsets k = -4..=4: n = 9, sum k^2 = 60, sum k^4 = 708.
    for _ in 0..sweeps {
        for i in 0..x.len() {
            let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
            for k in -4..=4 {
                let mut trial = x.clone();
                trial[i] += k as f64 * h;
                let fk = f(&trial);
                s0 += fk;
                s1 += k as f64 * fk;
                s2 += (k * k) as f64 * fk;
            }
            let b = s1 / 60.0;
            let c = (9.0 * s2 - 60.0 * s0) / 2772.0;
            if c > 0.0 {
                let step = (-b / (2.0 * c)).clamp(-4.0, 4.0);
                x[i] += step * h;
            }
        }
    }
    x
}

fn quasi_static_sim(mesh: Mesh, mat: Material) -> Simulation {
    Simulation::new(
        mesh,
        mat,
        StressMode::Partial,
        false,
        false,
        true,
        SolverSettings {
            motion_tol: 1e-13,
            ..SolverSettings::default()
        },
        1.0,
    )
    .unwrap()
}

#[test]
fn bar_element_matches_energy_minimization() {
    let (length, area, force) = (1.5, 2.0e-4, 11.0);
    let mesh = rod_1d(1, length, area);
    let mat = Material {
        youngs_modulus: 5.0e5,
        poisson_ratio: 0.3,
        plane: Plane::Uniaxial,
        elasticity: Elasticity::NeoHookean,
        memory_modulus: 0.0,
        ..Material::default()
    };

    // Reference: minimize total potential over the single free tip dof.
    let potential = |tip: f64| {
        let u = [0.0, tip];
        strain_energy(&mesh, &mat, &u) - force * tip
    };
    let u_ref = golden_min(potential, 0.0, 0.8 * length);

    let mut sim = quasi_static_sim(mesh, mat.clone());
    sim.mark_fixed("left", &[0]).unwrap();
    let rho = mat.density;
    let mut loads = |_t: f64, f: &mut [f64]| {
        f[1] += force / rho;
    };
    sim.step(&mut loads, &mut |_, _| {}).unwrap();

    assert!(u_ref > 1e-3 * length, "load should produce a visible stretch");
    assert_relative_eq!(sim.u[1], u_ref, max_relative = 1e-6);
}

#[test]
fn quad_element_matches_energy_minimization() {
    // One quadrilateral clamped on its left edge and pulled by point forces
    // at the two right corners.
    let (a, b, th) = (0.04, 0.03, 0.002);
    let mut node_sets = BTreeMap::new();
    node_sets.insert("left".to_string(), vec![0, 3]);
    node_sets.insert("right".to_string(), vec![1, 2]);
    let mesh = Mesh {
        kind: ElementKind::Quad4,
        section: th,
        coords: vec![[0.0, 0.0], [a, 0.0], [a, b], [0.0, b]],
        elements: vec![vec![0, 1, 2, 3]],
        node_sets,
        edge_sets: BTreeMap::new(),
    };
    mesh.validate().unwrap();
    let mat = Material {
        youngs_modulus: 2.0e8,
        poisson_ratio: 0.3,
        plane: Plane::Stress,
        elasticity: Elasticity::NeoHookean,
        memory_modulus: 0.0,
        ..Material::default()
    };
    let force = 150.0;

    // Reference: minimize the potential over the four free dofs (nodes 1
    // and 2, both components).
    let expand = |x: &[f64]| {
        let mut u = vec![0.0; 8];
        u[2] = x[0];
        u[3] = x[1];
        u[4] = x[2];
        u[5] = x[3];
        u
    };
    let potential = |x: &[f64]| {
        let u = expand(x);
        strain_energy(&mesh, &mat, &u) - 0.5 * force * (u[2] + u[4])
    };
    // The problem is mirror-symmetric about the midline, so the minimizer
    // has equal axial and opposite lateral corner motion. Descend fast in
    // that two-variable subspace, then polish in the full space to confirm
    // nothing symmetry-breaking was missed.
    let sym = coordinate_descent(
        |st: &[f64]| potential(&[st[0], st[1], st[0], -st[1]]),
        vec![0.0; 2],
        0.2 * a,
        200,
    );
    let x_ref = parabolic_polish(
        potential,
        vec![sym[0], sym[1], sym[0], -sym[1]],
        3e-6 * a,
        8,
    );

    let mut sim = quasi_static_sim(mesh, mat.clone());
    sim.mark_fixed("left", &[0, 1]).unwrap();
    let rho = mat.density;
    let mut loads = |_t: f64, f: &mut [f64]| {
        f[2] += 0.5 * force / rho;
        f[4] += 0.5 * force / rho;
    };
    sim.step(&mut loads, &mut |_, _| {}).unwrap();

    assert!(
        x_ref[0] > 1e-4 * a,
        "load should stretch the element visibly"
    );
    for (dof, &reference) in [2usize, 3, 4, 5].iter().zip(&x_ref) {
        assert_relative_eq!(sim.u[*dof], reference, max_relative = 1e-6, epsilon = 1e-12 * a);
    }
    // Pulling the midline symmetrically: equal axial motion, mirrored
    // lateral contraction.
    assert_relative_eq!(sim.u[2], sim.u[4], max_relative = 1e-9);
    assert_relative_eq!(sim.u[3], -sim.u[5], max_relative = 1e-9);
}
