//! Constitutive model: degraded compressible Neo-Hookean elasticity plus a
//! fractional viscoelastic memory stress, with phase-field damage coupling.
//!
//! The second Piola-Kirchhoff stress assembled here is
//!
//! ```text
//! S = G(phi) S_hyper + theta_0 b Edot - gc gamma (C^-1 grad phi)(x)(C^-1 grad phi)
//!     + G(phi) A(E) : D^a E                                   (partial form)
//!     + G(phi) kappa [ X(E_t - E_0)/t^a + a * history integral ]  (complete form)
//! ```
//!
//! where `X` collects the strain sensitivity of the memory modulus `A`. The
//! "partial" form treats `A` as frozen when differentiating the memory free
//! energy; the "complete" form keeps the `dA/dE` terms so the stress is the
//! exact strain gradient of the stored energy. Tangents come from the
//! complex-step derivative, so no analytic linearization of this expression
//! is ever maintained by hand.

use crate::field::Field;
use crate::fractional::{
    caputo_with_provisional, kappa, singular_history_integral, G1Coefficients, KernelFamily,
    StrainHistory,
};
use crate::tensor::{right_cauchy_green, Dim, SymTensor2, Tensor4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Step size of the complex-step derivative. Any value in [1e-300, 1e-100]
/// gives machine-accurate first derivatives; this sits in the middle.
pub const COMPLEX_STEP: f64 = 1e-150;
/// Step size for the real central differences used where a derivative is
/// needed inside an already-complex evaluation.
const CENTRAL_STEP: f64 = 1e-6;

/// Out-of-plane kinematic assumption that fixes the effective Lame constant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Plane {
    /// Plain 3D constants (also the 1D rod convention).
    Uniaxial,
    /// Thick bodies: lambda enters unchanged.
    Strain,
    /// Thin sheets: lambda is replaced by `2 lambda mu / (lambda + 2 mu)`.
    Stress,
}

/// Base elastic response.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Elasticity {
    /// Compressible Neo-Hookean solid.
    NeoHookean,
    /// Linear relation `S = E_Y E`; the classic rod benchmark.
    LinearSpring,
}

/// Degradation function `G(phi)` multiplying the stored energies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Degradation {
    /// `(1 - phi)^2`.
    Quadratic,
    /// `(1 - phi)^3 + a phi^d (1 - phi)^d / (1 + b (phi - c)^2)` with
    /// `d = 1.05`: a cubic with a tunable mid-range bump.
    CubicBump { a: f64, b: f64, c: f64 },
}

/// Exponent of the bump factor in [`Degradation::CubicBump`].
const BUMP_EXPONENT: f64 = 1.05;

/// Which memory modulus tensor `A(E)` scales the fractional stress.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryForm {
    /// Finite-strain consistent modulus built from `C^-1`:
    /// `lambda_m C^-1 (x) C^-1 + 2 (mu_m - lambda_m ln J) I_{C^-1}`.
    Full,
    /// Only the axial (1,1,1,1) component carries the modulus `p`.
    Axial,
    /// `p` times the symmetric fourth-order identity.
    Scalar,
}

/// Whether the stress keeps the strain dependence of the memory modulus.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StressMode {
    #[default]
    /// `A` treated as frozen: memory stress is `G A : D^a E`.
    Partial,
    /// Exact strain gradient of the memory energy: adds the `dA/dE` terms.
    Complete,
}

/// Complete material parameter set of one homogeneous body.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Material {
    /// Reference mass density `rho_0` [kg/m^3].
    pub density: f64,
    /// Young's modulus `E_Y` [Pa].
    pub youngs_modulus: f64,
    /// Poisson ratio `nu`.
    pub poisson_ratio: f64,
    /// Out-of-plane assumption.
    pub plane: Plane,
    /// Base elastic response.
    pub elasticity: Elasticity,
    /// Memory (viscous) modulus magnitude `p` [Pa s^alpha-ish scale].
    pub memory_modulus: f64,
    /// Shape of the memory modulus tensor.
    pub memory_form: MemoryForm,
    /// Fractional order `alpha` in (0, 1).
    pub alpha: f64,
    /// Linear strain-rate stress coefficient `b`; enters as `theta_0 * b`.
    pub rate_coefficient: f64,
    /// Reference temperature `theta_0` [K].
    pub reference_temperature: f64,
    /// Tensile strength `f_t` [Pa]; sets the toughness when `toughness` is
    /// not given directly.
    pub tensile_strength: f64,
    /// Griffith-type toughness `g_c` [N/m], overriding `tensile_strength`.
    pub toughness: Option<f64>,
    /// Damage layer width `gamma` [m].
    pub layer_width: f64,
    /// Damage mobility scale `c_lambda` (larger = slower damage flow).
    pub mobility_scale: f64,
    /// Damage mobility exponent `zeta`.
    pub mobility_exponent: f64,
    /// Damage mobility regularization offset `delta`.
    pub mobility_offset: f64,
    /// Degradation function.
    pub degradation: Degradation,
}

impl Default for Material {
    fn default() -> Self {
        Self {
            density: 1000.0,
            youngs_modulus: 1.0e9,
            poisson_ratio: 0.3,
            plane: Plane::Strain,
            elasticity: Elasticity::NeoHookean,
            memory_modulus: 0.0,
            memory_form: MemoryForm::Scalar,
            alpha: 0.5,
            rate_coefficient: 0.0,
            reference_temperature: 293.15,
            tensile_strength: 1.0e6,
            toughness: None,
            layer_width: 1.0e-3,
            mobility_scale: 1.0,
            mobility_exponent: 1.0,
            mobility_offset: 1.0e-4,
            degradation: Degradation::Quadratic,
        }
    }
}

impl Material {
    /// Shear modulus `mu = E / (2 (1 + nu))`.
    pub fn mu(&self) -> f64 {
        self.youngs_modulus / (2.0 * (1.0 + self.poisson_ratio))
    }

    /// First Lame constant after the out-of-plane substitution.
    pub fn lambda_eff(&self) -> f64 {
        let nu = self.poisson_ratio;
        let lambda = self.youngs_modulus * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
        match self.plane {
            Plane::Stress => {
                let mu = self.mu();
                2.0 * lambda * mu / (lambda + 2.0 * mu)
            }
            _ => lambda,
        }
    }

    /// Memory shear modulus `mu_m = p / (2 (1 + nu))`.
    pub fn memory_mu(&self) -> f64 {
        self.memory_modulus / (2.0 * (1.0 + self.poisson_ratio))
    }

    /// Memory Lame constant with the same out-of-plane substitution as the
    /// elastic one.
    pub fn memory_lambda_eff(&self) -> f64 {
        let nu = self.poisson_ratio;
        let lambda = self.memory_modulus * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
        match self.plane {
            Plane::Stress => {
                let mu = self.memory_mu();
                2.0 * lambda * mu / (lambda + 2.0 * mu)
            }
            _ => lambda,
        }
    }

    /// Griffith-type toughness: explicit value if configured, otherwise
    /// `f_t^2 (1 - nu^2) / E_Y`.
    pub fn gc(&self) -> f64 {
        self.toughness.unwrap_or_else(|| {
            self.tensile_strength * self.tensile_strength * (1.0 - self.poisson_ratio.powi(2))
                / self.youngs_modulus
        })
    }

    /// Inverse damage mobility `c_lambda / (1 + delta - phi)^zeta`.
    pub fn inverse_mobility(&self, phi: f64) -> f64 {
        self.mobility_scale / (1.0 + self.mobility_offset - phi).powf(self.mobility_exponent)
    }

    /// Derivative of [`Material::inverse_mobility`] with respect to `phi`:
    /// `c_lambda zeta / (1 + delta - phi)^(zeta + 1)`.
    pub fn inverse_mobility_dphi(&self, phi: f64) -> f64 {
        self.mobility_scale * self.mobility_exponent
            / (1.0 + self.mobility_offset - phi).powf(self.mobility_exponent + 1.0)
    }

    /// Degradation value and its first two `phi`-derivatives.
    ///
    /// The second derivative of the bump form carries `phi^(d-2)` with
    /// `d - 2 = -0.95`, singular at the endpoints; since it only serves as a
    /// Jacobian weight, `phi` is clamped to `[1e-4, 1 - 1e-4]` inside that
    /// single term (value and first derivative stay exact).
    pub fn degradation_triple(&self, phi: f64) -> (f64, f64, f64) {
        match self.degradation {
            Degradation::Quadratic => {
                let o = 1.0 - phi;
                (o * o, -2.0 * o, 2.0)
            }
            Degradation::CubicBump { a, b, c } => {
                let d = BUMP_EXPONENT;
                let o = 1.0 - phi;
                // The bump factor phi^d (1-phi)^d lives on [0, 1] and
                // vanishes at the ends; clamping keeps transient Newton
                // overshoots outside that range from producing NaN powers.
                let phi_b = phi.clamp(0.0, 1.0);
                let ob = 1.0 - phi_b;
                let u = phi_b.powf(d) * ob.powf(d);
                let up = d * phi_b.powf(d - 1.0) * ob.powf(d - 1.0) * (1.0 - 2.0 * phi_b);
                let phi_c = phi.clamp(1.0e-4, 1.0 - 1.0e-4);
                let oc = 1.0 - phi_c;
                let upp = d * (d - 1.0)
                    * phi_c.powf(d - 2.0)
                    * oc.powf(d - 2.0)
                    * (1.0 - 2.0 * phi_c).powi(2)
                    - 2.0 * d * phi_c.powf(d - 1.0) * oc.powf(d - 1.0);
                let w = phi - c;
                let v = 1.0 / (1.0 + b * w * w);
                let vp = -2.0 * b * w * v * v;
                let vpp = -2.0 * b * v * v + 8.0 * b * b * w * w * v * v * v;
                let g = o * o * o + a * u * v;
                let gp = -3.0 * o * o + a * (up * v + u * vp);
                let gpp = 6.0 * o + a * (upp * v + 2.0 * up * vp + u * vpp);
                (g, gp, gpp)
            }
        }
    }

    /// Degradation value alone.
    pub fn degradation(&self, phi: f64) -> f64 {
        self.degradation_triple(phi).0
    }
}

/// `ln J` from the in-plane right Cauchy-Green tensor under the convention
/// that out-of-plane stretches are one: `J^2 = det_3 C = det_2 C`.
fn ln_j<T: Field>(c: &SymTensor2<T>) -> T {
    c.det_in_plane().ln() * T::from_re(0.5)
}

/// Hyperelastic strain-energy density (undegraded, per reference volume).
pub fn hyperelastic_energy<T: Field>(mat: &Material, e: &SymTensor2<T>) -> T {
    match mat.elasticity {
        Elasticity::LinearSpring => {
            // psi = 1/2 E_Y E : E (axial spring; meaningful for rods)
            e.ddot(e) * T::from_re(0.5 * mat.youngs_modulus)
        }
        Elasticity::NeoHookean => {
            let c = right_cauchy_green(e);
            let mu = mat.mu();
            let lambda = mat.lambda_eff();
            // tr_3 C = in-plane trace + one per suppressed direction
            let pad = match e.dim() {
                Dim::One => 2.0,
                Dim::Two => 1.0,
            };
            let tr3 = c.trace_in_plane() + T::from_re(pad);
            let lnj = ln_j(&c);
            (tr3 - T::from_re(3.0)) * T::from_re(0.5 * mu) - lnj * T::from_re(mu)
                + lnj * lnj * T::from_re(0.5 * lambda)
        }
    }
}

/// Hyperelastic second Piola-Kirchhoff stress (undegraded).
pub fn hyperelastic_stress<T: Field>(mat: &Material, e: &SymTensor2<T>) -> SymTensor2<T> {
    match mat.elasticity {
        Elasticity::LinearSpring => e.scale(T::from_re(mat.youngs_modulus)),
        Elasticity::NeoHookean => {
            let c = right_cauchy_green(e);
            let c_inv = c.inverse();
            let mu = mat.mu();
            let lambda = mat.lambda_eff();
            let lnj = ln_j(&c);
            (SymTensor2::identity(e.dim()) - c_inv).scale(T::from_re(mu))
                + c_inv.scale(lnj * T::from_re(lambda))
        }
    }
}

/// Memory modulus tensor `A(E)` in plain Voigt components.
pub fn memory_modulus_tensor<T: Field>(mat: &Material, e: &SymTensor2<T>) -> Tensor4<T> {
    let dim = e.dim();
    match mat.memory_form {
        MemoryForm::Scalar => Tensor4::identity_sym(dim).scale(T::from_re(mat.memory_modulus)),
        MemoryForm::Axial => {
            let mut a = Tensor4::zero(dim);
            a.set(0, 0, T::from_re(mat.memory_modulus));
            a
        }
        MemoryForm::Full => {
            let c = right_cauchy_green(e);
            let ci = c.inverse();
            let lm = mat.memory_lambda_eff();
            let mm = mat.memory_mu();
            let lnj = ln_j(&c);
            let coef = (T::from_re(mm) - lnj * T::from_re(lm)) * T::from_re(2.0);
            let mut a = Tensor4::dyad(&ci, &ci).scale(T::from_re(lm));
            match dim {
                Dim::One => {
                    let v = a.get(0, 0) + ci[0] * ci[0] * coef;
                    a.set(0, 0, v);
                }
                Dim::Two => {
                    // I_{C^-1}[p][q] = 1/2 (Ci_ik Ci_jl + Ci_il Ci_jk) in
                    // plain Voigt slots (11, 22, 12).
                    let (c0, c1, c2) = (ci[0], ci[1], ci[2]);
                    let half = T::from_re(0.5);
                    let i_ci = [
                        [c0 * c0, c2 * c2, c0 * c2],
                        [c2 * c2, c1 * c1, c1 * c2],
                        [c0 * c2, c1 * c2, (c0 * c1 + c2 * c2) * half],
                    ];
                    for p in 0..3 {
                        for q in 0..3 {
                            let v = a.get(p, q) + i_ci[p][q] * coef;
                            a.set(p, q, v);
                        }
                    }
                }
            }
            a
        }
    }
}

/// Derivative of the memory modulus with respect to one plain Voigt strain
/// slot.
///
/// On the real path this is a complex-step derivative (machine accurate).
/// When the surrounding evaluation is itself complex — i.e. inside the
/// tangent's own complex step — a second imaginary unit is not available, so
/// a real central difference through the complex function is used instead.
pub fn modulus_strain_derivative<T: Field>(
    mat: &Material,
    e: &SymTensor2<T>,
    slot: usize,
) -> Tensor4<T> {
    if T::HAS_IMAG {
        let h = T::from_re(CENTRAL_STEP);
        let mut ep = *e;
        ep[slot] += h;
        let mut em = *e;
        em[slot] -= h;
        let ap = memory_modulus_tensor(mat, &ep);
        let am = memory_modulus_tensor(mat, &em);
        (ap + am.scale(T::from_re(-1.0))).scale(T::from_re(0.5 / CENTRAL_STEP))
    } else {
        let mut ec = e.map(|x| Complex64::new(x.re(), 0.0));
        ec[slot] += Complex64::new(0.0, COMPLEX_STEP);
        let ac = memory_modulus_tensor(mat, &ec);
        ac.map(|z| T::from_re(z.im / COMPLEX_STEP))
    }
}

/// Everything the stress evaluation needs about the current quadrature point.
///
/// `strain` is the provisional Green-Lagrange strain of the Newton iterate at
/// the end of the step being solved; `history` holds only committed samples.
/// `damage` and `damage_grad` are frozen at their staggered-scheme values.
#[derive(Clone, Copy)]
pub struct StressState<'a, T: Field> {
    pub strain: SymTensor2<T>,
    pub strain_rate: SymTensor2<T>,
    pub damage: f64,
    pub damage_grad: [f64; 2],
    pub history: &'a StrainHistory,
    pub coeffs: &'a G1Coefficients,
    /// Precomputed history part of the Caputo sum,
    /// `sum_{m=1}^{n} A_{m+1} E_{n+1-m}` — everything except the tip term.
    /// The assembler computes it once per step per quadrature point so each
    /// stress evaluation costs O(1) instead of O(steps); `None` falls back
    /// to the full sum.
    pub caputo_tail: Option<SymTensor2<f64>>,
}

impl<'a, T: Field> StressState<'a, T> {
    /// Convenience constructor for a quiescent point (no rate, no damage).
    pub fn simple(
        strain: SymTensor2<T>,
        history: &'a StrainHistory,
        coeffs: &'a G1Coefficients,
    ) -> Self {
        Self {
            strain,
            strain_rate: SymTensor2::zero(strain.dim()),
            damage: 0.0,
            damage_grad: [0.0; 2],
            history,
            coeffs,
            caputo_tail: None,
        }
    }
}

/// The history part of the G1 Caputo sum at the next step,
/// `sum_{m=1}^{n} A_{m+1} E_{n+1-m}` (no `dt^-alpha` scaling, no tip term).
pub fn caputo_history_tail(history: &StrainHistory, coeffs: &G1Coefficients) -> SymTensor2<f64> {
    let n = history.steps();
    let samples = history.samples();
    let mut acc = SymTensor2::zero(history.dim());
    for m in 1..=n {
        acc = acc + samples[n + 1 - m].scale(coeffs.coeff(m));
    }
    acc
}

/// Second Piola-Kirchhoff stress in plain Voigt components.
pub fn second_piola<T: Field>(
    mat: &Material,
    mode: StressMode,
    st: &StressState<'_, T>,
) -> SymTensor2<T> {
    debug_assert!(
        (st.coeffs.alpha() - mat.alpha).abs() < 1e-14,
        "coefficient table was built for a different fractional order"
    );
    let dim = st.strain.dim();
    let g = mat.degradation(st.damage);

    // Degraded hyperelastic part.
    let mut s = hyperelastic_stress(mat, &st.strain).scale(T::from_re(g));

    // Linear rate term theta_0 * b * Edot.
    let tb = mat.reference_temperature * mat.rate_coefficient;
    if tb != 0.0 {
        s = s + st.strain_rate.scale(T::from_re(tb));
    }

    // Damage-gradient stress -gc gamma (C^-1 grad phi)(x)(C^-1 grad phi).
    if st.damage_grad.iter().any(|&v| v != 0.0) {
        let c_inv = right_cauchy_green(&st.strain).inverse();
        let w = c_inv.apply(&[
            T::from_re(st.damage_grad[0]),
            T::from_re(st.damage_grad[1]),
        ]);
        s = s - SymTensor2::outer(dim, &w).scale(T::from_re(mat.gc() * mat.layer_width));
    }

    // Fractional memory stress G * A(E) : D^a E.
    if mat.memory_modulus != 0.0 {
        let a = memory_modulus_tensor(mat, &st.strain);
        let d_alpha = match &st.caputo_tail {
            Some(tail) => {
                let scale = T::from_re(st.history.dt().powf(-mat.alpha));
                (st.strain + tail.map(T::from_re)).scale(scale)
            }
            None => caputo_with_provisional(st.history, &st.strain, st.coeffs),
        };
        s = s + a.ddot_sym(&d_alpha).scale(T::from_re(g));

        if mode == StressMode::Complete {
            s = s + modulus_gradient_stress(mat, st).scale(T::from_re(g));
        }
    }
    s
}

/// The `dA/dE` part of the complete-mode memory stress:
///
/// ```text
/// kappa [ X(E_t - E_0) / t^a + a int_0^t X(E_t - E_tau) (t-tau)^-(1+a) dtau ]
/// ```
///
/// where per plain Voigt slot `q`, `X_q(x) = x : dA/dE_q : x`, and the slot-3
/// entry is halved because the stored component represents both off-diagonal
/// strain entries.
fn modulus_gradient_stress<T: Field>(mat: &Material, st: &StressState<'_, T>) -> SymTensor2<T> {
    let dim = st.strain.dim();
    let n = st.history.steps();
    let dt = st.history.dt();
    let t_next = (n + 1) as f64 * dt;
    let alpha = mat.alpha;
    let e0 = st.history.samples()[0].map(T::from_re);

    let mut out = SymTensor2::zero(dim);
    for q in 0..dim.voigt_len() {
        let da = modulus_strain_derivative(mat, &st.strain, q);
        let x_q = |x: &SymTensor2<T>| da.quad_form(x, x);
        let boundary = x_q(&(st.strain - e0)) * T::from_re(t_next.powf(-alpha));
        let integral = singular_history_integral(
            st.history.samples(),
            &st.strain,
            dt,
            alpha,
            KernelFamily::OnePlusAlpha,
            x_q,
        );
        let mut val = (boundary + integral * T::from_re(alpha)) * T::from_re(kappa(alpha));
        if dim == Dim::Two && q == 2 {
            val *= T::from_re(0.5);
        }
        out[q] = val;
    }
    out
}

/// Consistent tangent `dS/dE` by the complex-step method, returned with
/// plain-component rows and engineering-strain columns (the layout the
/// element stiffness `B^T F^T D F B` contracts against).
///
/// The strain rate is held fixed during differentiation: its Newmark
/// sensitivity would multiply the rate coefficient `b`, which is zero in
/// every shipped configuration, and the Newton loop tolerates the mild
/// inconsistency otherwise. The result is symmetrized, which removes
/// second-order complex-step noise and the asymmetry of the nested finite
/// differences in complete mode.
pub fn tangent_stiffness(
    mat: &Material,
    mode: StressMode,
    st: &StressState<'_, f64>,
) -> Tensor4<f64> {
    let dim = st.strain.dim();
    let nv = dim.voigt_len();
    let mut d = Tensor4::zero(dim);
    for q in 0..nv {
        let mut e_c = st.strain.map(|x| Complex64::new(x, 0.0));
        e_c[q] += Complex64::new(0.0, COMPLEX_STEP);
        let st_c = StressState {
            strain: e_c,
            strain_rate: st.strain_rate.map(|x| Complex64::new(x, 0.0)),
            damage: st.damage,
            damage_grad: st.damage_grad,
            history: st.history,
            coeffs: st.coeffs,
            caputo_tail: st.caputo_tail,
        };
        let s_c = second_piola(mat, mode, &st_c);
        // Engineering column: d(stored slot)/dE12 is twice the derivative
        // with respect to the engineering shear 2*E12.
        let col_scale = if dim == Dim::Two && q == 2 { 0.5 } else { 1.0 };
        for p in 0..nv {
            d.set(p, q, s_c.voigt()[p].im / COMPLEX_STEP * col_scale);
        }
    }
    d.symmetrized()
}

/// Undegraded driving energy for the damage equation at the committed state:
/// hyperelastic energy plus the memory potential, both per reference volume.
pub fn driving_energy(
    mat: &Material,
    history: &StrainHistory,
) -> Result<f64, crate::fractional::FractionalError> {
    let psi_h = hyperelastic_energy(mat, history.last());
    let psi_m = if mat.memory_modulus != 0.0 {
        crate::fractional::memory_potential(history, mat.alpha, |e| {
            memory_modulus_tensor(mat, e)
        })?
    } else {
        0.0
    };
    Ok(psi_h + psi_m)
}

/// Entropy production of the memory stress at the committed state, scaled by
/// the current degradation value.
pub fn entropy_production(
    mat: &Material,
    history: &StrainHistory,
    phi: f64,
) -> Result<f64, crate::fractional::FractionalError> {
    if mat.memory_modulus == 0.0 {
        return Ok(0.0);
    }
    crate::fractional::r_term(history, mat.alpha, mat.degradation(phi), |e| {
        memory_modulus_tensor(mat, e)
    })
}
