//! Fractional-order viscoelasticity: Caputo derivatives on uniform grids,
//! the stored "memory" free-energy density, and the entropy-production term.
//!
//! The Caputo derivative of order `alpha` in `(0, 1)` is discretized with the
//! G1 algorithm (a Grunwald-Letnikov-type expansion, valid for histories that
//! start at zero):
//!
//! ```text
//! D^a f(t) ~= dt^(-a) * sum_{m=0}^{N-1} A_{m+1} f(t - m dt)
//! ```
//!
//! with `A_1 = 1` and `A_{m+1} = (m - 1 - a)/m * A_m`. The memory potential
//! and its entropy-production companion are weakly singular history integrals;
//! they are integrated with an exact-kernel product rule (midpoint value of
//! the smooth factor times the analytically integrated kernel) and a local
//! quadratic model on the subinterval that touches the singularity.

use crate::field::Field;
use crate::special::{gamma, ln_gamma, ln_gamma_ratio};
use crate::tensor::{Dim, SymTensor2, Tensor4};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FractionalError {
    #[error("fractional order alpha must lie strictly inside (0, 1), got {0}")]
    AlphaOutOfRange(f64),
    #[error("time step must be positive and finite, got {0}")]
    BadTimeStep(f64),
    #[error(
        "memory modulus tensor must be symmetric positive-semidefinite \
         (min eigenvalue {0:.3e}); material data is invalid"
    )]
    IndefiniteModulus(f64),
}

/// Grunwald coefficients `A_{m+1}` of the G1 algorithm, grown on demand.
#[derive(Clone, Debug)]
pub struct G1Coefficients {
    alpha: f64,
    a: Vec<f64>,
}

impl G1Coefficients {
    pub fn new(alpha: f64) -> Result<Self, FractionalError> {
        if !(alpha > 0.0 && alpha < 1.0) || !alpha.is_finite() {
            return Err(FractionalError::AlphaOutOfRange(alpha));
        }
        Ok(Self {
            alpha,
            a: vec![1.0],
        })
    }

    pub fn with_len(alpha: f64, n: usize) -> Result<Self, FractionalError> {
        let mut c = Self::new(alpha)?;
        c.ensure(n);
        Ok(c)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Grow the table so `coeff(m)` is available for `m < n`.
    pub fn ensure(&mut self, n: usize) {
        while self.a.len() < n {
            let m = self.a.len() as f64; // recurrence index of the new entry
            let prev = *self.a.last().expect("seeded with A_1");
            self.a.push(prev * (m - 1.0 - self.alpha) / m);
        }
    }

    /// `A_{m+1}` from the recursive product form.
    pub fn coeff(&self, m: usize) -> f64 {
        self.a[m]
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// `A_{m+1}` from the closed Gamma-ratio form
    /// `Gamma(m - a) / (Gamma(-a) Gamma(m + 1))`, evaluated in log space so
    /// it stays finite for large `m`. Used as the independent cross-check of
    /// the recurrence.
    pub fn closed_form(alpha: f64, m: usize) -> f64 {
        if m == 0 {
            return 1.0;
        }
        // Gamma(-a) = Gamma(1 - a) / (-a) turns the ratio into one of
        // positive-argument Gammas with an explicit sign. The two large logs
        // enter as ln Gamma((m+1) - (1+a)) - ln Gamma(m+1), evaluated by the
        // cancellation-free ratio helper so neither `m - a` nor the huge
        // individual logs are ever formed.
        let m_f = m as f64;
        -alpha * (ln_gamma_ratio(m_f + 1.0, 1.0 + alpha) - ln_gamma(1.0 - alpha)).exp()
    }
}

/// Append-only strain record of one quadrature point on a uniform time grid.
///
/// The sample at `t = 0` is pinned to zero: the G1 expansion drops the
/// history-start term, which is exact only for quantities that start from
/// rest.
#[derive(Clone, Debug)]
pub struct StrainHistory {
    dt: f64,
    samples: Vec<SymTensor2<f64>>,
}

impl StrainHistory {
    pub fn new(dim: Dim, dt: f64) -> Result<Self, FractionalError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(FractionalError::BadTimeStep(dt));
        }
        Ok(Self {
            dt,
            samples: vec![SymTensor2::zero(dim)],
        })
    }

    pub fn push(&mut self, e: SymTensor2<f64>) {
        debug_assert_eq!(e.dim(), self.dim());
        self.samples.push(e);
    }

    pub fn dim(&self) -> Dim {
        self.samples[0].dim()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of completed steps (samples minus the seed).
    pub fn steps(&self) -> usize {
        self.samples.len() - 1
    }

    /// Time of the newest sample.
    pub fn t_end(&self) -> f64 {
        self.steps() as f64 * self.dt
    }

    pub fn samples(&self) -> &[SymTensor2<f64>] {
        &self.samples
    }

    pub fn last(&self) -> &SymTensor2<f64> {
        self.samples.last().expect("history is never empty")
    }

    /// Copy of the history with the newest sample dropped. Post-processing
    /// uses it to evaluate stresses whose conventions treat the newest
    /// strain as provisional after it has already been committed.
    ///
    /// Panics if no step has been taken yet.
    pub fn truncated(&self) -> Self {
        assert!(self.steps() > 0, "cannot truncate the seed sample");
        Self {
            dt: self.dt,
            samples: self.samples[..self.samples.len() - 1].to_vec(),
        }
    }

    /// Re-grid onto half the step size by linear interpolation. Used when the
    /// solver rejects a step and shrinks `dt`: the G1 grid must stay uniform,
    /// so the record is resampled (an O(dt^2) approximation, consistent with
    /// the scheme order).
    pub fn refine_halve(&mut self) {
        let mut fine = Vec::with_capacity(self.samples.len() * 2 - 1);
        for k in 0..self.samples.len() - 1 {
            let a = self.samples[k];
            let b = self.samples[k + 1];
            fine.push(a);
            fine.push((a + b).scale(0.5));
        }
        fine.push(*self.samples.last().unwrap());
        self.samples = fine;
        self.dt *= 0.5;
    }
}

/// G1 approximation of the Caputo derivative at the newest history sample.
///
/// `coeffs` must carry at least `history.steps()` entries and share the
/// fractional order with the caller's intent; the scenario driver grows the
/// table once up front.
pub fn caputo_g1(history: &StrainHistory, coeffs: &G1Coefficients) -> SymTensor2<f64> {
    let n = history.steps();
    let mut acc = SymTensor2::zero(history.dim());
    if n == 0 {
        return acc;
    }
    assert!(coeffs.len() >= n, "coefficient table too short");
    let samples = history.samples();
    for m in 0..n {
        acc = acc + samples[n - m].scale(coeffs.coeff(m));
    }
    acc.scale(history.dt().powf(-coeffs.alpha()))
}

/// G1 Caputo derivative at `t_end + dt` with a provisional newest sample:
/// the form Newton iterations use while the step is still being solved
/// (the stored history stays frozen; `e_next` is the current iterate).
pub fn caputo_with_provisional<T: Field>(
    history: &StrainHistory,
    e_next: &SymTensor2<T>,
    coeffs: &G1Coefficients,
) -> SymTensor2<T> {
    let n = history.steps();
    assert!(coeffs.len() >= n + 1, "coefficient table too short");
    let samples = history.samples();
    let mut acc = *e_next; // A_1 = 1
    for m in 1..=n {
        let s = samples[n + 1 - m].map(T::from_re);
        acc = acc + s.scale(T::from_re(coeffs.coeff(m)));
    }
    acc.scale(T::from_re(history.dt().powf(-coeffs.alpha())))
}

/// Prefactor `kappa = 1 / (2 Gamma(1 - alpha))` shared by the memory
/// potential, the entropy-production term, and the modulus-gradient stress.
pub fn kappa(alpha: f64) -> f64 {
    0.5 / gamma(1.0 - alpha)
}

/// Which weakly singular kernel a history integral carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum KernelFamily {
    /// `(t - tau)^-(1+alpha)` — memory potential and stress extras.
    OnePlusAlpha,
    /// `(t - tau)^-(2+alpha)` — entropy production.
    TwoPlusAlpha,
}

/// Product-rule quadrature of `int_0^t q(E_t - E(tau)) k(t - tau) dtau` on
/// the uniform grid: `past` holds nodes `0..past.len()-1`, `e_t` sits at node
/// `past.len()`, so `t = past.len() * dt`.
///
/// Interior subintervals evaluate the smooth factor at the midpoint of the
/// piecewise-linear strain record and multiply by the exactly integrated
/// kernel. On the final subinterval (which touches the singularity) the
/// smooth factor vanishes quadratically, `q(tau) ~= q0 (t - tau)^2`, and the
/// product is integrated in closed form.
pub(crate) fn singular_history_integral<T: Field>(
    past: &[SymTensor2<f64>],
    e_t: &SymTensor2<T>,
    dt: f64,
    alpha: f64,
    kernel: KernelFamily,
    q_form: impl Fn(&SymTensor2<T>) -> T,
) -> T {
    let n = past.len();
    if n == 0 {
        return T::zero();
    }
    let t = n as f64 * dt;
    let expo = match kernel {
        KernelFamily::OnePlusAlpha => alpha,
        KernelFamily::TwoPlusAlpha => 1.0 + alpha,
    };
    let mut acc = T::zero();
    // Interior subintervals [tau_k, tau_{k+1}], k = 0 .. n-2.
    for k in 0..n.saturating_sub(1) {
        let mid = (past[k] + past[k + 1]).scale(0.5).map(T::from_re);
        let de = *e_t - mid;
        let s0 = t - k as f64 * dt; // t - tau_k
        let s1 = t - (k + 1) as f64 * dt; // t - tau_{k+1}
        let w = (s1.powf(-expo) - s0.powf(-expo)) / expo;
        acc += q_form(&de) * T::from_re(w);
    }
    // Final subinterval [t - dt, t]: q ~= q0 (t - tau)^2.
    let de_last = *e_t - past[n - 1].map(T::from_re);
    let q0 = q_form(&de_last) * T::from_re(1.0 / (dt * dt));
    let closing = match kernel {
        KernelFamily::OnePlusAlpha => dt.powf(2.0 - alpha) / (2.0 - alpha),
        KernelFamily::TwoPlusAlpha => dt.powf(1.0 - alpha) / (1.0 - alpha),
    };
    acc + q0 * T::from_re(closing)
}

/// Verify the memory modulus is symmetric positive-semidefinite in the sense
/// the quadratic form uses it (its plain Voigt matrix must be PSD).
fn validate_modulus(a: &Tensor4<f64>) -> Result<(), FractionalError> {
    let nv = a.dim().voigt_len();
    let mut scale = 0.0_f64;
    for p in 0..nv {
        for q in 0..nv {
            scale = scale.max(a.get(p, q).abs());
            let asym = (a.get(p, q) - a.get(q, p)).abs();
            if asym > 1e-10 * scale.max(1.0) {
                return Err(FractionalError::IndefiniteModulus(f64::NAN));
            }
        }
    }
    let tol = -1e-10 * scale.max(1.0);
    let min_eig = match a.dim() {
        Dim::One => a.get(0, 0),
        Dim::Two => {
            let m = nalgebra::Matrix3::from_fn(|r, c| a.get(r, c));
            m.symmetric_eigen().eigenvalues.min()
        }
    };
    if min_eig < tol {
        return Err(FractionalError::IndefiniteModulus(min_eig));
    }
    Ok(())
}

/// Volumetric memory free-energy density `rho psi_m` of the newest history
/// state:
///
/// ```text
/// rho psi_m = kappa [ Q(E_t - E_0)/t^a
///                     + a int_0^t Q(E_t - E_tau)/(t - tau)^(1+a) dtau ],
/// kappa = 1 / (2 Gamma(1 - a)),   Q(x) = x : A : x
/// ```
///
/// The modulus tensor is evaluated once at the current strain, `A = A(E_t)`.
/// The 1/rho bookkeeping stays with the caller: this returns an energy per
/// unit reference volume, the form the damage driving force consumes.
pub fn memory_potential(
    history: &StrainHistory,
    alpha: f64,
    a_of_e: impl Fn(&SymTensor2<f64>) -> Tensor4<f64>,
) -> Result<f64, FractionalError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(FractionalError::AlphaOutOfRange(alpha));
    }
    let n = history.steps();
    if n == 0 {
        return Ok(0.0);
    }
    let e_t = *history.last();
    let a = a_of_e(&e_t);
    validate_modulus(&a)?;
    let q = |x: &SymTensor2<f64>| a.quad_form(x, x);
    let t = history.t_end();
    let boundary = q(&(e_t - history.samples()[0])) * t.powf(-alpha);
    let integral = singular_history_integral(
        &history.samples()[..n],
        &e_t,
        history.dt(),
        alpha,
        KernelFamily::OnePlusAlpha,
        q,
    );
    Ok(kappa(alpha) * (boundary + alpha * integral))
}

/// Volumetric entropy-production density of the memory stress,
///
/// ```text
/// rho R = a G_m kappa [ Q(E_t - E_0)/t^(1+a)
///                       + (1+a) int_0^t Q(E_t - E_tau)/(t - tau)^(2+a) dtau ]
/// ```
///
/// with the same `Q` and `kappa` as [`memory_potential`]. `g_m` is the current
/// degradation value so the caller controls how damage scales dissipation.
/// Non-negative for any positive-semidefinite modulus — the solver asserts
/// this at every accepted step as a thermodynamic sanity check.
pub fn r_term(
    history: &StrainHistory,
    alpha: f64,
    g_m: f64,
    a_of_e: impl Fn(&SymTensor2<f64>) -> Tensor4<f64>,
) -> Result<f64, FractionalError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(FractionalError::AlphaOutOfRange(alpha));
    }
    let n = history.steps();
    if n == 0 {
        return Ok(0.0);
    }
    let e_t = *history.last();
    let a = a_of_e(&e_t);
    validate_modulus(&a)?;
    let q = |x: &SymTensor2<f64>| a.quad_form(x, x);
    let t = history.t_end();
    let boundary = q(&(e_t - history.samples()[0])) * t.powf(-(1.0 + alpha));
    let integral = singular_history_integral(
        &history.samples()[..n],
        &e_t,
        history.dt(),
        alpha,
        KernelFamily::TwoPlusAlpha,
        q,
    );
    Ok(alpha * g_m * kappa(alpha) * (boundary + (1.0 + alpha) * integral))
}
