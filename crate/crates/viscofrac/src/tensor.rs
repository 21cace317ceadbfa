//! Small symmetric tensor algebra in Voigt storage.
//!
//! The simulator works in one or two space dimensions with a total Lagrangian
//! kinematic description. Symmetric second-order tensors (Green-Lagrange
//! strain `E`, right Cauchy-Green tensor `C`, second Piola-Kirchhoff stress
//! `S`) are stored in Voigt order `[T11]` (1-D) or `[T11, T22, T12]` (2-D)
//! with *plain* tensor components — no engineering-shear doubling in storage.
//! The doubling appears only inside contractions, where it belongs.
//!
//! Everything is generic over [`Field`] so the same expressions evaluate on
//! complex-perturbed arguments during complex-step differentiation.

use crate::field::Field;
use serde::{Deserialize, Serialize};
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

/// Spatial dimension of the model (1-D bar or 2-D plane problem).
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum Dim {
    One,
    Two,
}

impl Dim {
    /// Number of Voigt slots of a symmetric second-order tensor.
    pub fn voigt_len(self) -> usize {
        match self {
            Dim::One => 1,
            Dim::Two => 3,
        }
    }

    /// Number of coordinate directions.
    pub fn coords(self) -> usize {
        match self {
            Dim::One => 1,
            Dim::Two => 2,
        }
    }
}

/// Symmetric second-order tensor in Voigt storage.
///
/// Unused slots of the 1-D case are kept at zero so the arithmetic can stay
/// branch-free.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymTensor2<T: Field> {
    dim: Dim,
    v: [T; 3],
}

impl<T: Field> SymTensor2<T> {
    pub fn zero(dim: Dim) -> Self {
        Self {
            dim,
            v: [T::zero(); 3],
        }
    }

    /// Second-order identity.
    pub fn identity(dim: Dim) -> Self {
        let mut t = Self::zero(dim);
        t.v[0] = T::one();
        if dim == Dim::Two {
            t.v[1] = T::one();
        }
        t
    }

    /// Build from a Voigt slice (`[T11]` or `[T11, T22, T12]`).
    pub fn from_voigt(dim: Dim, slots: &[T]) -> Self {
        assert_eq!(slots.len(), dim.voigt_len(), "Voigt slot count mismatch");
        let mut t = Self::zero(dim);
        t.v[..slots.len()].copy_from_slice(slots);
        t
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    /// Voigt components as a slice of the active slots.
    pub fn voigt(&self) -> &[T] {
        &self.v[..self.dim.voigt_len()]
    }

    /// Full 2x2 (or 1x1) matrix representation; the symmetric off-diagonal
    /// entry is duplicated.
    pub fn to_matrix(&self) -> [[T; 2]; 2] {
        match self.dim {
            Dim::One => [[self.v[0], T::zero()], [T::zero(), T::zero()]],
            Dim::Two => [[self.v[0], self.v[2]], [self.v[2], self.v[1]]],
        }
    }

    pub fn from_matrix_sym(dim: Dim, m: &[[T; 2]; 2]) -> Self {
        match dim {
            Dim::One => Self::from_voigt(dim, &[m[0][0]]),
            Dim::Two => Self::from_voigt(dim, &[m[0][0], m[1][1], m[0][1]]),
        }
    }

    pub fn map<U: Field>(&self, f: impl Fn(T) -> U) -> SymTensor2<U> {
        SymTensor2 {
            dim: self.dim,
            v: [f(self.v[0]), f(self.v[1]), f(self.v[2])],
        }
    }

    /// In-plane trace `T11 (+ T22)`. Out-of-plane bookkeeping is the
    /// constitutive layer's business.
    pub fn trace_in_plane(&self) -> T {
        match self.dim {
            Dim::One => self.v[0],
            Dim::Two => self.v[0] + self.v[1],
        }
    }

    /// In-plane determinant.
    pub fn det_in_plane(&self) -> T {
        match self.dim {
            Dim::One => self.v[0],
            Dim::Two => self.v[0] * self.v[1] - self.v[2] * self.v[2],
        }
    }

    /// Inverse of the in-plane block (the tensor must be invertible there).
    pub fn inverse(&self) -> Self {
        match self.dim {
            Dim::One => Self::from_voigt(self.dim, &[T::one() / self.v[0]]),
            Dim::Two => {
                let det = self.det_in_plane();
                Self::from_voigt(
                    self.dim,
                    &[self.v[1] / det, self.v[0] / det, -self.v[2] / det],
                )
            }
        }
    }

    /// Full double contraction `A : B` (the shear slot counts twice).
    pub fn ddot(&self, other: &Self) -> T {
        debug_assert_eq!(self.dim, other.dim);
        match self.dim {
            Dim::One => self.v[0] * other.v[0],
            Dim::Two => {
                self.v[0] * other.v[0]
                    + self.v[1] * other.v[1]
                    + (self.v[2] * other.v[2] + self.v[2] * other.v[2])
            }
        }
    }

    /// Matrix-vector product with a coordinate vector.
    pub fn apply(&self, x: &[T; 2]) -> [T; 2] {
        match self.dim {
            Dim::One => [self.v[0] * x[0], T::zero()],
            Dim::Two => [
                self.v[0] * x[0] + self.v[2] * x[1],
                self.v[2] * x[0] + self.v[1] * x[1],
            ],
        }
    }

    /// Symmetric outer product `w (x) w` of a coordinate vector.
    pub fn outer(dim: Dim, w: &[T; 2]) -> Self {
        match dim {
            Dim::One => Self::from_voigt(dim, &[w[0] * w[0]]),
            Dim::Two => Self::from_voigt(dim, &[w[0] * w[0], w[1] * w[1], w[0] * w[1]]),
        }
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|x| x * s)
    }

    /// Frobenius norm (real part based; used for tolerances and scaling).
    pub fn norm_re(&self) -> f64 {
        let mut acc = 0.0;
        for (i, x) in self.voigt().iter().enumerate() {
            let w = if i == 2 { 2.0 } else { 1.0 };
            acc += w * x.re() * x.re();
        }
        acc.sqrt()
    }
}

impl<T: Field> Index<usize> for SymTensor2<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.v[..self.dim.voigt_len()][i]
    }
}

impl<T: Field> IndexMut<usize> for SymTensor2<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.v[..self.dim.voigt_len()][i]
    }
}

impl<T: Field> Add for SymTensor2<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        debug_assert_eq!(self.dim, rhs.dim);
        Self {
            dim: self.dim,
            v: [
                self.v[0] + rhs.v[0],
                self.v[1] + rhs.v[1],
                self.v[2] + rhs.v[2],
            ],
        }
    }
}

impl<T: Field> Sub for SymTensor2<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        debug_assert_eq!(self.dim, rhs.dim);
        Self {
            dim: self.dim,
            v: [
                self.v[0] - rhs.v[0],
                self.v[1] - rhs.v[1],
                self.v[2] - rhs.v[2],
            ],
        }
    }
}

impl<T: Field> Neg for SymTensor2<T> {
    type Output = Self;
    fn neg(self) -> Self {
        self.map(|x| -x)
    }
}

impl<T: Field> Mul<T> for SymTensor2<T> {
    type Output = Self;
    fn mul(self, rhs: T) -> Self {
        self.scale(rhs)
    }
}

/// Fourth-order tensor with major and minor symmetries, stored as its Voigt
/// matrix of *plain* tensor components (`m[2][2] = A_1212` in 2-D, not
/// `4 A_1212`). Contractions insert the shear factors explicitly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tensor4<T: Field> {
    dim: Dim,
    m: [[T; 3]; 3],
}

impl<T: Field> Tensor4<T> {
    pub fn zero(dim: Dim) -> Self {
        Self {
            dim,
            m: [[T::zero(); 3]; 3],
        }
    }

    /// Symmetric fourth-order identity: `I : E = E` for symmetric `E`.
    pub fn identity_sym(dim: Dim) -> Self {
        let mut t = Self::zero(dim);
        t.m[0][0] = T::one();
        if dim == Dim::Two {
            t.m[1][1] = T::one();
            t.m[2][2] = T::from_re(0.5);
        }
        t
    }

    /// Dyadic product `a (x) b` of two symmetric second-order tensors.
    pub fn dyad(a: &SymTensor2<T>, b: &SymTensor2<T>) -> Self {
        debug_assert_eq!(a.dim(), b.dim());
        let n = a.dim().voigt_len();
        let mut t = Self::zero(a.dim());
        for p in 0..n {
            for q in 0..n {
                t.m[p][q] = a[p] * b[q];
            }
        }
        t
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn get(&self, p: usize, q: usize) -> T {
        self.m[p][q]
    }

    pub fn set(&mut self, p: usize, q: usize, x: T) {
        self.m[p][q] = x;
    }

    pub fn map<U: Field>(&self, f: impl Fn(T) -> U) -> Tensor4<U> {
        let mut t = Tensor4::zero(self.dim);
        for p in 0..3 {
            for q in 0..3 {
                t.m[p][q] = f(self.m[p][q]);
            }
        }
        t
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|x| x * s)
    }

    /// Double contraction with a symmetric tensor: `(A : E)_p`.
    pub fn ddot_sym(&self, e: &SymTensor2<T>) -> SymTensor2<T> {
        debug_assert_eq!(self.dim, e.dim());
        match self.dim {
            Dim::One => SymTensor2::from_voigt(self.dim, &[self.m[0][0] * e[0]]),
            Dim::Two => {
                let two = T::from_re(2.0);
                let mut out = [T::zero(); 3];
                for (p, o) in out.iter_mut().enumerate() {
                    *o = self.m[p][0] * e[0] + self.m[p][1] * e[1] + two * self.m[p][2] * e[2];
                }
                SymTensor2::from_voigt(self.dim, &out)
            }
        }
    }

    /// Quadratic form `a : A : b`.
    pub fn quad_form(&self, a: &SymTensor2<T>, b: &SymTensor2<T>) -> T {
        a.ddot(&self.ddot_sym(b))
    }

    /// Symmetrize across the major (Voigt) diagonal.
    pub fn symmetrized(&self) -> Self {
        let half = T::from_re(0.5);
        let mut t = *self;
        for p in 0..3 {
            for q in (p + 1)..3 {
                let avg = (self.m[p][q] + self.m[q][p]) * half;
                t.m[p][q] = avg;
                t.m[q][p] = avg;
            }
        }
        t
    }

    /// Largest relative asymmetry across the major diagonal (real parts).
    pub fn asymmetry_re(&self) -> f64 {
        let mut num = 0.0_f64;
        let mut den = 0.0_f64;
        for p in 0..3 {
            for q in 0..3 {
                den = den.max(self.m[p][q].re().abs());
                num = num.max((self.m[p][q].re() - self.m[q][p].re()).abs());
            }
        }
        if den == 0.0 {
            0.0
        } else {
            num / den
        }
    }
}

impl<T: Field> Add for Tensor4<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        debug_assert_eq!(self.dim, rhs.dim);
        let mut t = self;
        for p in 0..3 {
            for q in 0..3 {
                t.m[p][q] = self.m[p][q] + rhs.m[p][q];
            }
        }
        t
    }
}

/// In-plane deformation gradient `F = I + grad(u)` (row index = component,
/// column index = reference coordinate).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeformationGradient<T: Field> {
    dim: Dim,
    f: [[T; 2]; 2],
}

impl<T: Field> DeformationGradient<T> {
    /// Build from the displacement gradient `grad(u)[i][j] = d u_i / d X_j`.
    pub fn from_grad_u(dim: Dim, grad_u: &[[T; 2]; 2]) -> Self {
        let mut f = *grad_u;
        f[0][0] += T::one();
        if dim == Dim::Two {
            f[1][1] += T::one();
        }
        Self { dim, f }
    }

    pub fn identity(dim: Dim) -> Self {
        Self::from_grad_u(dim, &[[T::zero(); 2]; 2])
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.f[i][j]
    }

    /// In-plane determinant. A non-positive real part flags an inverted
    /// element; the caller decides how to react (the solver rejects the step).
    pub fn det_in_plane(&self) -> T {
        match self.dim {
            Dim::One => self.f[0][0],
            Dim::Two => self.f[0][0] * self.f[1][1] - self.f[0][1] * self.f[1][0],
        }
    }
}

/// Green-Lagrange strain from the displacement gradient:
/// `E = (grad u + grad u^T + grad u^T grad u) / 2`.
pub fn green_lagrange<T: Field>(dim: Dim, g: &[[T; 2]; 2]) -> SymTensor2<T> {
    let half = T::from_re(0.5);
    match dim {
        Dim::One => {
            let e = g[0][0] + half * g[0][0] * g[0][0];
            SymTensor2::from_voigt(dim, &[e])
        }
        Dim::Two => {
            let e11 = g[0][0] + half * (g[0][0] * g[0][0] + g[1][0] * g[1][0]);
            let e22 = g[1][1] + half * (g[0][1] * g[0][1] + g[1][1] * g[1][1]);
            let e12 = half * (g[0][1] + g[1][0]) + half * (g[0][0] * g[0][1] + g[1][0] * g[1][1]);
            SymTensor2::from_voigt(dim, &[e11, e22, e12])
        }
    }
}

/// Right Cauchy-Green tensor `C = 2 E + I`.
pub fn right_cauchy_green<T: Field>(e: &SymTensor2<T>) -> SymTensor2<T> {
    let two = T::from_re(2.0);
    e.scale(two) + SymTensor2::identity(e.dim())
}

/// Deformation-gradient block matrix of the internal-force and stiffness
/// integrands (2-D form):
///
/// ```text
///        | F11   0   F21   0  |
/// Fbar = |  0   F12   0   F22 |
///        | F12  F11  F22  F21 |
/// ```
///
/// It maps the interleaved displacement-gradient vector
/// `[u1,1  u1,2  u2,1  u2,2]` to the engineering-shear Voigt strain variation
/// `[dE11, dE22, 2 dE12]`. The 1-D counterpart collapses to the scalar `F11`,
/// which the assembly inlines directly.
pub fn build_fbar<T: Field>(f: &DeformationGradient<T>) -> [[T; 4]; 3] {
    let z = T::zero();
    let (f11, f12, f21, f22) = (f.get(0, 0), f.get(0, 1), f.get(1, 0), f.get(1, 1));
    [
        [f11, z, f21, z],
        [z, f12, z, f22],
        [f12, f11, f22, f21],
    ]
}

/// Stress block matrix of the geometric stiffness (2-D form): block-diagonal
/// repetition of the 2x2 stress matrix,
///
/// ```text
///        | S11 S12  0   0  |
/// Sbar = | S12 S22  0   0  |
///        |  0   0  S11 S12 |
///        |  0   0  S12 S22 |
/// ```
///
/// The 1-D counterpart collapses to the scalar `S11`.
pub fn build_sbar<T: Field>(s: &SymTensor2<T>) -> [[T; 4]; 4] {
    let z = T::zero();
    let (s11, s22, s12) = (s[0], s[1], s[2]);
    [
        [s11, s12, z, z],
        [s12, s22, z, z],
        [z, z, s11, s12],
        [z, z, s12, s22],
    ]
}

/// Voigt stress column `[S11, S22, S12]` used against `Fbar`.
pub fn stress_voigt<T: Field>(s: &SymTensor2<T>) -> [T; 3] {
    match s.dim() {
        Dim::One => [s[0], T::zero(), T::zero()],
        Dim::Two => [s[0], s[1], s[2]],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Complex64;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn green_lagrange_picks_up_quadratic_term() {
        let g = [[0.1, 0.0], [0.0, 0.0]];
        let e = green_lagrange(Dim::Two, &g);
        assert_relative_eq!(e[0], 0.105, max_relative = 1e-15);
        assert_eq!(e[1], 0.0);
        assert_eq!(e[2], 0.0);
    }

    #[test]
    fn right_cauchy_green_of_zero_strain_is_identity() {
        let c = right_cauchy_green(&SymTensor2::<f64>::zero(Dim::Two));
        assert_eq!(c.voigt(), &[1.0, 1.0, 0.0]);
    }

    #[test]
    fn fbar_of_identity_and_diagonal_gradients() {
        let f = DeformationGradient::<f64>::identity(Dim::Two);
        assert_eq!(
            build_fbar(&f),
            [
                [1.0, 0.0, 0.0, 0.0],
                [0.0, 0.0, 0.0, 1.0],
                [0.0, 1.0, 1.0, 0.0]
            ]
        );
        // grad(u) = diag(1, 2) => F = diag(2, 3)
        let f = DeformationGradient::from_grad_u(Dim::Two, &[[1.0, 0.0], [0.0, 2.0]]);
        assert_eq!(
            build_fbar(&f),
            [
                [2.0, 0.0, 0.0, 0.0],
                [0.0, 0.0, 0.0, 3.0],
                [0.0, 2.0, 3.0, 0.0]
            ]
        );
    }

    #[test]
    fn sbar_block_layout() {
        let s = SymTensor2::from_voigt(Dim::Two, &[1.0, 2.0, 3.0]);
        assert_eq!(
            build_sbar(&s),
            [
                [1.0, 3.0, 0.0, 0.0],
                [3.0, 2.0, 0.0, 0.0],
                [0.0, 0.0, 1.0, 3.0],
                [0.0, 0.0, 3.0, 2.0]
            ]
        );
    }

    #[test]
    fn fbar_maps_gradient_vector_to_strain_variation() {
        // d(E) = sym(F^T grad w); check Fbar reproduces it with engineering
        // shear on the third slot.
        let g = [[0.02, -0.04], [0.05, 0.01]];
        let f = DeformationGradient::from_grad_u(Dim::Two, &g);
        let w = [[0.3, -0.2], [0.7, 0.4]]; // arbitrary test gradient
        let fbar = build_fbar(&f);
        let wv = [w[0][0], w[0][1], w[1][0], w[1][1]];
        let mut mapped = [0.0_f64; 3];
        for p in 0..3 {
            for q in 0..4 {
                mapped[p] += fbar[p][q] * wv[q];
            }
        }
        // Reference: d(E)_ij = (F_ki w_kj + F_kj w_ki) / 2 with w = grad w.
        let mut de = [[0.0_f64; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    de[i][j] += 0.5 * (f.get(k, i) * w[k][j] + f.get(k, j) * w[k][i]);
                }
            }
        }
        assert_relative_eq!(mapped[0], de[0][0], max_relative = 1e-14);
        assert_relative_eq!(mapped[1], de[1][1], max_relative = 1e-14);
        assert_relative_eq!(mapped[2], 2.0 * de[0][1], max_relative = 1e-14);
    }

    #[test]
    fn tensor4_identity_acts_as_identity() {
        let e = SymTensor2::from_voigt(Dim::Two, &[0.3, -0.1, 0.2]);
        let id = Tensor4::identity_sym(Dim::Two);
        let out = id.ddot_sym(&e);
        for p in 0..3 {
            assert_relative_eq!(out[p], e[p], max_relative = 1e-15);
        }
    }

    #[test]
    fn ops_evaluate_on_complex_scalars() {
        // Complex-step through the full kinematic chain: the imaginary part
        // of E11 must equal dE11/d(g00) to machine precision.
        let delta = 1e-120;
        let g = [
            [Complex64::new(0.1, delta), Complex64::new(-0.03, 0.0)],
            [Complex64::new(0.05, 0.0), Complex64::new(0.02, 0.0)],
        ];
        let e = green_lagrange(Dim::Two, &g);
        // E11 = g00 + (g00^2 + g10^2)/2 => dE11/dg00 = 1 + g00
        assert_relative_eq!(e[0].im / delta, 1.0 + 0.1, max_relative = 1e-14);
        let c = right_cauchy_green(&e);
        assert_relative_eq!(c[0].im / delta, 2.0 * 1.1, max_relative = 1e-14);
        // Builders accept complex input too.
        let f = DeformationGradient::from_grad_u(Dim::Two, &g);
        let fb = build_fbar(&f);
        assert_relative_eq!(fb[0][0].im, delta, max_relative = 1e-15);
        let sb = build_sbar(&e);
        assert_relative_eq!(sb[0][0].im / delta, 1.1, max_relative = 1e-14);
    }

    proptest! {
        #[test]
        fn voigt_matrix_round_trip(v in proptest::array::uniform3(-1.0e3_f64..1.0e3)) {
            let t = SymTensor2::from_voigt(Dim::Two, &v);
            let back = SymTensor2::from_matrix_sym(Dim::Two, &t.to_matrix());
            prop_assert_eq!(t, back);
        }

        #[test]
        fn sbar_is_symmetric_when_stress_is(v in proptest::array::uniform3(-1.0e3_f64..1.0e3)) {
            let s = SymTensor2::from_voigt(Dim::Two, &v);
            let sb = build_sbar(&s);
            for r in 0..4 {
                for c in 0..4 {
                    prop_assert_eq!(sb[r][c], sb[c][r]);
                }
            }
        }

        #[test]
        fn rigid_rotation_strain_is_second_order_small(angle in -1.0e-4_f64..1.0e-4) {
            // grad u of a rigid rotation by `angle`: R - I.
            let (s, c) = angle.sin_cos();
            let g = [[c - 1.0, -s], [s, c - 1.0]];
            let e = green_lagrange(Dim::Two, &g);
            // Exact rigid rotation gives exactly zero strain up to rounding;
            // the bound here is the O(|grad u|^2) one the kinematics promises
            // for any nearly-rigid gradient.
            let gnorm = (g[0][0].powi(2) + g[0][1].powi(2) + g[1][0].powi(2) + g[1][1].powi(2)).sqrt();
            prop_assert!(e.norm_re() <= 10.0 * (gnorm * gnorm + 1e-15));
        }

        #[test]
        fn inverse_round_trips(v in (0.5_f64..2.0, 0.5_f64..2.0, -0.3_f64..0.3)) {
            let c = SymTensor2::from_voigt(Dim::Two, &[v.0, v.1, v.2]);
            let ci = c.inverse();
            let prod_mat = {
                let a = c.to_matrix();
                let b = ci.to_matrix();
                [
                    [a[0][0]*b[0][0] + a[0][1]*b[1][0], a[0][0]*b[0][1] + a[0][1]*b[1][1]],
                    [a[1][0]*b[0][0] + a[1][1]*b[1][0], a[1][0]*b[0][1] + a[1][1]*b[1][1]],
                ]
            };
            prop_assert!((prod_mat[0][0] - 1.0).abs() < 1e-10);
            prop_assert!((prod_mat[1][1] - 1.0).abs() < 1e-10);
            prop_assert!(prod_mat[0][1].abs() < 1e-10);
            prop_assert!(prod_mat[1][0].abs() < 1e-10);
        }
    }
}
