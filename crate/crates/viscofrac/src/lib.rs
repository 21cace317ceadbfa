//! Finite-element simulation of damage evolution in fractional viscoelastic
//! solids at finite strain.
//!
//! The library is organized bottom-up:
//!
//! - [`field`]: scalar abstraction (`f64` / `Complex64`) so constitutive code
//!   can be differentiated by the complex-step method,
//! - [`tensor`]: symmetric second- and fourth-order tensors in Voigt form for
//!   one- and two-dimensional problems, plus finite-strain kinematics,
//! - [`special`]: Gamma-function helpers,
//! - [`fractional`]: Caputo derivatives (G1 algorithm), the memory free
//!   energy, and the entropy-production term,
//! - [`material`]: hyperelastic response, degradation functions, memory
//!   moduli, second Piola-Kirchhoff stress, and consistent tangents,
//! - [`mesh`] / [`element`]: meshes, generators, shape functions, quadrature,
//! - [`assembly`]: element and global residuals/Jacobians,
//! - [`solver`]: Newton loops, Newmark time stepping, the staggered
//!   damage/motion scheme, and adaptive step halving,
//! - [`scenario`]: configuration, presets, and end-to-end runs,
//! - [`output`]: time-series CSV and legacy VTK writers.

pub mod assembly;
pub mod element;
pub mod field;
pub mod fractional;
pub mod material;
pub mod mesh;
pub mod output;
pub mod scenario;
pub mod solver;
pub mod special;
pub mod tensor;
