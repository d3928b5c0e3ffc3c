//! Optimal control of Bolza problems with a perturbable component function.
//!
//! The crate solves problems of the form
//!
//! ```text
//! min  φ(x(t_f), p) + ∫ l(t, x, u, p, g(t, x, u, p)) dt
//! s.t. x' = f(t, x, u, p, g(t, x, u, p)),  x(t_0) = x_0
//! ```
//!
//! by flipped Legendre-Gauss-Radau collocation and a primal-dual interior
//! point method, and then differentiates the solution (and scalar quantities
//! of interest) with respect to perturbations `δg` of the component function.
//! The derivative of a quantity of interest is available both through a
//! forward sensitivity solve and through a single adjoint solve; the adjoint
//! form gives first-order error estimates and worst-case bounds when `g` is a
//! surrogate for an unknown truth model.
//!
//! Module map:
//!
//! * [`ocp`]: problem contracts, composition with `g`, adapters, derivative checks
//! * [`collocation`]: LGR nodes, differentiation matrices, transcription, interpolation
//! * [`nlp`]: sparse symmetric indefinite factorization and the interior point solver
//! * [`sensitivity`]: Hamiltonian block assembly and the forward sensitivity system
//! * [`adjoint`]: adjoint system, QoI derivative, error estimate, bands and bound
//! * [`hypersonic`]: the longitudinal hypersonic vehicle benchmark
//! * [`toy`]: small problems with closed-form solutions

// Negated float comparisons are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops over several parallel arrays read better than nested zips.
#![allow(clippy::needless_range_loop)]

pub mod adjoint;
pub mod collocation;
pub mod hypersonic;
pub mod nlp;
pub mod ocp;
pub mod sensitivity;
pub mod toy;

pub use nalgebra::{DMatrix, DVector};
