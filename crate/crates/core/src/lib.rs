//! Parameterized split feasibility problems.
//!
//! A family assigns to each parameter `p ∈ ℝᵐ` the problem of finding
//! `x ∈ C(p)` with `A(p,x) ∈ Q(p)`. This crate projects onto the sets,
//! solves instances, estimates the dual regularity constants and strong
//! slopes of the merit function, checks error bounds, and estimates the
//! Lipschitzian moduli of the solution map `p ↦ Σ(p)`.

// Argument checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corpus;
pub mod family;
pub mod geometry;
pub mod linalg;
pub mod moduli;
pub mod regularity;
pub mod rng;
pub mod serde_inf;
pub mod solver;

pub use family::{FamilyError, FamilySpec, Instance, MeritParts, ParamDomain, ReferencePair, SfpFamily};
pub use geometry::{ConvexSet, GeometryError, Projection};
