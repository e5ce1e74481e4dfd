//! Numerical engine for relaxed benchmark tracking with capital injection.
//!
//! The dual value `v(r,h,z) = l(r,z) + ψ(r,h)` combines a closed-form part with
//! a Monte Carlo estimate of the discounted local-time term; the feedback policy
//! follows by dual inversion.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod closed_form;
pub mod densities;
pub mod dual_solver;

pub mod error;
pub mod mc;

pub mod params;
pub mod policy;

pub mod quadrature;
pub mod representations;
pub mod simulator;

pub mod special;

pub use closed_form::{tilde_w, ClosedFormL, LPartials};

pub use dual_solver::{build_dual_field, DualField, GridSpec};
pub use error::{Error, Result};

pub use policy::PolicyEvaluation;

pub use params::{derive_constants, validate_assumptions, DerivedConstants, Model, ModelParams, SolverMode, ValidationReport};

pub use mc::{Estimate, McConfig, ReflectionScheme};
