//! Closed-form solutions of factored linear evolution equations
//! `∏ⱼ (d/dt − Aⱼ) u(t) = f(t)` whose generators commute and may repeat.
//!
//! The homogeneous part is a sum of `tᵏ/k! · T_{Bⱼ}(t) y` terms with the
//! coefficients `y` obtained from a confluent operator-Vandermonde system; the
//! forced part is a convolution of the same kind weighted by the solution of a
//! second confluent system. Every solution can be checked against a
//! brute-force RK4 integration of the equivalent first-order companion system.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod confluent;
pub mod equation;
pub mod error;
pub mod operators;
pub mod pde_examples;
pub mod solver;
pub mod statespace;

pub use error::{Error, Result};
