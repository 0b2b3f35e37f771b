//! Simple Lawson Runge-Kutta integration and the exact machinery around it.
//!
//! Explicit Runge-Kutta schemes whose abscissae are ordered and equally spaced
//! can be turned into Lawson (integrating-factor) schemes for
//! `u̇ = g(u) + A u` with a single precomputed propagator `exp(Δc·h·A)`.
//!
//! - [`rational`], [`tableau`]: exact Butcher tableaux and the spacing check.
//! - [`order_conditions`]: rooted trees and exact order verification.
//! - [`stability`]: stability polynomials and region boundaries.
//! - [`linop`]: the stiff operator and its propagator.
//! - [`integrator`]: explicit, general Lawson, and simple Lawson stepping.
//!
//! The crate is `no_std` and only needs `alloc`.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod integrator;
pub mod linop;
pub mod order_conditions;
pub mod rational;
pub mod stability;
pub mod tableau;

pub use num_complex::Complex64;
pub use rational::Rational;
pub use tableau::Tableau;
