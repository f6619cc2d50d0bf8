//! Pilot-wave (de Broglie–Bohm) mechanics on a periodic 1D grid.
//!
//! Wave functions are evolved with a split-step spectral propagator, particles
//! are carried along by the guiding velocity `Im(Ψ*·∂Ψ)/(Ψ*·Ψ)`, and initial
//! positions are drawn from `|Ψ|²`. The [`scenarios`] module packages the
//! two-slit, Stern–Gerlach and time-of-flight momentum experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod equilibrium;
pub mod fields;
pub mod guidance;
pub mod propagator;
pub mod scenarios;
