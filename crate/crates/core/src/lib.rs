//! Time-dependent scaling Hamiltonians and their time-independent duals.
//!
//! A Hamiltonian of the scaling form
//! `H(t) = (f'/eps) [ f p^2/2m + V(r/f)/f ]`, with `f(0) = 1` and
//! `f'(0) = eps`, is unitarily equivalent to the time-independent
//! `H2 = p^2/2m + V(r) - m eps^2 r^2 / 2` evolving on the clock
//! `t' = ln f(t) / eps`. This crate evolves states along both routes,
//! reconstructs the physical wavefunction from the dual one, and measures
//! how well the two agree.
//!
//! Modules, bottom up:
//! - [`grid`]: lattices, wavefunctions, FFTs, interpolation, observables
//! - [`scale`]: scale functions and the transformed clock
//! - [`potentials`]: base, scaled and effective potentials
//! - [`operators`]: actions of `H(t)`, `H1`, `H2` and operator identities
//! - [`propagation`]: split-operator and Crank-Nicolson steppers, trajectories
//! - [`duality`]: the maps between frames and mapped evolution
//! - [`analytic`]: closed-form Gaussian and normal-mode references
//! - [`harness`]: configuration and the run modes behind the CLI
//!
//! Support: [`par`] (rayon helpers, sequential without the `parallel`
//! feature), [`numerics`] (tridiagonal solves, log-log slopes), [`output`]
//! (CSV tables and atomic writes), [`error`].

// Negated comparisons are used so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod duality;
pub mod error;
pub mod grid;
pub mod harness;
pub mod numerics;
pub mod output;
pub mod par;
pub mod operators;
pub mod potentials;
pub mod propagation;
pub mod scale;

pub use error::{Error, Result};
