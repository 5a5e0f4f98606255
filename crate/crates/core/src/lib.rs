//! Spin-1/2 quantum kicked rotor in its dimension-reduced (1D, quasi-periodically
//! driven) form.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: kick potential, its spin unitary, free phases and the Anderson hopping matrix.
//! * [`evolve`]: split-step spectral Floquet evolution of a momentum-space spinor.
//! * [`ensemble`]: seeded ensembles of drive phases and initial spinors, reduced to diffusion curves.
//! * [`anderson`]: small-size dense verification of the Floquet / Anderson-model correspondence.
//! * [`scaling`]: one-parameter finite-size scaling fits, bootstrap errors and collapse export.
//! * [`cli`]: configuration, persistence and the command implementations behind the `qkr` binary.

// `!(x > 0.0)` is used deliberately so NaN fails range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anderson;
pub mod cli;
pub mod ensemble;
pub mod evolve;
pub mod model;
pub mod rng;
pub mod scaling;
pub mod summation;

mod error;

pub use error::{Error, MemberFailure, Result};
