//! Numerical laboratory for variational reaction-diffusion systems with
//! k-wise strong competition among `d` nonnegative components.
//!
//! The crate discretizes the competing-species energy on a uniform 2-D grid,
//! minimizes it over nonnegative fields with pinned boundary traces, drives
//! the competition parameter `beta` upward by continuation, solves the
//! partially segregated limit problem and measures the quantities that the
//! asymptotic theory makes claims about (interaction decay, Hölder seminorms,
//! energy convergence, the local Pohozaev identity, overlapping-partition
//! constants on the circle).
//!
//! Module map:
//!
//! | module | contents |
//! |--------|----------|
//! | [`geometry`] | grids, masks, stencil, quadrature, circle sampling |
//! | [`model`] | interaction coefficients, nonlinearities, boundary traces |
//! | [`energy`] | discrete energy and its exact gradient |
//! | [`solver`] | projected gradient descent and `beta` continuation |
//! | [`limit`] | segregated limit problem and penalization route |
//! | [`diagnostics`] | Hölder seminorms, decay tables, Pohozaev, blow-up frames |
//! | [`threshold`] | `gamma(t)`, arc eigenvalues, `alpha_{l,2}`, `nu_bar` |
//! | [`config`] / [`cli`] | problem documents and the experiment runner |

// `!(x > 0.0)` comparisons are meant to reject NaN as well
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::too_many_arguments
)]

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod energy;
pub mod error;
pub mod fixtures;
pub mod geometry;
pub mod limit;
mod linalg;
pub mod model;
pub mod solver;
pub mod threshold;

pub use error::{Error, Result};
