//! Solvers and diagnostics for time-dependent obstacle problems with nonlocal
//! operators of fractional order.
//!
//! [`penalty`] marches a penalized implicit Euler scheme and [`oracle`]
//! solves the constrained steps exactly as complementarity problems. The
//! [`regularity`] and [`energy`] modules measure the free boundary and the
//! level-set energies of the resulting fields. The guide under `book/` walks
//! through each module.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmarks;
pub mod discretization;
pub mod energy;
pub mod error;
pub mod field;
pub mod kernel;
pub mod oracle;
pub mod penalty;
pub mod problem;
pub mod profiles;
pub mod quad;
pub mod regularity;
pub mod runlog;

pub use error::{Error, Result};

/// The README and the guide chapters, compiled so their snippets run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/kernels.md")]
    mod kernels {}
    #[doc = include_str!("../../../book/src/discretization.md")]
    mod discretization {}
    #[doc = include_str!("../../../book/src/penalty.md")]
    mod penalty {}
    #[doc = include_str!("../../../book/src/oracle.md")]
    mod oracle {}
    #[doc = include_str!("../../../book/src/regularity.md")]
    mod regularity {}
    #[doc = include_str!("../../../book/src/energy.md")]
    mod energy {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
