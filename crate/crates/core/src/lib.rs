//! Krotov optimization of two-qubit gates, towards a specific gate or a
//! whole local equivalence class.
//!
//! Start with [`geometry`] for invariants and Weyl coordinates, and
//! [`krotov::optimize`] for the optimizer. The book in `book/` walks through
//! the pieces.

pub mod error;
pub mod functionals;
pub mod gate_io;
pub mod geometry;
pub mod krotov;
pub mod linalg;
pub mod models;
pub mod propagation;
pub mod types;
pub mod units;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/classes.md")]
    pub mod classes {}
    #[doc = include_str!("../../../book/src/functionals.md")]
    pub mod functionals {}
    #[doc = include_str!("../../../book/src/propagation.md")]
    pub mod propagation {}
    #[doc = include_str!("../../../book/src/krotov.md")]
    pub mod krotov {}
    #[doc = include_str!("../../../book/src/models.md")]
    pub mod models {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
