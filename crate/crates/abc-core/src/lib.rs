//! Simulator and verification laboratory for approximation-by-conjugation
//! (AbC) constructions on the torus 𝕋^d.
//!
//! The construction produces diffeomorphisms T_n = H_n⁻¹ ∘ φ^{α_{n+1}} ∘ H_n,
//! where φ^t is translation of the first coordinate and H_n = h_n ∘ H_{n−1}
//! stacks conjugation maps that commute with φ^{α_n}.  This crate models the
//! construction twice over:
//!
//! * **exact mode** drives everything through arbitrary-precision rationals
//!   and finite cell permutations, so combinatorial claims (partition images,
//!   return identities, tower accounting) are checked exactly;
//! * **analytic mode** realizes the conjugation maps as compositions of
//!   mollified block-slide maps and tracks proximity, strip norms and the
//!   rotation-gap bookkeeping that drives the choice of k_n.
//!
//! Run orchestration, TOML configuration, JSON/CSV/SVG artifacts and the CLI
//! contract live in [`config`], [`report`], [`svg`] and [`runner`].

pub mod error;
pub mod rational;
pub mod params;
pub mod grid;
pub mod intervals;
pub mod partitions;
pub mod stepfn;
pub mod blockslide;
pub mod towers;
pub mod engine;
pub mod spectral;
pub mod mollify;
pub mod analytic;
pub mod config;
pub mod report;
pub mod svg;
pub mod runner;

#[cfg(test)]
pub(crate) mod testchains;

pub use error::{AbcError, Result};
pub use rational::Rational;
