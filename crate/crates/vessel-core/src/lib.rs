//! Explicit Boussinesq-equation solutions from finite-dimensional vessel
//! realizations, plus the verification machinery for every identity the
//! construction is supposed to satisfy: Lyapunov permanency, moment
//! recurrences, the Bäcklund mapping, PDE residuals, soliton closed forms
//! and tau-function singular sets.
//!
//! The construction pipeline is:
//!
//! 1. a [`realization::Realization`] holds the scattering-side operator data
//!    (A, A_ζ, X₀, B₀, C₀) at a basepoint;
//! 2. [`evolution::propagate`] moves (B, C, X) to any (x, t) with closed-form
//!    matrix exponentials and an algebraic Lyapunov solve;
//! 3. [`potentials`] turns the propagated state into moments H_n, the linkage
//!    matrix γ*, the output potentials q and p, and exact derivative ladders;
//! 4. [`scattering`] evaluates the transfer function S(λ, x) and its
//!    differential and factorization identities;
//! 5. [`pde_verify`] samples fields on grids, computes Boussinesq residuals
//!    (exact-ladder and finite-difference) and scans for the singular set.

pub mod errata;
pub mod evolution;
pub mod numkernel;
pub mod params;
pub mod pde_verify;
pub mod potentials;
pub mod realization;
pub mod rng;
pub mod scattering;
pub mod solitons;

pub use evolution::VesselState;
pub use numkernel::{CMatrix, C64};
pub use params::{canonical_parameters, GammaTSign, VesselParameters};
pub use realization::Realization;
