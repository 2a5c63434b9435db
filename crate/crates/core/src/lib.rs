//! KdV inverse-scattering toolkit.
//!
//! The crate implements the full pipeline around the Korteweg-de Vries
//! equation u_t - 6 u u_x + u_xxx = 0:
//!
//! * [`soliton`] — exact Wronskian n-solitons, parameter conversions, and
//!   asymptotic wave-crest lines;
//! * [`scatter`] — direct scattering of decaying potentials: Jost solutions,
//!   a(k) = 1/T(k), reflection coefficients (including the strip continuation
//!   k + i eps), bound states and norming constants;
//! * [`glm`] — the classical Gelfand-Levitan-Marchenko inversion;
//! * [`deformed_glm`] — the eps-shifted deformed GLM equation, its finite-rank
//!   discrete solve, and kernel-bound sweeps;
//! * [`pde_oracle`] — an independent pseudo-spectral KdV integrator used to
//!   cross-validate every inverse-scattering prediction;
//! * [`stability`] — soliton-region geometry, explicit phase shifts, and the
//!   end-to-end orbital-stability experiment harness.
//!
//! All numerics are generic over the scalar type via [`float::Real`]
//! (`f32`/`f64`); the `*64` aliases below fix the default `f64` instantiation.

pub mod deformed_glm;
pub mod error;
pub mod float;
pub mod glm;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod pde_oracle;
pub mod quad;
pub mod scatter;
pub mod soliton;
pub mod stability;

pub use error::{KdvError, Result};
pub use float::{Cplx, Real};

/// Concrete `f64` aliases for the main domain types.
pub type SolitonSpec64 = soliton::SolitonSpec<f64>;
pub type GridPotential64 = grid::GridPotential<f64>;
pub type ScatteringData64 = scatter::ScatteringData<f64>;
pub type DeformedKernel64 = deformed_glm::DeformedKernel<f64>;
pub type PdeState64 = pde_oracle::PdeState<f64>;
pub type StabilityConfig64 = stability::StabilityConfig<f64>;
