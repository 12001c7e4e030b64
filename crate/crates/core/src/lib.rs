//! Pseudospectral solver for the nonlinear Schrödinger equation with white
//! noise dispersion and a nonlocal cubic interaction,
//!
//! ```text
//! i du + Δu ∘ dβ + (V ⋆ |u|²) u dt = 0
//! ```
//!
//! on the periodic interval, with three time integrators (Lie–Trotter
//! splitting, a stochastic exponential integrator and a semi-implicit
//! midpoint scheme) and Monte Carlo drivers for conservation and
//! strong-convergence studies on coupled Brownian paths.

pub mod error;
pub mod experiments;
pub mod grid;
pub mod integrators;
pub mod io;
pub mod model;
pub mod noise;
pub mod selftest;

pub use error::{Error, Result};
pub use grid::{ComplexField, FourierCoefficients, SobolevIndex, SpectralGrid};
pub use integrators::SchemeKind;
pub use model::{FlowTime, Model, Potential};
pub use noise::BrownianPath;
