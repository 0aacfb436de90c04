//! Numerical solver for complex Monge-Ampère type equations
//! `χ_u^n = ψ χ_u^{n−α} ∧ ω^α` on flat complex tori.

pub mod cone;
pub mod continuity;
pub mod diagnostics;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod krylov;
pub mod mongeampere;
pub mod oracle;
pub mod presets;
pub mod snapshot;
pub mod sympoly;
pub mod tensor;

pub use error::{Error, Result};
pub use grid::{ComplexField, Derivative, DiffMode, ScalarField, TorusGrid};
pub use tensor::{CMat, HermitianField, Role, SpectrumField};
