//! Numerical laboratory for explicit special Lagrangian cones and 3-folds in ℂ³.
//!
//! The cones are built from commuting "strand" ODEs whose potentials are
//! elliptic functions. Around them the crate verifies the calibrated-geometry
//! conditions, the Toda and Tzitzéica equations, polynomial Killing fields and
//! their spectral curves, and searches for doubly periodic (torus) solutions.

pub mod cone2;
pub mod cone3;
pub mod cubic;
pub mod elliptic;
pub mod error;
pub mod export;
pub mod geometry;
pub mod integrable;
pub mod ode;
pub mod periodicity;
pub mod quad;
pub mod spectral;

pub use error::{Error, Result};
pub use geometry::{ComplexTriple, SlResidual};
pub use num_complex::Complex64;
