//! Corrected two one-sided tests (cTOST) for average equivalence.
//!
//! Everything works on the canonical summary θ̂ ~ N_K(θ, Σ₁) with
//! ν₂Σ̂₁ ~ W_K(Σ₁, ν₂) independent of θ̂. Margins and effects live on the
//! log scale.

pub mod error;
pub mod ingest;
pub mod model;
pub mod mvt;
pub mod powerkernel;
pub mod roots;
pub mod simkit;
pub mod statdist;
pub mod univariate;

pub use error::{Error, Result};
pub use model::{DecisionReport, EquivalenceSpec, Interval, Method, DEFAULT_ALPHA0, DEFAULT_C0};
