//! U(n)-invariant Kähler metrics on ℂⁿ∖{0}, their curvature, and the reduced
//! Kähler–Ricci flow, with finite-difference oracles for every closed form.

pub mod cli;
pub mod curvature;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod numerics;
pub mod oracle;
pub mod radial;

pub use error::{Error, Result};
