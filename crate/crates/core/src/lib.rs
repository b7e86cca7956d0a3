//! Emulation of physical corruptions in digital pathology images and the
//! robustness metrics used to score classifiers against them.
//!
//! Three engines cover the 21 corruption kinds: a chemical engine working
//! on stain concentrations, a mechanical engine deforming tissue geometry,
//! and an optical engine modelling the microscope and scanner.

pub mod chemical;
pub mod error;
pub mod imaging;
pub mod kind;
pub mod mechanical;
pub mod metrics;
pub mod optical;
pub mod pipeline;
pub mod rng;
pub mod severity;
pub mod synthetic;

pub use error::{Error, Result};
pub use kind::{CorruptionKind, CorruptionSpec, KindGroup, Severity};
pub use severity::{CorruptionParams, SeverityTable};
