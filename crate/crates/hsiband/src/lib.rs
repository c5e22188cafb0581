//! Band selection for hyperspectral images.
//!
//! Implements a three-stage hybrid selector — information-gain ranking,
//! mRMR forward ordering, and a Fano error-bound wrapper driven by an
//! SVM-estimated ground truth — together with the two pure filters it is
//! usually compared against (plain information gain and a redundancy-checked
//! mutual-information filter), and an experiment harness that reproduces
//! accuracy-vs-band-count tables on scenes like AVIRIS Indian Pines.

pub mod classifier;
pub mod error;
pub mod infotheory;
pub mod ingest;
pub mod pipeline;
pub mod selection;

pub use error::{Error, Result};
