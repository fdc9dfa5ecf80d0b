//! Inter-model stages of a coarse-to-fine volumetric tumor segmentation cascade.
//!
//! The crate ingests a first-stage probability map and a lung mask, removes
//! anatomically implausible components, selects the largest candidates, cuts
//! regions of interest for a second-stage model and pastes its predictions
//! back. It also aggregates Monte Carlo dropout samples into uncertainty maps,
//! evaluates the uncertainty-weighted Dice/cross-entropy loss with analytic
//! gradients, and scores results with Dice, HD95, boundary Dice and
//! correlation statistics.
//!
//! Data-parallel kernels run on rayon when the `parallel` feature is enabled
//! (the default). Every parallel path produces results bitwise identical to
//! the sequential build.

// `!(x > 0.0)` is used on purpose so NaN fails validation; index loops over
// the three axes read better than zipped iterators.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod anatomy;
pub mod distance;
pub mod error;
pub mod io;
pub mod metrics;
pub mod morphology;
pub mod par;
pub mod phantom;
pub mod pipeline;
pub mod roi;
pub mod stats;
pub mod uncertainty;
pub mod volume;

pub use error::{Error, Result};
pub use volume::{GridMeta, LabelMap, Mask, Volume};
