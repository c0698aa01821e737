//! Set prediction with learned cardinality and permutation-aware losses.
//!
//! A [`network::SetNetwork`] maps an input vector to a cardinality
//! distribution, `M` element slots (state plus existence logit) and,
//! optionally, a distribution over slot permutations. Training pairs slots
//! with ground-truth elements through [`assignment`], scores them with
//! [`setloss`], and [`inference`] decodes the most probable set.

pub mod assignment;
pub mod card_dist;
pub mod config;
pub mod datagen;
pub mod error;
pub mod geometry;
pub mod gradcheck;
pub mod inference;
pub mod math;
pub mod metrics;
pub mod network;
pub mod setloss;
pub mod trainer;

pub use config::{Precision, RunConfig, Scenario, Task};
pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/cardinality.md")]
    mod cardinality {}
    #[doc = include_str!("../../../book/src/assignment.md")]
    mod assignment {}
    #[doc = include_str!("../../../book/src/losses.md")]
    mod losses {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/acceptance.md")]
    mod acceptance {}
}
