//! Tabular dynamic programming through the lens of graph filters.
//!
//! Policy evaluation is a polynomial filter of the policy-conditioned
//! transition matrix applied to the reward signal. [`model`] unrolls policy
//! iteration into a trainable cascade of such filters, [`training`] fits the
//! filter taps by minimizing the Bellman error, and [`experiment`] drives the
//! depth, filter-order and transfer studies.

pub mod env;
pub mod error;
pub mod experiment;
pub mod filter;
pub mod mdp;
pub mod model;
pub mod solvers;
pub mod training;

pub use error::{Error, Result};
pub use filter::FilterCoeffs;
pub use mdp::{Policy, TabularMdp, ValueFunction};
pub use model::BellNetModel;
