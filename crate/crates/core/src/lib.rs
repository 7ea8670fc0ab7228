//! Surprise-gated recurrent networks (SUGAR).
//!
//! A four-layer recurrent model for hierarchical sequence prediction:
//!
//! - an *event processing* LSTM that predicts the next symbol,
//! - an *event anticipation* LSTM that turns contextual hints into latent codes,
//! - an *event switching* layer whose scalar update gate decides when the
//!   latent code handed to the processing layer is replaced,
//! - an *event boundary* LSTM that learns to drive the gate ahead of switches.
//!
//! Three variants differ in how the gate is driven: [`model::SugarVariant::A`]
//! uses an online surprise estimate computed from prediction error,
//! [`model::SugarVariant::B`] learns the gate from event-boundary inputs, and
//! [`model::SugarVariant::C`] adds a counterfactual term to the gate gradient
//! that compares the actual prediction against the prediction the model would
//! have made with the gate closed.
//!
//! Everything, including the LSTM cells, BPTT and ADAM, is implemented here in
//! plain `f64` arithmetic.

pub mod error;
pub mod evaluation;
pub mod model;
pub mod nn;
pub mod task;
pub mod training;

pub use error::{Error, Result};
