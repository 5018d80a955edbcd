//! Joint modelling and dynamic prediction of recurrent competing risks and a
//! terminal event under a shared Gamma frailty.

// Negated comparisons are deliberate: NaN must fail validity checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimation;
pub mod evaluation;
pub mod event_model;
pub mod par;
pub mod prediction;
pub mod synthgen;

pub use error::{Error, Result};
pub use estimation::{fit_em, EmConfig, FiniteDimParams, FittedModel};
pub use event_model::{Dataset, Event, EventCounts, RepairMode, UnitHistory};
