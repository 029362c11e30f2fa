//! Case-level treatment recommendations from business-process event logs.
//!
//! The pipeline has three stages:
//!
//! 1. [`action_rules`] mines rules of the form "under these stable conditions,
//!    changing these controllable attributes moves the outcome from 0 to 1" and
//!    keeps only the change part of each rule as a candidate [`Treatment`].
//! 2. [`uplift`] fits one uplift tree per candidate treatment on observational
//!    treated/control groups. Splits maximize the divergence gain between the
//!    treated and control outcome distributions, normalized by a penalty for
//!    tests that separate the two groups unevenly.
//! 3. [`ranking`] turns the leaves of each tree into recommendations ranked by
//!    net value `n * (u * v - c)`.
//!
//! [`event_log`] handles ingestion (XES and CSV) and case encoding,
//! [`synthetic`] generates logs with known treatment effects and
//! [`pipeline`] wires everything together behind a file-based configuration.

pub mod action_rules;
pub mod event_log;
pub mod pipeline;
pub mod ranking;
pub mod synthetic;
pub mod uplift;

pub use action_rules::{ActionRule, AtomicActionTerm, Treatment};
pub use event_log::{CaseTable, EventLog};
pub use ranking::{CostModel, Recommendation};
pub use uplift::{Segment, TreeParams, UpliftTree};
