//! State occupation probabilities and pseudo-value regression for clustered
//! multistate current-status data.
//!
//! Each unit is inspected once and only the state it occupies at that time is
//! known. States are visited in a fixed order `1 -> 2 -> ... -> Q`. Units come
//! in clusters whose size may carry information about the outcome.
//!
//! The pipeline:
//!
//! - [`sop`] estimates the marginal occupation probabilities from kernel-smoothed
//!   counting and at-risk processes and a product integral, optionally weighting
//!   units by inverse cluster or group size.
//! - [`pseudo`] turns the unweighted estimator into jackknife pseudo-values at a
//!   handful of time points.
//! - [`gee`] regresses the pseudo-values on covariates with unweighted,
//!   cluster-weighted or doubly weighted estimating equations and a sandwich
//!   covariance.
//! - [`analysis`] chains these steps for a dataset and adds a stratified check
//!   for informative cluster size.
//! - [`simulation`] generates data with known truth and runs Monte Carlo studies
//!   of bias, coverage, size and power.
//!
//! ```no_run
//! use cspv::analysis::{analyze, AnalysisConfig};
//! use cspv::gee::Model;
//!
//! let ds = cspv::io::read_dataset("teeth.csv", None)?;
//! let report = analyze(&ds, &AnalysisConfig::default())?;
//! let cw = report.model(Model::Cwgee).unwrap();
//! for (name, test) in cw.fit.names.iter().zip(&cw.tests) {
//!     println!("{name}: {:.4} (p = {:.3})", test.estimate, test.p_value);
//! }
//! # Ok::<(), cspv::Error>(())
//! ```

pub mod analysis;
pub mod error;
pub mod gee;
pub mod io;
pub mod isotonic;
pub mod model;
pub mod pseudo;
pub mod simulation;
pub mod smoothing;
pub mod sop;

pub use error::{Error, Result};
