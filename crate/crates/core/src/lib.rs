//! Sample design engine for healthcare audit populations.
//!
//! The crate plans fixed-cost audits of claim populations where the claimed
//! amount of every claim is known up front but the disallowed (error) amount
//! is learned only for audited claims. It predicts estimator variance under
//! two pre-audit error models, turns those predictions into conservative
//! sample sizes, decides between simple-expansion and ratio estimation,
//! optimizes stratification breakpoints, and verifies its own closed forms
//! against exhaustive enumeration and Monte Carlo simulation.
//!
//! Modules:
//! - [`population`]: claim data model, CSV ingestion, exact moments.
//! - [`numerics`]: normal quantile and cubic root solving.
//! - [`rng`]: counter-based deterministic random streams.
//! - [`aon`]: all-or-nothing error model and the sample size formula.
//! - [`partial`]: line-item partial error model for simple expansion.
//! - [`ratio`]: ratio estimator planning and estimator selection.
//! - [`stratified`]: stratified variance, allocation, breakpoint search.
//! - [`synthpop`]: seeded generators for three benchmark populations.
//! - [`montecarlo`]: realized populations, coverage simulation, and the
//!   exhaustive enumeration oracle used by the verification suite.

pub mod aon;
pub mod error;
pub mod montecarlo;
pub mod numerics;
pub mod partial;
pub mod population;
pub mod ratio;
pub mod rng;
pub mod stratified;
pub mod surface;
pub mod synthpop;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;
