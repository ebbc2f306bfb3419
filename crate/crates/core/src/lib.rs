//! Drift-aware synthesis engine for financial time-series.
//!
//! The library couples a parameterized data manipulation module
//! (single-stock transforms, cointegration-guided multi-stock mix-ups,
//! K-line curation and mutual-information compensation) with a learned
//! planner and an overfitting-aware proportion scheduler, closing a
//! bi-level loop against a downstream forecaster. Drift diagnostics,
//! data-quality scores and a single-asset trading environment round out
//! the toolkit.
//!
//! Modules follow the processing order: [`data`] and [`ingest`] build
//! panels and samples, [`transforms`]/[`mixups`]/[`curation`] are the
//! augmentation primitives, [`manipulate`] orchestrates them under a
//! [`policy::ManipulationPolicy`] with [`provenance`] recording,
//! [`models`]/[`planner`]/[`scheduler`]/[`train`] implement the adaptive
//! loop, and [`diagnostics`]/[`facts`]/[`discriminative`]/[`env`] evaluate
//! the result.

pub mod coint;
pub mod curation;
pub mod data;
pub mod diagnostics;
pub mod discriminative;
pub mod env;
pub mod facts;
pub mod features;
pub mod ingest;
pub mod manipulate;
pub mod mixups;
pub mod models;
pub mod planner;
pub mod policy;
pub mod provenance;
pub mod scheduler;
pub mod seeds;
pub mod train;
pub mod transforms;

mod error;

pub use error::{CoreError, Result};
