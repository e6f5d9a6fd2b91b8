//! Optimal stratified randomization for experiments.
//!
//! The crate builds stratifications (matched pairs, matched sets of four,
//! `k`-unit strata for a treated fraction `l/k`), assigns treatment uniformly
//! within strata, and estimates the average treatment effect with variance
//! estimators that account for the dependence induced by pairing. A Monte
//! Carlo engine in [`sim`] replays the whole pipeline over bootstrap or
//! synthetic populations.
//!
//! Everything here is `no_std` with `alloc`; file formats, the CLI and the
//! thread pool live in the `pairdesign` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod design;
pub mod error;
pub mod estimate;
pub mod linalg;
pub mod matching;
pub mod rng;
pub mod sim;

pub use design::{
    assign_treatments, assignment_distribution, validate_stratification, Assignment,
    AssignmentDistribution, Sample, Stratification,
};
pub use error::{Error, Result};
pub use estimate::{EstimateReport, VarianceMethod};
pub use linalg::{Matrix, PilotFit, SpdFactor};
pub use matching::{DistanceSpec, Pairing, Solver, TreatedFraction};
