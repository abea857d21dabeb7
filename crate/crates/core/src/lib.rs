//! Standard (STS) and refined (RTS) two-stage trigonometric regression for
//! longitudinal circadian data.
//!
//! The crate is organised bottom-up:
//!
//! - [`rng`]: reproducible substreams and the samplers used by the studies
//! - [`trig`]: per-subject design matrices, least-squares fits, identities
//! - [`two_stage`]: population estimates and Delta-method variances
//! - [`inference`]: Wald statistics and bootstrap tests
//! - [`select`]: forward selection of the harmonic order
//! - [`simulate`]: the single- and two-cohort simulation studies
//! - [`io`]: delimited-text ingestion and curve export

pub mod error;
pub mod inference;
pub mod io;
pub mod rng;
pub mod select;
pub mod simulate;
pub mod trig;
pub mod two_stage;

pub use error::{Error, Result};
pub use inference::{
    bootstrap_amplitude_test, bootstrap_two_cohort, bootstrap_zero_amplitudes, chisq_sf,
    empirical_pvalue, wald_statistic, wald_two_cohort, TestResult,
};
pub use rng::{derive_stream, sample, DistributionSpec, RngStream};
pub use select::{forward_order_select, OrderSelection};
pub use simulate::{generate_datasets, power_curve, run_study, SimSetting, Study, TrialRecord};
pub use trig::{
    circular_diff, design_matrix, fit_individual, gamma_to_theta, predict, theta_to_gamma,
    AmpPhaseParams, CohortData, Harmonic, IndividualFit, LinearParams, SubjectSeries,
};
pub use two_stage::{
    apply_g, rts_estimate, rts_transform, sts_estimate, Estimate, GEvaluation, GSpec, Method,
    RtsEstimate, StsEstimate,
};
