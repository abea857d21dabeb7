//! Forward selection of the harmonic order.
//!
//! Starting from `k = 1`, harmonic `k` is kept while the bootstrap test of
//! its amplitude rejects at the chosen threshold. The selected order is the
//! last retained `k` (possibly 0).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::bootstrap_amplitude_test;
use crate::rng::RngStream;
use crate::trig::CohortData;
use crate::two_stage::{GSpec, Method};

pub const DEFAULT_THRESHOLD: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub k: usize,
    pub p_value: f64,
    pub retained: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderSelection {
    pub selected: usize,
    pub steps: Vec<SelectionStep>,
    /// Set when the search stopped early because some subject had too few
    /// samples to fit the next order.
    pub truncated: bool,
    pub method: Method,
    pub replicates: usize,
    pub seed: u64,
    pub threshold: f64,
}

/// Forward selection with the default 0.05 threshold.
pub fn forward_order_select(
    cohort: &CohortData,
    max_order: usize,
    method: Method,
    replicates: usize,
    rng: &RngStream,
) -> Result<OrderSelection> {
    forward_order_select_at(
        cohort,
        max_order,
        method,
        replicates,
        rng,
        DEFAULT_THRESHOLD,
    )
}

/// Step `k` draws from `rng.child(k)`, so a run to `max_order` shares its
/// prefix with any shorter run.
pub fn forward_order_select_at(
    cohort: &CohortData,
    max_order: usize,
    method: Method,
    replicates: usize,
    rng: &RngStream,
    threshold: f64,
) -> Result<OrderSelection> {
    if max_order == 0 {
        return Err(Error::Parameter("maximum order must be at least 1".into()));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Parameter(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )));
    }
    let min_n = cohort.min_samples();
    let mut selection = OrderSelection {
        selected: 0,
        steps: Vec::new(),
        truncated: false,
        method,
        replicates,
        seed: rng.seed(),
        threshold,
    };
    for k in 1..=max_order {
        if min_n <= 2 * k + 1 {
            selection.truncated = true;
            break;
        }
        let result = bootstrap_amplitude_test(
            cohort,
            k,
            method,
            GSpec::SingleAmplitude(k),
            replicates,
            &rng.child(k as u64),
        )?;
        let p_value = result.p_bootstrap.expect("bootstrap p-value");
        let retained = p_value < threshold;
        selection.steps.push(SelectionStep {
            k,
            p_value,
            retained,
        });
        if !retained {
            break;
        }
        selection.selected = k;
    }
    if selection.steps.is_empty() {
        return Err(Error::InsufficientData {
            n: min_n,
            params: 3,
        });
    }
    Ok(selection)
}
