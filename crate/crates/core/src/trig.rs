//! Individual-level trigonometric regression with a 24-hour fundamental
//! period.
//!
//! The linear model of order `K` is
//!
//! ```text
//! h(t, γ) = γ₀ + Σₖ [γ₂ₖ₋₁ sin(kπt/12) + γ₂ₖ cos(kπt/12)]
//! ```
//!
//! and the equivalent amplitude-phase form is
//! `θ₀ + Σₖ θ₂ₖ₋₁ cos(kπt/12 + θ₂ₖ)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::wrap_angle;

/// Relative threshold on the smallest eigenvalue of `WᵀW` (scaled by `n`).
const RANK_TOLERANCE: f64 = 1e-10;

/// One individual's timestamped measurements. Times are in hours.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectSeries {
    pub subject_id: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl SubjectSeries {
    pub fn new(subject_id: impl Into<String>, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let subject_id = subject_id.into();
        if times.len() != values.len() {
            return Err(Error::Input(format!(
                "subject {subject_id}: {} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.is_empty() {
            return Err(Error::Input(format!(
                "subject {subject_id} has no measurements"
            )));
        }
        if times.iter().chain(&values).any(|x| !x.is_finite()) {
            return Err(Error::Input(format!(
                "subject {subject_id} contains non-finite entries"
            )));
        }
        Ok(SubjectSeries {
            subject_id,
            times,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// A cohort of individuals sharing one population-level model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortData {
    pub cohort_id: String,
    pub subjects: Vec<SubjectSeries>,
}

impl CohortData {
    pub fn new(cohort_id: impl Into<String>, subjects: Vec<SubjectSeries>) -> Result<Self> {
        let cohort_id = cohort_id.into();
        if subjects.is_empty() {
            return Err(Error::Input(format!("cohort {cohort_id} has no subjects")));
        }
        let mut seen = std::collections::HashSet::new();
        for s in &subjects {
            if !seen.insert(s.subject_id.as_str()) {
                return Err(Error::Input(format!(
                    "cohort {cohort_id}: duplicate subject id {}",
                    s.subject_id
                )));
            }
        }
        Ok(CohortData {
            cohort_id,
            subjects,
        })
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn min_samples(&self) -> usize {
        self.subjects.iter().map(|s| s.len()).min().unwrap_or(0)
    }
}

/// Coefficients `(γ₀, γ₁, …, γ₂ₖ)` of the linear trigonometric model.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearParams {
    order: usize,
    coeffs: DVector<f64>,
}

impl LinearParams {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() || coeffs.len().is_multiple_of(2) {
            return Err(Error::Parameter(format!(
                "linear parameter vector must have odd length 2K+1, got {}",
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Parameter("non-finite coefficient".into()));
        }
        Ok(LinearParams {
            order: (coeffs.len() - 1) / 2,
            coeffs: DVector::from_vec(coeffs),
        })
    }

    pub(crate) fn from_vector(coeffs: DVector<f64>) -> Self {
        debug_assert!(coeffs.len() % 2 == 1);
        LinearParams {
            order: (coeffs.len() - 1) / 2,
            coeffs,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        &self.coeffs
    }

    pub fn midline(&self) -> f64 {
        self.coeffs[0]
    }

    /// `(γ₂ₖ₋₁, γ₂ₖ)` for harmonic `k` (1-based).
    pub fn harmonic(&self, k: usize) -> (f64, f64) {
        (self.coeffs[2 * k - 1], self.coeffs[2 * k])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub amplitude: f64,
    pub phase: f64,
}

/// Amplitude-phase parameters: midline plus one (amplitude, phase) pair per
/// harmonic, with phases on `[-π, π)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmpPhaseParams {
    pub midline: f64,
    pub harmonics: Vec<Harmonic>,
}

impl AmpPhaseParams {
    pub fn new(midline: f64, harmonics: Vec<Harmonic>) -> Result<Self> {
        for (i, h) in harmonics.iter().enumerate() {
            if !(h.amplitude.is_finite() && h.phase.is_finite()) || h.amplitude < 0.0 {
                return Err(Error::Parameter(format!(
                    "harmonic {}: amplitude must be finite and non-negative, phase finite",
                    i + 1
                )));
            }
        }
        if !midline.is_finite() {
            return Err(Error::Parameter("non-finite midline".into()));
        }
        let harmonics = harmonics
            .into_iter()
            .map(|h| Harmonic {
                amplitude: h.amplitude,
                phase: wrap_angle(h.phase),
            })
            .collect();
        Ok(AmpPhaseParams { midline, harmonics })
    }

    pub fn order(&self) -> usize {
        self.harmonics.len()
    }
}

/// Amplitude of a `(γ₂ₖ₋₁, γ₂ₖ)` pair.
pub fn amplitude(sin_coef: f64, cos_coef: f64) -> f64 {
    sin_coef.hypot(cos_coef)
}

/// Phase of a `(γ₂ₖ₋₁, γ₂ₖ)` pair on `[-π, π)`; zero for the zero pair.
pub fn phase(sin_coef: f64, cos_coef: f64) -> f64 {
    if sin_coef == 0.0 && cos_coef == 0.0 {
        return 0.0;
    }
    wrap_angle((-sin_coef).atan2(cos_coef))
}

pub fn gamma_to_theta(p: &LinearParams) -> AmpPhaseParams {
    let harmonics = (1..=p.order())
        .map(|k| {
            let (s, c) = p.harmonic(k);
            Harmonic {
                amplitude: amplitude(s, c),
                phase: phase(s, c),
            }
        })
        .collect();
    AmpPhaseParams {
        midline: p.midline(),
        harmonics,
    }
}

pub fn theta_to_gamma(p: &AmpPhaseParams) -> LinearParams {
    let mut coeffs = Vec::with_capacity(2 * p.order() + 1);
    coeffs.push(p.midline);
    for h in &p.harmonics {
        coeffs.push(-h.amplitude * h.phase.sin());
        coeffs.push(h.amplitude * h.phase.cos());
    }
    LinearParams::from_vector(DVector::from_vec(coeffs))
}

/// Signed angular difference `a − b` mapped onto `[-π, π)`.
pub fn circular_diff(a: f64, b: f64) -> f64 {
    let d = a - b;
    wrap_angle(d.sin().atan2(d.cos()))
}

fn basis_row(t: f64, order: usize, row: &mut [f64]) {
    row[0] = 1.0;
    for k in 1..=order {
        let (s, c) = (k as f64 * PI * t / 12.0).sin_cos();
        row[2 * k - 1] = s;
        row[2 * k] = c;
    }
}

/// Design matrix with rows `[1, sin(πt/12), cos(πt/12), …, sin(Kπt/12), cos(Kπt/12)]`.
pub fn design_matrix(times: &[f64], order: usize) -> Result<DMatrix<f64>> {
    if times.is_empty() {
        return Err(Error::Input("design matrix needs at least one time".into()));
    }
    if let Some(t) = times.iter().find(|t| !t.is_finite()) {
        return Err(Error::Input(format!("non-finite measurement time {t}")));
    }
    let p = 2 * order + 1;
    let mut w = DMatrix::zeros(times.len(), p);
    let mut row = vec![0.0; p];
    for (j, &t) in times.iter().enumerate() {
        basis_row(t, order, &mut row);
        for (col, &v) in row.iter().enumerate() {
            w[(j, col)] = v;
        }
    }
    Ok(w)
}

/// Evaluates `h(t, γ)` at each time.
pub fn predict(p: &LinearParams, times: &[f64]) -> Vec<f64> {
    let order = p.order();
    let mut row = vec![0.0; 2 * order + 1];
    times
        .iter()
        .map(|&t| {
            basis_row(t, order, &mut row);
            row.iter().zip(p.coeffs.iter()).map(|(a, b)| a * b).sum()
        })
        .collect()
}

/// Per-subject least-squares fit.
#[derive(Clone, Debug)]
pub struct IndividualFit {
    pub params: LinearParams,
    pub residuals: Vec<f64>,
    pub sigma2: f64,
    /// `σ̂² (WᵀW)⁻¹`
    pub within_cov: DMatrix<f64>,
    pub n: usize,
}

impl IndividualFit {
    /// Assembles a fit from known components, e.g. when the parameter values
    /// and noise variance are fixed rather than estimated.
    pub fn from_parts(
        params: LinearParams,
        residuals: Vec<f64>,
        sigma2: f64,
        within_cov: DMatrix<f64>,
    ) -> Result<Self> {
        let p = 2 * params.order() + 1;
        if within_cov.nrows() != p || within_cov.ncols() != p {
            return Err(Error::Parameter(format!(
                "within covariance must be {p}x{p}, got {}x{}",
                within_cov.nrows(),
                within_cov.ncols()
            )));
        }
        if !(sigma2.is_finite() && sigma2 >= 0.0) {
            return Err(Error::Parameter(format!("invalid noise variance {sigma2}")));
        }
        Ok(IndividualFit {
            params,
            n: residuals.len(),
            residuals,
            sigma2,
            within_cov,
        })
    }

    pub fn order(&self) -> usize {
        self.params.order()
    }
}

/// Precomputed least-squares machinery for one subject's sampling times.
///
/// Bootstrap replicates reuse the original times, so the Gram inverse and
/// projection are computed once and every refit is two matrix-vector
/// products.
#[derive(Clone, Debug)]
pub struct SubjectDesign {
    order: usize,
    design: DMatrix<f64>,
    gram_inv: DMatrix<f64>,
    projection: DMatrix<f64>,
}

impl SubjectDesign {
    pub fn new(times: &[f64], order: usize) -> Result<Self> {
        let p = 2 * order + 1;
        if times.len() <= p {
            return Err(Error::InsufficientData {
                n: times.len(),
                params: p,
            });
        }
        let design = design_matrix(times, order)?;
        let gram = design.tr_mul(&design);
        let smallest = SymmetricEigen::new(gram.clone()).eigenvalues.min();
        if smallest < RANK_TOLERANCE * times.len() as f64 {
            return Err(Error::SingularDesign { smallest });
        }
        let gram_inv = match gram.clone().cholesky() {
            Some(chol) => chol.inverse(),
            None => gram
                .col_piv_qr()
                .try_inverse()
                .ok_or(Error::SingularDesign { smallest })?,
        };
        let projection = &gram_inv * design.transpose();
        Ok(SubjectDesign {
            order,
            design,
            gram_inv,
            projection,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn n(&self) -> usize {
        self.design.nrows()
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn gram_inverse(&self) -> &DMatrix<f64> {
        &self.gram_inv
    }

    /// `W γ` at this subject's sampling times.
    pub fn evaluate(&self, coeffs: &DVector<f64>) -> DVector<f64> {
        &self.design * coeffs
    }

    pub fn fit(&self, values: &[f64]) -> Result<IndividualFit> {
        if values.len() != self.n() {
            return Err(Error::Input(format!(
                "{} values for {} design rows",
                values.len(),
                self.n()
            )));
        }
        let y = DVector::from_column_slice(values);
        let coeffs = &self.projection * &y;
        let fitted = &self.design * &coeffs;
        let residuals: Vec<f64> = y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
        let dof = (self.n() - self.design.ncols()) as f64;
        let sigma2 = residuals.iter().map(|r| r * r).sum::<f64>() / dof;
        Ok(IndividualFit {
            params: LinearParams::from_vector(coeffs),
            n: residuals.len(),
            residuals,
            sigma2,
            within_cov: &self.gram_inv * sigma2,
        })
    }
}

/// Ordinary least-squares fit of an order-`K` model to one subject.
pub fn fit_individual(series: &SubjectSeries, order: usize) -> Result<IndividualFit> {
    SubjectDesign::new(&series.times, order)?.fit(&series.values)
}
