//! Wald statistics, asymptotic chi-squared p-values, and the nonparametric
//! random-effects plus residual bootstrap.
//!
//! Every bootstrap replicate owns the substream `rng / [replicate, attempt]`,
//! so the replicate statistics and the resulting p-value do not depend on how
//! rayon schedules the work.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::trig::circular_diff;
use crate::trig::{amplitude, AmpPhaseParams, CohortData, IndividualFit, SubjectDesign};
use crate::two_stage::{apply_g, Estimate, GEvaluation, GSpec, Method};

/// Largest condition number accepted for a Wald covariance.
pub const MAX_CONDITION: f64 = 1e12;

/// Attempts per replicate before the bootstrap gives up on it.
const MAX_ATTEMPTS: u64 = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub q: usize,
    pub p_asymptotic: f64,
    pub p_bootstrap: Option<f64>,
    pub replicates: Option<usize>,
    pub method: Method,
    pub test: GSpec,
    pub seed: Option<u64>,
    /// Replicates that had to be redrawn.
    pub failed_replicates: usize,
}

/// `vᵀ Σ⁻¹ v`.
pub fn wald_statistic(value: &DVector<f64>, var: &DMatrix<f64>) -> Result<f64> {
    let q = value.len();
    if var.nrows() != q || var.ncols() != q {
        return Err(Error::Parameter(format!(
            "covariance is {}x{} for a statistic of dimension {q}",
            var.nrows(),
            var.ncols()
        )));
    }
    if value.iter().chain(var.iter()).any(|x| !x.is_finite()) {
        return Err(Error::SingularCovariance(f64::INFINITY));
    }
    let sv = var.clone().singular_values();
    let (max, min) = (sv.max(), sv.min());
    let cond = if min > 0.0 { max / min } else { f64::INFINITY };
    if cond.is_nan() || cond >= MAX_CONDITION {
        return Err(Error::SingularCovariance(cond));
    }
    let solved = var
        .clone()
        .lu()
        .solve(value)
        .ok_or(Error::SingularCovariance(cond))?;
    Ok(value.dot(&solved))
}

/// `(v₁ − v₀)ᵀ (Σ₁ + Σ₀)⁻¹ (v₁ − v₀)`.
pub fn wald_two_cohort(
    v1: &DVector<f64>,
    var1: &DMatrix<f64>,
    v0: &DVector<f64>,
    var0: &DMatrix<f64>,
) -> Result<f64> {
    if v1.len() != v0.len() || var1.shape() != var0.shape() {
        return Err(Error::Parameter(
            "cohort statistics have mismatched dimensions".into(),
        ));
    }
    wald_statistic(&(v1 - v0), &(var1 + var0))
}

/// Two-cohort statistic from evaluated hypothesis functions; phase entries
/// are compared by circular difference.
pub fn two_cohort_statistic(case: &GEvaluation, control: &GEvaluation) -> Result<f64> {
    if case.value.len() != control.value.len() {
        return Err(Error::Parameter(
            "cohort statistics have mismatched dimensions".into(),
        ));
    }
    let diff = DVector::from_iterator(
        case.value.len(),
        (0..case.value.len()).map(|i| {
            if case.circular[i] {
                circular_diff(case.value[i], control.value[i])
            } else {
                case.value[i] - control.value[i]
            }
        }),
    );
    wald_statistic(&diff, &(&case.var + &control.var))
}

/// Upper tail of the central chi-squared distribution with `q` degrees of
/// freedom.
pub fn chisq_sf(tau: f64, q: usize) -> f64 {
    if tau <= 0.0 {
        return 1.0;
    }
    if tau.is_infinite() {
        return 0.0;
    }
    gamma_ur(q as f64 / 2.0, tau / 2.0).clamp(0.0, 1.0)
}

/// Fraction of replicate statistics at least as large as `tau` (ties count).
pub fn empirical_pvalue(tau: f64, replicate_taus: &[f64]) -> f64 {
    let hits = replicate_taus.iter().filter(|&&t| tau <= t).count();
    hits as f64 / replicate_taus.len() as f64
}

/// A cohort fitted at a fixed order, keeping the designs for refits.
struct PreparedCohort {
    designs: Vec<SubjectDesign>,
    fits: Vec<IndividualFit>,
}

impl PreparedCohort {
    fn new(cohort: &CohortData, order: usize) -> Result<Self> {
        let mut designs = Vec::with_capacity(cohort.len());
        let mut fits = Vec::with_capacity(cohort.len());
        for s in &cohort.subjects {
            let design = SubjectDesign::new(&s.times, order)?;
            fits.push(design.fit(&s.values)?);
            designs.push(design);
        }
        Ok(PreparedCohort { designs, fits })
    }

    /// Regenerates subject `i` from coefficients `coeffs` plus a resample of
    /// its own residuals, then refits.
    fn refit(&self, i: usize, coeffs: &DVector<f64>, rng: &mut RngStream) -> Result<IndividualFit> {
        let residuals = &self.fits[i].residuals;
        let n = residuals.len();
        let mut y = self.designs[i].evaluate(coeffs);
        for v in y.iter_mut() {
            *v += residuals[rng.index(n)];
        }
        self.designs[i].fit(y.as_slice())
    }
}

/// Recentres the amplitude of each listed harmonic on the population
/// amplitude and points it along the population phase, leaving the midline
/// and other harmonics untouched.
pub fn impose_null(
    gamma: &DVector<f64>,
    population: &AmpPhaseParams,
    harmonics: &[usize],
) -> DVector<f64> {
    let mut out = gamma.clone();
    for &k in harmonics {
        let a = amplitude(gamma[2 * k - 1], gamma[2 * k]);
        let pop = population.harmonics[k - 1];
        let shifted = a - pop.amplitude;
        let (sin_phi, cos_phi) = pop.phase.sin_cos();
        out[2 * k - 1] = -shifted * sin_phi;
        out[2 * k] = shifted * cos_phi;
    }
    out
}

fn run_replicates<F>(replicates: usize, rng: &RngStream, replicate: F) -> Result<(Vec<f64>, usize)>
where
    F: Fn(&mut RngStream) -> Result<f64> + Sync,
{
    let outcomes: Vec<Result<(f64, usize)>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut failures = 0;
            let mut last = None;
            for attempt in 0..MAX_ATTEMPTS {
                let mut stream = rng.descend(&[r as u64, attempt]);
                match replicate(&mut stream) {
                    Ok(tau) => return Ok((tau, failures)),
                    Err(e) => {
                        failures += 1;
                        last = Some(e);
                    }
                }
            }
            Err(Error::Bootstrap {
                failed: failures,
                requested: replicates,
                last: last.map(|e| e.to_string()).unwrap_or_default(),
            })
        })
        .collect();
    let mut taus = Vec::with_capacity(replicates);
    let mut failed = 0;
    for outcome in outcomes {
        let (tau, f) = outcome?;
        taus.push(tau);
        failed += f;
    }
    if failed * 100 > replicates {
        return Err(Error::Bootstrap {
            failed,
            requested: replicates,
            last: "more than 1% of replicates failed".into(),
        });
    }
    Ok((taus, failed))
}

fn check_replicates(replicates: usize) -> Result<()> {
    if replicates == 0 {
        return Err(Error::Parameter("replicate count must be positive".into()));
    }
    Ok(())
}

/// Bootstrap test that every population amplitude is zero.
pub fn bootstrap_zero_amplitudes(
    cohort: &CohortData,
    order: usize,
    method: Method,
    replicates: usize,
    rng: &RngStream,
) -> Result<TestResult> {
    bootstrap_amplitude_test(
        cohort,
        order,
        method,
        GSpec::ZeroAmplitudes,
        replicates,
        rng,
    )
}

/// Null-imposing bootstrap for [`GSpec::ZeroAmplitudes`] or
/// [`GSpec::SingleAmplitude`]. Only the tested harmonics are recentred.
pub fn bootstrap_amplitude_test(
    cohort: &CohortData,
    order: usize,
    method: Method,
    spec: GSpec,
    replicates: usize,
    rng: &RngStream,
) -> Result<TestResult> {
    check_replicates(replicates)?;
    let harmonics: Vec<usize> = match spec {
        GSpec::ZeroAmplitudes => (1..=order).collect(),
        GSpec::SingleAmplitude(k) => vec![k],
        other => {
            return Err(Error::Parameter(format!(
                "{} is not a single-cohort amplitude test",
                other.name()
            )))
        }
    };
    let q = spec.q(order)?;
    let prepared = PreparedCohort::new(cohort, order)?;
    let estimate = Estimate::from_fits(method, prepared.fits.clone())?;
    let tau = wald_statistic_of(&estimate, spec)?;
    let population = estimate.population_params();
    let gammas: Vec<&DVector<f64>> = prepared.fits.iter().map(|f| f.params.coeffs()).collect();
    let m = gammas.len();

    let (taus, failed) = run_replicates(replicates, rng, |stream| {
        let picks: Vec<usize> = (0..m).map(|_| stream.index(m)).collect();
        let fits = picks
            .iter()
            .enumerate()
            .map(|(i, &pick)| {
                let null_coeffs = impose_null(gammas[pick], &population, &harmonics);
                prepared.refit(i, &null_coeffs, stream)
            })
            .collect::<Result<Vec<_>>>()?;
        wald_statistic_of(&Estimate::from_fits(method, fits)?, spec)
    })?;

    Ok(TestResult {
        statistic: tau,
        q,
        p_asymptotic: chisq_sf(tau, q),
        p_bootstrap: Some(empirical_pvalue(tau, &taus)),
        replicates: Some(replicates),
        method,
        test: spec,
        seed: Some(rng.seed()),
        failed_replicates: failed,
    })
}

fn wald_statistic_of(estimate: &Estimate, spec: GSpec) -> Result<f64> {
    let eval = apply_g(estimate, spec)?;
    wald_statistic(&eval.value, &eval.var)
}

fn two_cohort_tau(case: &Estimate, control: &Estimate, spec: GSpec) -> Result<f64> {
    two_cohort_statistic(&apply_g(case, spec)?, &apply_g(control, spec)?)
}

/// Bootstrap test of `g(case) = g(control)`, resampling subject-level
/// coefficients from the pooled cohorts.
pub fn bootstrap_two_cohort(
    case: &CohortData,
    control: &CohortData,
    order: usize,
    method: Method,
    test: GSpec,
    replicates: usize,
    rng: &RngStream,
) -> Result<TestResult> {
    check_replicates(replicates)?;
    let q = test.q(order)?;
    let prepared = [
        PreparedCohort::new(case, order)?,
        PreparedCohort::new(control, order)?,
    ];
    let case_est = Estimate::from_fits(method, prepared[0].fits.clone())?;
    let control_est = Estimate::from_fits(method, prepared[1].fits.clone())?;
    let tau = two_cohort_tau(&case_est, &control_est, test)?;

    // control first, then case
    let pooled: Vec<&DVector<f64>> = prepared[1]
        .fits
        .iter()
        .chain(&prepared[0].fits)
        .map(|f| f.params.coeffs())
        .collect();

    let (taus, failed) = run_replicates(replicates, rng, |stream| {
        let mut estimates = Vec::with_capacity(2);
        for cohort in &prepared {
            let m = cohort.fits.len();
            let picks: Vec<usize> = (0..m).map(|_| stream.index(pooled.len())).collect();
            let fits = picks
                .iter()
                .enumerate()
                .map(|(i, &pick)| cohort.refit(i, pooled[pick], stream))
                .collect::<Result<Vec<_>>>()?;
            estimates.push(Estimate::from_fits(method, fits)?);
        }
        two_cohort_tau(&estimates[0], &estimates[1], test)
    })?;

    Ok(TestResult {
        statistic: tau,
        q,
        p_asymptotic: chisq_sf(tau, q),
        p_bootstrap: Some(empirical_pvalue(tau, &taus)),
        replicates: Some(replicates),
        method,
        test,
        seed: Some(rng.seed()),
        failed_replicates: failed,
    })
}
