//! Population-level estimation.
//!
//! The standard two-stage (STS) estimator averages the per-subject linear
//! coefficients γ̂ᵢ. The refined two-stage (RTS) estimator first maps each
//! γ̂ᵢ to `(midline, [amplitude, sin φ, cos φ] per harmonic)` and averages
//! those, which keeps phase dispersion from shrinking the amplitudes.
//!
//! Hypotheses are expressed as smooth functions `g` of the population vector;
//! their variance follows the Delta method with a between-subject term at the
//! population estimate and a within-subject term averaged over subjects.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::wrap_angle;
use crate::trig::{amplitude, phase, AmpPhaseParams, Harmonic, IndividualFit};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sts,
    Rts,
}

impl Method {
    pub const BOTH: [Method; 2] = [Method::Sts, Method::Rts];

    pub fn name(self) -> &'static str {
        match self {
            Method::Sts => "sts",
            Method::Rts => "rts",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Sts => "STS",
            Method::Rts => "RTS",
        })
    }
}

/// The hypothesis functions supported by the Wald machinery.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GSpec {
    /// All population amplitudes (q = K).
    ZeroAmplitudes,
    /// The midline (q = 1).
    EqualMidlines,
    /// Amplitude and phase of every harmonic, interleaved (q = 2K).
    EqualRhythms,
    /// Amplitude of harmonic k, 1-based (q = 1).
    SingleAmplitude(usize),
}

impl GSpec {
    pub fn q(self, order: usize) -> Result<usize> {
        self.components(order).map(|c| c.len())
    }

    pub fn name(self) -> String {
        match self {
            GSpec::ZeroAmplitudes => "zero-amplitudes".into(),
            GSpec::EqualMidlines => "equal-midlines".into(),
            GSpec::EqualRhythms => "equal-rhythms".into(),
            GSpec::SingleAmplitude(k) => format!("single-amplitude({k})"),
        }
    }

    fn components(self, order: usize) -> Result<Vec<Component>> {
        let incompatible = || Error::IncompatibleTest {
            test: self.name(),
            order,
        };
        let comps = match self {
            GSpec::ZeroAmplitudes => (1..=order).map(Component::Amplitude).collect(),
            GSpec::EqualMidlines => vec![Component::Midline],
            GSpec::EqualRhythms => (1..=order)
                .flat_map(|k| [Component::Amplitude(k), Component::Phase(k)])
                .collect(),
            GSpec::SingleAmplitude(k) if k >= 1 && k <= order => vec![Component::Amplitude(k)],
            GSpec::SingleAmplitude(_) => return Err(incompatible()),
        };
        if Vec::is_empty(&comps) {
            return Err(incompatible());
        }
        Ok(comps)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Component {
    Midline,
    Amplitude(usize),
    Phase(usize),
}

/// STS population estimate.
#[derive(Clone, Debug)]
pub struct StsEstimate {
    /// α̂, the mean of the γ̂ᵢ.
    pub alpha: DVector<f64>,
    /// D̂, between-subject covariance (divisor M − 1).
    pub between_cov: DMatrix<f64>,
    /// Average of the Σ̂ᵢ.
    pub mean_within_cov: DMatrix<f64>,
    /// `(D̂ + mean Σ̂ᵢ) / M`
    pub var_alpha: DMatrix<f64>,
    pub m: usize,
    pub order: usize,
    pub fits: Vec<IndividualFit>,
}

/// RTS population estimate.
#[derive(Clone, Debug)]
pub struct RtsEstimate {
    /// β̃, ordered midline then `[amplitude, sin φ, cos φ]` per harmonic.
    pub beta_tilde: DVector<f64>,
    /// D̃, between-subject covariance of the transformed vectors.
    pub between_cov: DMatrix<f64>,
    pub individual_transforms: Vec<DVector<f64>>,
    pub fits: Vec<IndividualFit>,
    pub m: usize,
    pub order: usize,
}

fn check_cohort(fits: &[IndividualFit]) -> Result<usize> {
    if fits.len() < 2 {
        return Err(Error::InsufficientCohort(fits.len()));
    }
    let order = fits[0].order();
    if let Some(f) = fits.iter().find(|f| f.order() != order) {
        return Err(Error::InconsistentOrder {
            expected: order,
            found: f.order(),
        });
    }
    Ok(order)
}

fn mean_and_covariance(vectors: &[DVector<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let m = vectors.len();
    let dim = vectors[0].len();
    let mut mean = DVector::zeros(dim);
    for v in vectors {
        mean += v;
    }
    mean /= m as f64;
    let mut cov = DMatrix::zeros(dim, dim);
    for v in vectors {
        let d = v - &mean;
        cov.ger(1.0, &d, &d, 1.0);
    }
    cov /= (m - 1) as f64;
    (mean, cov)
}

impl StsEstimate {
    pub fn from_fits(fits: Vec<IndividualFit>) -> Result<Self> {
        let order = check_cohort(&fits)?;
        let m = fits.len();
        let gammas: Vec<DVector<f64>> = fits.iter().map(|f| f.params.coeffs().clone()).collect();
        let (alpha, between_cov) = mean_and_covariance(&gammas);
        let p = alpha.len();
        let mut mean_within_cov = DMatrix::zeros(p, p);
        for f in &fits {
            mean_within_cov += &f.within_cov;
        }
        mean_within_cov /= m as f64;
        let var_alpha = (&between_cov + &mean_within_cov) / m as f64;
        Ok(StsEstimate {
            alpha,
            between_cov,
            mean_within_cov,
            var_alpha,
            m,
            order,
            fits,
        })
    }

    /// Amplitude-phase parameters implied by α̂.
    pub fn population_params(&self) -> AmpPhaseParams {
        let harmonics = (1..=self.order)
            .map(|k| {
                let (s, c) = (self.alpha[2 * k - 1], self.alpha[2 * k]);
                Harmonic {
                    amplitude: amplitude(s, c),
                    phase: phase(s, c),
                }
            })
            .collect();
        AmpPhaseParams {
            midline: self.alpha[0],
            harmonics,
        }
    }
}

pub fn sts_estimate(fits: &[IndividualFit]) -> Result<StsEstimate> {
    StsEstimate::from_fits(fits.to_vec())
}

/// Maps γ̂ to `[γ̂₀, (A, sin φ, cos φ) per harmonic]`.
pub fn rts_transform(fit: &IndividualFit) -> DVector<f64> {
    transform_coeffs(fit.params.coeffs())
}

pub(crate) fn transform_coeffs(gamma: &DVector<f64>) -> DVector<f64> {
    let order = (gamma.len() - 1) / 2;
    let mut out = DVector::zeros(3 * order + 1);
    out[0] = gamma[0];
    for k in 1..=order {
        let (s, c) = (gamma[2 * k - 1], gamma[2 * k]);
        let (sin_phi, cos_phi) = phase(s, c).sin_cos();
        out[3 * k - 2] = amplitude(s, c);
        out[3 * k - 1] = sin_phi;
        out[3 * k] = cos_phi;
    }
    out
}

impl RtsEstimate {
    pub fn from_fits(fits: Vec<IndividualFit>) -> Result<Self> {
        let order = check_cohort(&fits)?;
        let individual_transforms: Vec<DVector<f64>> = fits.iter().map(rts_transform).collect();
        let (beta_tilde, between_cov) = mean_and_covariance(&individual_transforms);
        Ok(RtsEstimate {
            beta_tilde,
            between_cov,
            individual_transforms,
            m: fits.len(),
            order,
            fits,
        })
    }

    /// Amplitudes from β̃ and phases `atan2(mean sin, mean cos)`. The averaged
    /// pair is not renormalised; atan2 is scale invariant.
    pub fn population_params(&self) -> AmpPhaseParams {
        let harmonics = (1..=self.order)
            .map(|k| {
                let (s, c) = (self.beta_tilde[3 * k - 1], self.beta_tilde[3 * k]);
                Harmonic {
                    amplitude: self.beta_tilde[3 * k - 2],
                    phase: if s == 0.0 && c == 0.0 {
                        0.0
                    } else {
                        wrap_angle(s.atan2(c))
                    },
                }
            })
            .collect();
        AmpPhaseParams {
            midline: self.beta_tilde[0],
            harmonics,
        }
    }
}

pub fn rts_estimate(fits: &[IndividualFit]) -> Result<RtsEstimate> {
    RtsEstimate::from_fits(fits.to_vec())
}

/// Either population estimate.
#[derive(Clone, Debug)]
pub enum Estimate {
    Sts(StsEstimate),
    Rts(RtsEstimate),
}

impl Estimate {
    pub fn from_fits(method: Method, fits: Vec<IndividualFit>) -> Result<Self> {
        Ok(match method {
            Method::Sts => Estimate::Sts(StsEstimate::from_fits(fits)?),
            Method::Rts => Estimate::Rts(RtsEstimate::from_fits(fits)?),
        })
    }

    pub fn method(&self) -> Method {
        match self {
            Estimate::Sts(_) => Method::Sts,
            Estimate::Rts(_) => Method::Rts,
        }
    }

    pub fn order(&self) -> usize {
        match self {
            Estimate::Sts(e) => e.order,
            Estimate::Rts(e) => e.order,
        }
    }

    pub fn m(&self) -> usize {
        match self {
            Estimate::Sts(e) => e.m,
            Estimate::Rts(e) => e.m,
        }
    }

    pub fn fits(&self) -> &[IndividualFit] {
        match self {
            Estimate::Sts(e) => &e.fits,
            Estimate::Rts(e) => &e.fits,
        }
    }

    /// The population vector (α̂ or β̃).
    pub fn population_vector(&self) -> &DVector<f64> {
        match self {
            Estimate::Sts(e) => &e.alpha,
            Estimate::Rts(e) => &e.beta_tilde,
        }
    }

    pub fn population_params(&self) -> AmpPhaseParams {
        match self {
            Estimate::Sts(e) => e.population_params(),
            Estimate::Rts(e) => e.population_params(),
        }
    }
}

/// `g` evaluated at a population estimate, with its Delta-method variance.
#[derive(Clone, Debug)]
pub struct GEvaluation {
    pub value: DVector<f64>,
    pub var: DMatrix<f64>,
    /// True for entries that are phases (circular quantities).
    pub circular: Vec<bool>,
}

fn degenerate(what: &str, k: usize) -> Error {
    Error::DegeneratePoint(format!("{what} of harmonic {k} is zero"))
}

fn order_of_linear(x: &DVector<f64>) -> Result<usize> {
    if x.len() % 2 == 1 {
        Ok((x.len() - 1) / 2)
    } else {
        Err(Error::Parameter(format!(
            "linear parameter vector has even length {}",
            x.len()
        )))
    }
}

fn order_of_transformed(z: &DVector<f64>) -> Result<usize> {
    if z.len() % 3 == 1 {
        Ok((z.len() - 1) / 3)
    } else {
        Err(Error::Parameter(format!(
            "transformed parameter vector has length {}, expected 3K+1",
            z.len()
        )))
    }
}

fn nonzero_amplitude(s: f64, c: f64, k: usize) -> Result<f64> {
    let a = amplitude(s, c);
    if a == 0.0 || !a.is_finite() {
        return Err(degenerate("amplitude", k));
    }
    Ok(a)
}

/// STS `g` and its Jacobian (q × (2K+1)) at a linear parameter vector.
pub fn g_linear(x: &DVector<f64>, spec: GSpec) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let order = order_of_linear(x)?;
    let comps = spec.components(order)?;
    let mut value = DVector::zeros(comps.len());
    let mut jac = DMatrix::zeros(comps.len(), x.len());
    for (row, comp) in comps.iter().enumerate() {
        match *comp {
            Component::Midline => {
                value[row] = x[0];
                jac[(row, 0)] = 1.0;
            }
            Component::Amplitude(k) => {
                let (s, c) = (x[2 * k - 1], x[2 * k]);
                let a = nonzero_amplitude(s, c, k)?;
                value[row] = a;
                jac[(row, 2 * k - 1)] = s / a;
                jac[(row, 2 * k)] = c / a;
            }
            Component::Phase(k) => {
                let (s, c) = (x[2 * k - 1], x[2 * k]);
                let a = nonzero_amplitude(s, c, k)?;
                value[row] = phase(s, c);
                jac[(row, 2 * k - 1)] = -c / (a * a);
                jac[(row, 2 * k)] = s / (a * a);
            }
        }
    }
    Ok((value, jac))
}

/// RTS `g₁` and its Jacobian (q × (3K+1)) at a transformed vector.
pub fn g_transformed(z: &DVector<f64>, spec: GSpec) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let order = order_of_transformed(z)?;
    let comps = spec.components(order)?;
    let mut value = DVector::zeros(comps.len());
    let mut jac = DMatrix::zeros(comps.len(), z.len());
    for (row, comp) in comps.iter().enumerate() {
        match *comp {
            Component::Midline => {
                value[row] = z[0];
                jac[(row, 0)] = 1.0;
            }
            Component::Amplitude(k) => {
                value[row] = z[3 * k - 2];
                jac[(row, 3 * k - 2)] = 1.0;
            }
            Component::Phase(k) => {
                let (s, c) = (z[3 * k - 1], z[3 * k]);
                let r2 = s * s + c * c;
                if r2 == 0.0 || !r2.is_finite() {
                    return Err(degenerate("mean phase vector", k));
                }
                value[row] = wrap_angle(s.atan2(c));
                jac[(row, 3 * k - 1)] = c / r2;
                jac[(row, 3 * k)] = -s / r2;
            }
        }
    }
    Ok((value, jac))
}

/// RTS `g₂ = g₁ ∘ T` and its Jacobian (q × (2K+1)) at a linear vector, where
/// `T` is the per-subject transform. The Jacobian is `G₁(T(γ)) · J_T(γ)`,
/// evaluated only on the harmonics `g₁` touches.
pub fn g_composed(gamma: &DVector<f64>, spec: GSpec) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let order = order_of_linear(gamma)?;
    let z = transform_coeffs(gamma);
    let (value, outer) = g_transformed(&z, spec)?;
    let comps = spec.components(order)?;
    let mut jac = DMatrix::zeros(comps.len(), gamma.len());
    for (row, comp) in comps.iter().enumerate() {
        match *comp {
            Component::Midline => jac[(row, 0)] = outer[(row, 0)],
            Component::Amplitude(k) | Component::Phase(k) => {
                let (g1, g2) = (gamma[2 * k - 1], gamma[2 * k]);
                let a = nonzero_amplitude(g1, g2, k)?;
                let a3 = a * a * a;
                // rows of J_T for (A, sin φ, cos φ) with respect to (γ₂ₖ₋₁, γ₂ₖ)
                let d_amp = [g1 / a, g2 / a];
                let d_sin = [-g2 * g2 / a3, g1 * g2 / a3];
                let d_cos = [-g1 * g2 / a3, g1 * g1 / a3];
                let (wa, ws, wc) = (
                    outer[(row, 3 * k - 2)],
                    outer[(row, 3 * k - 1)],
                    outer[(row, 3 * k)],
                );
                for j in 0..2 {
                    jac[(row, 2 * k - 1 + j)] = wa * d_amp[j] + ws * d_sin[j] + wc * d_cos[j];
                }
            }
        }
    }
    Ok((value, jac))
}

fn sandwich(jac: &DMatrix<f64>, cov: &DMatrix<f64>) -> DMatrix<f64> {
    jac * cov * jac.transpose()
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Evaluates `g` on a population estimate and its Delta-method variance.
pub fn apply_g(est: &Estimate, spec: GSpec) -> Result<GEvaluation> {
    let order = est.order();
    let comps = spec.components(order)?;
    let circular = comps
        .iter()
        .map(|c| matches!(c, Component::Phase(_)))
        .collect();
    let m = est.m() as f64;
    let (value, pop_jac, between) = match est {
        Estimate::Sts(e) => {
            let (v, j) = g_linear(&e.alpha, spec)?;
            (v, j, &e.between_cov)
        }
        Estimate::Rts(e) => {
            let (v, j) = g_transformed(&e.beta_tilde, spec)?;
            (v, j, &e.between_cov)
        }
    };
    let q = value.len();
    let mut within = DMatrix::zeros(q, q);
    for fit in est.fits() {
        let jac = match est {
            Estimate::Sts(_) => g_linear(fit.params.coeffs(), spec)?.1,
            Estimate::Rts(_) => g_composed(fit.params.coeffs(), spec)?.1,
        };
        within += sandwich(&jac, &fit.within_cov);
    }
    within /= m;
    let var = symmetrize((sandwich(&pop_jac, between) + within) / m);
    Ok(GEvaluation {
        value,
        var,
        circular,
    })
}
