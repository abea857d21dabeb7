//! Single-cohort and two-cohort simulation studies comparing the STS and RTS
//! estimators, plus the power / type-I error curve summaries.
//!
//! Data for a trial are drawn from the substream
//! `[setting, trial, variant, cohort, subject]`; bootstrap tests use
//! `[setting, trial, variant, 2 + test]` shared by both methods, so the two
//! methods see identical resampling indices.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4, FRAC_PI_8, PI};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::inference::{bootstrap_amplitude_test, bootstrap_two_cohort};
use crate::rng::{derive_stream, DistributionSpec, RngStream};
use crate::trig::SubjectDesign;
use crate::trig::{circular_diff, AmpPhaseParams, CohortData, Harmonic, SubjectSeries};
use crate::two_stage::{Estimate, GSpec, Method};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    Single,
    TwoCohort,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Harmonics {
    K1,
    K3,
}

impl Harmonics {
    pub fn order(self) -> usize {
        match self {
            Harmonics::K1 => 1,
            Harmonics::K3 => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    High,
    Low,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeFactor {
    /// n = 12 samples per subject, M = 10 subjects.
    Small,
    /// n = 192 samples per subject, M = 20 subjects.
    Large,
}

impl SizeFactor {
    pub fn samples(self) -> usize {
        match self {
            SizeFactor::Small => 12,
            SizeFactor::Large => 192,
        }
    }

    pub fn subjects(self) -> usize {
        match self {
            SizeFactor::Small => 10,
            SizeFactor::Large => 20,
        }
    }
}

/// Which of the two printed amplitude random-effect distributions to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AmplitudeEffectSource {
    /// The SNR-dependent `TN(mean, var, 0, 1/√2)` design factor.
    DesignFactor,
    /// `TN(0, 1/2, −β, β)` centred on zero.
    Quantity4,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SimSetting {
    pub study: Study,
    pub harmonics: Harmonics,
    pub phase_variability: Level,
    pub size: SizeFactor,
    pub snr: Level,
    pub amplitude_effect: AmplitudeEffectSource,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CohortRole {
    /// c = 0
    Control,
    /// c = 1
    Case,
}

impl CohortRole {
    fn index(self) -> u64 {
        match self {
            CohortRole::Control => 0,
            CohortRole::Case => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CohortRole::Control => "control",
            CohortRole::Case => "case",
        }
    }
}

/// Everything needed to generate one cohort.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortDesign {
    pub n: usize,
    pub m: usize,
    pub population: AmpPhaseParams,
    pub midline_effect: DistributionSpec,
    pub amplitude_effects: Vec<DistributionSpec>,
    pub phase_effects: Vec<DistributionSpec>,
    pub noise: DistributionSpec,
}

impl CohortDesign {
    /// Random-effect specs in parameter order (midline, amplitude₁, phase₁, …).
    pub fn effects(&self) -> Vec<DistributionSpec> {
        let mut out = vec![self.midline_effect];
        for (a, p) in self.amplitude_effects.iter().zip(&self.phase_effects) {
            out.push(*a);
            out.push(*p);
        }
        out
    }
}

fn quantity4_effect(amplitude: f64) -> DistributionSpec {
    if amplitude > 0.0 {
        DistributionSpec::TruncatedNormal {
            mean: 0.0,
            variance: 0.5,
            lower: -amplitude,
            upper: amplitude,
        }
    } else {
        DistributionSpec::point_mass(0.0)
    }
}

impl SimSetting {
    pub fn new(study: Study) -> Self {
        SimSetting {
            study,
            harmonics: Harmonics::K1,
            phase_variability: Level::High,
            size: SizeFactor::Large,
            snr: Level::High,
            amplitude_effect: AmplitudeEffectSource::DesignFactor,
        }
    }

    pub fn order(&self) -> usize {
        self.harmonics.order()
    }

    /// Parses a comma-separated list such as `K1,snr=high,size=large,var=high`.
    /// Unspecified factors keep the defaults of [`SimSetting::new`].
    pub fn parse(study: Study, text: &str) -> Result<Self> {
        let mut s = SimSetting::new(study);
        let bad = |token: &str| Error::Input(format!("unrecognised setting token `{token}`"));
        for token in text.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let lower = token.to_ascii_lowercase();
            let (key, value) = match lower.split_once('=') {
                Some((k, v)) => (k.trim().to_string(), v.trim().to_string()),
                None => ("k".to_string(), lower.trim_start_matches('k').to_string()),
            };
            let level = |v: &str| match v {
                "high" => Ok(Level::High),
                "low" => Ok(Level::Low),
                _ => Err(bad(token)),
            };
            match key.as_str() {
                "k" | "harmonics" => {
                    s.harmonics = match value.trim_start_matches('k') {
                        "1" => Harmonics::K1,
                        "3" => Harmonics::K3,
                        _ => return Err(bad(token)),
                    }
                }
                "snr" => s.snr = level(&value)?,
                "var" | "variability" => s.phase_variability = level(&value)?,
                "size" => {
                    s.size = match value.as_str() {
                        "small" => SizeFactor::Small,
                        "large" => SizeFactor::Large,
                        _ => return Err(bad(token)),
                    }
                }
                "amp" | "amplitude-effect" => {
                    s.amplitude_effect = match value.as_str() {
                        "design" | "design-factor" => AmplitudeEffectSource::DesignFactor,
                        "q4" | "quantity-4" | "quantity4" => AmplitudeEffectSource::Quantity4,
                        _ => return Err(bad(token)),
                    }
                }
                _ => return Err(bad(token)),
            }
        }
        Ok(s)
    }

    /// Canonical text form, also the input to the setting hash.
    pub fn key(&self) -> String {
        let level = |l: Level| match l {
            Level::High => "high",
            Level::Low => "low",
        };
        format!(
            "{},K{},snr={},size={},var={},amp={}",
            match self.study {
                Study::Single => "single",
                Study::TwoCohort => "two-cohort",
            },
            self.order(),
            level(self.snr),
            match self.size {
                SizeFactor::Small => "small",
                SizeFactor::Large => "large",
            },
            level(self.phase_variability),
            match self.amplitude_effect {
                AmplitudeEffectSource::DesignFactor => "design",
                AmplitudeEffectSource::Quantity4 => "q4",
            }
        )
    }

    pub fn hash(&self) -> u64 {
        let digest: [u8; 32] = Sha256::digest(self.key().as_bytes()).into();
        u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
    }

    /// Population parameters and random-effect distributions for a cohort.
    pub fn cohort_design(&self, role: CohortRole) -> CohortDesign {
        let high_snr = self.snr == Level::High;
        let (phases, kappa, amp, tn_mean, tn_var, midline): (Vec<f64>, f64, f64, f64, f64, f64) =
            match role {
                CohortRole::Control => (
                    match self.harmonics {
                        Harmonics::K1 => vec![FRAC_PI_4],
                        Harmonics::K3 => vec![FRAC_PI_8, FRAC_PI_4, 3.0 * FRAC_PI_8],
                    },
                    if self.phase_variability == Level::High {
                        2.0
                    } else {
                        8.0
                    },
                    if high_snr { 1.5 } else { 0.5 },
                    if high_snr { -0.75 } else { -0.25 },
                    if high_snr { 0.75 } else { 0.25 },
                    6.0,
                ),
                CohortRole::Case => (
                    match self.harmonics {
                        Harmonics::K1 => vec![FRAC_PI_2],
                        Harmonics::K3 => vec![FRAC_PI_4, FRAC_PI_2, 3.0 * FRAC_PI_4],
                    },
                    if self.phase_variability == Level::High {
                        4.0
                    } else {
                        16.0
                    },
                    if high_snr { 1.0 } else { 0.25 },
                    if high_snr { -0.5 } else { -0.125 },
                    if high_snr { 0.5 } else { 0.375 },
                    if high_snr { 5.0 } else { 4.0 },
                ),
            };
        let population = AmpPhaseParams {
            midline,
            harmonics: phases
                .iter()
                .map(|&phase| Harmonic {
                    amplitude: amp,
                    phase,
                })
                .collect(),
        };
        let amplitude_effect = match self.amplitude_effect {
            AmplitudeEffectSource::DesignFactor => DistributionSpec::TruncatedNormal {
                mean: tn_mean,
                variance: tn_var,
                lower: 0.0,
                upper: FRAC_1_SQRT_2,
            },
            AmplitudeEffectSource::Quantity4 => quantity4_effect(amp),
        };
        let order = phases.len();
        CohortDesign {
            n: self.size.samples(),
            m: self.size.subjects(),
            population,
            midline_effect: DistributionSpec::Normal {
                mean: 0.0,
                variance: 1.0,
            },
            amplitude_effects: vec![amplitude_effect; order],
            phase_effects: vec![
                DistributionSpec::VonMises {
                    mean: 0.0,
                    concentration: kappa,
                };
                order
            ],
            noise: DistributionSpec::Normal {
                mean: 0.0,
                variance: 1.0,
            },
        }
    }

    /// Cohort designs for a dataset variant (1–4) after applying its zeroing
    /// rules. Single-cohort studies return only the control cohort.
    pub fn variant_designs(&self, variant: u8) -> Result<Vec<(CohortRole, CohortDesign)>> {
        if !(1..=4).contains(&variant) {
            return Err(Error::Parameter(format!(
                "dataset variant must be 1-4, got {variant}"
            )));
        }
        let zero_phase_effects = variant == 2 || variant == 4;
        let zero = DistributionSpec::point_mass(0.0);
        match self.study {
            Study::Single => {
                let mut d = self.cohort_design(CohortRole::Control);
                if variant >= 3 {
                    for h in &mut d.population.harmonics {
                        h.amplitude = 0.0;
                    }
                    d.amplitude_effects.fill(zero);
                }
                if zero_phase_effects {
                    d.phase_effects.fill(zero);
                }
                Ok(vec![(CohortRole::Control, d)])
            }
            Study::TwoCohort => {
                let mut case = self.cohort_design(CohortRole::Case);
                let mut control = self.cohort_design(CohortRole::Control);
                if variant >= 3 {
                    control.population = case.population.clone();
                    if self.amplitude_effect == AmplitudeEffectSource::Quantity4 {
                        control.amplitude_effects = control
                            .population
                            .harmonics
                            .iter()
                            .map(|h| quantity4_effect(h.amplitude))
                            .collect();
                    }
                }
                if zero_phase_effects {
                    case.phase_effects.fill(zero);
                    control.phase_effects.fill(zero);
                }
                Ok(vec![
                    (CohortRole::Case, case),
                    (CohortRole::Control, control),
                ])
            }
        }
    }
}

impl fmt::Display for SimSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

/// Equispaced sampling times `24(j−1)/n`.
pub fn equispaced_times(n: usize) -> Vec<f64> {
    (0..n).map(|j| 24.0 * j as f64 / n as f64).collect()
}

/// Simulates one subject: `θᵢ = β + bᵢ` with `bᵢ` drawn from `effects`
/// (ordered midline, amplitude₁, phase₁, …), observed at equispaced times
/// with additive noise.
pub fn generate_subject(
    rng: &mut RngStream,
    subject_id: impl Into<String>,
    n: usize,
    population: &AmpPhaseParams,
    effects: &[DistributionSpec],
    noise: &DistributionSpec,
) -> Result<SubjectSeries> {
    let order = population.order();
    if n == 0 {
        return Err(Error::Parameter(
            "a subject needs at least one sample".into(),
        ));
    }
    if effects.len() != 2 * order + 1 {
        return Err(Error::Parameter(format!(
            "expected {} random-effect specs, got {}",
            2 * order + 1,
            effects.len()
        )));
    }
    for spec in effects.iter().chain(std::iter::once(noise)) {
        spec.validate()?;
    }
    let mut draws = effects.iter().map(|spec| spec.draw(rng));
    let midline = population.midline + draws.next().expect("midline effect");
    let harmonics: Vec<(f64, f64)> = population
        .harmonics
        .iter()
        .map(|h| {
            let a = h.amplitude + draws.next().expect("amplitude effect");
            let p = h.phase + draws.next().expect("phase effect");
            (a, p)
        })
        .collect();
    drop(draws);
    let times = equispaced_times(n);
    let values = times
        .iter()
        .map(|&t| {
            let signal: f64 = harmonics
                .iter()
                .enumerate()
                .map(|(i, &(a, p))| a * ((i + 1) as f64 * PI * t / 12.0 + p).cos())
                .sum();
            midline + signal + noise.draw(rng)
        })
        .collect();
    SubjectSeries::new(subject_id, times, values)
}

fn generate_cohort(
    design: &CohortDesign,
    role: CohortRole,
    base: &[u64],
    seed: u64,
) -> Result<CohortData> {
    let effects = design.effects();
    let subjects = (0..design.m)
        .map(|i| {
            let mut path = base.to_vec();
            path.extend([role.index(), i as u64]);
            let mut rng = derive_stream(seed, &path);
            generate_subject(
                &mut rng,
                format!("s{i:03}"),
                design.n,
                &design.population,
                &effects,
                &design.noise,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    CohortData::new(role.name(), subjects)
}

/// Generated data for one trial and dataset variant.
#[derive(Clone, Debug, PartialEq)]
pub enum GeneratedData {
    Single(CohortData),
    TwoCohort {
        case: CohortData,
        control: CohortData,
    },
}

impl GeneratedData {
    /// Cohorts with the control first, matching the CLI's reference cohort.
    pub fn cohorts(&self) -> Vec<&CohortData> {
        match self {
            GeneratedData::Single(c) => vec![c],
            GeneratedData::TwoCohort { case, control } => vec![control, case],
        }
    }
}

fn trial_path(setting: &SimSetting, trial: usize, variant: u8) -> [u64; 3] {
    [setting.hash(), trial as u64, variant as u64]
}

pub fn generate_datasets(
    setting: &SimSetting,
    variant: u8,
    trial: usize,
    seed: u64,
) -> Result<GeneratedData> {
    let base = trial_path(setting, trial, variant);
    let mut cohorts = setting
        .variant_designs(variant)?
        .into_iter()
        .map(|(role, design)| generate_cohort(&design, role, &base, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(match setting.study {
        Study::Single => GeneratedData::Single(cohorts.remove(0)),
        Study::TwoCohort => {
            let control = cohorts.remove(1);
            let case = cohorts.remove(0);
            GeneratedData::TwoCohort { case, control }
        }
    })
}

/// Per-method outcome on one dataset of one trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: Method,
    /// Estimated minus true midline (single study, datasets 1–2).
    pub midline_error: Option<f64>,
    /// Estimated minus true amplitude per harmonic (single study, datasets 1–2).
    pub amplitude_errors: Vec<f64>,
    /// Circular difference of estimated and true phase per harmonic.
    pub phase_errors: Vec<f64>,
    pub p_zero_amplitudes: Option<f64>,
    pub p_equal_midlines: Option<f64>,
    pub p_equal_rhythms: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetOutcome {
    pub variant: u8,
    pub methods: Vec<MethodOutcome>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub datasets: Vec<DatasetOutcome>,
}

impl TrialRecord {
    pub fn outcome(&self, variant: u8, method: Method) -> Option<&MethodOutcome> {
        self.datasets
            .iter()
            .find(|d| d.variant == variant)?
            .methods
            .iter()
            .find(|m| m.method == method)
    }
}

fn single_outcome(
    setting: &SimSetting,
    cohort: &CohortData,
    truth: &AmpPhaseParams,
    variant: u8,
    method: Method,
    replicates: usize,
    boot: &RngStream,
) -> Result<MethodOutcome> {
    let order = setting.order();
    let mut outcome = MethodOutcome {
        method,
        midline_error: None,
        amplitude_errors: Vec::new(),
        phase_errors: Vec::new(),
        p_zero_amplitudes: None,
        p_equal_midlines: None,
        p_equal_rhythms: None,
    };
    if variant <= 2 {
        let fits = cohort
            .subjects
            .iter()
            .map(|s| SubjectDesign::new(&s.times, order)?.fit(&s.values))
            .collect::<Result<Vec<_>>>()?;
        let est = Estimate::from_fits(method, fits)?.population_params();
        outcome.midline_error = Some(est.midline - truth.midline);
        for (e, t) in est.harmonics.iter().zip(&truth.harmonics) {
            outcome.amplitude_errors.push(e.amplitude - t.amplitude);
            outcome.phase_errors.push(circular_diff(e.phase, t.phase));
        }
    }
    let test = bootstrap_amplitude_test(
        cohort,
        order,
        method,
        GSpec::ZeroAmplitudes,
        replicates,
        &boot.child(0),
    )?;
    outcome.p_zero_amplitudes = test.p_bootstrap;
    Ok(outcome)
}

fn run_trial(
    setting: &SimSetting,
    trial: usize,
    replicates: usize,
    seed: u64,
    variants: &[u8],
) -> Result<TrialRecord> {
    let datasets = variants
        .iter()
        .map(|&variant| {
            let data = generate_datasets(setting, variant, trial, seed)?;
            let mut path = trial_path(setting, trial, variant).to_vec();
            path.push(2);
            let boot = derive_stream(seed, &path);
            let methods = Method::BOTH
                .iter()
                .map(|&method| match &data {
                    GeneratedData::Single(cohort) => {
                        let designs = setting.variant_designs(variant)?;
                        single_outcome(
                            setting,
                            cohort,
                            &designs[0].1.population,
                            variant,
                            method,
                            replicates,
                            &boot,
                        )
                    }
                    GeneratedData::TwoCohort { case, control } => {
                        let order = setting.order();
                        let midlines = bootstrap_two_cohort(
                            case,
                            control,
                            order,
                            method,
                            GSpec::EqualMidlines,
                            replicates,
                            &boot.child(1),
                        )?;
                        let rhythms = bootstrap_two_cohort(
                            case,
                            control,
                            order,
                            method,
                            GSpec::EqualRhythms,
                            replicates,
                            &boot.child(2),
                        )?;
                        Ok(MethodOutcome {
                            method,
                            midline_error: None,
                            amplitude_errors: Vec::new(),
                            phase_errors: Vec::new(),
                            p_zero_amplitudes: None,
                            p_equal_midlines: midlines.p_bootstrap,
                            p_equal_rhythms: rhythms.p_bootstrap,
                        })
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(DatasetOutcome { variant, methods })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrialRecord { trial, datasets })
}

/// Runs `trials` trials over all four dataset variants.
pub fn run_study(
    setting: &SimSetting,
    trials: usize,
    replicates: usize,
    seed: u64,
) -> Result<Vec<TrialRecord>> {
    run_study_variants(setting, trials, replicates, seed, &[1, 2, 3, 4])
}

/// Like [`run_study`] but only for the listed dataset variants. Trial data do
/// not depend on which variants are run.
pub fn run_study_variants(
    setting: &SimSetting,
    trials: usize,
    replicates: usize,
    seed: u64,
    variants: &[u8],
) -> Result<Vec<TrialRecord>> {
    if trials == 0 {
        return Err(Error::Parameter("at least one trial is required".into()));
    }
    (0..trials)
        .into_par_iter()
        .map(|trial| {
            run_trial(setting, trial, replicates, seed, variants).map_err(|e| Error::Trial {
                trial,
                source: Box::new(e),
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveKind {
    Power,
    TypeI,
}

/// Distribution-free band around an empirical curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DkwBand {
    pub level: f64,
    pub epsilon: f64,
}

/// Empirical rejection-rate curve `ρ ↦ #{p ≤ ρ} / N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerCurve {
    pub pvalues: Vec<f64>,
    pub kind: CurveKind,
    /// Area under the curve on `[0, 1]`, equal to the mean of `1 − p`.
    pub auc: f64,
    pub dkw_band: Option<DkwBand>,
}

pub fn power_curve(pvalues: &[f64], kind: CurveKind) -> Result<PowerCurve> {
    if pvalues.is_empty() {
        return Err(Error::Input(
            "power curve needs at least one p-value".into(),
        ));
    }
    if let Some(p) = pvalues.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Input(format!("p-value {p} outside [0, 1]")));
    }
    let mut sorted = pvalues.to_vec();
    sorted.sort_by(f64::total_cmp);
    let auc = sorted.iter().map(|p| 1.0 - p).sum::<f64>() / sorted.len() as f64;
    Ok(PowerCurve {
        pvalues: sorted,
        kind,
        auc,
        dkw_band: None,
    })
}

impl PowerCurve {
    pub fn len(&self) -> usize {
        self.pvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pvalues.is_empty()
    }

    pub fn value_at(&self, threshold: f64) -> f64 {
        let hits = self.pvalues.partition_point(|&p| p <= threshold);
        hits as f64 / self.pvalues.len() as f64
    }

    pub fn with_band(mut self, level: f64) -> Self {
        self.dkw_band = Some(dkw_band(&self, level));
        self
    }

    /// `(lower, upper)` band at `threshold`, if a band is attached.
    pub fn band_at(&self, threshold: f64) -> Option<(f64, f64)> {
        self.dkw_band.map(|b| {
            let v = self.value_at(threshold);
            ((v - b.epsilon).max(0.0), (v + b.epsilon).min(1.0))
        })
    }

    /// Monte Carlo standard error of the AUC.
    pub fn auc_standard_error(&self) -> f64 {
        let n = self.pvalues.len() as f64;
        if n < 2.0 {
            return 0.0;
        }
        let var = self
            .pvalues
            .iter()
            .map(|p| (1.0 - p - self.auc).powi(2))
            .sum::<f64>()
            / (n - 1.0);
        (var / n).sqrt()
    }
}

/// DKW half-width `√(ln(2/(1−level)) / 2N)`.
pub fn dkw_band(curve: &PowerCurve, level: f64) -> DkwBand {
    let n = curve.pvalues.len() as f64;
    DkwBand {
        level,
        epsilon: ((2.0 / (1.0 - level)).ln() / (2.0 * n)).sqrt(),
    }
}

/// One summarised curve from a study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedCurve {
    pub label: String,
    pub variant: u8,
    pub method: Method,
    pub test: GSpec,
    pub curve: PowerCurve,
}

/// Mean and standard deviation of a recorded quantity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantitySummary {
    pub label: String,
    pub variant: u8,
    pub method: Method,
    pub mean: f64,
    pub sd: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub setting: String,
    pub trials: usize,
    pub curves: Vec<NamedCurve>,
    pub quantities: Vec<QuantitySummary>,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// Builds power / type-I curves (with bands at `level`) and quantity
/// summaries from trial records.
pub fn summarize(
    setting: &SimSetting,
    records: &[TrialRecord],
    level: f64,
) -> Result<StudySummary> {
    let variants: Vec<u8> = records
        .first()
        .map(|r| r.datasets.iter().map(|d| d.variant).collect())
        .unwrap_or_default();
    type PValue = fn(&MethodOutcome) -> Option<f64>;
    let tests: Vec<(GSpec, PValue)> = match setting.study {
        Study::Single => vec![(GSpec::ZeroAmplitudes, |o| o.p_zero_amplitudes)],
        Study::TwoCohort => vec![
            (GSpec::EqualMidlines, |o| o.p_equal_midlines),
            (GSpec::EqualRhythms, |o| o.p_equal_rhythms),
        ],
    };
    let mut curves = Vec::new();
    let mut quantities = Vec::new();
    for &variant in &variants {
        let kind = if variant <= 2 {
            CurveKind::Power
        } else {
            CurveKind::TypeI
        };
        for method in Method::BOTH {
            let outcomes: Vec<&MethodOutcome> = records
                .iter()
                .filter_map(|r| r.outcome(variant, method))
                .collect();
            for (test, get) in &tests {
                let ps: Vec<f64> = outcomes.iter().filter_map(|o| get(o)).collect();
                if ps.is_empty() {
                    continue;
                }
                curves.push(NamedCurve {
                    label: format!("dataset{variant}-{}-{}", method.name(), test.name()),
                    variant,
                    method,
                    test: *test,
                    curve: power_curve(&ps, kind)?.with_band(level),
                });
            }
            let mut push = |label: String, xs: Vec<f64>| {
                if !xs.is_empty() {
                    let (mean, sd) = mean_sd(&xs);
                    quantities.push(QuantitySummary {
                        label,
                        variant,
                        method,
                        mean,
                        sd,
                        count: xs.len(),
                    });
                }
            };
            push(
                "midline-error".into(),
                outcomes.iter().filter_map(|o| o.midline_error).collect(),
            );
            for k in 0..setting.order() {
                push(
                    format!("amplitude-error-{}", k + 1),
                    outcomes
                        .iter()
                        .filter_map(|o| o.amplitude_errors.get(k).copied())
                        .collect(),
                );
                push(
                    format!("phase-error-{}", k + 1),
                    outcomes
                        .iter()
                        .filter_map(|o| o.phase_errors.get(k).copied())
                        .collect(),
                );
            }
        }
    }
    Ok(StudySummary {
        setting: setting.key(),
        trials: records.len(),
        curves,
        quantities,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trig::{predict, theta_to_gamma};

    #[test]
    fn noiseless_subject_matches_model() {
        let pop = AmpPhaseParams::new(
            6.0,
            vec![Harmonic {
                amplitude: 0.5,
                phase: 0.0,
            }],
        )
        .unwrap();
        let zero = DistributionSpec::point_mass(0.0);
        let mut rng = RngStream::new(3);
        let s = generate_subject(&mut rng, "a", 6, &pop, &[zero; 3], &zero).unwrap();
        assert_eq!(s.times, vec![0.0, 4.0, 8.0, 12.0, 16.0, 20.0]);
        let expected = predict(&theta_to_gamma(&pop), &s.times);
        for (a, b) in s.values.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn twelve_samples_every_two_hours() {
        let times = equispaced_times(12);
        let expected: Vec<f64> = (0..12).map(|j| 2.0 * j as f64).collect();
        assert_eq!(times, expected);
    }

    #[test]
    fn opposite_phase_offsets_reflect_in_time() {
        let pop = AmpPhaseParams::new(
            1.0,
            vec![Harmonic {
                amplitude: 2.0,
                phase: 0.0,
            }],
        )
        .unwrap();
        let zero = DistributionSpec::point_mass(0.0);
        let gen = |offset: f64| {
            let effects = [zero, zero, DistributionSpec::point_mass(offset)];
            generate_subject(&mut RngStream::new(1), "s", 24, &pop, &effects, &zero).unwrap()
        };
        let plus = gen(FRAC_PI_4);
        let minus = gen(-FRAC_PI_4);
        // cos(πt/12 + φ) at t equals cos(πt'/12 − φ) at t' = 24 − t
        for j in 1..24 {
            assert!((plus.values[j] - minus.values[24 - j]).abs() < 1e-12);
        }
    }

    #[test]
    fn setting_presets() {
        let s = SimSetting::parse(Study::Single, "K3,snr=low,size=small,var=low").unwrap();
        let d = s.cohort_design(CohortRole::Control);
        assert_eq!((d.n, d.m), (12, 10));
        assert_eq!(d.population.midline, 6.0);
        assert_eq!(d.population.harmonics.len(), 3);
        assert_eq!(d.population.harmonics[0].amplitude, 0.5);
        assert_eq!(
            d.phase_effects[0],
            DistributionSpec::VonMises {
                mean: 0.0,
                concentration: 8.0
            }
        );
        assert_eq!(
            d.amplitude_effects[0],
            DistributionSpec::TruncatedNormal {
                mean: -0.25,
                variance: 0.25,
                lower: 0.0,
                upper: FRAC_1_SQRT_2
            }
        );

        let t =
            SimSetting::parse(Study::TwoCohort, "K1,snr=high,size=large,var=high,amp=q4").unwrap();
        let case = t.cohort_design(CohortRole::Case);
        assert_eq!(case.population.midline, 5.0);
        assert_eq!(case.population.harmonics[0].phase, FRAC_PI_2);
        assert_eq!(
            case.phase_effects[0],
            DistributionSpec::VonMises {
                mean: 0.0,
                concentration: 4.0
            }
        );
        assert_eq!(
            case.amplitude_effects[0],
            DistributionSpec::TruncatedNormal {
                mean: 0.0,
                variance: 0.5,
                lower: -1.0,
                upper: 1.0
            }
        );
        assert!(SimSetting::parse(Study::Single, "K2").is_err());
        assert!(SimSetting::parse(Study::Single, "snr=medium").is_err());
    }

    #[test]
    fn setting_key_round_trips() {
        let s =
            SimSetting::parse(Study::TwoCohort, "K3,snr=low,size=small,var=low,amp=q4").unwrap();
        let rest = s.key().split_once(',').unwrap().1.to_string();
        assert_eq!(SimSetting::parse(Study::TwoCohort, &rest).unwrap(), s);
    }

    #[test]
    fn flat_variants() {
        let s = SimSetting::new(Study::Single);
        let d = generate_datasets(&s, 4, 0, 5).unwrap();
        let GeneratedData::Single(c) = d else {
            panic!()
        };
        for subj in &c.subjects {
            // flat midline plus noise: the harmonic effects are all zero
            let designs = s.variant_designs(4).unwrap();
            assert!(designs[0].1.population.harmonics[0].amplitude == 0.0);
            assert_eq!(subj.len(), 192);
        }
    }

    #[test]
    fn two_cohort_variant3_shares_population() {
        let s = SimSetting::new(Study::TwoCohort);
        let designs = s.variant_designs(3).unwrap();
        assert_eq!(designs[0].1.population, designs[1].1.population);
        assert_ne!(designs[0].1.phase_effects, designs[1].1.phase_effects);
    }

    #[test]
    fn generation_is_deterministic() {
        let s = SimSetting::parse(Study::TwoCohort, "size=small").unwrap();
        let a = generate_datasets(&s, 1, 3, 11).unwrap();
        let b = generate_datasets(&s, 1, 3, 11).unwrap();
        assert_eq!(a, b);
        let c = generate_datasets(&s, 1, 4, 11).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn curve_examples() {
        let c = power_curve(&[0.0; 5], CurveKind::Power).unwrap();
        assert_eq!(c.auc, 1.0);
        let grid: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let c = power_curve(&grid, CurveKind::TypeI).unwrap();
        assert!((c.auc - 0.5).abs() < 1e-3);
        let c = power_curve(&[0.4, 0.2], CurveKind::Power).unwrap();
        assert!((c.auc - 0.7).abs() < 1e-15);
        assert_eq!(c.value_at(0.2), 0.5);
        assert_eq!(c.value_at(0.39), 0.5);
        assert_eq!(c.value_at(0.4), 1.0);
        assert!(power_curve(&[], CurveKind::Power).is_err());
        assert!(power_curve(&[1.5], CurveKind::Power).is_err());
    }

    #[test]
    fn dkw_width() {
        let c = power_curve(&vec![0.5; 1000], CurveKind::Power).unwrap();
        let band = dkw_band(&c, 0.95);
        assert!((band.epsilon - 0.04295).abs() < 1e-5);
        let bigger = power_curve(&vec![0.5; 2000], CurveKind::Power).unwrap();
        assert!(dkw_band(&bigger, 0.95).epsilon < band.epsilon);
        let c = c.with_band(0.95);
        for t in [0.0, 0.4, 0.5, 1.0] {
            let (lo, hi) = c.band_at(t).unwrap();
            assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
        }
    }
}
