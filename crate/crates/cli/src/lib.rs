//! Command-line workflows: fit, test, select and simulate.

pub mod args;
pub mod report;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};

use circadia::io::{self, export_curves, save_cohorts, sha256_hex};
use circadia::select::forward_order_select;
use circadia::simulate::{self, generate_datasets, run_study_variants, SimSetting, Study};
use circadia::{
    bootstrap_amplitude_test, bootstrap_two_cohort, derive_stream, predict, theta_to_gamma,
    CohortData, Estimate, GSpec, Method,
};

pub use args::Cli;
use args::{AnalysisArgs, Command, SelectArgs, SimulateArgs, TestArg, TestArgs};
use report::{
    AnalysisReport, CohortReport, MethodEstimate, Provenance, SelectionReport, SelectionRun,
    SimulationReport, TestReport,
};

const THREADS_ENV: &str = "CIRCADIA_THREADS";

// Substream domains for CLI randomness, kept disjoint from each other.
const SELECT_DOMAIN: u64 = 1;
const TEST_DOMAIN: u64 = 2;

/// Grid spacing, in hours, of the fitted-curve plot data.
const CURVE_STEP: f64 = 0.1;

/// Resolves `--threads`, then CIRCADIA_THREADS. `None` means rayon's default.
pub fn thread_count(flag: Option<&str>) -> Result<Option<usize>> {
    let env = std::env::var(THREADS_ENV).ok();
    let Some(text) = flag.map(str::to_string).or(env) else {
        return Ok(None);
    };
    let text = text.trim();
    if text.eq_ignore_ascii_case("auto") {
        return Ok(None);
    }
    match text.parse::<usize>() {
        Ok(n) if n > 0 => Ok(Some(n)),
        _ => bail!("thread count must be a positive integer or `auto`, got `{text}`"),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count(cli.threads.as_deref())? {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("building the worker pool")?;
    pool.install(|| match cli.command {
        Command::Fit(a) => cmd_analysis("fit", &a, None),
        Command::Test(t) => cmd_test(&t),
        Command::Select(s) => cmd_select(&s),
        Command::Simulate(s) => cmd_simulate(&s),
    })
}

fn read_input(path: &Path) -> Result<(Vec<CohortData>, String)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let cohorts = io::read_cohorts(bytes.as_slice())
        .with_context(|| format!("parsing {}", path.display()))?;
    Ok((cohorts, sha256_hex(&bytes)))
}

fn select_orders(
    cohorts: &[CohortData],
    methods: &[Method],
    max_order: usize,
    replicates: usize,
    seed: u64,
) -> Result<SelectionReport> {
    let mut runs = Vec::new();
    for (ci, cohort) in cohorts.iter().enumerate() {
        // both methods share the resampling stream
        let rng = derive_stream(seed, &[SELECT_DOMAIN, ci as u64]);
        for &method in methods {
            let selection = forward_order_select(cohort, max_order, method, replicates, &rng)
                .with_context(|| format!("selecting the order for cohort {}", cohort.cohort_id))?;
            runs.push(SelectionRun {
                cohort: cohort.cohort_id.clone(),
                selection,
            });
        }
    }
    let harmonized_order = runs.iter().map(|r| r.selection.selected).max().unwrap_or(0);
    Ok(SelectionReport {
        harmonized_order,
        runs,
    })
}

fn fit_cohort(cohort: &CohortData, order: usize, method: Method) -> Result<Estimate> {
    let fits = cohort
        .subjects
        .iter()
        .map(|s| {
            circadia::fit_individual(s, order).with_context(|| {
                format!(
                    "fitting subject {} of cohort {}",
                    s.subject_id, cohort.cohort_id
                )
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Estimate::from_fits(method, fits).with_context(|| {
        format!(
            "estimating cohort {} with {}",
            cohort.cohort_id,
            method.name()
        )
    })
}

fn requested_tests(test: TestArg, cohorts: usize) -> Result<Vec<GSpec>> {
    let two = cohorts >= 2;
    Ok(match test {
        TestArg::ZeroAmplitudes => vec![GSpec::ZeroAmplitudes],
        TestArg::EqualMidlines | TestArg::EqualRhythms => {
            ensure!(
                two,
                "two-cohort tests need at least two cohorts in the input"
            );
            vec![if test == TestArg::EqualMidlines {
                GSpec::EqualMidlines
            } else {
                GSpec::EqualRhythms
            }]
        }
        TestArg::All if two => vec![
            GSpec::ZeroAmplitudes,
            GSpec::EqualMidlines,
            GSpec::EqualRhythms,
        ],
        TestArg::All => vec![GSpec::ZeroAmplitudes],
    })
}

fn test_index(spec: GSpec) -> u64 {
    match spec {
        GSpec::ZeroAmplitudes => 0,
        GSpec::EqualMidlines => 1,
        GSpec::EqualRhythms => 2,
        GSpec::SingleAmplitude(k) => 2 + k as u64,
    }
}

fn run_tests(
    cohorts: &[CohortData],
    order: usize,
    methods: &[Method],
    specs: &[GSpec],
    replicates: usize,
    seed: u64,
) -> Result<Vec<TestReport>> {
    let mut out = Vec::new();
    for &spec in specs {
        let t = test_index(spec);
        if spec == GSpec::ZeroAmplitudes {
            for (ci, cohort) in cohorts.iter().enumerate() {
                let rng = derive_stream(seed, &[TEST_DOMAIN, t, ci as u64]);
                for &method in methods {
                    let result =
                        bootstrap_amplitude_test(cohort, order, method, spec, replicates, &rng)
                            .with_context(|| {
                                format!("zero-amplitudes test on cohort {}", cohort.cohort_id)
                            })?;
                    out.push(TestReport {
                        cohorts: vec![cohort.cohort_id.clone()],
                        result,
                    });
                }
            }
        } else {
            // every later cohort is compared against the first
            let control = &cohorts[0];
            for (ci, case) in cohorts.iter().enumerate().skip(1) {
                let rng = derive_stream(seed, &[TEST_DOMAIN, t, ci as u64]);
                for &method in methods {
                    let result =
                        bootstrap_two_cohort(case, control, order, method, spec, replicates, &rng)
                            .with_context(|| {
                                format!(
                                    "{} test, {} vs {}",
                                    spec.name(),
                                    case.cohort_id,
                                    control.cohort_id
                                )
                            })?;
                    out.push(TestReport {
                        cohorts: vec![case.cohort_id.clone(), control.cohort_id.clone()],
                        result,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Fitted curve values on the plot grid, per method.
type FittedCurves = Vec<(Method, Vec<f64>)>;

fn cohort_report(
    cohort: &CohortData,
    order: usize,
    methods: &[Method],
) -> Result<(CohortReport, FittedCurves)> {
    let times = curve_times();
    let mut estimates = Vec::new();
    let mut curves = Vec::new();
    for &method in methods {
        let est = fit_cohort(cohort, order, method)?;
        let params = est.population_params();
        curves.push((method, predict(&theta_to_gamma(&params), &times)));
        estimates.push(MethodEstimate {
            method,
            population_vector: est.population_vector().iter().copied().collect(),
            midline: params.midline,
            harmonics: params.harmonics,
        });
    }
    let report = CohortReport {
        cohort: cohort.cohort_id.clone(),
        subjects: cohort.len(),
        min_samples: cohort.min_samples(),
        estimates,
    };
    Ok((report, curves))
}

fn curve_times() -> Vec<f64> {
    let steps = (24.0 / CURVE_STEP).round() as usize;
    (0..=steps).map(|i| i as f64 * CURVE_STEP).collect()
}

fn write_fitted_curve(path: &Path, values: &[f64]) -> Result<()> {
    let mut text = String::from("time,value\n");
    for (t, v) in curve_times().iter().zip(values) {
        text.push_str(&format!("{t},{v}\n"));
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn emit(out: Option<&PathBuf>, json: String, text: String) -> Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            fs::write(dir.join("report.json"), json + "\n")?;
            fs::write(dir.join("report.txt"), &text)?;
            print!("{text}");
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn file_label(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn cmd_analysis(command: &str, a: &AnalysisArgs, tests: Option<TestArg>) -> Result<()> {
    let (cohorts, digest) = read_input(&a.input)?;
    let methods = a.method.methods();
    ensure!(a.replicates > 0, "--replicates must be positive");

    let selection = if a.select {
        let max = a.max_order.expect("clap enforces --max-order");
        Some(select_orders(
            &cohorts,
            &methods,
            max,
            a.replicates,
            a.seed,
        )?)
    } else {
        None
    };
    let order = match (&selection, a.order) {
        (Some(s), _) => s.harmonized_order,
        (None, Some(k)) => k,
        (None, None) => bail!("either --order K or --select --max-order K is required"),
    };

    let mut cohort_reports = Vec::new();
    let mut fitted = Vec::new();
    for cohort in &cohorts {
        let (report, curves) = cohort_report(cohort, order, &methods)?;
        cohort_reports.push(report);
        fitted.push((cohort.cohort_id.clone(), curves));
    }

    let test_reports = match tests {
        Some(t) => {
            let mut specs = requested_tests(t, cohorts.len())?;
            // with no harmonics only the midline comparison is defined
            if order == 0 {
                specs.retain(|s| *s == GSpec::EqualMidlines);
            }
            run_tests(&cohorts, order, &methods, &specs, a.replicates, a.seed)?
        }
        None => Vec::new(),
    };

    let uses_bootstrap = selection.is_some() || !test_reports.is_empty();
    let report = AnalysisReport {
        provenance: Provenance {
            tool: format!("circadia {}", env!("CARGO_PKG_VERSION")),
            command: command.into(),
            input: Some(a.input.display().to_string()),
            input_sha256: Some(digest),
            order: Some(order),
            methods: methods.clone(),
            replicates: uses_bootstrap.then_some(a.replicates),
            seed: a.seed,
        },
        selection,
        cohorts: cohort_reports,
        tests: test_reports,
    };

    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (cohort, curves) in &fitted {
            for (method, values) in curves {
                let path = dir.join(format!(
                    "fitted-{}-{}.csv",
                    file_label(cohort),
                    method.name()
                ));
                write_fitted_curve(&path, values)?;
            }
        }
    }
    emit(
        a.out.as_ref(),
        serde_json::to_string_pretty(&report)?,
        report.to_text(),
    )
}

fn cmd_test(t: &TestArgs) -> Result<()> {
    cmd_analysis("test", &t.analysis, Some(t.test))
}

fn cmd_select(s: &SelectArgs) -> Result<()> {
    ensure!(s.replicates > 0, "--replicates must be positive");
    let (cohorts, digest) = read_input(&s.input)?;
    let methods = s.method.methods();
    let selection = select_orders(&cohorts, &methods, s.max_order, s.replicates, s.seed)?;
    let report = AnalysisReport {
        provenance: Provenance {
            tool: format!("circadia {}", env!("CARGO_PKG_VERSION")),
            command: "select".into(),
            input: Some(s.input.display().to_string()),
            input_sha256: Some(digest),
            order: Some(selection.harmonized_order),
            methods,
            replicates: Some(s.replicates),
            seed: s.seed,
        },
        selection: Some(selection),
        cohorts: Vec::new(),
        tests: Vec::new(),
    };
    emit(
        s.out.as_ref(),
        serde_json::to_string_pretty(&report)?,
        report.to_text(),
    )
}

fn cmd_simulate(s: &SimulateArgs) -> Result<()> {
    let study: Study = s.study.into();
    let setting = SimSetting::parse(study, &s.setting)?;
    let (trials, replicates) = if s.full_scale {
        (1000, 1000)
    } else {
        (s.trials, s.replicates)
    };
    ensure!(replicates > 0, "--replicates must be positive");
    ensure!(s.level > 0.0 && s.level < 1.0, "--level must lie in (0, 1)");
    let mut datasets = s.datasets.clone();
    datasets.sort_unstable();
    datasets.dedup();

    let records = run_study_variants(&setting, trials, replicates, s.seed, &datasets)?;
    let summary = simulate::summarize(&setting, &records, s.level)?;

    if let Some(dir) = &s.out {
        export_curves(&summary.curves, dir.join("curves"))?;
        fs::write(
            dir.join("trials.json"),
            serde_json::to_string_pretty(&records)? + "\n",
        )?;
        if s.dump_data {
            for &variant in &datasets {
                let data = generate_datasets(&setting, variant, 0, s.seed)?;
                save_cohorts(
                    &data.cohorts(),
                    dir.join(format!("trial0-dataset{variant}.csv")),
                )?;
            }
        }
    }

    let report = SimulationReport {
        provenance: Provenance {
            tool: format!("circadia {}", env!("CARGO_PKG_VERSION")),
            command: "simulate".into(),
            input: None,
            input_sha256: None,
            order: Some(setting.order()),
            methods: Method::BOTH.to_vec(),
            replicates: Some(replicates),
            seed: s.seed,
        },
        setting: setting.key(),
        trials,
        datasets,
        summary,
    };
    emit(
        s.out.as_ref(),
        serde_json::to_string_pretty(&report)?,
        report.to_text(),
    )
}
