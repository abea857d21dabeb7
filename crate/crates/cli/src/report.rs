use std::fmt::Write;

use serde::Serialize;

use circadia::select::OrderSelection;
use circadia::simulate::StudySummary;
use circadia::{Harmonic, Method, TestResult};

#[derive(Serialize, Debug, Clone)]
pub struct Provenance {
    pub tool: String,
    pub command: String,
    pub input: Option<String>,
    pub input_sha256: Option<String>,
    pub order: Option<usize>,
    pub methods: Vec<Method>,
    pub replicates: Option<usize>,
    pub seed: u64,
}

#[derive(Serialize, Debug, Clone)]
pub struct MethodEstimate {
    pub method: Method,
    /// `α̂` (2K+1 entries) for STS, `β̃` (3K+1 entries) for RTS.
    pub population_vector: Vec<f64>,
    pub midline: f64,
    pub harmonics: Vec<Harmonic>,
}

#[derive(Serialize, Debug, Clone)]
pub struct CohortReport {
    pub cohort: String,
    pub subjects: usize,
    pub min_samples: usize,
    pub estimates: Vec<MethodEstimate>,
}

#[derive(Serialize, Debug, Clone)]
pub struct SelectionRun {
    pub cohort: String,
    pub selection: OrderSelection,
}

#[derive(Serialize, Debug, Clone)]
pub struct SelectionReport {
    /// Largest order selected across methods and cohorts.
    pub harmonized_order: usize,
    pub runs: Vec<SelectionRun>,
}

#[derive(Serialize, Debug, Clone)]
pub struct TestReport {
    /// One cohort for single-cohort tests; `[case, control]` otherwise.
    pub cohorts: Vec<String>,
    pub result: TestResult,
}

#[derive(Serialize, Debug, Clone)]
pub struct AnalysisReport {
    pub provenance: Provenance,
    pub selection: Option<SelectionReport>,
    pub cohorts: Vec<CohortReport>,
    pub tests: Vec<TestReport>,
}

#[derive(Serialize, Debug, Clone)]
pub struct SimulationReport {
    pub provenance: Provenance,
    pub setting: String,
    pub trials: usize,
    pub datasets: Vec<u8>,
    pub summary: StudySummary,
}

fn fmt_p(p: Option<f64>) -> String {
    p.map(|p| format!("{p:.4}")).unwrap_or_else(|| "-".into())
}

fn provenance_text(out: &mut String, p: &Provenance) {
    let _ = writeln!(out, "{} {}", p.tool, p.command);
    if let (Some(input), Some(digest)) = (&p.input, &p.input_sha256) {
        let _ = writeln!(out, "input   {input}");
        let _ = writeln!(out, "sha256  {digest}");
    }
    let _ = write!(out, "seed    {}", p.seed);
    if let Some(r) = p.replicates {
        let _ = write!(out, "   replicates {r}");
    }
    if let Some(k) = p.order {
        let _ = write!(out, "   order K={k}");
    }
    out.push('\n');
}

impl AnalysisReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        provenance_text(&mut out, &self.provenance);

        if let Some(sel) = &self.selection {
            let _ = writeln!(
                out,
                "\norder selection (harmonized K={})",
                sel.harmonized_order
            );
            for run in &sel.runs {
                let s = &run.selection;
                let steps: Vec<String> = s
                    .steps
                    .iter()
                    .map(|st| {
                        format!(
                            "k={} p={:.4}{}",
                            st.k,
                            st.p_value,
                            if st.retained { "*" } else { "" }
                        )
                    })
                    .collect();
                let _ = writeln!(
                    out,
                    "  {:<12} {:<4} K={}{}  {}",
                    run.cohort,
                    s.method.name(),
                    s.selected,
                    if s.truncated { " (truncated)" } else { "" },
                    steps.join("  ")
                );
            }
        }

        for c in &self.cohorts {
            let _ = writeln!(
                out,
                "\ncohort {} (M={}, min n={})",
                c.cohort, c.subjects, c.min_samples
            );
            let order = c.estimates.first().map_or(0, |e| e.harmonics.len());
            let mut header = format!("  {:<6} {:>10}", "method", "midline");
            for k in 1..=order {
                let _ = write!(
                    header,
                    " {:>10} {:>10}",
                    format!("amp{k}"),
                    format!("phase{k}")
                );
            }
            let _ = writeln!(out, "{header}");
            for e in &c.estimates {
                let _ = write!(out, "  {:<6} {:>10.5}", e.method.name(), e.midline);
                for h in &e.harmonics {
                    let _ = write!(out, " {:>10.5} {:>10.5}", h.amplitude, h.phase);
                }
                out.push('\n');
            }
        }

        if !self.tests.is_empty() {
            let _ = writeln!(out, "\ntests");
            let _ = writeln!(
                out,
                "  {:<16} {:<24} {:<6} {:>12} {:>3} {:>10} {:>10} {:>6}",
                "test", "cohorts", "method", "tau", "q", "p_chisq", "p_boot", "R"
            );
            for t in &self.tests {
                let r = &t.result;
                let _ = writeln!(
                    out,
                    "  {:<16} {:<24} {:<6} {:>12.4} {:>3} {:>10.4} {:>10} {:>6}",
                    r.test.name(),
                    t.cohorts.join(" vs "),
                    r.method.name(),
                    r.statistic,
                    r.q,
                    r.p_asymptotic,
                    fmt_p(r.p_bootstrap),
                    r.replicates.map_or("-".into(), |r| r.to_string())
                );
            }
        }
        out
    }
}

impl SimulationReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        provenance_text(&mut out, &self.provenance);
        let _ = writeln!(out, "setting {}   trials {}", self.setting, self.trials);
        let _ = writeln!(
            out,
            "\n  {:<40} {:>8} {:>8} {:>8}",
            "curve", "kind", "AUC", "MCSE"
        );
        for c in &self.summary.curves {
            let kind = match c.curve.kind {
                circadia::simulate::CurveKind::Power => "SP",
                circadia::simulate::CurveKind::TypeI => "T1E",
            };
            let _ = writeln!(
                out,
                "  {:<40} {:>8} {:>8.4} {:>8.4}",
                c.label,
                kind,
                c.curve.auc,
                c.curve.auc_standard_error()
            );
        }
        if !self.summary.quantities.is_empty() {
            let _ = writeln!(
                out,
                "\n  {:<8} {:<6} {:<20} {:>10} {:>10}",
                "dataset", "method", "quantity", "mean", "sd"
            );
            for q in &self.summary.quantities {
                let _ = writeln!(
                    out,
                    "  {:<8} {:<6} {:<20} {:>10.5} {:>10.5}",
                    q.variant,
                    q.method.name(),
                    q.label,
                    q.mean,
                    q.sd
                );
            }
        }
        out
    }
}
