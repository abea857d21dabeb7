//! Simulation study plumbing: determinism, summaries and file round trips.

use circadia::io::{export_curves, load_cohorts, save_cohorts, CURVE_GRID_POINTS};
use circadia::simulate::{run_study_variants, summarize, CurveKind, GeneratedData};
use circadia::{fit_individual, generate_datasets, run_study, Method, SimSetting, Study};

fn small(study: Study) -> SimSetting {
    SimSetting::parse(study, "K1,snr=high,size=small,var=high").unwrap()
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

#[test]
fn study_is_reproducible_across_pools() {
    for study in [Study::Single, Study::TwoCohort] {
        let s = small(study);
        let a = in_pool(1, || run_study(&s, 6, 19, 7).unwrap());
        let b = in_pool(8, || run_study(&s, 6, 19, 7).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.len(), 6);
        assert!(a
            .iter()
            .enumerate()
            .all(|(i, r)| r.trial == i && r.datasets.len() == 4));
    }
}

#[test]
fn trial_data_ignore_the_variant_subset() {
    let s = small(Study::TwoCohort);
    let all = run_study(&s, 3, 19, 2).unwrap();
    let some = run_study_variants(&s, 3, 19, 2, &[3]).unwrap();
    for (a, b) in all.iter().zip(&some) {
        for m in Method::BOTH {
            assert_eq!(a.outcome(3, m), b.outcome(3, m));
        }
    }
}

#[test]
fn seeds_and_trials_change_the_data() {
    let s = small(Study::Single);
    let base = generate_datasets(&s, 1, 0, 1).unwrap();
    assert_eq!(base, generate_datasets(&s, 1, 0, 1).unwrap());
    assert_ne!(base, generate_datasets(&s, 1, 1, 1).unwrap());
    assert_ne!(base, generate_datasets(&s, 1, 0, 2).unwrap());
    assert_ne!(base, generate_datasets(&s, 2, 0, 1).unwrap());
}

#[test]
fn summary_labels_and_kinds() {
    let s = small(Study::TwoCohort);
    let records = run_study(&s, 4, 19, 3).unwrap();
    let summary = summarize(&s, &records, 0.95).unwrap();
    assert_eq!(summary.trials, 4);
    // 4 datasets x 2 methods x 2 tests
    assert_eq!(summary.curves.len(), 16);
    for c in &summary.curves {
        let expected = format!("dataset{}-{}-{}", c.variant, c.method.name(), c.test.name());
        assert_eq!(c.label, expected);
        let kind = if c.variant <= 2 {
            CurveKind::Power
        } else {
            CurveKind::TypeI
        };
        assert_eq!(c.curve.kind, kind);
        assert_eq!(c.curve.len(), 4);
        assert!(c.curve.band_at(0.05).is_some());
    }
}

#[test]
fn generated_data_survive_a_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let s = small(Study::TwoCohort);
    let data = generate_datasets(&s, 1, 0, 5).unwrap();
    let path = dir.path().join("data.csv");
    save_cohorts(&data.cohorts(), &path).unwrap();
    let loaded = load_cohorts(&path).unwrap();
    let GeneratedData::TwoCohort { case, control } = &data else {
        panic!("two cohorts expected")
    };
    assert_eq!(loaded, vec![control.clone(), case.clone()]);
    for (a, b) in loaded[1].subjects.iter().zip(&case.subjects) {
        let (fa, fb) = (fit_individual(a, 1).unwrap(), fit_individual(b, 1).unwrap());
        assert_eq!(fa.params.coeffs(), fb.params.coeffs());
        assert_eq!(fa.sigma2, fb.sigma2);
    }
}

#[test]
fn curve_export_is_stable() {
    let s = small(Study::Single);
    let records = run_study(&s, 5, 19, 4).unwrap();
    let summary = summarize(&s, &records, 0.95).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let first = export_curves(&summary.curves, dir.path().join("a")).unwrap();
    let second = export_curves(&summary.curves, dir.path().join("b")).unwrap();
    assert_eq!(first.len(), summary.curves.len());
    for (a, b) in first.iter().zip(&second) {
        let bytes = std::fs::read(a).unwrap();
        assert_eq!(bytes, std::fs::read(b).unwrap());
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(text.lines().count(), CURVE_GRID_POINTS + 1);
    }
    assert!(first[0].ends_with("dataset1-sts-zero-amplitudes.csv"));
    assert!(export_curves(&[], dir.path()).is_err());
}
