//! Property-based invariants.

use std::f64::consts::PI;

use circadia::simulate::{power_curve, CurveKind};
use circadia::trig::{design_matrix, SubjectDesign};
use circadia::{
    chisq_sf, circular_diff, empirical_pvalue, gamma_to_theta, rts_estimate, sts_estimate,
    theta_to_gamma, wald_statistic, IndividualFit, LinearParams,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn harmonic_pair() -> impl Strategy<Value = (f64, f64)> {
    (0.05f64..5.0, -PI..PI).prop_map(|(a, phi)| (-a * phi.sin(), a * phi.cos()))
}

fn linear_params(order: usize) -> impl Strategy<Value = Vec<f64>> {
    (
        -10.0f64..10.0,
        prop::collection::vec(harmonic_pair(), order),
    )
        .prop_map(|(mid, pairs)| {
            let mut v = vec![mid];
            for (s, c) in pairs {
                v.extend([s, c]);
            }
            v
        })
}

fn exact_fit(coeffs: Vec<f64>) -> IndividualFit {
    let p = coeffs.len();
    IndividualFit::from_parts(
        LinearParams::new(coeffs).unwrap(),
        vec![0.0; 8],
        1.0,
        DMatrix::identity(p, p) * 0.1,
    )
    .unwrap()
}

proptest! {
    #[test]
    fn identities_round_trip(coeffs in (1usize..4).prop_flat_map(linear_params)) {
        let p = LinearParams::new(coeffs.clone()).unwrap();
        let theta = gamma_to_theta(&p);
        prop_assert!(theta.harmonics.iter().all(|h| h.amplitude >= 0.0 && (-PI..PI).contains(&h.phase)));
        let back = theta_to_gamma(&theta);
        for (a, b) in back.coeffs().iter().zip(&coeffs) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn residuals_are_orthogonal_to_design(
        order in 1usize..4,
        extra in 1usize..30,
        values in prop::collection::vec(-50.0f64..50.0, 40),
        jitter in prop::collection::vec(0.0f64..0.5, 40),
    ) {
        let n = 2 * order + 1 + extra;
        let times: Vec<f64> = (0..n).map(|j| 24.0 * j as f64 / n as f64 + jitter[j]).collect();
        let design = SubjectDesign::new(&times, order).unwrap();
        let fit = design.fit(&values[..n]).unwrap();
        let w = design_matrix(&times, order).unwrap();
        let r = DVector::from_column_slice(&fit.residuals);
        let scale = values[..n].iter().map(|v| v.abs()).fold(1.0, f64::max);
        prop_assert!((w.transpose() * r).amax() < 1e-9 * scale * n as f64);
    }

    #[test]
    fn wald_is_invariant_to_linear_reparametrization(
        v in prop::collection::vec(-3.0f64..3.0, 3),
        l in prop::collection::vec(-1.0f64..1.0, 6),
        a in prop::collection::vec(-1.0f64..1.0, 9),
    ) {
        // Σ = LLᵀ + I, A = I + small perturbation
        let lower = DMatrix::from_fn(3, 3, |i, j| if j <= i { l[i * (i + 1) / 2 + j] } else { 0.0 });
        let sigma = &lower * lower.transpose() + DMatrix::identity(3, 3);
        let a = DMatrix::identity(3, 3) + DMatrix::from_column_slice(3, 3, &a) * 0.3;
        prop_assume!(a.determinant().abs() > 0.1);
        let v = DVector::from_vec(v);
        let tau = wald_statistic(&v, &sigma).unwrap();
        let tau2 = wald_statistic(&(&a * &v), &(&a * &sigma * a.transpose())).unwrap();
        prop_assert!((tau - tau2).abs() <= 1e-8 * tau.max(1.0));
        prop_assert!(tau >= 0.0);
    }

    #[test]
    fn rts_amplitudes_dominate_sts(
        order in 1usize..4,
        m in 2usize..15,
        seeds in prop::collection::vec(any::<u64>(), 15),
    ) {
        let fits: Vec<IndividualFit> = seeds[..m]
            .iter()
            .map(|&s| {
                let mut rng = circadia::RngStream::new(s);
                let mut v = vec![rng.standard_normal()];
                for _ in 0..order {
                    let a = 0.05 + 3.0 * rng.uniform();
                    let phi = PI * (2.0 * rng.uniform() - 1.0);
                    v.extend([-a * phi.sin(), a * phi.cos()]);
                }
                exact_fit(v)
            })
            .collect();
        let sts = sts_estimate(&fits).unwrap().population_params();
        let rts = rts_estimate(&fits).unwrap().population_params();
        for (r, s) in rts.harmonics.iter().zip(&sts.harmonics) {
            prop_assert!(r.amplitude >= s.amplitude - 1e-12);
        }
        prop_assert!((rts.midline - sts.midline).abs() < 1e-12);
    }

    #[test]
    fn chisq_tail_is_a_decreasing_probability(q in 1usize..12, t1 in 0.0f64..80.0, dt in 0.0f64..20.0) {
        let p1 = chisq_sf(t1, q);
        let p2 = chisq_sf(t1 + dt, q);
        prop_assert!((0.0..=1.0).contains(&p1));
        prop_assert!(p2 <= p1 + 1e-15);
    }

    #[test]
    fn empirical_pvalue_is_monotone(taus in prop::collection::vec(0.0f64..20.0, 1..200), t in 0.0f64..20.0, dt in 0.0f64..5.0) {
        let p1 = empirical_pvalue(t, &taus);
        let p2 = empirical_pvalue(t + dt, &taus);
        prop_assert!((0.0..=1.0).contains(&p1));
        prop_assert!(p2 <= p1);
    }

    #[test]
    fn power_curves_are_monotone(ps in prop::collection::vec(0.0f64..=1.0, 1..100)) {
        let c = power_curve(&ps, CurveKind::Power).unwrap();
        prop_assert!((0.0..=1.0).contains(&c.auc));
        let mean = ps.iter().map(|p| 1.0 - p).sum::<f64>() / ps.len() as f64;
        prop_assert!((c.auc - mean).abs() < 1e-12);
        let mut last = 0.0;
        for k in 0..=100 {
            let v = c.value_at(k as f64 / 100.0);
            prop_assert!(v >= last);
            last = v;
        }
        prop_assert_eq!(c.value_at(1.0), 1.0);
    }

    #[test]
    fn circular_difference_is_wrapped(a in -20.0f64..20.0, b in -20.0f64..20.0) {
        let d = circular_diff(a, b);
        prop_assert!((-PI..PI).contains(&d));
        // d differs from a - b by a whole number of turns
        let rest = a - b - d;
        prop_assert!(rest.sin().abs() < 1e-9 && rest.cos() > 0.0);
    }
}

#[test]
fn shared_phase_gives_equal_amplitudes() {
    let phi = 0.7f64;
    let fits: Vec<IndividualFit> = [0.5, 1.0, 2.5, 4.0]
        .iter()
        .map(|&a| exact_fit(vec![3.0, -a * phi.sin(), a * phi.cos()]))
        .collect();
    let sts = sts_estimate(&fits).unwrap().population_params();
    let rts = rts_estimate(&fits).unwrap().population_params();
    assert!((sts.harmonics[0].amplitude - rts.harmonics[0].amplitude).abs() < 1e-10);
    assert!((sts.harmonics[0].amplitude - 2.0).abs() < 1e-12);
}
