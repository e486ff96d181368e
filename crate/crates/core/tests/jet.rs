use nalgebra::DVector;
use rigidity_core::jet::*;
use rigidity_core::metric::catalog;
use rigidity_core::{Error, Numerics};

#[test]
fn series_identity_up_to_twelve() {
    for m in 1..=12 {
        assert_eq!(series_sum(m).unwrap(), series_closed_form(m), "m = {m}");
    }
}

#[test]
fn recurrence_matches_closed_form() {
    for l in 0..=10 {
        assert_eq!(expansion_recurrence(l), expansion_closed_form(l), "l = {l}");
    }
}

#[test]
fn assembly_matches_coefficient() {
    for m in 1..=8 {
        assert_eq!(assembled_coefficient(m).unwrap(), jet_coefficient_symbolic(m), "m = {m}");
    }
    assert_eq!(assembled_coefficient(2).unwrap(), worked_m2());
}

fn linearity(m: u32, q: [f64; 3]) -> LinearityReport {
    let params = LinearityParams {
        m,
        q,
        ..LinearityParams::default()
    };
    verify_jet_linearity(&params, &Numerics::default()).unwrap()
}

#[test]
fn linearity_second_order() {
    let r = linearity(2, [0.0, 0.0, 1.0]);
    assert!((r.predicted - 16.0 / 3.0).abs() < 1e-6);
    assert!((r.slope - r.predicted).abs() < 0.02 * r.predicted, "{r:?}");
}

#[test]
fn linearity_third_order() {
    let r = linearity(3, [0.0, 0.0, 1.0]);
    assert!((r.predicted - 4.266666666666667).abs() < 1e-6);
    assert!((r.slope - r.predicted).abs() < 0.02 * r.predicted, "{r:?}");
}

#[test]
fn null_perturbation_has_zero_slope() {
    let r = linearity(2, [0.0, 0.0, 0.0]);
    assert_eq!(r.predicted, 0.0);
    assert!(r.slope.abs() < 1e-6, "{r:?}");
}

#[test]
fn linearity_needs_higher_order() {
    let params = LinearityParams {
        m: 1,
        ..LinearityParams::default()
    };
    assert!(matches!(
        verify_jet_linearity(&params, &Numerics::default()),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn first_order_jet_is_direction_independent() {
    let e = catalog::minkowski_cylinder(1.0);
    let p = DVector::from_vec(vec![0.0, 1.0, 0.0]);
    for b in [0.3, 0.5, 0.8] {
        let v = DVector::from_vec(vec![1.0, 0.0, b]);
        let mut probe = probe_travel_time(&e.metric, &e.domain, &p, &v, &eps_grid(0.15, 24), &Numerics::default())
            .unwrap();
        let fit = fit_expansion(&mut probe, 11).unwrap().clone();
        let g_tt = recover_m1(&fit).unwrap().value / (b * b);
        assert!((g_tt + 2.0).abs() < 2e-3, "b = {b}: {g_tt}");
    }
}

#[test]
fn loose_integration_inflates_uncertainty() {
    let e = catalog::minkowski_cylinder_normal(1.0);
    let p = DVector::from_vec(vec![0.0, 0.0, 0.0]);
    let v = DVector::from_vec(vec![1.0, 0.5, 0.0]);
    let eps = eps_grid(0.15, 24);
    let fit_with = |tol: f64, order: usize| {
        let num = Numerics::default().with_ode_tol(tol);
        let mut probe = probe_travel_time(&e.metric, &e.domain, &p, &v, &eps, &num).unwrap();
        fit_expansion(&mut probe, order).map(|f| f.clone())
    };
    // At order 5 truncation dominates both fits; at order 9 integration noise does.
    let tight = fit_with(1e-12, 5).unwrap();
    let loose = fit_with(1e-6, 5).unwrap();
    assert!(loose.sigma[0] >= tight.sigma[0]);
    let tight = fit_with(1e-12, 9).unwrap();
    match fit_with(1e-6, 9) {
        Ok(loose) => assert!(loose.sigma[0] > 100.0 * tight.sigma[0], "{loose:?} vs {tight:?}"),
        Err(err) => assert!(matches!(err, Error::IllConditionedFit { .. })),
    }
}
