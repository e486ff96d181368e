//! Scattering relations, travel times and lens data.

pub mod relation;
pub mod table;

pub use relation::{
    complete_scattering, final_exit_index, interior_scattering, probe_sign, scatter, start_class, visits_before,
    Provenance, ScatteringKind, ScatteringSample,
};
pub use table::{
    build_scattering_table, cone_directions, frame_direction, key_distance, scatter_states, validate_cone,
    with_provenance, BoundaryGrid, ConeParams, GridMeta, LensTable, ScatteringTable, TableFailure,
};

use nalgebra::DVector;

use crate::error::Result;
use crate::geodesic::{trace_with, Crossing, StopRule};
use crate::metric::{ChartMetric, DomainSpec};
use crate::numerics::Numerics;

/// The given states together with every intermediate boundary state through
/// which their geodesics pass before leaving `M`: tangential touches and
/// re-entries. A complete table built on this set is closed under the flow.
pub fn flow_closure(
    metric: &ChartMetric,
    domain: &DomainSpec,
    states: &[(DVector<f64>, DVector<f64>)],
    numerics: &Numerics,
) -> Result<Vec<(DVector<f64>, DVector<f64>)>> {
    let mut out = Vec::with_capacity(states.len());
    for (x, v) in states {
        out.push((x.clone(), v.clone()));
        if start_class(domain, x, v, numerics) < 0 {
            continue;
        }
        let trace = trace_with(metric, domain, x, v, numerics.t_max, numerics, StopRule::LeaveDomain)?;
        let window = 10.0 * numerics.event_tol.sqrt() / v.norm().max(f64::MIN_POSITIVE);
        let Some(last) = final_exit_index(&trace.events, window) else {
            continue;
        };
        for e in &trace.events[..last] {
            if matches!(e.crossing, Some(Crossing::Touch) | Some(Crossing::Ascending)) {
                out.push((e.x(), e.v()));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::catalog;
    use crate::Error;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn num() -> Numerics {
        Numerics::default()
    }

    const S3: f64 = 1.7320508075688772;

    #[test]
    fn slab_interior_and_complete() {
        let e = catalog::minkowski_slab(1.0, 3);
        let x = v(&[0.0; 3]);
        let w = v(&[1.0, 0.0, 0.5]);
        let s = interior_scattering(&e.metric, &e.domain, &x, &w, &num()).unwrap();
        assert!((s.tau - 2.0).abs() < 1e-10);
        assert!((s.outbound.base.clone() - v(&[2.0, 0.0, 1.0])).norm() < 1e-10);
        assert!((s.outbound.vec.clone() - w.clone()).norm() < 1e-10);
        assert!((s.length - 2.0 * 0.75f64.sqrt()).abs() < 1e-10);
        let c = complete_scattering(&e.metric, &e.domain, &x, &w, &num()).unwrap();
        assert!((c.tau - s.tau).abs() < 1e-12);
        assert_eq!(c.event_count, 1);
    }

    #[test]
    fn annulus_tangent_chord() {
        let e = catalog::minkowski_annulus(0.5, 1.0);
        let x = v(&[0.0, 1.0, 0.0]);
        let w = v(&[1.0, -S3 / 2.0, 0.5]);
        let s = interior_scattering(&e.metric, &e.domain, &x, &w, &num()).unwrap();
        assert!((s.tau - S3 / 2.0).abs() < 1e-7);
        assert!(e.domain.transversality(&s.outbound.base, &s.outbound.vec).abs() < 1e-6);
        let c = complete_scattering(&e.metric, &e.domain, &x, &w, &num()).unwrap();
        assert!((c.tau - S3).abs() < 1e-10);
        assert_eq!(c.event_count, 2);
        let r = (c.outbound.base[1].powi(2) + c.outbound.base[2].powi(2)).sqrt();
        assert!((r - 1.0).abs() < 1e-10);
    }

    #[test]
    fn annulus_outer_tangential_start_is_immediate_exit() {
        let e = catalog::minkowski_annulus(0.5, 1.0);
        let x = v(&[0.0, 1.0, 0.0]);
        let w = v(&[1.0, 0.0, 1.0]);
        let c = complete_scattering(&e.metric, &e.domain, &x, &w, &num()).unwrap();
        assert_eq!(c.tau, 0.0);
        assert_eq!(c.outbound, c.inbound);
        assert!(matches!(interior_scattering(&e.metric, &e.domain, &x, &w, &num()), Err(Error::ZeroMeasure)));
    }

    #[test]
    fn cylinder_diameter_chord() {
        let e = catalog::minkowski_cylinder(1.0);
        let s = interior_scattering(&e.metric, &e.domain, &v(&[0.0, 1.0, 0.0]), &v(&[1.0, -1.0, 0.0]), &num()).unwrap();
        assert!((s.tau - 2.0).abs() < 1e-10);
        assert!((s.outbound.base.clone() - v(&[2.0, -1.0, 0.0])).norm() < 1e-10);
        assert_eq!(s.length, 0.0);
    }

    #[test]
    fn budget_exceeded_is_reported() {
        let e = catalog::minkowski_slab(1.0, 3);
        let n = num().with_t_max(1.0);
        let r = interior_scattering(&e.metric, &e.domain, &v(&[0.0; 3]), &v(&[1.0, 0.0, 0.5]), &n);
        assert!(matches!(r, Err(Error::NonTerminating { .. })));
    }

    #[test]
    fn slab_table_has_no_failures() {
        let e = catalog::minkowski_slab(1.0, 3);
        let grid = BoundaryGrid::slab_face(&BoundaryGrid::linspace(0.0, 1.0, 10), &BoundaryGrid::linspace(-1.0, 1.0, 10));
        let cone = ConeParams::Frame { tilts: vec![0.2], angles: vec![0.3] };
        let t = build_scattering_table(&e.metric, &e.domain, &grid, &cone, ScatteringKind::Interior, &num()).unwrap();
        assert_eq!(t.samples.len(), 100);
        assert!(t.failures.is_empty());
        assert!(!t.has_duplicate_keys(1e-12));
        let wide = Numerics { cone_width: 0.2, ..num() };
        validate_cone(&e.metric, &e.domain, &grid, &cone, &wide).unwrap();
        let csv = t.to_csv();
        assert_eq!(csv.lines().count(), 101);
        assert!(csv.lines().next().unwrap().ends_with("tau,length,kind,event_count,provenance"));
    }

    #[test]
    fn annulus_table_splits_by_impact_parameter() {
        let e = catalog::minkowski_annulus(0.5, 1.0);
        let grid = BoundaryGrid::circle(1.0, &[0.0], &[0.0, 1.0]);
        let mut angles = BoundaryGrid::linspace(-1.2, 1.2, 25);
        angles.push(std::f64::consts::FRAC_PI_6);
        let cone = ConeParams::Frame { tilts: vec![0.0, 0.05], angles };
        let t = build_scattering_table(&e.metric, &e.domain, &grid, &cone, ScatteringKind::Complete, &num()).unwrap();
        assert!(t.failures.is_empty(), "{:?}", t.failures);
        let ones = t.samples.iter().filter(|s| s.event_count == 1).count();
        let counts: Vec<usize> = t.samples.iter().map(|s| s.event_count).collect();
        assert!(ones > 0 && ones < t.samples.len(), "{counts:?}");
    }

    #[test]
    fn cylinder_probe_cone_matches_chord_formula() {
        let e = catalog::minkowski_cylinder(1.0);
        let b: f64 = 0.5;
        let eps: Vec<f64> = BoundaryGrid::linspace(0.01, 0.15, 8);
        let dirs = eps
            .iter()
            .map(|&ep| {
                let s = (1.0 + ep * ep).sqrt();
                vec![s, -ep, s * b]
            })
            .collect();
        let grid = BoundaryGrid::circle(1.0, &[0.0], &[0.0]);
        let t = build_scattering_table(
            &e.metric,
            &e.domain,
            &grid,
            &ConeParams::Explicit { directions: dirs },
            ScatteringKind::Complete,
            &num(),
        )
        .unwrap();
        for (s, ep) in t.samples.iter().zip(&eps) {
            let exact = 2.0 * ep / (b * b + ep * ep * (1.0 + b * b));
            assert!((s.tau - exact).abs() < 1e-8);
        }
    }

    #[test]
    fn flow_closure_adds_tangency_state() {
        let e = catalog::minkowski_annulus(0.5, 1.0);
        let states = vec![(v(&[0.0, 1.0, 0.0]), v(&[1.0, -S3 / 2.0, 0.5]))];
        let closed = flow_closure(&e.metric, &e.domain, &states, &num()).unwrap();
        assert_eq!(closed.len(), 2);
        let (z, _) = &closed[1];
        assert!(((z[1] * z[1] + z[2] * z[2]).sqrt() - 0.5).abs() < 1e-9);
    }

    fn cylinder_state(alpha: f64, psi: f64, tilt: f64) -> (DVector<f64>, DVector<f64>) {
        let e = catalog::minkowski_cylinder(1.0);
        let x = v(&[0.0, alpha.cos(), alpha.sin()]);
        let w = frame_direction(&e.metric, &e.domain, &x, tilt, psi).unwrap();
        (x, w)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn complete_dominates_interior_on_annulus(psi in -1.4f64..1.4, tilt in 0.0f64..0.15) {
            let e = catalog::minkowski_annulus(0.5, 1.0);
            let x = v(&[0.0, 1.0, 0.0]);
            let w = frame_direction(&e.metric, &e.domain, &x, tilt, psi).unwrap();
            let i = interior_scattering(&e.metric, &e.domain, &x, &w, &num()).unwrap();
            let c = complete_scattering(&e.metric, &e.domain, &x, &w, &num()).unwrap();
            prop_assert!(c.tau >= i.tau - 1e-12);
            prop_assert_eq!((c.tau - i.tau).abs() < 1e-9, c.event_count == 1);
        }

        #[test]
        fn reversibility(alpha in 0.0f64..6.28, psi in -1.3f64..1.3, tilt in 0.0f64..0.15) {
            let e = catalog::minkowski_cylinder(1.0);
            let (x, w) = cylinder_state(alpha, psi, tilt);
            let c = complete_scattering(&e.metric, &e.domain, &x, &w, &num()).unwrap();
            let back = complete_scattering(&e.metric, &e.domain, &c.outbound.base, &(-&c.outbound.vec), &num()).unwrap();
            prop_assert!((back.tau - c.tau).abs() < 1e-6);
            prop_assert!((back.outbound.base.clone() - x).norm() < 1e-6);
            prop_assert!((back.outbound.vec.clone() + w).norm() < 1e-6);
        }

        #[test]
        fn convex_domain_relations_coincide(alpha in 0.0f64..6.28, psi in -1.3f64..1.3) {
            let e = catalog::minkowski_cylinder(1.0);
            let (x, w) = cylinder_state(alpha, psi, 0.0);
            let i = interior_scattering(&e.metric, &e.domain, &x, &w, &num()).unwrap();
            let c = complete_scattering(&e.metric, &e.domain, &x, &w, &num()).unwrap();
            prop_assert!((i.tau - c.tau).abs() < 1e-12);
            prop_assert!((i.outbound.base.clone() - c.outbound.base.clone()).norm() < 1e-12);
        }

        #[test]
        fn conic_invariance(psi in -1.3f64..1.3, tilt in 0.01f64..0.15, c in 0.2f64..5.0) {
            let e = catalog::minkowski_cylinder(1.0);
            let (x, w) = cylinder_state(0.3, psi, tilt);
            let a = complete_scattering(&e.metric, &e.domain, &x, &w, &num()).unwrap();
            let b = complete_scattering(&e.metric, &e.domain, &x, &(&w * c), &num()).unwrap();
            prop_assert!((b.tau * c - a.tau).abs() < 1e-8 * a.tau.max(1.0));
            prop_assert!((b.length - a.length).abs() < 1e-8);
        }
    }
}
