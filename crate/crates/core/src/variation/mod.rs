//! First variation of travel times and the conversions between interior and
//! complete scattering data.

pub mod convert;
pub mod family;
pub mod lightlike;

pub use convert::{
    default_delta, recover_complete_from_interior, recover_complete_state, recover_complete_states,
    recover_interior_from_complete, Collar, CompleteRecovery, ConversionOutput, ConversionParams, StepCase, StepLog,
};
pub use family::{central5, forward5, variation_residual, VariationFamily, VariationResidual};
pub use lightlike::{recover_lightlike_tau_interior, required_states, null_split, LightlikeRecovery, NullSplit};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::catalog;
    use crate::numerics::Numerics;
    use crate::scattering::{
        complete_scattering, flow_closure, frame_direction, interior_scattering, scatter_states, LensTable,
        ScatteringKind, ScatteringTable,
    };
    use crate::Error;
    use nalgebra::DVector;

    const S3: f64 = 1.7320508075688772;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn num() -> Numerics {
        Numerics::default()
    }

    #[test]
    fn slab_hand_computed_family() {
        let e = catalog::minkowski_slab(1.0, 3);
        let fam = VariationFamily::trace(
            &e.metric,
            &e.domain,
            |l| (v(&[0.0; 3]), v(&[1.0, 0.0, 0.5 + l])),
            0.0,
            1e-3,
            &num(),
        )
        .unwrap();
        let r = variation_residual(&e.metric, &fam, &num()).unwrap();
        assert!((r.h + 0.75).abs() < 1e-12);
        assert!((r.h_prime - 1.0).abs() < 1e-10);
        assert!((r.tau - 2.0).abs() < 1e-10);
        assert!((r.tau_prime + 4.0).abs() < 1e-7);
        assert!((r.lhs - 8.0).abs() < 1e-8 && (r.rhs - 8.0).abs() < 1e-8);
        assert!(r.residual < 1e-8);
    }

    #[test]
    fn slab_translation_family_is_trivial() {
        let e = catalog::minkowski_slab(1.0, 3);
        let fam = VariationFamily::trace(
            &e.metric,
            &e.domain,
            |l| (v(&[0.0, l, 0.0]), v(&[1.0, 0.0, 0.5])),
            0.0,
            1e-3,
            &num(),
        )
        .unwrap();
        let r = variation_residual(&e.metric, &fam, &num()).unwrap();
        assert!(r.scale < 1e-8 && r.residual < 1e-8);
    }

    #[test]
    fn cylinder_sliding_lightlike_family() {
        let e = catalog::minkowski_cylinder(1.0);
        let beta: f64 = 0.4;
        let fam = VariationFamily::trace(
            &e.metric,
            &e.domain,
            |l| {
                let x = v(&[0.3 * l, l.cos(), l.sin()]);
                let a = std::f64::consts::PI + l + beta;
                (x, v(&[1.0, a.cos(), a.sin()]))
            },
            0.0,
            1e-3,
            &num(),
        )
        .unwrap();
        let r = variation_residual(&e.metric, &fam, &num()).unwrap();
        assert!(r.h.abs() < 1e-12 && r.h_prime.abs() < 1e-9);
        assert!(r.residual < 1e-6, "{r:?}");
        assert!(r.scale > 0.1);
    }

    #[test]
    fn tangential_endpoint_has_no_derivative() {
        let e = catalog::minkowski_annulus(0.5, 1.0);
        let fam = VariationFamily::trace(
            &e.metric,
            &e.domain,
            |l| (v(&[0.0, 1.0, 0.0]), v(&[1.0, -S3 / 2.0, 0.5 + l])),
            0.0,
            1e-3,
            &num(),
        );
        match fam {
            Ok(f) => assert!(matches!(variation_residual(&e.metric, &f, &num()), Err(Error::UndefinedDerivative))),
            Err(err) => panic!("{err}"),
        }
    }

    fn oracle_table(entry: &catalog::CatalogEntry, kind: ScatteringKind) -> LensTable {
        LensTable::new(ScatteringTable::new(kind), num()).with_oracle(entry.metric.clone(), entry.domain.clone())
    }

    #[test]
    fn lightlike_recovery_examples() {
        let slab = catalog::minkowski_slab(1.0, 3);
        let t = oracle_table(&slab, ScatteringKind::Interior);
        let r = recover_lightlike_tau_interior(&t, &slab.metric, &slab.domain, &v(&[0.0; 3]), &v(&[1.0, 0.0, 1.0]))
            .unwrap();
        assert!((r.sample.tau - 1.0).abs() < 1e-6);
        assert!(r.h0.abs() < 1e-9 && (r.h_prime + 2.0).abs() < 1e-6);

        let cyl = catalog::minkowski_cylinder(1.0);
        let t = oracle_table(&cyl, ScatteringKind::Interior);
        let x = v(&[0.0, 1.0, 0.0]);
        let r = recover_lightlike_tau_interior(&t, &cyl.metric, &cyl.domain, &x, &v(&[1.0, -1.0, 0.0])).unwrap();
        assert!((r.sample.tau - 2.0).abs() < 2e-4);

        let b: f64 = 0.5;
        let w = v(&[1.0, -(1.0 - b * b).sqrt(), b]);
        let r = recover_lightlike_tau_interior(&t, &cyl.metric, &cyl.domain, &x, &w).unwrap();
        let direct = interior_scattering(&cyl.metric, &cyl.domain, &x, &w, &num()).unwrap();
        assert!((r.sample.tau - direct.tau).abs() < 1e-4 * direct.tau);
    }

    #[test]
    fn lightlike_recovery_from_pure_data() {
        let cyl = catalog::minkowski_cylinder(1.0);
        let x = v(&[0.0, 1.0, 0.0]);
        let w = v(&[1.0, -0.6, 0.8]);
        let direct = interior_scattering(&cyl.metric, &cyl.domain, &x, &w, &num()).unwrap();
        let mut states = vec![(x.clone(), w.clone())];
        states.extend(required_states(&cyl.metric, &cyl.domain, &direct.outbound, lightlike::FAMILY_STEP).unwrap());
        let table = scatter_states(&cyl.metric, &cyl.domain, &states, ScatteringKind::Interior, &num());
        let lens = LensTable::new(table, num());
        let r = recover_lightlike_tau_interior(&lens, &cyl.metric, &cyl.domain, &x, &w).unwrap();
        assert!((r.sample.tau - direct.tau).abs() < 1e-4 * direct.tau);
        let sparse = LensTable::new(ScatteringTable::new(ScatteringKind::Interior), num());
        assert!(matches!(
            recover_lightlike_tau_interior(&sparse, &cyl.metric, &cyl.domain, &x, &w),
            Err(Error::TableTooSparse { .. })
        ));
    }

    fn annulus_states(angles: &[f64], tilts: &[f64]) -> Vec<(DVector<f64>, DVector<f64>)> {
        let e = catalog::minkowski_annulus(0.5, 1.0);
        let x = v(&[0.0, 1.0, 0.0]);
        let mut out = Vec::new();
        for &t in tilts {
            for &a in angles {
                out.push((x.clone(), frame_direction(&e.metric, &e.domain, &x, t, a).unwrap()));
            }
        }
        out
    }

    #[test]
    fn interior_from_complete_on_annulus() {
        let e = catalog::minkowski_annulus(0.5, 1.0);
        let states = annulus_states(&[std::f64::consts::FRAC_PI_6, 0.2, 0.9], &[0.0, 0.05]);
        let closed = flow_closure(&e.metric, &e.domain, &states, &num()).unwrap();
        assert_eq!(closed.len(), states.len() + 2);
        let complete = scatter_states(&e.metric, &e.domain, &closed, ScatteringKind::Complete, &num());
        let interior = recover_interior_from_complete(&complete).unwrap();
        assert!(interior.failures.is_empty());
        let direct = scatter_states(&e.metric, &e.domain, &closed, ScatteringKind::Interior, &num());
        for (r, d) in interior.samples.iter().zip(&direct.samples) {
            assert!((r.tau - d.tau).abs() < 1e-9, "{} vs {}", r.tau, d.tau);
            assert!((&r.outbound.base - &d.outbound.base).norm() < 1e-9);
        }
        assert!((interior.samples[0].tau - S3 / 2.0).abs() < 1e-7);

        let open = scatter_states(&e.metric, &e.domain, &states, ScatteringKind::Complete, &num());
        let partial = recover_interior_from_complete(&open).unwrap();
        assert_eq!(partial.failures.len(), 2);
    }

    #[test]
    fn slab_conversions_are_identities() {
        let e = catalog::minkowski_slab(1.0, 3);
        let states: Vec<_> = [0.1, 0.5, 1.0]
            .iter()
            .map(|&a: &f64| (v(&[0.0, 0.0, 0.0]), v(&[1.0, 0.3 * a, 0.9])))
            .collect();
        let complete = scatter_states(&e.metric, &e.domain, &states, ScatteringKind::Complete, &num());
        let interior = recover_interior_from_complete(&complete).unwrap();
        let lens = LensTable::new(interior.clone(), num()).with_oracle(e.metric.clone(), e.domain.clone());
        let collar = Collar {
            metric: &e.metric,
            domain: &e.domain,
        };
        let back = recover_complete_from_interior(&lens, &collar, &ConversionParams::default(), &num()).unwrap();
        for ((a, b), c) in complete.samples.iter().zip(&interior.samples).zip(&back.table.samples) {
            assert!((a.tau - b.tau).abs() < 1e-12);
            assert!((a.tau - c.tau).abs() < 1e-9);
            assert_eq!(c.event_count, 1);
        }
    }

    #[test]
    fn complete_from_interior_tangent_chord() {
        let e = catalog::minkowski_annulus(0.5, 1.0);
        let lens = oracle_table(&e, ScatteringKind::Interior);
        let collar = Collar {
            metric: &e.metric,
            domain: &e.domain,
        };
        let x = v(&[0.0, 1.0, 0.0]);
        for tilt in [0.0, 0.05] {
            let w = frame_direction(&e.metric, &e.domain, &x, tilt, std::f64::consts::FRAC_PI_6).unwrap();
            let r = recover_complete_state(&lens, &collar, &x, &w, &ConversionParams::default(), &num()).unwrap();
            let direct = complete_scattering(&e.metric, &e.domain, &x, &w, &num()).unwrap();
            assert!((r.sample.tau - direct.tau).abs() < 1e-4 * direct.tau, "{} vs {}", r.sample.tau, direct.tau);
            assert!((&r.sample.outbound.base - &direct.outbound.base).norm() < 1e-6);
            assert_eq!(r.sample.event_count, 2);
            assert!(r.steps.iter().any(|s| s.case == StepCase::Limit));
            assert!(r.steps.iter().filter(|s| s.case == StepCase::Limit).all(|s| s.progress >= s.delta));
            assert!(r.steps.len() <= r.max_iterations);
        }
        let w = frame_direction(&e.metric, &e.domain, &x, 0.0, std::f64::consts::FRAC_PI_6).unwrap();
        let direct = complete_scattering(&e.metric, &e.domain, &x, &w, &num()).unwrap();
        assert!((direct.tau - S3).abs() < 1e-9);
    }

    #[test]
    fn complete_from_interior_near_tangency() {
        let e = catalog::minkowski_annulus(0.5, 1.0);
        let lens = oracle_table(&e, ScatteringKind::Interior);
        let collar = Collar {
            metric: &e.metric,
            domain: &e.domain,
        };
        let x = v(&[0.0, 1.0, 0.0]);
        for b in [0.5 - 1e-3, 0.5 + 1e-3] {
            let w = v(&[1.0, -(1.0f64 - b * b).sqrt(), b]);
            let r = recover_complete_state(&lens, &collar, &x, &w, &ConversionParams::default(), &num()).unwrap();
            let direct = complete_scattering(&e.metric, &e.domain, &x, &w, &num()).unwrap();
            assert!((r.sample.tau - direct.tau).abs() < 1e-4 * direct.tau, "b={b}: {} vs {}", r.sample.tau, direct.tau);
        }
    }
}
