//! Geodesic integration, boundary event detection, shooting, Jacobi fields
//! and the transversal perturbation sampler.

pub mod ode;
pub mod perturb;
pub mod shoot;
pub mod trace;

pub use perturb::{draw_in_cone, is_transversal, project_to_null, sample_transversal_perturbation, Perturbation};
pub use shoot::{endpoint_with_jacobian, first_conjugate_time, jacobi_field, shoot, JacobiSolution};
pub use trace::{
    exp_map, flow, integrate_geodesic, trace_through_domain, trace_with, AuxEvent, BoundaryEvent, Crossing,
    EventKind, GeodesicTrace, StopRule, Termination, TraceSample, Tracer,
};

use crate::io::{csv_row, floats, indexed};

/// CSV with columns `t, x0…, v0…`.
pub fn trace_csv(trace: &GeodesicTrace) -> String {
    let n = trace.samples[0].x.len();
    let mut out = csv_row(std::iter::once("t".to_string()).chain(indexed("x", n)).chain(indexed("v", n)));
    for s in &trace.samples {
        out.push_str(&csv_row(
            floats(std::iter::once(&s.t)).chain(floats(s.x.iter())).chain(floats(s.v.iter())),
        ));
    }
    out
}

/// JSON array of `{t, point, velocity, kind, transversality}` records.
pub fn events_json(trace: &GeodesicTrace) -> serde_json::Value {
    serde_json::to_value(&trace.events).unwrap_or(serde_json::Value::Null)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::catalog;
    use crate::numerics::Numerics;
    use nalgebra::DVector;
    use std::f64::consts::PI;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn num() -> Numerics {
        Numerics::default()
    }

    #[test]
    fn minkowski_straight_line() {
        let m = catalog::minkowski(3).metric;
        let tr = integrate_geodesic(&m, &v(&[0.0; 3]), &v(&[1.0, 1.0, 0.0]), 2.0, &num()).unwrap();
        let last = tr.last();
        assert!((last.x.clone() - v(&[2.0, 2.0, 0.0])).norm() < 1e-12);
        assert!((last.v.clone() - v(&[1.0, 1.0, 0.0])).norm() < 1e-12);
        assert_eq!(tr.termination, Termination::ReachedTMax);
    }

    #[test]
    fn polar_chart_matches_cartesian_line() {
        let p = catalog::minkowski_polar().metric;
        let b = 0.8;
        // start (t=0, r=1, θ=0) with dθ/dt = b: cartesian velocity (1, 0, b)
        let t_end = 1.3;
        let tr = integrate_geodesic(&p, &v(&[0.0, 1.0, 0.0]), &v(&[1.0, 0.0, b]), t_end, &num()).unwrap();
        let last = tr.last();
        let (x, y) = (1.0, b * t_end);
        assert!((last.x[1] - (x * x + y * y).sqrt()).abs() < 1e-9);
        assert!((last.x[2] - y.atan2(x)).abs() < 1e-9);
        assert!((last.x[0] - t_end).abs() < 1e-12);
    }

    #[test]
    fn sphere_null_geodesic_reaches_antipode() {
        let s = catalog::product_sphere().metric;
        let tr = integrate_geodesic(&s, &v(&[0.0, PI / 2.0, 0.0]), &v(&[1.0, 0.0, 1.0]), PI, &num()).unwrap();
        let last = tr.last();
        assert!((last.x[1] - PI / 2.0).abs() < 1e-9);
        assert!((last.x[2] - PI).abs() < 1e-9);
        assert!(tr.max_energy_drift(&s) < 1e-8);
    }

    #[test]
    fn slab_single_exit() {
        let e = catalog::minkowski_slab(1.0, 3);
        let tr = trace_through_domain(&e.metric, &e.domain, &v(&[0.0; 3]), &v(&[1.0, 0.0, 0.5]), 5.0, &num()).unwrap();
        assert_eq!(tr.events.len(), 1);
        let ev = &tr.events[0];
        assert_eq!(ev.kind, EventKind::Exit);
        assert!((ev.t - 2.0).abs() < 1e-10);
        assert!((ev.x() - v(&[2.0, 0.0, 1.0])).norm() < 1e-10);
    }

    #[test]
    fn annulus_tangency_then_exit() {
        let e = catalog::minkowski_annulus(0.5, 1.0);
        let s3 = 3f64.sqrt();
        let w = v(&[1.0, -s3 / 2.0, 0.5]);
        let tr = trace_through_domain(&e.metric, &e.domain, &v(&[0.0, 1.0, 0.0]), &w, 3.0, &num()).unwrap();
        assert_eq!(tr.events.len(), 2, "{:?}", tr.events);
        assert_eq!(tr.events[0].kind, EventKind::Tangential);
        assert!((tr.events[0].t - s3 / 2.0).abs() < 1e-7);
        assert_eq!(tr.events[1].kind, EventKind::Exit);
        assert!((tr.events[1].t - s3).abs() < 1e-10);
    }

    #[test]
    fn cylinder_chord_exit_time() {
        let e = catalog::minkowski_cylinder(1.0);
        let (b, eps) = (0.5, 0.1);
        let s = (1.0f64 + eps * eps).sqrt();
        let w = v(&[s, -eps, s * b]);
        let tr = trace_through_domain(&e.metric, &e.domain, &v(&[0.0, 1.0, 0.0]), &w, 3.0, &num()).unwrap();
        let exact = 2.0 * eps / (b * b + eps * eps * (1.0 + b * b));
        assert_eq!(tr.events.len(), 1);
        assert!((tr.events[0].t - exact).abs() < 1e-11, "{}", tr.events[0].t - exact);
        assert!((exact - 0.761905).abs() < 1e-6);
    }

    #[test]
    fn shooting_examples() {
        let m = catalog::minkowski(3).metric;
        let w = shoot(&m, &v(&[0.0; 3]), &v(&[2.0, 1.0, 0.0]), &v(&[1.0, 0.0, 0.0]), None, &num()).unwrap();
        assert!((w - v(&[2.0, 1.0, 0.0])).norm() < 1e-9);

        let p = catalog::minkowski_polar().metric;
        let a = PI / 3.0;
        let target = v(&[1.0, 1.0, a]);
        let w = shoot(&p, &v(&[0.0, 1.0, 0.0]), &target, &v(&[1.0, 0.0, 1.0]), None, &num()).unwrap();
        // cartesian segment from (1,0) to (cos a, sin a); velocity at start in polar coords
        let d = [a.cos() - 1.0, a.sin()];
        assert!((w[1] - d[0]).abs() < 1e-8 && (w[2] - d[1]).abs() < 1e-8 && (w[0] - 1.0).abs() < 1e-8);

        let s = catalog::product_sphere().metric;
        let target = v(&[0.3, PI / 2.0, 0.3]);
        let w = shoot(&s, &v(&[0.0, PI / 2.0, 0.0]), &target, &v(&[0.25, 0.01, 0.25]), Some(1.0), &num()).unwrap();
        assert!(w[1].abs() < 1e-9 && (w[2] - 0.3).abs() < 1e-9 && (w[0] - 0.3).abs() < 1e-9);
        assert!(s.norm_sq(&v(&[0.0, PI / 2.0, 0.0]), &w).abs() < 1e-9);
    }

    #[test]
    fn jacobi_fields_and_conjugate_points() {
        let m = catalog::minkowski(3).metric;
        let tr = integrate_geodesic(&m, &v(&[0.0; 3]), &v(&[1.0, 1.0, 0.0]), 2.0, &num()).unwrap();
        let j = jacobi_field(&m, &tr, &v(&[0.0; 3]), &v(&[0.0, 0.0, 1.0]), &num()).unwrap();
        for (t, jj) in j.t.iter().zip(&j.j) {
            assert!((jj.clone() - v(&[0.0, 0.0, *t])).norm() < 1e-10);
        }
        assert!(j.first_zero.is_none());
        assert!(first_conjugate_time(&m, &v(&[0.0; 3]), &v(&[1.0, 1.0, 0.0]), 5.0, &num()).unwrap().is_none());

        let s = catalog::product_sphere().metric;
        let x = v(&[0.0, PI / 2.0, 0.0]);
        let w = v(&[1.0, 0.0, 1.0]);
        let t = first_conjugate_time(&s, &x, &w, 4.0, &num()).unwrap().unwrap();
        assert!((t - PI).abs() < 1e-4, "{t}");
        let tr = integrate_geodesic(&s, &x, &w, 4.0, &num()).unwrap();
        let j = jacobi_field(&s, &tr, &v(&[0.0; 3]), &v(&[0.0, 1.0, 0.0]), &num()).unwrap();
        for (t, jj) in j.t.iter().zip(&j.j) {
            assert!((jj[1] - t.sin()).abs() < 1e-6);
        }
        assert!((j.first_zero.unwrap() - PI).abs() < 1e-4);
    }

    #[test]
    fn perturbation_breaks_tangency() {
        let e = catalog::minkowski_annulus(0.5, 1.0);
        let s3 = 3f64.sqrt();
        let x = v(&[0.0, 1.0, 0.0]);
        let w = v(&[1.0, -s3 / 2.0, 0.5]);
        let p = sample_transversal_perturbation(&e.metric, &e.domain, &x, &w, 0.01, 7, &num()).unwrap();
        let u = &p.accepted.vec;
        // impact parameter of the spatial line through (1, 0)
        let d = v(&[u[1], u[2]]).normalize();
        let impact = d[1].abs();
        assert!((impact - 0.5).abs() > 1e-9);
        assert!(e.metric.norm_sq(&x, u).abs() < 1e-12);

        let c = catalog::minkowski_cylinder(1.0);
        let p = sample_transversal_perturbation(&c.metric, &c.domain, &x, &v(&[1.0, -0.05, 0.5]), 0.05, 1, &num()).unwrap();
        assert!(c.domain.transversality(&x, &p.accepted.vec) > 0.0);
    }

    #[test]
    fn exports() {
        let e = catalog::minkowski_slab(1.0, 3);
        let tr = trace_through_domain(&e.metric, &e.domain, &v(&[0.0; 3]), &v(&[1.0, 0.0, 0.5]), 3.0, &num()).unwrap();
        let csv = trace_csv(&tr);
        assert!(csv.starts_with("t,x0,x1,x2,v0,v1,v2\n"));
        let js = events_json(&tr);
        assert_eq!(js[0]["kind"], "exit");
    }
}
