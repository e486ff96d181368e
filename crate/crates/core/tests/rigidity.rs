use nalgebra::DVector;
use rigidity_core::metric::catalog;
use rigidity_core::rigidity::*;
use rigidity_core::Numerics;

fn v(c: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(c)
}

#[test]
fn sphere_cut_point_is_antipodal() {
    let e = catalog::product_sphere();
    let field = TimeSeparationField::from_entry(&e, Method::Chain, Numerics::default());
    let x = v(&[0.0, std::f64::consts::FRAC_PI_2, 0.0]);
    let p = cut_locus_probe(&field, &x, &v(&[1.0, 0.0, 1.0]), &CutBudget::default()).unwrap();
    let rho = p.rho.unwrap();
    assert!((rho - std::f64::consts::PI).abs() < 1e-3, "{p:?}");
    assert_eq!(p.witness, CutWitness::ConjugatePoint);
    assert!(p.second_geodesic.is_some());
}

fn approach_sequences() -> [Vec<DVector<f64>>; 2] {
    let a = (1..=12).map(|j| v(&[1.0, 1.0 - 0.5f64.powi(j), 0.0])).collect();
    let b = (1..=12).map(|j| v(&[1.0 + 0.5f64.powi(j), 1.0, 0.0])).collect();
    [a, b]
}

#[test]
fn gradient_trick_recovers_null_direction() {
    let field = TimeSeparationField::from_entry(&catalog::minkowski(3), Method::Chain, Numerics::default());
    let z1 = v(&[0.0, 0.0, 0.0]);
    let y = v(&[1.0, 1.0, 0.0]);
    for seq in approach_sequences() {
        let r = recover_null_direction_via_gradient(&field, &z1, &y, &seq).unwrap();
        assert!(euclidean_angle(&r.u, &[1.0, 1.0, 0.0]) < 1e-5, "{:?}", r.u);
        assert!(euclidean_angle(&r.w, &[1.0, 1.0, 0.0]) < 1e-5, "{:?}", r.w);
    }
}

#[test]
fn gradient_trick_on_trivial_conformal_factor() {
    let flat = TimeSeparationField::from_entry(&catalog::minkowski(3), Method::Chain, Numerics::default());
    let mut conformal = catalog::product_conformal(0.0, 0.3, [0.0, 0.0], 10.0);
    conformal.domain = rigidity_core::metric::DomainSpec::whole(3);
    let conformal = TimeSeparationField::from_entry(&conformal, Method::Chain, Numerics::default());
    let z1 = v(&[0.0, 0.0, 0.0]);
    let y = v(&[1.0, 1.0, 0.0]);
    let [seq, _] = approach_sequences();
    let a = recover_null_direction_via_gradient(&flat, &z1, &y, &seq).unwrap();
    let b = recover_null_direction_via_gradient(&conformal, &z1, &y, &seq).unwrap();
    for (p, q) in a.u.iter().zip(&b.u).chain(a.w.iter().zip(&b.w)) {
        assert!((p - q).abs() < 1e-6);
    }
}

fn disk(x: f64, y: f64, r: f64) -> Disk {
    Disk {
        center: [x, y],
        radius: r,
    }
}

fn run_exterior(method: Method, disks: Vec<Disk>) -> ExteriorRun {
    let e = catalog::minkowski_cylinder(1.0);
    let field = TimeSeparationField::from_entry(&e, method, Numerics::default());
    let x = v(&[0.0, -0.95, 0.1]);
    let dir = v(&[1.0, 1.0, 0.0]);
    exterior_lightlike_traveltime(&field, &DiskObstacle::new(disks), &x, &dir, &ExteriorParams::default()).unwrap()
}

fn check_straight(run: &ExteriorRun, crossings: &[(f64, f64)]) {
    let exit = 0.99f64.sqrt();
    assert!(run.left_domain);
    assert!((run.total_parameter - (exit + 0.95)).abs() < 1e-5, "{run:?}");
    assert!((run.final_x[1] - exit).abs() < 1e-5);
    assert_eq!(run.steps.len(), crossings.len());
    for (s, (_, out)) in run.steps.iter().zip(crossings) {
        let expected = [out + 0.95, *out, 0.1];
        for k in 0..3 {
            assert!((s.exit_x[k] - expected[k]).abs() < 1e-5, "{s:?}");
            assert!((s.exit_v[k] - [1.0, 1.0, 0.0][k]).abs() < 1e-5, "{s:?}");
        }
        assert!((s.exit_t - (out + 0.95)).abs() < 1e-5);
    }
}

#[test]
fn exterior_loop_single_disk() {
    let r = run_exterior(Method::Shooting, vec![disk(0.0, 0.0, 0.5)]);
    let h = 0.24f64.sqrt();
    check_straight(&r, &[(-h, h)]);
}

#[test]
fn exterior_loop_missing_disk() {
    let r = run_exterior(Method::Shooting, vec![disk(0.0, -0.5, 0.3)]);
    check_straight(&r, &[]);
}

#[test]
fn exterior_loop_two_disks() {
    let r = run_exterior(Method::Shooting, vec![disk(-0.45, 0.0, 0.2), disk(0.4, 0.05, 0.25)]);
    let a = 0.03f64.sqrt();
    let b = 0.06f64.sqrt();
    check_straight(&r, &[(-0.45 - a, -0.45 + a), (0.4 - b, 0.4 + b)]);
}

#[test]
fn lightcone_examples_on_coarse_grid() {
    let field = TimeSeparationField::from_entry(&catalog::minkowski_cylinder(1.0), Method::Chain, Numerics::default());
    let ext = TimeSeparationField::from_entry(&catalog::minkowski_cylinder(1.1), Method::Chain, Numerics::default());
    let grid = BoundaryGrid::uniform(0.1, 40, 40);
    let x = v(&[0.0, 1.0, 0.0]);
    let id = boundary_lightcone_id(&field, &ext, &x, &grid, cylinder_embedding(1.0), 1e-5).unwrap();
    let at = |t: f64, th: f64| {
        let (i, j) = grid.index_of(t, th).unwrap();
        id.is_marked(i, j)
    };
    let pi = std::f64::consts::PI;
    assert!(at(2.0, pi));
    assert!(!at(3.0, pi));
    assert!(!at(1.0, pi));
}

mod isometry {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cylinder_side() -> Side {
        let e = catalog::minkowski_cylinder(1.0);
        Side {
            metric: e.metric,
            domain: e.domain,
        }
    }

    fn interior_samples(n: usize, seed: u64) -> Vec<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let r = 0.8 * rng.gen::<f64>().sqrt();
                let a = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
                v(&[rng.gen_range(0.0..1.0), r * a.cos(), r * a.sin()])
            })
            .collect()
    }

    fn moved() -> (Side, Side, ChartMap) {
        let m1 = cylinder_side();
        let f = ChartMap::rigid_motion(1.0, std::f64::consts::FRAC_PI_6);
        let m2 = Side {
            metric: pushforward_metric(&m1.metric, &f),
            domain: pushforward_domain(&m1.domain, &f),
        };
        (m1, m2, f)
    }

    #[test]
    fn identity_data_give_identity() {
        let m = cylinder_side();
        let num = Numerics::default();
        let samples = interior_samples(50, 7);
        let c = construct_isometry(&m, &m, &ChartMap::identity(), &samples, &IsometryParams::default(), &num).unwrap();
        for s in &c.samples {
            for k in 0..3 {
                assert!((s.phi_x[k] - s.x[k]).abs() < 1e-8, "{s:?}");
            }
        }
        let check = verify_isometry(&c, &m, &m, &ChartMap::identity(), &IsometryParams::default(), &num).unwrap();
        assert!(check.max_error < 1e-6, "{check:?}");
    }

    #[test]
    fn rigid_motion_is_recovered() {
        let (m1, m2, f) = moved();
        let num = Numerics::default();
        let p = IsometryParams::default();
        let samples = interior_samples(50, 11);
        let c = construct_isometry(&m1, &m2, &f, &samples, &p, &num).unwrap();
        for s in &c.samples {
            let expected = f.apply(&DVector::from_column_slice(&s.x));
            assert!((DVector::from_column_slice(&s.phi_x) - expected).norm() < 1e-4);
        }
        assert!(c.max_discrepancy < 1e-6, "{}", c.max_discrepancy);
        let check = verify_isometry(&c, &m1, &m2, &f, &p, &num).unwrap();
        assert!(check.max_error < 1e-3);

        let mut bad = c.clone();
        bad.samples[3].phi_x[1] += 0.05;
        let check = verify_isometry(&bad, &m1, &m2, &f, &p, &num).unwrap();
        assert!(check.max_error > 1e-2);
        assert_eq!(check.worst_sample, 3);
    }
}

#[test]
fn eikonal_on_cylinder_normal_chart() {
    // Samples stay within |θ| < π of the target, so the principal lift suffices.
    let mut e = catalog::minkowski_cylinder_normal(1.0);
    e.metric = e.metric.without_periods();
    let field = TimeSeparationField::from_entry(&e, Method::Shooting, Numerics::default());
    let exit = v(&[3.0, 0.0, 0.0]);
    let mut pts = Vec::new();
    for t in [0.0, 0.5, 1.0] {
        for th in [-0.6, 0.0, 0.6] {
            for n in [0.2, 0.5, 0.8] {
                pts.push(v(&[t, th, n]));
            }
        }
    }
    let r = eikonal_residuals(&field, &exit, &pts, 1e-4).unwrap();
    let worst = r.iter().map(|s| s.residual.abs()).fold(0.0, f64::max);
    assert!(worst < 1e-4, "worst eikonal residual {worst:e}");
}

mod invariants {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn annulus_point(r: f64, a: f64, t: f64) -> DVector<f64> {
        v(&[t, r * a.cos(), r * a.sin()])
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        /// Removing the hole can only lengthen causal curves, so the annulus
        /// separation is bounded by the flat one.
        #[test]
        fn annulus_separation_is_below_flat(
            r1 in 0.55f64..0.95, a1 in -PI..PI,
            r2 in 0.55f64..0.95, a2 in -PI..PI,
            t in 0.5f64..3.0,
        ) {
            let field = TimeSeparationField::from_entry(&catalog::minkowski_annulus(0.5, 1.0), Method::Chain, Numerics::default());
            let x = annulus_point(r1, a1, 0.0);
            let y = annulus_point(r2, a2, t);
            let d = field.d(&x, &y).unwrap();
            let flat = minkowski_separation(&x, &y);
            prop_assert!(d >= 0.0);
            prop_assert!(d <= flat + 1e-9, "{d} > {flat}");
            if flat == 0.0 {
                prop_assert_eq!(d, 0.0);
            }
        }

        #[test]
        fn separation_vanishes_towards_the_past(
            r1 in 0.55f64..0.95, a1 in -PI..PI,
            r2 in 0.55f64..0.95, a2 in -PI..PI,
            t in 0.1f64..2.0,
        ) {
            let field = TimeSeparationField::from_entry(&catalog::minkowski_annulus(0.5, 1.0), Method::Chain, Numerics::default());
            let d = field.d(&annulus_point(r1, a1, t), &annulus_point(r2, a2, 0.0)).unwrap();
            prop_assert_eq!(d, 0.0);
        }
    }
}
