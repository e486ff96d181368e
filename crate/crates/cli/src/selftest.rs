//! Quick consistency checks that need no scenario: exact symbolic
//! identities plus a few cheap numerical invariants on flat catalogs.

use nalgebra::DVector;
use rigidity_core::jet::{
    assembled_coefficient, expansion_closed_form, expansion_recurrence, jet_coefficient_symbolic, series_closed_form,
    series_sum,
};
use rigidity_core::metric::catalog;
use rigidity_core::rigidity::{minkowski_separation, Method, TimeSeparationField};
use rigidity_core::scattering::interior_scattering;
use rigidity_core::Numerics;
use serde_json::json;

use crate::report::{Failure, Outcome};

struct Check {
    name: &'static str,
    passed: usize,
    total: usize,
    failures: Vec<Failure>,
}

impl Check {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            passed: 0,
            total: 0,
            failures: Vec::new(),
        }
    }

    fn record(&mut self, ok: bool, input: serde_json::Value, detail: impl Into<String>) {
        self.total += 1;
        if ok {
            self.passed += 1;
        } else {
            self.failures.push(Failure {
                input,
                error: format!("{}: {}", self.name, detail.into()),
            });
        }
    }
}

fn series() -> Check {
    let mut c = Check::new("series_sum");
    for m in 1..=12u32 {
        match series_sum(m) {
            Ok(s) => {
                let expect = series_closed_form(m);
                c.record(s == expect, json!({"m": m}), format!("{s} != {expect}"));
            }
            Err(e) => c.record(false, json!({"m": m}), e.to_string()),
        }
    }
    c
}

fn recurrence() -> Check {
    let mut c = Check::new("expansion_recurrence");
    for l in 0..=10u32 {
        c.record(
            expansion_recurrence(l) == expansion_closed_form(l),
            json!({"l": l}),
            "recurrence and closed form differ",
        );
    }
    c
}

fn jet_coefficients() -> Check {
    let mut c = Check::new("jet_coefficient");
    for m in 1..=8u32 {
        match assembled_coefficient(m) {
            Ok(a) => c.record(a == jet_coefficient_symbolic(m), json!({"m": m}), format!("assembled {a}")),
            Err(e) => c.record(false, json!({"m": m}), e.to_string()),
        }
    }
    c
}

/// Straight chords across the unit slab: exit time `1/v_y` and the reversed
/// chord lands back on the start.
fn slab_reversibility(num: &Numerics) -> Check {
    let mut c = Check::new("slab_reversibility");
    let e = catalog::minkowski_slab(1.0, 3);
    for &(vx, vy) in &[(0.0, 0.5), (0.3, 0.5), (-0.6, 0.7), (0.2, 0.95)] {
        let x = DVector::from_vec(vec![0.0, 0.1, 0.0]);
        let v = DVector::from_vec(vec![1.0, vx, vy]);
        let input = json!({"x": x.as_slice(), "v": v.as_slice()});
        let fwd = match interior_scattering(&e.metric, &e.domain, &x, &v, num) {
            Ok(s) => s,
            Err(err) => {
                c.record(false, input, err.to_string());
                continue;
            }
        };
        let tau_err = (fwd.tau - 1.0 / vy).abs();
        let back = interior_scattering(&e.metric, &e.domain, &fwd.outbound.base, &(-&fwd.outbound.vec), num);
        match back {
            Ok(b) => {
                let gap = (&b.outbound.base - &x).norm() + (&b.outbound.vec + &v).norm();
                let ok = tau_err < 1e-8 && gap < 1e-8 && (b.tau - fwd.tau).abs() < 1e-8;
                c.record(ok, input, format!("tau error {tau_err:e}, return gap {gap:e}"));
            }
            Err(err) => c.record(false, input, err.to_string()),
        }
    }
    c
}

/// The chain separation on whole Minkowski space against the closed form.
fn minkowski_chain(num: &Numerics) -> Check {
    let mut c = Check::new("minkowski_chain");
    let e = catalog::minkowski(3);
    let field = TimeSeparationField::from_entry(&e, Method::Chain, *num);
    let x = DVector::from_vec(vec![0.0, 0.0, 0.0]);
    for y in [[2.0, 0.5, 0.3], [1.0, 0.0, 0.9], [3.0, -1.0, 1.5]] {
        let y = DVector::from_column_slice(&y);
        let input = json!({"x": x.as_slice(), "y": y.as_slice()});
        match field.d(&x, &y) {
            Ok(d) => {
                let expect = minkowski_separation(&x, &y);
                c.record((d - expect).abs() < 1e-6, input, format!("{d} vs {expect}"));
            }
            Err(err) => c.record(false, input, err.to_string()),
        }
    }
    c
}

pub fn run(num: &Numerics) -> Outcome {
    let checks = [
        series(),
        recurrence(),
        jet_coefficients(),
        slab_reversibility(num),
        minkowski_chain(num),
    ];
    let mut summary = serde_json::Map::new();
    for c in &checks {
        summary.insert(c.name.into(), json!({"passed": c.passed, "total": c.total}));
    }
    let mut out = Outcome::new(summary.into());
    out.passed = checks.iter().all(|c| c.passed == c.total);
    out.failures = checks.into_iter().flat_map(|c| c.failures).collect();
    out
}
