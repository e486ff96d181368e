//! Cut-locus probing along a causal geodesic.
//!
//! `ρ(x, v)` is the first parameter at which the geodesic stops maximizing:
//! for null starts the first `s` with `d(x, γ(s)) > 0`, for timelike starts
//! the first `s` with `d(x, γ(s))` above the geodesic's own proper time.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::timesep::TimeSeparationField;
use crate::error::{Error, Result};
use crate::geodesic::shoot::golden_min;
use crate::geodesic::{exp_map, first_conjugate_time, flow, trace_with, StopRule};
use crate::metric::{CausalClass, ChartMetric};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutWitness {
    ConjugatePoint,
    SecondGeodesic,
    /// The separation predicate switched but neither witness was confirmed.
    Unwitnessed,
    NoneWithinBudget,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CutBudget {
    /// Largest affine parameter examined.
    pub s_max: f64,
    pub scan_points: usize,
    /// Threshold on `d` that counts as positive.
    pub d_tol: f64,
    /// Absolute width at which bisection stops.
    pub s_tol: f64,
    /// Endpoint residual below which a second geodesic is accepted.
    pub second_tol: f64,
}

impl Default for CutBudget {
    fn default() -> Self {
        Self {
            s_max: 2.0 * std::f64::consts::PI,
            scan_points: 32,
            d_tol: 1e-4,
            s_tol: 1e-6,
            second_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondGeodesic {
    pub s: f64,
    pub direction: Vec<f64>,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutLocusProbe {
    pub base: Vec<f64>,
    pub direction: Vec<f64>,
    /// `None` when no cut point lies within the budget.
    pub rho: Option<f64>,
    pub witness: CutWitness,
    /// Parameter at which the separation predicate first holds.
    pub separation_rho: Option<f64>,
    pub conjugate_time: Option<f64>,
    pub second_geodesic: Option<SecondGeodesic>,
}

/// An orthonormal frame at `x`: `e0 = ∂_0/|∂_0|`, then Gram–Schmidt on the
/// remaining coordinate vectors with respect to `g`.
pub fn orthonormal_frame(metric: &ChartMetric, x: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
    let g = metric.eval(x)?.g;
    let n = metric.dim();
    let mut frame: Vec<DVector<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        for f in &frame {
            let s = gram(&g, f, f);
            e -= f * (gram(&g, &e, f) / s);
        }
        let s = gram(&g, &e, &e);
        if s.abs() < 1e-14 {
            return Err(Error::Degenerate {
                point: x.iter().copied().collect(),
            });
        }
        frame.push(e / s.abs().sqrt());
    }
    Ok(frame)
}

fn gram(g: &DMatrix<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.dot(&(g * b))
}

/// Probes `ρ(x, v)` by bisection of the separation predicate and
/// cross-checks against conjugate points and second geodesics.
pub fn cut_locus_probe(
    field: &TimeSeparationField,
    x: &DVector<f64>,
    v: &DVector<f64>,
    budget: &CutBudget,
) -> Result<CutLocusProbe> {
    let metric = &field.metric;
    let num = &field.numerics;
    let class = metric.causal_class(x, v)?;
    let speed = match class {
        CausalClass::Lightlike => 0.0,
        CausalClass::Timelike => (-metric.norm_sq(x, v)).sqrt(),
        _ => return Err(Error::Precondition("start must be lightlike or timelike".into())),
    };
    if !metric.is_future(x, v) {
        return Err(Error::Precondition("start must be future pointing".into()));
    }
    let s_max = match &field.domain {
        Some(dom) => {
            let tr = trace_with(metric, dom, x, v, budget.s_max, num, StopRule::LeaveDomain)?;
            tr.events
                .iter()
                .find(|e| e.leaves())
                .map_or(budget.s_max, |e| e.t.min(budget.s_max))
        }
        None => budget.s_max,
    };

    let point = |s: f64| flow(metric, x, v, s, num).map(|(p, _)| p);
    let beyond = |s: f64| -> Result<bool> {
        let y = point(s)?;
        Ok(field.d(x, &y)? > s * speed + budget.d_tol)
    };

    let mut separation_rho = None;
    let mut lo = 0.0;
    for i in 1..=budget.scan_points {
        let s = s_max * i as f64 / budget.scan_points as f64;
        // A point outside the chart ends the scan, as the budget does.
        let Ok(hit) = beyond(s) else { break };
        if hit {
            let mut hi = s;
            while hi - lo > budget.s_tol {
                let mid = 0.5 * (lo + hi);
                if beyond(mid)? {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            separation_rho = Some(hi);
            break;
        }
        lo = s;
    }

    let conjugate_time = first_conjugate_time(metric, x, v, s_max, num)?;
    let rho = match (separation_rho, conjugate_time) {
        (Some(a), Some(c)) => Some(a.min(c)),
        (a, c) => a.or(c),
    };
    let second_geodesic = match rho {
        Some(s) => second_geodesic(metric, x, v, &point(s)?, s, num, budget.second_tol)?,
        None => None,
    };
    let witness = match rho {
        None => CutWitness::NoneWithinBudget,
        Some(r) => {
            if conjugate_time.is_some_and(|c| (c - r).abs() <= 1e-3 * (1.0 + r)) {
                CutWitness::ConjugatePoint
            } else if second_geodesic.is_some() {
                CutWitness::SecondGeodesic
            } else {
                CutWitness::Unwitnessed
            }
        }
    };
    Ok(CutLocusProbe {
        base: x.iter().copied().collect(),
        direction: v.iter().copied().collect(),
        rho,
        witness,
        separation_rho,
        conjugate_time,
        second_geodesic,
    })
}

/// Searches for a geodesic from `x` with a different direction of the same
/// causal character that reaches `target` at parameter `s`. The spatial part
/// of `v` is rotated in an orthonormal frame.
fn second_geodesic(
    metric: &ChartMetric,
    x: &DVector<f64>,
    v: &DVector<f64>,
    target: &DVector<f64>,
    s: f64,
    num: &crate::numerics::Numerics,
    tol: f64,
) -> Result<Option<SecondGeodesic>> {
    let frame = orthonormal_frame(metric, x)?;
    let g = metric.eval(x)?.g;
    let n = metric.dim();
    // Frame components: e0 has norm −1, the spatial vectors +1.
    let comp: Vec<f64> = frame
        .iter()
        .enumerate()
        .map(|(i, e)| if i == 0 { -gram(&g, v, e) } else { gram(&g, v, e) })
        .collect();
    let spatial = DVector::from_column_slice(&comp[1..]);
    let r = spatial.norm();
    if r == 0.0 {
        return Ok(None);
    }
    let along = &spatial / r;
    let lifts = metric.lifts(target);
    let mut best: Option<SecondGeodesic> = None;
    for k in 0..n - 1 {
        let mut perp = DVector::zeros(n - 1);
        perp[k] = 1.0;
        perp -= &along * perp.dot(&along);
        if perp.norm() < 1e-8 {
            continue;
        }
        let perp = perp.normalize();
        let direction = |alpha: f64| {
            let sp = (&along * alpha.cos() + &perp * alpha.sin()) * r;
            let mut w = &frame[0] * comp[0];
            for (i, c) in sp.iter().enumerate() {
                w += &frame[i + 1] * *c;
            }
            w
        };
        let residual = |alpha: f64| -> f64 {
            match exp_map(metric, x, &(direction(alpha) * s), num) {
                Ok(p) => lifts.iter().map(|l| (&p - l).norm()).fold(f64::INFINITY, f64::min),
                Err(_) => f64::INFINITY,
            }
        };
        const SCAN: usize = 36;
        const EXCLUDE: f64 = 0.2;
        let grid: Vec<f64> = (0..SCAN)
            .map(|i| EXCLUDE + (2.0 * std::f64::consts::PI - 2.0 * EXCLUDE) * i as f64 / (SCAN - 1) as f64)
            .collect();
        let values: Vec<f64> = grid.iter().map(|a| residual(*a)).collect();
        let (imin, _) = values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, r)| if *r < acc.1 { (i, *r) } else { acc });
        let step = grid[1] - grid[0];
        let (alpha, res) = golden_min(
            residual,
            (grid[imin] - step).max(EXCLUDE),
            (grid[imin] + step).min(2.0 * std::f64::consts::PI - EXCLUDE),
        );
        let res = res.min(values[imin]);
        if res < tol * (1.0 + target.norm()) && best.as_ref().is_none_or(|b| res < b.residual) {
            best = Some(SecondGeodesic {
                s,
                direction: direction(alpha).iter().copied().collect(),
                residual: res,
            });
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::catalog;
    use crate::numerics::Numerics;
    use crate::rigidity::Method;

    fn v(c: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(c)
    }

    #[test]
    fn frame_is_orthonormal() {
        let e = catalog::product_conformal(0.4, 0.3, [0.0, 0.0], 1.0);
        let x = v(&[0.0, 0.1, 0.2]);
        let f = orthonormal_frame(&e.metric, &x).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i != j { 0.0 } else if i == 0 { -1.0 } else { 1.0 };
                assert!((e.metric.inner(&x, &f[i], &f[j]) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn flat_space_has_no_cut_point() {
        let e = catalog::minkowski(3);
        let field = TimeSeparationField::from_entry(&e, Method::Chain, Numerics::default());
        let budget = CutBudget {
            s_max: 4.0,
            scan_points: 8,
            ..CutBudget::default()
        };
        let p = cut_locus_probe(&field, &v(&[0.0, 0.0, 0.0]), &v(&[1.0, 0.6, 0.8]), &budget).unwrap();
        assert_eq!(p.witness, CutWitness::NoneWithinBudget);
        assert!(p.rho.is_none());
    }
}
