//! Rejection sampling of nearby directions whose geodesics meet the boundary
//! only transversally.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::trace::{trace_with, EventKind, StopRule};
use crate::error::{Error, Result};
use crate::metric::{CausalClass, ChartMetric, DomainSpec, Signature, TangentVec};
use crate::numerics::Numerics;

#[derive(Debug, Clone)]
pub struct Perturbation {
    pub accepted: TangentVec,
    /// Number of draws including the accepted one.
    pub draws: usize,
}

/// Uniform sample from the unit ball in `ℝ^n`.
pub fn uniform_ball(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    loop {
        let g = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = g.norm();
        if norm > 0.0 {
            let r: f64 = rng.gen::<f64>().powf(1.0 / n as f64);
            return g * (r / norm);
        }
    }
}

/// Re-solves the time component of `w` so that `g(w, w) = 0`, keeping the
/// sign of the time component of `reference`.
pub fn project_to_null(metric: &ChartMetric, x: &DVector<f64>, w: &DVector<f64>, reference: &DVector<f64>) -> Option<DVector<f64>> {
    let g = metric.g(x);
    let n = w.len();
    let a = g[(0, 0)];
    let mut b = 0.0;
    let mut c = 0.0;
    for i in 1..n {
        b += 2.0 * g[(0, i)] * w[i];
        for j in 1..n {
            c += g[(i, j)] * w[i] * w[j];
        }
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 || a == 0.0 {
        return None;
    }
    let r1 = (-b + disc.sqrt()) / (2.0 * a);
    let r2 = (-b - disc.sqrt()) / (2.0 * a);
    let target = reference[0];
    let pick = if (r1 - target).abs() < (r2 - target).abs() { r1 } else { r2 };
    if pick.signum() != target.signum() && target != 0.0 {
        return None;
    }
    let mut out = w.clone();
    out[0] = pick;
    Some(out)
}

/// One cone draw about `v`, with the causal class preserved.
pub fn draw_in_cone(
    metric: &ChartMetric,
    x: &DVector<f64>,
    v: &DVector<f64>,
    cone_radius: f64,
    rng: &mut impl Rng,
) -> Option<DVector<f64>> {
    let u = uniform_ball(rng, v.len());
    let w = v + u * (cone_radius * v.norm());
    if metric.signature() != Signature::Lorentzian {
        return Some(w);
    }
    let class = metric.causal_class(x, v).ok()?;
    match class {
        CausalClass::Lightlike => project_to_null(metric, x, &w, v),
        CausalClass::Zero => None,
        c => (metric.causal_class(x, &w).ok()? == c).then_some(w),
    }
}

/// Whether the geodesic from `(x, w)` meets `∂M` only transversally until it
/// leaves `M` (or `t_max`). Boundary starts must point strictly inward.
pub fn is_transversal(
    metric: &ChartMetric,
    domain: &DomainSpec,
    x: &DVector<f64>,
    w: &DVector<f64>,
    numerics: &Numerics,
) -> Result<bool> {
    if domain.phi(x).abs() < 10.0 * numerics.event_tol
        && domain.transversality(x, w) <= numerics.tangent_threshold
    {
        return Ok(false);
    }
    let trace = trace_with(metric, domain, x, w, numerics.t_max, numerics, StopRule::LeaveDomain)?;
    Ok(trace.events.iter().all(|e| e.kind != EventKind::Tangential))
}

pub fn sample_transversal_perturbation(
    metric: &ChartMetric,
    domain: &DomainSpec,
    x: &DVector<f64>,
    v: &DVector<f64>,
    cone_radius: f64,
    seed: u64,
    numerics: &Numerics,
) -> Result<Perturbation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for draw in 1..=numerics.max_rejections {
        let Some(w) = draw_in_cone(metric, x, v, cone_radius, &mut rng) else {
            continue;
        };
        match is_transversal(metric, domain, x, &w, numerics) {
            Ok(true) => {
                return Ok(Perturbation {
                    accepted: TangentVec::new(metric, x.clone(), w),
                    draws: draw,
                })
            }
            Ok(false) | Err(Error::BoundaryRun { .. }) | Err(Error::EventOverflow { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Err(Error::SamplingFailure {
        draws: numerics.max_rejections,
    })
}
