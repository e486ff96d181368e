//! Lightlike interior travel times from timelike interior scattering data.
//!
//! The family `w(λ) = a(e0 + (1 − λ/a²)e1)` at the exit of a lightlike
//! geodesic has `h(λ) = −2λ + λ²/a²`, so `h(0) = 0` and `h'(0) = −2`. With the
//! exit point fixed the first-variation identity reduces to
//! `τ^in = g(x'(0), v)`, where `x(λ)` is the entry point of the member that
//! leaves through `(y, w(λ))`.

use nalgebra::DVector;

use super::family::forward5_vec;
use super::family::{forward5, unwrap_points};
use crate::error::{Error, Result};
use crate::metric::{frame_at, CausalClass, ChartMetric, DomainSpec, TangentVec};
use crate::scattering::{LensTable, Provenance, ScatteringKind, ScatteringSample};

/// Null vector `v = a(e0 + e1)` split against the future timelike boundary
/// tangent `e0`; `e1` is a unit spacelike vector orthogonal to `e0`.
#[derive(Debug, Clone, PartialEq)]
pub struct NullSplit {
    pub e0: DVector<f64>,
    pub e1: DVector<f64>,
    pub a: f64,
}

impl NullSplit {
    /// `a(e0 + (1 − λ/a²)e1)`: timelike for `0 < λ < 2a²`.
    pub fn direction(&self, lambda: f64) -> DVector<f64> {
        (&self.e0 + &self.e1 * (1.0 - lambda / (self.a * self.a))) * self.a
    }

    /// `g(w(λ), w(λ))` in closed form.
    pub fn h(&self, lambda: f64) -> f64 {
        -2.0 * lambda + lambda * lambda / (self.a * self.a)
    }
}

pub fn null_split(metric: &ChartMetric, domain: &DomainSpec, x: &DVector<f64>, v: &DVector<f64>) -> Result<NullSplit> {
    if metric.causal_class(x, v)? != CausalClass::Lightlike {
        return Err(Error::Precondition("direction is not lightlike".into()));
    }
    let frame = frame_at(metric, domain, x)?;
    let e0 = frame.tangent_basis[0].clone();
    let a = -metric.inner(x, v, &e0);
    if !(a > 0.0) {
        return Err(Error::Precondition("direction is not future pointing".into()));
    }
    let e1 = v / a - &e0;
    Ok(NullSplit { e0, e1, a })
}

/// Parameters `λ_k = kΔ`, `k = 0..4`, with `Δ = rel_step·a²`.
pub fn family_lambdas(split: &NullSplit, rel_step: f64) -> [f64; 5] {
    std::array::from_fn(|k| k as f64 * rel_step * split.a * split.a)
}

/// Inbound states `(y, −w(λ_k))`, `k = 1..4`, whose interior scattering the
/// recovery needs; useful for assembling a pure-data table.
pub fn required_states(
    metric: &ChartMetric,
    domain: &DomainSpec,
    exit: &TangentVec,
    rel_step: f64,
) -> Result<Vec<(DVector<f64>, DVector<f64>)>> {
    let split = null_split(metric, domain, &exit.base, &exit.vec)?;
    Ok(family_lambdas(&split, rel_step)[1..]
        .iter()
        .map(|&l| (exit.base.clone(), -split.direction(l)))
        .collect())
}

#[derive(Debug, Clone)]
pub struct LightlikeRecovery {
    pub sample: ScatteringSample,
    pub lambdas: [f64; 5],
    /// Entry points `x(λ_k)`.
    pub entries: Vec<DVector<f64>>,
    pub h0: f64,
    pub h_prime: f64,
}

/// Default relative family step `Δ/a²`.
pub const FAMILY_STEP: f64 = 1e-3;

/// Recovers `τ^in(x, v)` for an inward lightlike `(x, v)` from interior
/// scattering data on nearby timelike directions. Only the boundary values
/// of `metric` are used.
pub fn recover_lightlike_tau_interior(
    table: &LensTable,
    metric: &ChartMetric,
    domain: &DomainSpec,
    x: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<LightlikeRecovery> {
    if table.kind() != ScatteringKind::Interior {
        return Err(Error::Precondition("an interior table is required".into()));
    }
    if metric.causal_class(x, v)? != CausalClass::Lightlike {
        return Err(Error::Precondition("target direction is not lightlike".into()));
    }
    let direct = table.query(x, v)?;
    let exit = direct.outbound.clone();
    let split = null_split(metric, domain, &exit.base, &exit.vec)?;
    let lambdas = family_lambdas(&split, FAMILY_STEP);
    let delta = lambdas[1];

    let mut entries = vec![x.clone()];
    for &l in &lambdas[1..] {
        let w = split.direction(l);
        let entry = match table.inverse(&exit.base, &w) {
            Some(s) => s.inbound.base.clone(),
            None => table.query(&exit.base, &(-&w))?.outbound.base,
        };
        entries.push(entry);
    }
    let entries = unwrap_points(metric, &entries, x);
    let spread = entries.iter().map(|e| (e - x).norm()).fold(0.0, f64::max);
    if !(spread < 0.1 * (1.0 + x.norm())) {
        return Err(Error::Recovery(format!("family entries spread by {spread:e}; not invertible near 0")));
    }
    let x_prime = forward5_vec(&entries, delta);
    let tau = metric.inner(x, &x_prime, v);
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::Recovery(format!("non-positive travel time {tau}")));
    }
    let hs: [f64; 5] = std::array::from_fn(|k| split.h(lambdas[k]));
    let mut sample = ScatteringSample::new(
        metric,
        TangentVec::new(metric, x.clone(), v.clone()),
        exit,
        tau,
        ScatteringKind::Interior,
        1,
    );
    sample.provenance = Provenance::FromVariation;
    Ok(LightlikeRecovery {
        sample,
        lambdas,
        entries,
        h0: hs[0],
        h_prime: forward5(&hs, delta),
    })
}
