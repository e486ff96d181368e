//! One-parameter families of geodesics and the first-variation identity for
//! their travel times.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::geodesic::{trace_with, StopRule};
use crate::metric::{ChartMetric, DomainSpec, TangentVec};
use crate::numerics::Numerics;

/// Offsets of the symmetric five-point stencil in units of the spacing.
pub const STENCIL: [f64; 5] = [-2.0, -1.0, 0.0, 1.0, 2.0];

/// Fourth-order central derivative from samples at `λ0 + kΔ`, `k = −2..2`.
pub fn central5(f: &[f64; 5], delta: f64) -> f64 {
    (f[0] - 8.0 * f[1] + 8.0 * f[3] - f[4]) / (12.0 * delta)
}

/// Fourth-order one-sided derivative from samples at `λ0 + kΔ`, `k = 0..4`.
pub fn forward5(f: &[f64; 5], delta: f64) -> f64 {
    (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) / (12.0 * delta)
}

fn vector_stencil(vs: &[DVector<f64>], delta: f64, rule: fn(&[f64; 5], f64) -> f64) -> DVector<f64> {
    let n = vs[0].len();
    DVector::from_fn(n, |i, _| {
        let f = [vs[0][i], vs[1][i], vs[2][i], vs[3][i], vs[4][i]];
        rule(&f, delta)
    })
}

pub fn central5_vec(vs: &[DVector<f64>], delta: f64) -> DVector<f64> {
    vector_stencil(vs, delta, central5)
}

pub fn forward5_vec(vs: &[DVector<f64>], delta: f64) -> DVector<f64> {
    vector_stencil(vs, delta, forward5)
}

/// Moves each point onto the periodic lift closest to `reference`, so that
/// finite differences do not jump across a period.
pub fn unwrap_points(metric: &ChartMetric, points: &[DVector<f64>], reference: &DVector<f64>) -> Vec<DVector<f64>> {
    points
        .iter()
        .map(|p| {
            let mut best = p.clone();
            let mut best_d = (p - reference).norm();
            for l in metric.lifts(p) {
                let d = (&l - reference).norm();
                if d < best_d {
                    best_d = d;
                    best = l;
                }
            }
            best
        })
        .collect()
}

/// A family `λ ↦ (x(λ), v(λ))` sampled on five equally spaced parameters,
/// together with the first boundary event of each member.
#[derive(Debug, Clone)]
pub struct VariationFamily {
    pub lambdas: Vec<f64>,
    pub starts: Vec<TangentVec>,
    pub h: Vec<f64>,
    pub taus: Vec<f64>,
    /// `(y(λ), γ̇(τ_λ))`.
    pub ends: Vec<TangentVec>,
    pub end_transversality: Vec<f64>,
    pub spacing: f64,
}

impl VariationFamily {
    /// Traces every member of `start` on the symmetric stencil about `lambda0`
    /// up to its first boundary event.
    pub fn trace<F>(
        metric: &ChartMetric,
        domain: &DomainSpec,
        start: F,
        lambda0: f64,
        spacing: f64,
        numerics: &Numerics,
    ) -> Result<Self>
    where
        F: Fn(f64) -> (DVector<f64>, DVector<f64>),
    {
        if !(spacing > 0.0) {
            return Err(Error::InvalidParameter("family spacing must be positive".into()));
        }
        let mut fam = VariationFamily {
            lambdas: Vec::with_capacity(5),
            starts: Vec::with_capacity(5),
            h: Vec::with_capacity(5),
            taus: Vec::with_capacity(5),
            ends: Vec::with_capacity(5),
            end_transversality: Vec::with_capacity(5),
            spacing,
        };
        for k in STENCIL {
            let lambda = lambda0 + k * spacing;
            let (x, v) = start(lambda);
            let trace = trace_with(metric, domain, &x, &v, numerics.t_max, numerics, StopRule::FirstEvent)?;
            let e = trace.events.first().ok_or(Error::NonTerminating { t_max: numerics.t_max })?;
            fam.lambdas.push(lambda);
            fam.h.push(metric.norm_sq(&x, &v));
            fam.taus.push(e.t);
            fam.end_transversality.push(e.transversality);
            fam.ends.push(TangentVec::new(metric, e.x(), e.v()));
            fam.starts.push(TangentVec::new(metric, x, v));
        }
        Ok(fam)
    }

    fn center(&self) -> usize {
        2
    }
}

/// Both sides of `2hτ' + h'τ = 2g(y', γ̇(τ)) − 2g(x', γ̇(0))` at the family
/// center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariationResidual {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    /// Largest magnitude among the four terms.
    pub scale: f64,
    pub tau: f64,
    pub tau_prime: f64,
    pub h: f64,
    pub h_prime: f64,
}

/// Evaluates the first-variation identity at the center of the stencil.
pub fn variation_residual(metric: &ChartMetric, fam: &VariationFamily, numerics: &Numerics) -> Result<VariationResidual> {
    if fam.lambdas.len() != 5 {
        return Err(Error::Precondition("family must hold a five-point stencil".into()));
    }
    let c = fam.center();
    if fam.end_transversality[c].abs() <= numerics.tangent_threshold {
        return Err(Error::UndefinedDerivative);
    }
    let d = fam.spacing;
    let tau = fam.taus[c];
    let h = fam.h[c];
    let taus = [fam.taus[0], fam.taus[1], fam.taus[2], fam.taus[3], fam.taus[4]];
    let hs = [fam.h[0], fam.h[1], fam.h[2], fam.h[3], fam.h[4]];
    let tau_prime = central5(&taus, d);
    let h_prime = central5(&hs, d);
    let ys: Vec<DVector<f64>> = fam.ends.iter().map(|e| e.base.clone()).collect();
    let xs: Vec<DVector<f64>> = fam.starts.iter().map(|s| s.base.clone()).collect();
    let y_prime = central5_vec(&unwrap_points(metric, &ys, &ys[c]), d);
    let x_prime = central5_vec(&unwrap_points(metric, &xs, &xs[c]), d);
    let end = &fam.ends[c];
    let start = &fam.starts[c];
    let t1 = 2.0 * h * tau_prime;
    let t2 = h_prime * tau;
    let t3 = 2.0 * metric.inner(&end.base, &y_prime, &end.vec);
    let t4 = 2.0 * metric.inner(&start.base, &x_prime, &start.vec);
    let lhs = t1 + t2;
    let rhs = t3 - t4;
    Ok(VariationResidual {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
        scale: [t1, t2, t3, t4].iter().fold(0.0f64, |m, t| m.max(t.abs())),
        tau,
        tau_prime,
        h,
        h_prime,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stencils_are_exact_on_quartics() {
        let p = |x: f64| 1.0 + 2.0 * x - x * x + 0.5 * x.powi(3) + 0.25 * x.powi(4);
        let dp = |x: f64| 2.0 - 2.0 * x + 1.5 * x * x + x.powi(3);
        let d = 0.1;
        let c: [f64; 5] = std::array::from_fn(|i| p(0.3 + STENCIL[i] * d));
        assert!((central5(&c, d) - dp(0.3)).abs() < 1e-12);
        let f: [f64; 5] = std::array::from_fn(|i| p(0.3 + i as f64 * d));
        assert!((forward5(&f, d) - dp(0.3)).abs() < 1e-11);
    }
}
