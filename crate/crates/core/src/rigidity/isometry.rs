//! Isometry candidates from matched lightlike scattering data.
//!
//! For an interior point `x` of `M₁`, a past-pointing null geodesic first
//! meets `∂M₁` at `y` after parameter `t`; with `w` the reversed velocity
//! there, `φ(x) = exp^{g₂}_{φ₀(y)}(t·(φ₀)_*w)`. Repeating with a second null
//! direction checks that the result does not depend on the choice.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::cut::orthonormal_frame;
use crate::error::{Error, Result};
use crate::geodesic::{flow, EventKind, StopRule, Tracer};
use crate::metric::{ChartMetric, DomainSpec};
use crate::numerics::Numerics;
use crate::scattering::relation::complete_scattering;

pub type PointMap = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// A diffeomorphism between charts with its inverse.
#[derive(Clone)]
pub struct ChartMap {
    pub forward: PointMap,
    pub inverse: PointMap,
    jacobian: Option<JacobianFn>,
}

impl std::fmt::Debug for ChartMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChartMap")
            .field("analytic_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

impl ChartMap {
    pub fn new(forward: PointMap, inverse: PointMap) -> Self {
        Self {
            forward,
            inverse,
            jacobian: None,
        }
    }

    pub fn with_jacobian(mut self, jacobian: JacobianFn) -> Self {
        self.jacobian = Some(jacobian);
        self
    }

    pub fn identity() -> Self {
        Self::new(Arc::new(|x| x.clone()), Arc::new(|x| x.clone()))
            .with_jacobian(Arc::new(|x| DMatrix::identity(x.len(), x.len())))
    }

    /// `(t, x, y) ↦ (t + dt, R(angle)(x, y))`.
    pub fn rigid_motion(dt: f64, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let rot = move |x: &DVector<f64>, sign: f64, shift: f64| {
            DVector::from_vec(vec![
                x[0] + shift,
                c * x[1] - sign * s * x[2],
                sign * s * x[1] + c * x[2],
            ])
        };
        let jac = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c]);
        Self::new(Arc::new(move |x| rot(x, 1.0, dt)), Arc::new(move |x| rot(x, -1.0, -dt)))
            .with_jacobian(Arc::new(move |_| jac.clone()))
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.forward)(x)
    }

    pub fn apply_inverse(&self, y: &DVector<f64>) -> DVector<f64> {
        (self.inverse)(y)
    }

    /// `DF(x)`, analytic when available, otherwise central differences.
    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        if let Some(j) = &self.jacobian {
            return j(x);
        }
        let n = x.len();
        let h0 = f64::EPSILON.cbrt();
        let mut j = DMatrix::zeros(n, n);
        for k in 0..n {
            let h = h0 * x[k].abs().max(1.0);
            let mut xp = x.clone();
            xp[k] += h;
            let mut xm = x.clone();
            xm[k] -= h;
            j.set_column(k, &((self.apply(&xp) - self.apply(&xm)) / (2.0 * h)));
        }
        j
    }

    /// `F_*v` at `x`.
    pub fn push_vector(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        self.jacobian(x) * v
    }
}

/// `g₂ = (F⁻¹)^* g₁`, i.e. `g₂(y) = J⁻ᵀ g₁(F⁻¹y) J⁻¹` with `J = DF(F⁻¹y)`.
pub fn pushforward_metric(metric: &ChartMetric, map: &ChartMap) -> ChartMetric {
    let m = metric.clone();
    let f = map.clone();
    let pushed = ChartMetric::new(
        metric.dim(),
        metric.signature(),
        Arc::new(move |y| {
            let x = f.apply_inverse(y);
            let jinv = f.jacobian(&x).try_inverse().unwrap_or_else(|| DMatrix::from_element(y.len(), y.len(), f64::NAN));
            jinv.transpose() * m.g(&x) * jinv
        }),
    );
    match &metric.catalog_id {
        Some(id) => pushed.with_id(format!("{id}_pushed")),
        None => pushed,
    }
}

/// `φ₂ = φ₁ ∘ F⁻¹` with gradient `J⁻ᵀ∇φ₁`.
pub fn pushforward_domain(domain: &DomainSpec, map: &ChartMap) -> DomainSpec {
    let (d1, f1) = (domain.clone(), map.clone());
    let (d2, f2) = (domain.clone(), map.clone());
    let dim = domain.bounds.lower.len();
    let mut out = DomainSpec::new(
        dim,
        Arc::new(move |y| d1.phi(&f1.apply_inverse(y))),
        Arc::new(move |y| {
            let x = f2.apply_inverse(y);
            let jinv = f2.jacobian(&x).try_inverse().unwrap_or_else(|| DMatrix::from_element(y.len(), y.len(), f64::NAN));
            jinv.transpose() * d2.dphi(&x)
        }),
    )
    .with_collar(domain.collar_width);
    out.timelike_boundary = domain.timelike_boundary;
    out.name = domain.name.as_ref().map(|n| format!("{n}_pushed"));
    out
}

/// A Lorentzian manifold with boundary given in one chart.
#[derive(Debug, Clone)]
pub struct Side {
    pub metric: ChartMetric,
    pub domain: DomainSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IsometryParams {
    /// Frame angles of the spatial part of the past null directions.
    pub angles: [f64; 2],
    pub iso_tol: f64,
    /// Tolerance for the scattering-data match under `φ₀`.
    pub data_tol: f64,
    pub stencil_h: f64,
    pub validate_data: bool,
}

impl Default for IsometryParams {
    fn default() -> Self {
        Self {
            angles: [0.4, 2.3],
            iso_tol: 1e-6,
            data_tol: 1e-6,
            stencil_h: 1e-4,
            validate_data: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntryState {
    pub y: Vec<f64>,
    pub w: Vec<f64>,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsometrySample {
    pub x: Vec<f64>,
    pub phi_x: Vec<f64>,
    pub entries: Vec<EntryState>,
    pub discrepancy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsometryCandidate {
    pub samples: Vec<IsometrySample>,
    pub max_discrepancy: f64,
    pub max_error: Option<f64>,
}

impl IsometryCandidate {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "samples": self.samples.iter().map(|s| serde_json::json!({"x": s.x, "phi_x": s.phi_x})).collect::<Vec<_>>(),
            "max_error": self.max_error,
        })
    }
}

/// Past-pointing null direction at `x` with spatial frame angle `beta`.
fn past_null(metric: &ChartMetric, x: &DVector<f64>, beta: f64) -> Result<DVector<f64>> {
    let f = orthonormal_frame(metric, x)?;
    if f.len() < 3 {
        return Err(Error::Precondition("isometry construction needs two spatial dimensions".into()));
    }
    Ok(-(&f[0] + &f[1] * beta.cos() + &f[2] * beta.sin()))
}

/// First boundary state hit by the past null geodesic from `x`.
fn entry_state(side: &Side, x: &DVector<f64>, beta: f64, num: &Numerics) -> Result<(DVector<f64>, DVector<f64>, f64)> {
    let v = past_null(&side.metric, x, beta)?;
    let tr = Tracer::new(&side.metric, Some(&side.domain), x, &v, num)?.run(num.t_max, StopRule::FirstEvent)?;
    let ev = tr.events.first().ok_or(Error::NonTerminating { t_max: num.t_max })?;
    if ev.kind == EventKind::Tangential {
        return Err(Error::UndefinedDerivative);
    }
    Ok((ev.x(), -ev.v(), ev.t))
}

fn image(
    m2: &Side,
    phi0: &ChartMap,
    y: &DVector<f64>,
    w: &DVector<f64>,
    t: f64,
    num: &Numerics,
) -> Result<DVector<f64>> {
    let y2 = phi0.apply(y);
    let w2 = phi0.push_vector(y, w);
    Ok(flow(&m2.metric, &y2, &w2, t, num)?.0)
}

/// Checks that complete scattering of `(y, w)` in `M₁` maps under `φ₀` to
/// complete scattering in `M₂`.
fn check_data(m1: &Side, m2: &Side, phi0: &ChartMap, y: &DVector<f64>, w: &DVector<f64>, tol: f64, num: &Numerics) -> Result<()> {
    let s1 = complete_scattering(&m1.metric, &m1.domain, y, w, num)?;
    let s2 = complete_scattering(&m2.metric, &m2.domain, &phi0.apply(y), &phi0.push_vector(y, w), num)?;
    let out_x = phi0.apply(&s1.outbound.base);
    let out_v = phi0.push_vector(&s1.outbound.base, &s1.outbound.vec);
    let dev = (out_x - &s2.outbound.base)
        .norm()
        .max((out_v - &s2.outbound.vec).norm())
        .max((s1.tau - s2.tau).abs() / s1.tau.abs().max(1.0));
    if dev > tol {
        return Err(Error::Inconsistency(format!(
            "scattering data do not match under the exterior map (deviation {dev:e})"
        )));
    }
    Ok(())
}

/// `φ(x)` from the first direction only.
pub fn phi_at(m1: &Side, m2: &Side, phi0: &ChartMap, x: &DVector<f64>, params: &IsometryParams, num: &Numerics) -> Result<DVector<f64>> {
    let (y, w, t) = entry_state(m1, x, params.angles[0], num)?;
    image(m2, phi0, &y, &w, t, num)
}

pub fn construct_isometry(
    m1: &Side,
    m2: &Side,
    phi0: &ChartMap,
    samples: &[DVector<f64>],
    params: &IsometryParams,
    num: &Numerics,
) -> Result<IsometryCandidate> {
    let mut out = Vec::with_capacity(samples.len());
    let mut max_discrepancy = 0.0f64;
    for x in samples {
        if m1.domain.phi(x) <= 0.0 {
            return Err(Error::Precondition("isometry samples must be interior points".into()));
        }
        let mut images = Vec::with_capacity(2);
        let mut entries = Vec::with_capacity(2);
        for beta in params.angles {
            let (y, w, t) = entry_state(m1, x, beta, num)?;
            if params.validate_data {
                check_data(m1, m2, phi0, &y, &w, params.data_tol, num)?;
            }
            images.push(image(m2, phi0, &y, &w, t, num)?);
            entries.push(EntryState {
                y: y.iter().copied().collect(),
                w: w.iter().copied().collect(),
                t,
            });
        }
        let discrepancy = (&images[0] - &images[1]).norm();
        if discrepancy > params.iso_tol {
            return Err(Error::Inconsistency(format!(
                "images from two null directions differ by {discrepancy:e}"
            )));
        }
        max_discrepancy = max_discrepancy.max(discrepancy);
        out.push(IsometrySample {
            x: x.iter().copied().collect(),
            phi_x: images[0].iter().copied().collect(),
            entries,
            discrepancy,
        });
    }
    Ok(IsometryCandidate {
        samples: out,
        max_discrepancy,
        max_error: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsometryCheck {
    pub errors: Vec<f64>,
    pub max_error: f64,
    pub worst_sample: usize,
}

/// Relative pullback error `‖g₁ − Dφᵀ g₂ Dφ‖_F / ‖g₁‖_F` per sample, with
/// `Dφ` from a one-sided second-order stencil anchored at the stored image.
pub fn verify_isometry(
    candidate: &IsometryCandidate,
    m1: &Side,
    m2: &Side,
    phi0: &ChartMap,
    params: &IsometryParams,
    num: &Numerics,
) -> Result<IsometryCheck> {
    if candidate.samples.len() < 10 {
        return Err(Error::Precondition("verification needs at least 10 samples".into()));
    }
    let h = params.stencil_h;
    let mut errors = Vec::with_capacity(candidate.samples.len());
    for (index, s) in candidate.samples.iter().enumerate() {
        let x = DVector::from_column_slice(&s.x);
        let f0 = DVector::from_column_slice(&s.phi_x);
        let n = x.len();
        let mut dphi = DMatrix::zeros(n, n);
        for k in 0..n {
            let at = |c: f64| {
                let mut p = x.clone();
                p[k] += c * h;
                phi_at(m1, m2, phi0, &p, params, num).map_err(|_| Error::Differential { index })
            };
            let f1 = at(1.0)?;
            let f2 = at(2.0)?;
            dphi.set_column(k, &((&f1 * 4.0 - &f0 * 3.0 - f2) / (2.0 * h)));
        }
        let g1 = m1.metric.eval(&x)?.g;
        let g2 = m2.metric.eval(&f0)?.g;
        let pulled = dphi.transpose() * g2 * &dphi;
        errors.push((&g1 - pulled).norm() / g1.norm());
    }
    let (worst_sample, max_error) = errors
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |acc, (i, e)| if *e > acc.1 { (i, *e) } else { acc });
    Ok(IsometryCheck {
        errors,
        max_error,
        worst_sample,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::catalog;

    #[test]
    fn rigid_motion_roundtrip_and_jacobian() {
        let f = ChartMap::rigid_motion(1.0, std::f64::consts::FRAC_PI_6);
        let x = DVector::from_vec(vec![0.3, 0.2, -0.4]);
        assert!((f.apply_inverse(&f.apply(&x)) - &x).norm() < 1e-15);
        let fd = ChartMap::new(f.forward.clone(), f.inverse.clone());
        assert!((fd.jacobian(&x) - f.jacobian(&x)).norm() < 1e-9);
    }

    #[test]
    fn pushed_cylinder_is_the_cylinder() {
        let e = catalog::minkowski_cylinder(1.0);
        let f = ChartMap::rigid_motion(1.0, std::f64::consts::FRAC_PI_6);
        let g2 = pushforward_metric(&e.metric, &f);
        let d2 = pushforward_domain(&e.domain, &f);
        let y = DVector::from_vec(vec![0.5, 0.3, 0.1]);
        assert!((g2.g(&y) - e.metric.g(&y)).norm() < 1e-12);
        assert!((d2.phi(&y) - e.domain.phi(&y)).abs() < 1e-12);
        assert!((d2.dphi(&y) - e.domain.dphi(&y)).norm() < 1e-12);
    }
}
