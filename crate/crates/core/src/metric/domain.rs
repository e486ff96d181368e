//! Manifolds with boundary given by a defining function.
//!
//! Points with `φ > 0` are interior, `φ = 0` is the boundary and `φ < 0` is
//! the exterior part of the chart. The outward normal therefore satisfies
//! `dφ(ν) < 0`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::chart::{ChartBounds, ChartMetric, Signature};
use crate::error::{Error, Result};

pub type ScalarFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointClass {
    Interior,
    Boundary,
    Exterior,
}

#[derive(Clone)]
pub struct DomainSpec {
    phi: ScalarFn,
    gradient: VectorFn,
    /// Approximate normal distance to the boundary; used for collar tests.
    depth: Option<ScalarFn>,
    pub collar_width: f64,
    pub bounds: ChartBounds,
    pub timelike_boundary: bool,
    pub name: Option<String>,
}

impl fmt::Debug for DomainSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DomainSpec")
            .field("name", &self.name)
            .field("collar_width", &self.collar_width)
            .field("timelike_boundary", &self.timelike_boundary)
            .finish()
    }
}

impl DomainSpec {
    pub fn new(dim: usize, phi: ScalarFn, gradient: VectorFn) -> Self {
        Self {
            phi,
            gradient,
            depth: None,
            collar_width: 0.1,
            bounds: ChartBounds::unbounded(dim),
            timelike_boundary: true,
            name: None,
        }
    }

    /// A domain without boundary: every chart point is interior.
    pub fn whole(dim: usize) -> Self {
        let mut d = Self::new(
            dim,
            Arc::new(|_| 1.0),
            Arc::new(move |_| DVector::zeros(dim)),
        );
        d.collar_width = 0.0;
        d.name = Some("whole".into());
        d
    }

    pub fn with_depth(mut self, depth: ScalarFn) -> Self {
        self.depth = Some(depth);
        self
    }

    pub fn with_collar(mut self, width: f64) -> Self {
        self.collar_width = width;
        self
    }

    pub fn with_bounds(mut self, bounds: ChartBounds) -> Self {
        self.bounds = bounds;
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn phi(&self, x: &DVector<f64>) -> f64 {
        (self.phi)(x)
    }

    pub fn dphi(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.gradient)(x)
    }

    /// `dφ(v)` at `x`.
    pub fn dphi_along(&self, x: &DVector<f64>, v: &DVector<f64>) -> f64 {
        self.dphi(x).dot(v)
    }

    /// Normalized transversality `dφ(v) / (|dφ|·|v|)`.
    pub fn transversality(&self, x: &DVector<f64>, v: &DVector<f64>) -> f64 {
        let d = self.dphi(x);
        let denom = d.norm() * v.norm();
        if denom == 0.0 {
            0.0
        } else {
            d.dot(v) / denom
        }
    }

    pub fn classify(&self, x: &DVector<f64>, event_tol: f64) -> PointClass {
        let p = self.phi(x);
        if p.abs() < event_tol {
            PointClass::Boundary
        } else if p > 0.0 {
            PointClass::Interior
        } else {
            PointClass::Exterior
        }
    }

    /// Distance-like depth inside the domain; negative outside.
    pub fn depth(&self, metric: &ChartMetric, x: &DVector<f64>) -> f64 {
        if let Some(d) = &self.depth {
            return d(x);
        }
        let d = self.dphi(x);
        match metric.eval(x) {
            Ok(at) => {
                let n2 = (d.transpose() * &at.g_inv * &d)[(0, 0)];
                if n2 > 0.0 {
                    self.phi(x) / n2.sqrt()
                } else {
                    self.phi(x) / d.norm().max(f64::MIN_POSITIVE)
                }
            }
            Err(_) => self.phi(x) / d.norm().max(f64::MIN_POSITIVE),
        }
    }

    pub fn in_collar(&self, metric: &ChartMetric, x: &DVector<f64>) -> bool {
        let depth = self.depth(metric, x);
        depth < self.collar_width
    }

    pub fn has_boundary(&self) -> bool {
        self.collar_width > 0.0 || self.name.as_deref() != Some("whole")
    }

    /// Outward unit normal field `ν = −∇φ / |∇φ|_g`, defined near the boundary.
    pub fn outward_normal(&self, metric: &ChartMetric, x: &DVector<f64>) -> Result<DVector<f64>> {
        let at = metric.eval(x)?;
        let d = self.dphi(x);
        if d.norm() <= 1e-8 {
            return Err(Error::DegenerateBoundary {
                point: x.iter().copied().collect(),
            });
        }
        let grad = &at.g_inv * &d;
        let n2 = d.dot(&grad);
        if n2 <= 1e-12 * d.norm_squared() * at.g_inv.norm() {
            return Err(Error::BoundarySignature {
                point: x.iter().copied().collect(),
            });
        }
        Ok(-grad / n2.sqrt())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFrame {
    pub point: DVector<f64>,
    pub outward_normal: DVector<f64>,
    /// Orthonormal basis of `ker dφ`; for Lorentzian metrics the first vector
    /// is the future-pointing timelike one.
    pub tangent_basis: Vec<DVector<f64>>,
}

impl BoundaryFrame {
    pub fn inward_normal(&self) -> DVector<f64> {
        -&self.outward_normal
    }
}

pub fn boundary_frame(
    metric: &ChartMetric,
    domain: &DomainSpec,
    x: &DVector<f64>,
    event_tol: f64,
) -> Result<BoundaryFrame> {
    let phi = domain.phi(x);
    if phi.abs() >= event_tol.max(1e-9) {
        return Err(Error::Precondition(format!(
            "point is not on the boundary (phi = {phi:e})"
        )));
    }
    frame_at(metric, domain, x)
}

/// Frame construction without the on-boundary check; also valid on level
/// sets of `φ` near the boundary.
pub fn frame_at(metric: &ChartMetric, domain: &DomainSpec, x: &DVector<f64>) -> Result<BoundaryFrame> {
    let n = metric.dim();
    let nu = domain.outward_normal(metric, x)?;
    let g = metric.eval(x)?.g;
    let ip = |a: &DVector<f64>, b: &DVector<f64>| (a.transpose() * &g * b)[(0, 0)];

    // Project coordinate vectors g-orthogonally away from ν and keep n-1
    // Euclidean-independent ones.
    let mut spanning: Vec<DVector<f64>> = Vec::with_capacity(n - 1);
    let mut ortho: Vec<DVector<f64>> = Vec::with_capacity(n - 1);
    let mut candidates: Vec<DVector<f64>> = (0..n)
        .map(|i| {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            let c = ip(&e, &nu);
            e - &nu * c
        })
        .collect();
    candidates.sort_by(|a, b| b.norm().partial_cmp(&a.norm()).unwrap_or(std::cmp::Ordering::Equal));
    for c in candidates {
        let mut r = c.clone();
        for q in &ortho {
            let p = r.dot(q);
            r -= q * p;
        }
        if r.norm() > 1e-6 * c.norm().max(1e-300) {
            let rn = r.normalize();
            ortho.push(rn);
            spanning.push(c);
        }
        if spanning.len() == n - 1 {
            break;
        }
    }
    if spanning.len() != n - 1 {
        return Err(Error::DegenerateBoundary {
            point: x.iter().copied().collect(),
        });
    }
    let k = n - 1;
    let induced = DMatrix::from_fn(k, k, |i, j| ip(&ortho[i], &ortho[j]));
    let eig = SymmetricEigen::new(induced.clone());
    let scale = induced.norm().max(f64::MIN_POSITIVE);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|a, b| {
        eig.eigenvalues[*a]
            .partial_cmp(&eig.eigenvalues[*b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let negatives = eig.eigenvalues.iter().filter(|l| **l < 0.0).count();
    let expected_negatives = match metric.signature() {
        Signature::Riemannian => 0,
        Signature::Lorentzian => {
            if domain.timelike_boundary {
                1
            } else {
                0
            }
        }
    };
    if eig.eigenvalues.iter().any(|l| l.abs() < 1e-10 * scale) || negatives != expected_negatives {
        return Err(Error::BoundarySignature {
            point: x.iter().copied().collect(),
        });
    }
    let mut basis = Vec::with_capacity(k);
    for &idx in &order {
        let lam = eig.eigenvalues[idx];
        let mut v = DVector::zeros(n);
        for (c, o) in eig.eigenvectors.column(idx).iter().zip(&ortho) {
            v += o * *c;
        }
        v /= lam.abs().sqrt();
        // deterministic orientation
        if lam < 0.0 && metric.signature() == Signature::Lorentzian {
            if !metric.is_future(x, &v) {
                v = -v;
            }
        } else {
            let (imax, _) = v
                .iter()
                .enumerate()
                .fold((0, 0.0f64), |acc, (i, c)| if c.abs() > acc.1.abs() + 1e-12 { (i, *c) } else { acc });
            if v[imax] < 0.0 {
                v = -v;
            }
        }
        basis.push(v);
    }
    Ok(BoundaryFrame {
        point: x.clone(),
        outward_normal: nu,
        tangent_basis: basis,
    })
}

/// `II(v, v) = g(∇_v ν, v)` with `ν` the outward unit normal field.
pub fn second_fundamental_form(
    metric: &ChartMetric,
    domain: &DomainSpec,
    x: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<f64> {
    let d = domain.dphi(x);
    let vn = v.norm();
    if vn == 0.0 {
        return Ok(0.0);
    }
    if d.dot(v).abs() >= 1e-8 * vn * d.norm().max(1.0) {
        return Err(Error::Precondition(
            "vector is not tangent to the boundary".into(),
        ));
    }
    let nu = domain.outward_normal(metric, x)?;
    let dir = v / vn;
    // Fourth-order central difference of the normal field along the unit
    // direction; the result is then scaled exactly by |v|.
    let h = 1e-3 * x.norm().max(1.0);
    let eval = |s: f64| domain.outward_normal(metric, &(x + &dir * s));
    let dn = (eval(-2.0 * h)? - eval(2.0 * h)? + (eval(h)? - eval(-h)?) * 8.0) / (12.0 * h);
    let gamma = metric.christoffel(x)?;
    let cov = dn * vn + gamma.contract(v, &nu);
    Ok(metric.inner(x, &cov, v))
}
