//! Metric fields on a single coordinate chart.
//!
//! A [`ChartMetric`] bundles a symmetric matrix field `g_ij(x)`, an optional
//! analytic derivative `∂_k g_ij(x)`, the declared signature and the box in
//! which the chart coordinates are valid. Everything downstream (geodesics,
//! frames, scattering) is expressed through the methods here.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative threshold used to decide the causal character of a vector.
pub const CLASS_TOL: f64 = 1e-9;

pub type MetricFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
/// Returns `[∂_0 g, ∂_1 g, …]`, one matrix per coordinate direction.
pub type DerivativeFn = Arc<dyn Fn(&DVector<f64>) -> Vec<DMatrix<f64>> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signature {
    Riemannian,
    /// `(−, +, …, +)`, coordinate 0 time-orienting.
    Lorentzian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CausalClass {
    Timelike,
    Lightlike,
    Spacelike,
    Zero,
}

/// Axis-aligned box of admissible chart coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ChartBounds {
    pub fn unbounded(dim: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| *v > *lo && *v < *hi)
    }

    pub fn with(mut self, axis: usize, lower: f64, upper: f64) -> Self {
        self.lower[axis] = lower;
        self.upper[axis] = upper;
        self
    }

    pub fn intersect(&self, other: &ChartBounds) -> ChartBounds {
        ChartBounds {
            lower: self
                .lower
                .iter()
                .zip(&other.lower)
                .map(|(a, b)| a.max(*b))
                .collect(),
            upper: self
                .upper
                .iter()
                .zip(&other.upper)
                .map(|(a, b)| a.min(*b))
                .collect(),
        }
    }
}

/// Metric and its inverse at one point.
#[derive(Debug, Clone)]
pub struct MetricAt {
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
}

/// Christoffel symbols `Γ^k_ij`, stored flat with index `(k * n + i) * n + j`.
#[derive(Debug, Clone)]
pub struct Christoffel {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Christoffel {
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.dim + i) * self.dim + j]
    }

    /// `Γ^k_ij a^i b^j`
    pub fn contract(&self, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim;
        DVector::from_fn(n, |k, _| {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    s += self.get(k, i, j) * a[i] * b[j];
                }
            }
            s
        })
    }
}

/// A semi-Riemannian metric on one coordinate chart.
#[derive(Clone)]
pub struct ChartMetric {
    dim: usize,
    signature: Signature,
    metric: MetricFn,
    derivative: Option<DerivativeFn>,
    bounds: ChartBounds,
    /// Coordinate periods `(axis, period)`; points differing by a period are identified.
    periods: Vec<(usize, f64)>,
    pub catalog_id: Option<String>,
}

impl fmt::Debug for ChartMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChartMetric")
            .field("dim", &self.dim)
            .field("signature", &self.signature)
            .field("analytic_derivative", &self.derivative.is_some())
            .field("catalog_id", &self.catalog_id)
            .finish()
    }
}

impl ChartMetric {
    pub fn new(dim: usize, signature: Signature, metric: MetricFn) -> Self {
        assert!(dim >= 2, "chart dimension must be at least 2");
        Self {
            dim,
            signature,
            metric,
            derivative: None,
            bounds: ChartBounds::unbounded(dim),
            periods: Vec::new(),
            catalog_id: None,
        }
    }

    pub fn with_derivative(mut self, derivative: DerivativeFn) -> Self {
        self.derivative = Some(derivative);
        self
    }

    pub fn with_bounds(mut self, bounds: ChartBounds) -> Self {
        self.bounds = bounds;
        self
    }

    pub fn with_period(mut self, axis: usize, period: f64) -> Self {
        self.periods.push((axis, period));
        self
    }

    /// Forgets the coordinate identifications, so only the principal lift of
    /// a point is considered.
    pub fn without_periods(mut self) -> Self {
        self.periods.clear();
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.catalog_id = Some(id.into());
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn signature(&self) -> Signature {
        self.signature
    }

    pub fn bounds(&self) -> &ChartBounds {
        &self.bounds
    }

    pub fn periods(&self) -> &[(usize, f64)] {
        &self.periods
    }

    pub fn has_analytic_derivative(&self) -> bool {
        self.derivative.is_some()
    }

    pub fn in_chart(&self, x: &DVector<f64>) -> bool {
        x.len() == self.dim && self.bounds.contains(x)
    }

    fn check(&self, x: &DVector<f64>) -> Result<()> {
        if self.in_chart(x) {
            Ok(())
        } else {
            Err(Error::OutOfChart {
                point: x.iter().copied().collect(),
            })
        }
    }

    /// Raw metric matrix without bounds checks.
    pub fn g(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.metric)(x)
    }

    /// `g(x)` and `g(x)⁻¹`, with bounds and degeneracy checks.
    pub fn eval(&self, x: &DVector<f64>) -> Result<MetricAt> {
        self.check(x)?;
        let g = self.g(x);
        let scale = g.norm().max(f64::MIN_POSITIVE);
        let g_inv = g.clone().try_inverse().ok_or_else(|| Error::Degenerate {
            point: x.iter().copied().collect(),
        })?;
        let residual = (&g * &g_inv - DMatrix::identity(self.dim, self.dim)).norm();
        if !residual.is_finite() || residual > 1e-10 * scale.max(1.0) * g_inv.norm().max(1.0) {
            return Err(Error::Degenerate {
                point: x.iter().copied().collect(),
            });
        }
        Ok(MetricAt { g, g_inv })
    }

    pub fn inner(&self, x: &DVector<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        (a.transpose() * self.g(x) * b)[(0, 0)]
    }

    pub fn norm_sq(&self, x: &DVector<f64>, a: &DVector<f64>) -> f64 {
        self.inner(x, a, a)
    }

    /// `∂_k g_ij`, analytic when available, otherwise central differences.
    pub fn derivative(&self, x: &DVector<f64>) -> Vec<DMatrix<f64>> {
        match &self.derivative {
            Some(d) => d(x),
            None => self.fd_derivative(x),
        }
    }

    /// Central finite differences with step `ε^{1/3}·max(1, |x_k|)`.
    pub fn fd_derivative(&self, x: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let h0 = f64::EPSILON.cbrt();
        (0..self.dim)
            .map(|k| {
                let h = h0 * x[k].abs().max(1.0);
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += h;
                xm[k] -= h;
                (self.g(&xp) - self.g(&xm)) / (xp[k] - xm[k])
            })
            .collect()
    }

    pub fn christoffel(&self, x: &DVector<f64>) -> Result<Christoffel> {
        let at = self.eval(x)?;
        Ok(christoffel_from(&at.g_inv, &self.derivative(x)))
    }

    /// Geodesic acceleration `−Γ^k_ij v^i v^j`.
    pub fn acceleration(&self, x: &DVector<f64>, v: &DVector<f64>) -> Option<DVector<f64>> {
        let n = self.dim;
        let g_inv = self.g(x).try_inverse()?;
        let dg = self.derivative(x);
        // first-kind contraction: Γ_{lij} v^i v^j = ∂_i g_lj v^i v^j − ½ ∂_l g_ij v^i v^j
        let mut first = DVector::zeros(n);
        for i in 0..n {
            if v[i] == 0.0 {
                continue;
            }
            let col = &dg[i] * v;
            first.axpy(v[i], &col, 1.0);
        }
        for l in 0..n {
            first[l] -= 0.5 * (v.transpose() * &dg[l] * v)[(0, 0)];
        }
        Some(-(g_inv * first))
    }

    pub fn causal_class(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<CausalClass> {
        if self.signature != Signature::Lorentzian {
            return Err(Error::UnsupportedSignature {
                expected: "Lorentzian",
            });
        }
        Ok(classify(self.norm_sq(x, v), v.norm_squared()))
    }

    /// Future-pointing in the time orientation given by `∂_0`.
    pub fn is_future(&self, x: &DVector<f64>, v: &DVector<f64>) -> bool {
        let mut t = DVector::zeros(self.dim);
        t[0] = 1.0;
        self.inner(x, v, &t) < 0.0
    }

    /// Checks symmetry and signature of `g(x)`; returns the max relative asymmetry.
    pub fn validate_point(&self, x: &DVector<f64>) -> Result<f64> {
        let g = self.eval(x)?.g;
        let asym = (&g - g.transpose()).norm() / g.norm().max(f64::MIN_POSITIVE);
        let eig = nalgebra::SymmetricEigen::new(g.clone()).eigenvalues;
        let negatives = eig.iter().filter(|e| **e < 0.0).count();
        let expected = match self.signature {
            Signature::Riemannian => 0,
            Signature::Lorentzian => 1,
        };
        if negatives != expected || eig.iter().any(|e| e.abs() < 1e-14 * g.norm()) {
            return Err(Error::Degenerate {
                point: x.iter().copied().collect(),
            });
        }
        Ok(asym)
    }

    /// Returns all chart representatives of `y` obtained by shifting periodic
    /// coordinates by `-1, 0, +1` periods.
    pub fn lifts(&self, y: &DVector<f64>) -> Vec<DVector<f64>> {
        let mut out = vec![y.clone()];
        for &(axis, period) in &self.periods {
            let mut next = Vec::with_capacity(out.len() * 3);
            for p in &out {
                for shift in [-1.0, 1.0] {
                    let mut q = p.clone();
                    q[axis] += shift * period;
                    next.push(q);
                }
                next.push(p.clone());
            }
            out = next;
        }
        out
    }
}

pub(crate) fn classify(q: f64, euclid_sq: f64) -> CausalClass {
    if euclid_sq == 0.0 {
        CausalClass::Zero
    } else if q < -CLASS_TOL * euclid_sq {
        CausalClass::Timelike
    } else if q.abs() <= CLASS_TOL * euclid_sq {
        CausalClass::Lightlike
    } else {
        CausalClass::Spacelike
    }
}

pub fn christoffel_from(g_inv: &DMatrix<f64>, dg: &[DMatrix<f64>]) -> Christoffel {
    let n = g_inv.nrows();
    let mut data = vec![0.0; n * n * n];
    for i in 0..n {
        for j in i..n {
            for k in 0..n {
                let mut s = 0.0;
                for l in 0..n {
                    s += g_inv[(k, l)] * (dg[i][(l, j)] + dg[j][(l, i)] - dg[l][(i, j)]);
                }
                data[(k * n + i) * n + j] = 0.5 * s;
                data[(k * n + j) * n + i] = 0.5 * s;
            }
        }
    }
    Christoffel { dim: n, data }
}

/// A tangent vector with its cached causal character.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVec {
    pub base: DVector<f64>,
    pub vec: DVector<f64>,
    pub causal_class: Option<CausalClass>,
}

impl TangentVec {
    pub fn new(metric: &ChartMetric, base: DVector<f64>, vec: DVector<f64>) -> Self {
        let causal_class = metric.causal_class(&base, &vec).ok();
        Self {
            base,
            vec,
            causal_class,
        }
    }

    pub fn from_slices(metric: &ChartMetric, base: &[f64], vec: &[f64]) -> Self {
        Self::new(
            metric,
            DVector::from_column_slice(base),
            DVector::from_column_slice(vec),
        )
    }

    pub fn scaled(&self, metric: &ChartMetric, c: f64) -> Self {
        Self::new(metric, self.base.clone(), &self.vec * c)
    }

    pub fn reversed(&self, metric: &ChartMetric) -> Self {
        self.scaled(metric, -1.0)
    }
}
