//! Null directions from gradients of the time separation.
//!
//! For `y_j` chronologically after `z`, `½∇_z d(z, y_j)²` raised with `g` is
//! the initial velocity of the maximizing geodesic from `z` to `y_j`, and
//! `½∇_y d(z, y)²` at `y_j` is its final velocity up to sign. As `y_j → y`
//! on the light cone both converge to the null geodesic joining `z` and `y`.

use nalgebra::DVector;
use serde::Serialize;

use super::timesep::TimeSeparationField;
use crate::error::{Error, Result};
use crate::geodesic::exp_map;

#[derive(Debug, Clone, Serialize)]
pub struct GradientRecovery {
    /// Initial velocity at `z1` with `exp_{z1}(u) = y`.
    pub u: Vec<f64>,
    /// Future-pointing velocity at `y`.
    pub w: Vec<f64>,
    pub u_terms: Vec<Vec<f64>>,
    pub w_terms: Vec<Vec<f64>>,
    pub roundtrip_residual: f64,
}

/// Terms after which the accelerated sequence must have settled.
const SETTLE_AFTER: usize = 8;
const SETTLE_TOL: f64 = 1e-4;

/// Raised gradient `½ g⁻¹ ∇(d²)` of `f = d²` at `p` by central differences.
fn half_gradient<F: Fn(&DVector<f64>) -> Result<f64>>(
    field: &TimeSeparationField,
    f: F,
    p: &DVector<f64>,
    h: f64,
) -> Result<DVector<f64>> {
    let n = p.len();
    let mut grad = DVector::zeros(n);
    for k in 0..n {
        let mut pp = p.clone();
        pp[k] += h;
        let mut pm = p.clone();
        pm[k] -= h;
        grad[k] = (f(&pp)? - f(&pm)?) / (4.0 * h);
    }
    Ok(field.metric.eval(p)?.g_inv * grad)
}

/// Aitken's Δ² extrapolation of a vector sequence, applied componentwise.
/// Components whose second difference vanishes keep the latest value.
pub fn aitken(seq: &[DVector<f64>]) -> Vec<DVector<f64>> {
    seq.windows(3)
        .map(|w| {
            DVector::from_fn(w[0].len(), |i, _| {
                let (a, b, c) = (w[0][i], w[1][i], w[2][i]);
                let denom = c - 2.0 * b + a;
                if denom.abs() <= 1e-14 * (a.abs() + b.abs() + c.abs()).max(1e-300) {
                    c
                } else {
                    c - (c - b) * (c - b) / denom
                }
            })
        })
        .collect()
}

fn limit_of(terms: &[DVector<f64>], what: &str) -> Result<DVector<f64>> {
    let acc = aitken(terms);
    let seq = if acc.len() >= 2 { acc } else { terms.to_vec() };
    let last = seq.len() - 1;
    for i in SETTLE_AFTER.min(last)..last {
        let diff = (&seq[i + 1] - &seq[i]).norm();
        if diff > SETTLE_TOL * (1.0 + seq[i].norm()) {
            return Err(Error::Convergence(format!(
                "{what}: successive extrapolated terms differ by {diff:e} at term {i}"
            )));
        }
    }
    Ok(seq[last].clone())
}

/// Extrapolated gradient limits `(u, w)` before orientation, with the raw terms.
pub(crate) fn gradient_limits(
    field: &TimeSeparationField,
    z1: &DVector<f64>,
    approach: &[DVector<f64>],
) -> Result<(DVector<f64>, DVector<f64>, Vec<DVector<f64>>, Vec<DVector<f64>>)> {
    if approach.len() < 3 {
        return Err(Error::Precondition("approach sequence needs at least three points".into()));
    }
    let mut u_terms = Vec::with_capacity(approach.len());
    let mut w_terms = Vec::with_capacity(approach.len());
    for (j, yj) in approach.iter().enumerate() {
        let dj = field.d(z1, yj)?;
        if dj <= 0.0 {
            return Err(Error::Precondition(format!("approach point {j} is not chronologically after z1")));
        }
        // The stencil must stay inside the chronological future.
        let h = 1e-2 * dj * dj / (1.0 + (yj - z1).norm());
        let d2_z = |p: &DVector<f64>| field.d(p, yj).map(|d| d * d);
        let d2_y = |p: &DVector<f64>| field.d(z1, p).map(|d| d * d);
        u_terms.push(half_gradient(field, d2_z, z1, h)?);
        w_terms.push(half_gradient(field, d2_y, yj, h)?);
    }
    let u = limit_of(&u_terms, "u")?;
    let w = limit_of(&w_terms, "w")?;
    Ok((u, w, u_terms, w_terms))
}

/// Recovers the null geodesic from `z1` to `y` from time separations to
/// points `y_j → y` with `d(z1, y_j) > 0`.
pub fn recover_null_direction_via_gradient(
    field: &TimeSeparationField,
    z1: &DVector<f64>,
    y: &DVector<f64>,
    approach: &[DVector<f64>],
) -> Result<GradientRecovery> {
    let (u, w, u_terms, w_terms) = gradient_limits(field, z1, approach)?;

    // Orientation: keep the sign whose geodesic returns to y.
    let lifts = field.metric.lifts(y);
    let residual = |vel: &DVector<f64>| match exp_map(&field.metric, z1, vel, &field.numerics) {
        Ok(p) => lifts.iter().map(|l| (&p - l).norm()).fold(f64::INFINITY, f64::min),
        Err(_) => f64::INFINITY,
    };
    let (rp, rm) = (residual(&u), residual(&(-&u)));
    let (u, roundtrip_residual) = if rp <= rm { (u, rp) } else { (-u, rm) };
    if !(roundtrip_residual < 1e-6 * (1.0 + y.norm())) {
        return Err(Error::Convergence(format!(
            "exp roundtrip residual {roundtrip_residual:e} exceeds tolerance"
        )));
    }
    let w = if field.metric.is_future(y, &w) { w } else { -w };
    let to_vec = |v: &DVector<f64>| v.iter().copied().collect::<Vec<f64>>();
    Ok(GradientRecovery {
        u: to_vec(&u),
        w: to_vec(&w),
        u_terms: u_terms.iter().map(to_vec).collect(),
        w_terms: w_terms.iter().map(to_vec).collect(),
        roundtrip_residual,
    })
}

/// Angle between two vectors in the chart's Euclidean inner product.
pub fn euclidean_angle(a: &[f64], b: &[f64]) -> f64 {
    let a = DVector::from_column_slice(a);
    let b = DVector::from_column_slice(b);
    (a.dot(&b) / (a.norm() * b.norm())).clamp(-1.0, 1.0).acos()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aitken_is_exact_on_geometric_sequences() {
        let seq: Vec<DVector<f64>> = (0..6)
            .map(|j| DVector::from_vec(vec![1.0 - 0.5f64.powi(j), 3.0]))
            .collect();
        for v in aitken(&seq) {
            assert!((v[0] - 1.0).abs() < 1e-12);
            assert_eq!(v[1], 3.0);
        }
    }

    #[test]
    fn oscillating_sequence_is_rejected() {
        let seq: Vec<DVector<f64>> = (0..12)
            .map(|j| DVector::from_vec(vec![if j % 3 == 0 { 1.0 } else { 0.0 }]))
            .collect();
        assert!(matches!(limit_of(&seq, "x"), Err(Error::Convergence(_))));
    }
}
