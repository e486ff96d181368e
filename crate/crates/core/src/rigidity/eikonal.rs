//! Eikonal check for travel-time fields: `τ(x) = d(x, y)` to a fixed point
//! `y` satisfies `g^{ij}∂_iτ ∂_jτ = −1` wherever it is smooth and positive.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use super::timesep::TimeSeparationField;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EikonalSample {
    pub x: Vec<f64>,
    pub tau: f64,
    /// `g^{ij}∂_iτ ∂_jτ + 1` with central-difference derivatives.
    pub residual: f64,
}

pub fn eikonal_residuals(
    field: &TimeSeparationField,
    target: &DVector<f64>,
    points: &[DVector<f64>],
    h: f64,
) -> Result<Vec<EikonalSample>> {
    points
        .par_iter()
        .map(|x| {
            let tau = field.d(x, target)?;
            if tau <= 0.0 {
                return Err(Error::Precondition("sample point is not in the past of the target".into()));
            }
            let n = x.len();
            let mut grad = DVector::zeros(n);
            for k in 0..n {
                let mut xp = x.clone();
                xp[k] += h;
                let mut xm = x.clone();
                xm[k] -= h;
                grad[k] = (field.d(&xp, target)? - field.d(&xm, target)?) / (2.0 * h);
            }
            let g_inv = field.metric.eval(x)?.g_inv;
            let residual = (grad.transpose() * g_inv * &grad)[(0, 0)] + 1.0;
            Ok(EikonalSample {
                x: x.iter().copied().collect(),
                tau,
                residual,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::catalog;
    use crate::numerics::Numerics;
    use crate::rigidity::Method;

    #[test]
    fn flat_field_is_eikonal() {
        let e = catalog::minkowski(3);
        let field = TimeSeparationField::from_entry(&e, Method::Shooting, Numerics::default());
        let y = DVector::from_vec(vec![3.0, 0.5, 0.0]);
        let pts = vec![DVector::from_vec(vec![0.0, 0.1, 0.2]), DVector::from_vec(vec![1.0, -0.3, 0.4])];
        for s in eikonal_residuals(&field, &y, &pts, 1e-4).unwrap() {
            assert!(s.residual.abs() < 1e-6, "{s:?}");
        }
    }
}
