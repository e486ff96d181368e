//! Light-cone identification on the boundary.
//!
//! Grid points of `∂M` on the topological boundary of `{d(x, ·) > tol}` whose
//! separation in a slightly larger extension also vanishes are the points
//! reached from `x` by null geodesics.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::timesep::TimeSeparationField;
use crate::error::{Error, Result};
use crate::io::{csv_row, fmt_f64};

/// Tensor grid in the boundary parameters `(t, θ)`, periodic in `θ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryGrid {
    pub times: Vec<f64>,
    pub angles: Vec<f64>,
}

impl BoundaryGrid {
    /// `t_i = t_step·i` and `θ_j = −π + 2πj/m`.
    pub fn uniform(t_step: f64, nt: usize, m: usize) -> Self {
        Self {
            times: (0..nt).map(|i| t_step * i as f64).collect(),
            angles: (0..m)
                .map(|j| -std::f64::consts::PI + 2.0 * std::f64::consts::PI * j as f64 / m as f64)
                .collect(),
        }
    }

    pub fn index_of(&self, t: f64, theta: f64) -> Option<(usize, usize)> {
        let i = self.times.iter().position(|s| (s - t).abs() < 1e-9)?;
        let j = self.angles.iter().position(|a| {
            let d = (a - theta).rem_euclid(2.0 * std::f64::consts::PI);
            d < 1e-9 || 2.0 * std::f64::consts::PI - d < 1e-9
        })?;
        Some((i, j))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellClass {
    /// `d > tol`.
    Chronological,
    /// On the boundary of the chronological set with `d̃ ≤ tol`.
    LightCone,
    /// On the boundary of the chronological set but `d̃ > tol`.
    Rejected,
    Outside,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LightconeCell {
    pub i: usize,
    pub j: usize,
    pub point: Vec<f64>,
    pub d: f64,
    /// Extended separation; only evaluated on boundary candidates.
    pub d_ext: Option<f64>,
    pub class: CellClass,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LightconeId {
    pub base: Vec<f64>,
    pub nt: usize,
    pub m: usize,
    pub tol: f64,
    pub cells: Vec<LightconeCell>,
}

impl LightconeId {
    pub fn cell(&self, i: usize, j: usize) -> &LightconeCell {
        &self.cells[i * self.m + j]
    }

    pub fn marked(&self) -> impl Iterator<Item = &LightconeCell> {
        self.cells.iter().filter(|c| c.class == CellClass::LightCone)
    }

    pub fn is_marked(&self, i: usize, j: usize) -> bool {
        self.cell(i, j).class == CellClass::LightCone
    }

    /// CSV with columns `i, j, x0…, d, d_ext, class`.
    pub fn to_csv(&self) -> String {
        let n = self.base.len();
        let mut out = csv_row(
            ["i", "j"]
                .into_iter()
                .map(String::from)
                .chain((0..n).map(|k| format!("x{k}")))
                .chain(["d", "d_ext", "class"].into_iter().map(String::from)),
        );
        for c in &self.cells {
            let class = serde_json::to_value(c.class)
                .ok()
                .and_then(|v| v.as_str().map(String::from))
                .unwrap_or_default();
            out.push_str(&csv_row(
                [c.i.to_string(), c.j.to_string()]
                    .into_iter()
                    .chain(c.point.iter().map(|x| fmt_f64(*x)))
                    .chain([fmt_f64(c.d), c.d_ext.map(fmt_f64).unwrap_or_default(), class]),
            ));
        }
        out
    }
}

/// Classifies the boundary grid relative to `x ∈ ∂M`.
///
/// `embed` maps boundary parameters `(t, θ)` to chart points. `field`
/// evaluates `d` on `M` and `extended` evaluates `d̃` on an extension of `M`.
pub fn boundary_lightcone_id<E>(
    field: &TimeSeparationField,
    extended: &TimeSeparationField,
    x: &DVector<f64>,
    grid: &BoundaryGrid,
    embed: E,
    tol: f64,
) -> Result<LightconeId>
where
    E: Fn(f64, f64) -> DVector<f64> + Sync,
{
    let nt = grid.times.len();
    let m = grid.angles.len();
    if nt < 2 || m < 3 {
        return Err(Error::Resolution("grid needs at least 2 times and 3 angles".into()));
    }
    let points: Vec<DVector<f64>> = (0..nt * m)
        .map(|k| embed(grid.times[k / m], grid.angles[k % m]))
        .collect();
    let d: Vec<f64> = points.par_iter().map(|y| field.d(x, y)).collect::<Result<_>>()?;
    let positive = |i: usize, j: usize| d[i * m + j] > tol;
    let candidate = |k: usize| {
        let (i, j) = (k / m, k % m);
        if positive(i, j) {
            return false;
        }
        let mut nb = vec![(i, (j + 1) % m), (i, (j + m - 1) % m)];
        if i > 0 {
            nb.push((i - 1, j));
        }
        if i + 1 < nt {
            nb.push((i + 1, j));
        }
        nb.into_iter().any(|(a, b)| positive(a, b))
    };
    let candidates: Vec<usize> = (0..nt * m).filter(|k| candidate(*k)).collect();
    if candidates.is_empty() {
        return Err(Error::Resolution(
            "no grid cell borders the chronological future of the base point".into(),
        ));
    }
    let d_ext: Vec<(usize, f64)> = candidates
        .par_iter()
        .map(|k| extended.d(x, &points[*k]).map(|v| (*k, v)))
        .collect::<Result<_>>()?;
    let mut ext = vec![None; nt * m];
    for (k, v) in d_ext {
        ext[k] = Some(v);
    }
    let cells = (0..nt * m)
        .map(|k| {
            let class = match ext[k] {
                Some(v) if v <= tol => CellClass::LightCone,
                Some(_) => CellClass::Rejected,
                None if d[k] > tol => CellClass::Chronological,
                None => CellClass::Outside,
            };
            LightconeCell {
                i: k / m,
                j: k % m,
                point: points[k].iter().copied().collect(),
                d: d[k],
                d_ext: ext[k],
                class,
            }
        })
        .collect();
    Ok(LightconeId {
        base: x.iter().copied().collect(),
        nt,
        m,
        tol,
        cells,
    })
}

/// Embedding `(t, θ) ↦ (t, R cos θ, R sin θ)` of the cylinder boundary.
pub fn cylinder_embedding(r: f64) -> impl Fn(f64, f64) -> DVector<f64> + Sync {
    move |t, theta| DVector::from_vec(vec![t, r * theta.cos(), r * theta.sin()])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_layout() {
        let g = BoundaryGrid::uniform(0.02, 200, 200);
        assert_eq!(g.index_of(2.0, std::f64::consts::PI), Some((100, 0)));
        assert_eq!(g.index_of(0.0, 0.0), Some((0, 100)));
        assert!(g.index_of(0.01, 0.0).is_none());
    }
}
