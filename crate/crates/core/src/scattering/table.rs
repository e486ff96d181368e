//! Sampled scattering tables over boundary grids and direction cones.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::relation::{scatter, Provenance, ScatteringKind, ScatteringSample};
use crate::error::{Error, Result};
use crate::io::{csv_row, floats, indexed};
use crate::metric::{frame_at, ChartMetric, DomainSpec, TangentVec};
use crate::numerics::Numerics;

/// A finite set of boundary points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryGrid {
    pub points: Vec<Vec<f64>>,
    pub description: String,
}

impl BoundaryGrid {
    pub fn from_points(points: Vec<DVector<f64>>, description: impl Into<String>) -> Self {
        Self {
            points: points.into_iter().map(|p| p.iter().copied().collect()).collect(),
            description: description.into(),
        }
    }

    /// Points `(t, R cos α, R sin α)` on a circular boundary.
    pub fn circle(radius: f64, times: &[f64], angles: &[f64]) -> Self {
        let mut pts = Vec::new();
        for &t in times {
            for &a in angles {
                pts.push(vec![t, radius * a.cos(), radius * a.sin()]);
            }
        }
        Self {
            points: pts,
            description: format!("circle r={radius} {}x{}", times.len(), angles.len()),
        }
    }

    /// Points `(t, x, 0)` on the lower face of a slab in three dimensions.
    pub fn slab_face(times: &[f64], xs: &[f64]) -> Self {
        let mut pts = Vec::new();
        for &t in times {
            for &x in xs {
                pts.push(vec![t, x, 0.0]);
            }
        }
        Self {
            points: pts,
            description: format!("slab face {}x{}", times.len(), xs.len()),
        }
    }

    pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![0.5 * (a + b)];
        }
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    }
}

/// Direction sets attached to each grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ConeParams {
    /// `v = e0 + (1 − tilt)(−cos ψ ν + sin ψ e1)` in the boundary frame:
    /// `tilt = 0` is lightlike, `tilt > 0` timelike and inward for `|ψ| < π/2`.
    Frame { tilts: Vec<f64>, angles: Vec<f64> },
    /// The same coordinate vectors at every grid point.
    Explicit { directions: Vec<Vec<f64>> },
}

impl ConeParams {
    pub fn max_tilt(&self) -> f64 {
        match self {
            ConeParams::Frame { tilts, .. } => tilts.iter().copied().fold(0.0, f64::max),
            ConeParams::Explicit { .. } => 0.0,
        }
    }
}

/// Direction `e0 + (1 − tilt)(−cos ψ ν + sin ψ e1)` at a boundary point.
pub fn frame_direction(
    metric: &ChartMetric,
    domain: &DomainSpec,
    x: &DVector<f64>,
    tilt: f64,
    angle: f64,
) -> Result<DVector<f64>> {
    let f = frame_at(metric, domain, x)?;
    let e0 = &f.tangent_basis[0];
    let e1 = f.tangent_basis.get(1).cloned().unwrap_or_else(|| DVector::zeros(x.len()));
    Ok(e0 + (&f.outward_normal * (-angle.cos()) + e1 * angle.sin()) * (1.0 - tilt))
}

pub fn cone_directions(
    metric: &ChartMetric,
    domain: &DomainSpec,
    x: &DVector<f64>,
    cone: &ConeParams,
) -> Result<Vec<DVector<f64>>> {
    match cone {
        ConeParams::Frame { tilts, angles } => {
            let mut out = Vec::with_capacity(tilts.len() * angles.len());
            for &t in tilts {
                for &a in angles {
                    out.push(frame_direction(metric, domain, x, t, a)?);
                }
            }
            Ok(out)
        }
        ConeParams::Explicit { directions } => Ok(directions.iter().map(|d| DVector::from_column_slice(d)).collect()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub grid: BoundaryGrid,
    pub cone: ConeParams,
    pub kind: ScatteringKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableFailure {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringTable {
    pub samples: Vec<ScatteringSample>,
    pub grid_meta: Option<GridMeta>,
    pub failures: Vec<TableFailure>,
    pub kind: ScatteringKind,
}

impl ScatteringTable {
    pub fn new(kind: ScatteringKind) -> Self {
        Self {
            samples: Vec::new(),
            grid_meta: None,
            failures: Vec::new(),
            kind,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Nearest sample by Euclidean distance of `(x, v)` keys.
    pub fn nearest(&self, x: &DVector<f64>, v: &DVector<f64>) -> Option<(usize, f64)> {
        self.samples
            .iter()
            .enumerate()
            .map(|(i, s)| (i, key_distance(&s.inbound, x, v)))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
    }

    /// Whether two samples share an inbound key within `tol`.
    pub fn has_duplicate_keys(&self, tol: f64) -> bool {
        for (i, a) in self.samples.iter().enumerate() {
            for b in &self.samples[i + 1..] {
                if key_distance(&a.inbound, &b.inbound.base, &b.inbound.vec) < tol {
                    return true;
                }
            }
        }
        false
    }

    pub fn to_csv(&self) -> String {
        let n = self.samples.first().map(|s| s.inbound.base.len()).unwrap_or(0);
        let mut out = csv_row(
            indexed("x", n)
                .chain(indexed("v", n))
                .chain(indexed("y", n))
                .chain(indexed("w", n))
                .chain(["tau", "length", "kind", "event_count", "provenance"].map(String::from)),
        );
        for s in &self.samples {
            out.push_str(&csv_row(
                floats(s.inbound.base.iter())
                    .chain(floats(s.inbound.vec.iter()))
                    .chain(floats(s.outbound.base.iter()))
                    .chain(floats(s.outbound.vec.iter()))
                    .chain(floats([s.tau, s.length].iter()))
                    .chain([
                        s.kind.as_str().to_string(),
                        s.event_count.to_string(),
                        s.provenance.as_str().to_string(),
                    ]),
            ));
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        let samples: Vec<serde_json::Value> = self
            .samples
            .iter()
            .map(|s| {
                serde_json::json!({
                    "x": s.inbound.base.as_slice(),
                    "v": s.inbound.vec.as_slice(),
                    "y": s.outbound.base.as_slice(),
                    "w": s.outbound.vec.as_slice(),
                    "tau": s.tau,
                    "length": s.length,
                    "kind": s.kind.as_str(),
                    "event_count": s.event_count,
                    "provenance": s.provenance.as_str(),
                })
            })
            .collect();
        serde_json::json!({
            "kind": self.kind.as_str(),
            "grid_meta": self.grid_meta,
            "samples": samples,
            "failures": self.failures,
        })
    }
}

pub fn key_distance(key: &TangentVec, x: &DVector<f64>, v: &DVector<f64>) -> f64 {
    ((&key.base - x).norm_squared() + (&key.vec - v).norm_squared()).sqrt()
}

/// Scatters every listed inbound state; per-state failures are recorded.
pub fn scatter_states(
    metric: &ChartMetric,
    domain: &DomainSpec,
    states: &[(DVector<f64>, DVector<f64>)],
    kind: ScatteringKind,
    numerics: &Numerics,
) -> ScatteringTable {
    let results: Vec<Result<ScatteringSample>> = states
        .par_iter()
        .map(|(x, v)| scatter(metric, domain, x, v, kind, numerics))
        .collect();
    let mut table = ScatteringTable::new(kind);
    for ((x, v), r) in states.iter().zip(results) {
        match r {
            Ok(s) => table.samples.push(s),
            Err(e) => table.failures.push(TableFailure {
                x: x.iter().copied().collect(),
                v: v.iter().copied().collect(),
                error: e.to_string(),
            }),
        }
    }
    table
}

pub fn build_scattering_table(
    metric: &ChartMetric,
    domain: &DomainSpec,
    grid: &BoundaryGrid,
    cone: &ConeParams,
    kind: ScatteringKind,
    numerics: &Numerics,
) -> Result<ScatteringTable> {
    let mut states = Vec::new();
    for p in &grid.points {
        let x = DVector::from_column_slice(p);
        for v in cone_directions(metric, domain, &x, cone)? {
            states.push((x.clone(), v));
        }
    }
    let mut table = scatter_states(metric, domain, &states, kind, numerics);
    table.grid_meta = Some(GridMeta {
        grid: grid.clone(),
        cone: cone.clone(),
        kind,
    });
    Ok(table)
}

/// Re-traces the widest cone direction at every grid point and checks that it
/// leaves `M` within `t_max`; also enforces `max tilt ≤ cone_width`.
pub fn validate_cone(
    metric: &ChartMetric,
    domain: &DomainSpec,
    grid: &BoundaryGrid,
    cone: &ConeParams,
    numerics: &Numerics,
) -> Result<()> {
    if cone.max_tilt() > numerics.cone_width {
        return Err(Error::InvalidParameter(format!(
            "cone tilt {} exceeds cone_width {}",
            cone.max_tilt(),
            numerics.cone_width
        )));
    }
    if let ConeParams::Frame { tilts, angles } = cone {
        let tilt = tilts.iter().copied().fold(0.0, f64::max);
        for p in &grid.points {
            let x = DVector::from_column_slice(p);
            for &a in angles {
                let v = frame_direction(metric, domain, &x, tilt, a)?;
                scatter(metric, domain, &x, &v, ScatteringKind::Complete, numerics)?;
            }
        }
    }
    Ok(())
}

/// A scattering table with optional access to the generating metric.
///
/// With an oracle, queries that miss the table are answered by tracing
/// (self-consistency mode); without one, only nearest-key lookup is allowed.
#[derive(Debug, Clone)]
pub struct LensTable {
    pub table: ScatteringTable,
    pub oracle: Option<(ChartMetric, DomainSpec)>,
    pub numerics: Numerics,
    /// Maximal key distance accepted for a table hit.
    pub key_tol: f64,
}

impl LensTable {
    pub fn new(table: ScatteringTable, numerics: Numerics) -> Self {
        Self {
            table,
            oracle: None,
            numerics,
            key_tol: 1e-9,
        }
    }

    pub fn with_oracle(mut self, metric: ChartMetric, domain: DomainSpec) -> Self {
        self.oracle = Some((metric, domain));
        self
    }

    pub fn kind(&self) -> ScatteringKind {
        self.table.kind
    }

    pub fn query(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<ScatteringSample> {
        let nearest = self.table.nearest(x, v);
        if let Some((i, d)) = nearest {
            if d <= self.key_tol {
                return Ok(self.table.samples[i].clone());
            }
        }
        match &self.oracle {
            Some((m, d)) => scatter(m, d, x, v, self.table.kind, &self.numerics),
            None => Err(Error::TableTooSparse {
                nearest: nearest.map(|n| n.1).unwrap_or(f64::INFINITY),
                required: self.key_tol,
            }),
        }
    }
}

impl LensTable {
    /// Sample whose outbound state matches `(y, w)` within `key_tol`.
    pub fn inverse(&self, y: &DVector<f64>, w: &DVector<f64>) -> Option<&ScatteringSample> {
        self.table
            .samples
            .iter()
            .map(|s| (s, key_distance(&s.outbound, y, w)))
            .filter(|(_, d)| *d <= self.key_tol)
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
            .map(|(s, _)| s)
    }
}

pub fn with_provenance(mut table: ScatteringTable, p: Provenance) -> ScatteringTable {
    for s in &mut table.samples {
        s.provenance = p;
    }
    table
}
