//! Lightlike travel times through an unknown region `K` from exterior data.
//!
//! Only the metric outside `K` and the time separation `d` are used. Each
//! crossing of `K` is resolved in two steps: the exit point on `∂K` is where
//! the light cones of two points `z1' ≺ z1` on the incoming geodesic touch,
//! and the exit velocity comes from gradients of `d` at that point.

use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::gradient::gradient_limits;
use super::timesep::TimeSeparationField;
use crate::error::{Error, Result};
use crate::geodesic::shoot::golden_min;
use crate::geodesic::{flow, Crossing, StopRule, Tracer};
use crate::metric::domain::ScalarFn;

/// A union of spatial disks, `K = ⋃ {|x̄ − c| ≤ r}`, extended in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiskObstacle {
    pub disks: Vec<Disk>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub center: [f64; 2],
    pub radius: f64,
}

impl DiskObstacle {
    pub fn new(disks: Vec<Disk>) -> Self {
        Self { disks }
    }

    fn disk_level(d: &Disk, x: &DVector<f64>) -> f64 {
        let dx = x[1] - d.center[0];
        let dy = x[2] - d.center[1];
        (dx * dx + dy * dy - d.radius * d.radius) / (2.0 * d.radius)
    }

    /// Positive outside `K`, negative inside.
    pub fn level(&self, x: &DVector<f64>) -> f64 {
        self.disks.iter().map(|d| Self::disk_level(d, x)).fold(f64::INFINITY, f64::min)
    }

    pub fn level_fn(&self) -> ScalarFn {
        let me = self.clone();
        Arc::new(move |x| me.level(x))
    }

    fn nearest(&self, x: &DVector<f64>) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, d) in self.disks.iter().enumerate() {
            let l = Self::disk_level(d, x).abs();
            if l < best.1 {
                best = (i, l);
            }
        }
        best.0
    }

    fn point(&self, i: usize, t: f64, alpha: f64) -> DVector<f64> {
        let d = &self.disks[i];
        DVector::from_vec(vec![
            t,
            d.center[0] + d.radius * alpha.cos(),
            d.center[1] + d.radius * alpha.sin(),
        ])
    }

    fn angle(&self, i: usize, x: &DVector<f64>) -> f64 {
        let d = &self.disks[i];
        (x[2] - d.center[1]).atan2(x[1] - d.center[0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExteriorParams {
    /// Injectivity scale of the catalog; the convex-neighborhood radius is a
    /// quarter of it.
    pub injectivity_scale: f64,
    /// Upper bound for the convex-neighborhood radius `i0`.
    pub i0_cap: f64,
    /// Threshold above which `d` counts as positive.
    pub d_tol: f64,
    pub scan_points: usize,
    pub gradient_terms: usize,
    pub max_advances: usize,
}

impl Default for ExteriorParams {
    fn default() -> Self {
        Self {
            injectivity_scale: f64::INFINITY,
            i0_cap: 0.2,
            d_tol: 1e-6,
            scan_points: 24,
            gradient_terms: 12,
            max_advances: 16,
        }
    }
}

impl ExteriorParams {
    pub fn i0(&self) -> f64 {
        (0.25 * self.injectivity_scale).min(self.i0_cap)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExteriorStep {
    pub disk: usize,
    /// Parameter at which the geodesic enters `K`, counted from the start.
    pub entry_t: f64,
    pub entry_x: Vec<f64>,
    pub entry_v: Vec<f64>,
    pub exit_t: f64,
    pub exit_x: Vec<f64>,
    pub exit_v: Vec<f64>,
    pub epsilon: f64,
    /// Affine parameter from `z1` to the exit point.
    pub lambda: f64,
    /// Angle between the recovered `u` and the incoming velocity at `z1`.
    pub direction_defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExteriorRun {
    pub start_x: Vec<f64>,
    pub start_v: Vec<f64>,
    pub steps: Vec<ExteriorStep>,
    pub final_x: Vec<f64>,
    pub final_v: Vec<f64>,
    pub total_parameter: f64,
    /// Whether the run ended by leaving the domain; otherwise `t_max` was reached.
    pub left_domain: bool,
}

fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

/// First parameter `t` at which `(t, p̄)` is chronologically after `z`.
fn arrival_time(field: &TimeSeparationField, z: &DVector<f64>, spatial: &DVector<f64>, d_tol: f64) -> Result<f64> {
    let at = |t: f64| {
        let mut p = spatial.clone();
        p[0] = t;
        p
    };
    let mut lo = z[0];
    let mut step = 0.25 * (spatial - z).rows(1, z.len() - 1).norm().max(1e-3);
    let t_cap = z[0] + field.numerics.t_max;
    let mut hi = lo + step;
    while field.d(z, &at(hi))? <= d_tol {
        lo = hi;
        step *= 2.0;
        hi += step;
        if hi > t_cap {
            return Err(Error::Inconclusive("no chronological arrival before t_max".into()));
        }
    }
    while hi - lo > 1e-13 * (1.0 + hi.abs()) {
        let mid = 0.5 * (lo + hi);
        if field.d(z, &at(mid))? > d_tol {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Vertex of the parabola through three equally spaced samples.
fn parabola_vertex(x0: f64, h: f64, fm: f64, f0: f64, fp: f64) -> f64 {
    let denom = fm - 2.0 * f0 + fp;
    if denom <= 0.0 {
        x0
    } else {
        x0 + 0.5 * h * (fm - fp) / denom
    }
}

/// Locates where the geodesic through `z1' ≺ z1` leaves disk `i`.
fn exit_on_disk(
    field: &TimeSeparationField,
    obstacle: &DiskObstacle,
    i: usize,
    z1: &DVector<f64>,
    z1p: &DVector<f64>,
    entry_angle: f64,
    params: &ExteriorParams,
) -> Result<DVector<f64>> {
    let gap = |alpha: f64| -> Result<f64> {
        let p = obstacle.point(i, 0.0, alpha);
        Ok(arrival_time(field, z1, &p, params.d_tol)? - arrival_time(field, z1p, &p, params.d_tol)?)
    };
    let n = params.scan_points.max(8);
    let width = 2.0 * std::f64::consts::PI / n as f64;
    let mut best = (f64::NAN, f64::INFINITY);
    // The entry angle is also a zero of the gap and is excluded.
    for k in 1..n {
        let a = entry_angle + width * k as f64;
        let g = gap(a)?;
        if g < best.1 {
            best = (a, g);
        }
    }
    let mut err = None;
    let (mut alpha, _) = golden_min(
        |a| match gap(a) {
            Ok(g) => g,
            Err(e) => {
                err = Some(e);
                f64::INFINITY
            }
        },
        best.0 - width,
        best.0 + width,
    );
    if let Some(e) = err {
        return Err(e);
    }
    for h in [1e-2, 1e-3] {
        alpha = parabola_vertex(alpha, h, gap(alpha - h)?, gap(alpha)?, gap(alpha + h)?);
    }
    let p = obstacle.point(i, 0.0, alpha);
    let t = arrival_time(field, z1, &p, params.d_tol)?;
    Ok(obstacle.point(i, t, alpha))
}

/// Follows the lightlike geodesic from `(x, v)` through the obstacle using
/// exterior information only, until it leaves the domain.
pub fn exterior_lightlike_traveltime(
    field: &TimeSeparationField,
    obstacle: &DiskObstacle,
    x: &DVector<f64>,
    v: &DVector<f64>,
    params: &ExteriorParams,
) -> Result<ExteriorRun> {
    let metric = &field.metric;
    let num = field.numerics;
    if obstacle.level(x) <= 0.0 {
        return Err(Error::Precondition("start must lie outside the obstacle".into()));
    }
    let i0 = params.i0();
    let mut state = (x.clone(), v.clone());
    let mut elapsed = 0.0;
    let mut steps = Vec::new();
    loop {
        let (sx, sv) = &state;
        let remaining = num.t_max - elapsed;
        if remaining <= 0.0 {
            return Err(Error::NonTerminating { t_max: num.t_max });
        }
        let trace = Tracer::new(metric, field.domain.as_ref(), sx, sv, &num)?
            .with_aux(obstacle.level_fn())
            .run(remaining, StopRule::LeaveDomainOrAux)?;
        let entry = trace
            .aux_events
            .iter()
            .find(|a| a.crossing == Crossing::Descending)
            .cloned();
        let Some(entry) = entry else {
            let leave = trace.events.iter().find(|e| e.leaves());
            let (fx, fv, t, left) = match leave {
                Some(e) => (e.x(), e.v(), e.t, true),
                None => {
                    let last = trace.last();
                    (last.x.clone(), last.v.clone(), last.t, false)
                }
            };
            return Ok(ExteriorRun {
                start_x: to_vec(x),
                start_v: to_vec(v),
                steps,
                final_x: to_vec(&fx),
                final_v: to_vec(&fv),
                total_parameter: elapsed + t,
                left_domain: left,
            });
        };
        if steps.len() >= params.max_advances {
            return Err(Error::NonTermination { steps: steps.len() });
        }
        let speed = entry.v.norm();
        let epsilon = (0.5 * i0 / speed).min(entry.t / 3.0);
        if !(epsilon > 0.0) {
            return Err(Error::Stall("no room before the obstacle for the cone probes".into()));
        }
        let (z1, vz1) = flow(metric, sx, sv, entry.t - epsilon, &num)?;
        let (z1p, _) = flow(metric, sx, sv, entry.t - 2.0 * epsilon, &num)?;
        let disk = obstacle.nearest(&entry.x);
        let y = exit_on_disk(
            field,
            obstacle,
            disk,
            &z1,
            &z1p,
            obstacle.angle(disk, &entry.x),
            params,
        )?;

        let shift = 0.25 * (&y - &z1).norm();
        let approach: Vec<DVector<f64>> = (1..=params.gradient_terms)
            .map(|j| {
                let mut p = y.clone();
                p[0] += shift * 0.5f64.powi(j as i32);
                p
            })
            .collect();
        // The geodesic crosses K, so the sign of u comes from the time
        // orientation instead of an exp round trip.
        let (u, w, _, _) = gradient_limits(field, &z1, &approach)?;
        let u = if metric.is_future(&z1, &u) { u } else { -u };
        let w = if metric.is_future(&y, &w) { w } else { -w };
        let lambda = u.dot(&vz1) / vz1.norm_squared();
        if !(lambda >= epsilon) {
            return Err(Error::Stall(format!(
                "advance {lambda:e} below the certified step {epsilon:e}"
            )));
        }
        let direction_defect = (u.dot(&vz1) / (u.norm() * vz1.norm())).clamp(-1.0, 1.0).acos();
        let exit_v = &w / lambda;
        let entry_t = elapsed + entry.t;
        let exit_t = elapsed + entry.t - epsilon + lambda;
        steps.push(ExteriorStep {
            disk,
            entry_t,
            entry_x: to_vec(&entry.x),
            entry_v: to_vec(&entry.v),
            exit_t,
            exit_x: to_vec(&y),
            exit_v: to_vec(&exit_v),
            epsilon,
            lambda,
            direction_defect,
        });
        // Step off ∂K so the next trace does not report the exit itself.
        let push = 1e-6 / exit_v.norm();
        let pushed = flow(metric, &y, &exit_v, push, &num)?;
        elapsed = exit_t + push;
        state = pushed;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn obstacle_level_is_signed() {
        let k = DiskObstacle::new(vec![
            Disk {
                center: [0.0, 0.0],
                radius: 0.5,
            },
            Disk {
                center: [2.0, 0.0],
                radius: 0.25,
            },
        ]);
        let p = |x: f64, y: f64| DVector::from_vec(vec![0.0, x, y]);
        assert!(k.level(&p(0.0, 0.1)) < 0.0);
        assert!(k.level(&p(2.1, 0.0)) < 0.0);
        assert!(k.level(&p(1.0, 0.0)) > 0.0);
        assert!(k.level(&p(0.5, 0.0)).abs() < 1e-15);
        assert!((k.angle(0, &k.point(0, 1.0, 0.7)) - 0.7).abs() < 1e-14);
    }

    #[test]
    fn parabola_vertex_is_exact_for_quadratics() {
        let f = |x: f64| 3.0 * (x - 0.123).powi(2) + 1.0;
        let v = parabola_vertex(0.1, 0.01, f(0.09), f(0.1), f(0.11));
        assert!((v - 0.123).abs() < 1e-12);
    }
}
