//! Interior and complete scattering relations of single boundary states.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodesic::{flow, trace_with, BoundaryEvent, Crossing, GeodesicTrace, StopRule, Termination};
use crate::metric::{ChartMetric, DomainSpec, TangentVec};
use crate::numerics::Numerics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScatteringKind {
    Interior,
    Complete,
}

impl ScatteringKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScatteringKind::Interior => "interior",
            ScatteringKind::Complete => "complete",
        }
    }
}

/// How a sample was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Direct,
    /// Interior data derived from a complete table.
    FromComplete,
    /// Travel time obtained from the first-variation identity.
    FromVariation,
    /// Complete data derived from an interior table and the collar metric.
    FromInterior,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Direct => "direct",
            Provenance::FromComplete => "from_complete",
            Provenance::FromVariation => "from_variation",
            Provenance::FromInterior => "from_interior",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringSample {
    pub inbound: TangentVec,
    pub outbound: TangentVec,
    pub tau: f64,
    pub length: f64,
    pub kind: ScatteringKind,
    pub event_count: usize,
    pub provenance: Provenance,
}

impl ScatteringSample {
    pub fn new(
        metric: &ChartMetric,
        inbound: TangentVec,
        outbound: TangentVec,
        tau: f64,
        kind: ScatteringKind,
        event_count: usize,
    ) -> Self {
        let h = metric.norm_sq(&inbound.base, &inbound.vec);
        Self {
            length: tau * h.abs().sqrt(),
            inbound,
            outbound,
            tau,
            kind,
            event_count,
            provenance: Provenance::Direct,
        }
    }
}

fn on_boundary(domain: &DomainSpec, x: &DVector<f64>, numerics: &Numerics) -> bool {
    domain.phi(x).abs() < 10.0 * numerics.event_tol
}

/// Sign of `φ` shortly after leaving a boundary point along `v`.
pub fn probe_sign(
    metric: &ChartMetric,
    domain: &DomainSpec,
    x: &DVector<f64>,
    v: &DVector<f64>,
    numerics: &Numerics,
) -> Result<f64> {
    let dt = numerics.probe_dt / v.norm().max(f64::MIN_POSITIVE);
    let (xp, _) = flow(metric, x, v, dt, numerics)?;
    Ok(domain.phi(&xp))
}

/// Direction class of a boundary start: `1` inward, `0` tangential, `-1` outward.
pub fn start_class(domain: &DomainSpec, x: &DVector<f64>, v: &DVector<f64>, numerics: &Numerics) -> i32 {
    let tr = domain.transversality(x, v);
    if tr.abs() <= numerics.tangent_threshold {
        0
    } else if tr > 0.0 {
        1
    } else {
        -1
    }
}

fn sample_from_event(
    metric: &ChartMetric,
    x: &DVector<f64>,
    v: &DVector<f64>,
    e: &BoundaryEvent,
    kind: ScatteringKind,
    event_count: usize,
) -> ScatteringSample {
    ScatteringSample::new(
        metric,
        TangentVec::new(metric, x.clone(), v.clone()),
        TangentVec::new(metric, e.x(), e.v()),
        e.t,
        kind,
        event_count,
    )
}

/// First return to the boundary.
pub fn interior_scattering(
    metric: &ChartMetric,
    domain: &DomainSpec,
    x: &DVector<f64>,
    v: &DVector<f64>,
    numerics: &Numerics,
) -> Result<ScatteringSample> {
    if !on_boundary(domain, x, numerics) {
        return Err(Error::Precondition("inbound base point is not on the boundary".into()));
    }
    match start_class(domain, x, v, numerics) {
        1 => {}
        0 => {
            if probe_sign(metric, domain, x, v, numerics)? <= 0.0 {
                return Err(Error::ZeroMeasure);
            }
        }
        _ => return Err(Error::ZeroMeasure),
    }
    let trace = trace_with(metric, domain, x, v, numerics.t_max, numerics, StopRule::FirstEvent)?;
    match trace.events.first() {
        Some(e) => Ok(sample_from_event(metric, x, v, e, ScatteringKind::Interior, 1)),
        None => Err(unterminated(&trace, x, numerics)),
    }
}

fn unterminated(trace: &GeodesicTrace, x: &DVector<f64>, numerics: &Numerics) -> Error {
    match trace.termination {
        Termination::LeftChart => Error::OutOfChart {
            point: x.iter().copied().collect(),
        },
        _ => Error::NonTerminating { t_max: numerics.t_max },
    }
}

/// Index of the event at which the trace leaves `M` for good: the first
/// descending crossing not followed by a re-entry within `window`.
pub fn final_exit_index(events: &[BoundaryEvent], window: f64) -> Option<usize> {
    for (i, e) in events.iter().enumerate() {
        if e.crossing != Some(Crossing::Descending) {
            continue;
        }
        let reenters = events[i + 1..]
            .iter()
            .take_while(|f| f.t <= e.t + window)
            .any(|f| f.crossing == Some(Crossing::Ascending));
        if !reenters {
            return Some(i);
        }
    }
    None
}

/// Boundary states inside `M` that the geodesic passes through: tangential
/// touches and re-entries.
pub fn visits_before(events: &[BoundaryEvent]) -> usize {
    events
        .iter()
        .filter(|e| matches!(e.crossing, Some(Crossing::Touch) | Some(Crossing::Ascending)))
        .count()
}

/// State at which the geodesic leaves `M`, grazes traversed. The event count
/// is the number of boundary states visited up to and including the exit.
pub fn complete_scattering(
    metric: &ChartMetric,
    domain: &DomainSpec,
    x: &DVector<f64>,
    v: &DVector<f64>,
    numerics: &Numerics,
) -> Result<ScatteringSample> {
    if !on_boundary(domain, x, numerics) {
        return Err(Error::Precondition("inbound base point is not on the boundary".into()));
    }
    let start = TangentVec::new(metric, x.clone(), v.clone());
    match start_class(domain, x, v, numerics) {
        1 => {}
        0 => {
            if probe_sign(metric, domain, x, v, numerics)? <= 0.0 {
                return Ok(ScatteringSample::new(metric, start.clone(), start, 0.0, ScatteringKind::Complete, 0));
            }
        }
        _ => {
            return Err(Error::Precondition(
                "complete scattering needs an inward or tangential start".into(),
            ))
        }
    }
    let trace = trace_with(metric, domain, x, v, numerics.t_max, numerics, StopRule::LeaveDomain)?;
    let vn = v.norm().max(f64::MIN_POSITIVE);
    let window = 10.0 * numerics.event_tol.sqrt() / vn;
    match final_exit_index(&trace.events, window) {
        Some(i) => Ok(sample_from_event(
            metric,
            x,
            v,
            &trace.events[i],
            ScatteringKind::Complete,
            1 + visits_before(&trace.events[..i]),
        )),
        None => Err(unterminated(&trace, x, numerics)),
    }
}

pub fn scatter(
    metric: &ChartMetric,
    domain: &DomainSpec,
    x: &DVector<f64>,
    v: &DVector<f64>,
    kind: ScatteringKind,
    numerics: &Numerics,
) -> Result<ScatteringSample> {
    match kind {
        ScatteringKind::Interior => interior_scattering(metric, domain, x, v, numerics),
        ScatteringKind::Complete => complete_scattering(metric, domain, x, v, numerics),
    }
}
