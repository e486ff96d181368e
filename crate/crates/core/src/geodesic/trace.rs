//! Geodesic tracing with boundary event detection.
//!
//! Each accepted integration step is split into four sub-intervals whose end
//! states are recomputed by fresh Runge–Kutta steps from the step start. Sign
//! changes of `φ` bracket crossings; sign changes of `dφ(γ̇)` bracket extrema
//! of `φ`, which reveal grazing touches and pairs of crossings hidden inside a
//! single sub-interval. Roots are refined in time to near machine precision.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::ode::{rk_step, Advance, Step, Stepper};
use crate::error::{Error, Result};
use crate::metric::{ChartMetric, DomainSpec};
use crate::metric::domain::ScalarFn;
use crate::numerics::Numerics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Enter,
    Exit,
    Tangential,
}

/// Which way `φ` changes sign at an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Crossing {
    Ascending,
    Descending,
    /// `φ` touches zero without changing sign.
    Touch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryEvent {
    pub t: f64,
    pub point: Vec<f64>,
    pub velocity: Vec<f64>,
    pub kind: EventKind,
    pub transversality: f64,
    #[serde(skip)]
    pub crossing: Option<Crossing>,
}

impl BoundaryEvent {
    pub fn x(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.point)
    }

    pub fn v(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.velocity)
    }

    pub fn leaves(&self) -> bool {
        self.crossing == Some(Crossing::Descending)
    }
}

/// Crossing of an auxiliary level function.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxEvent {
    pub index: usize,
    pub t: f64,
    pub x: DVector<f64>,
    pub v: DVector<f64>,
    pub crossing: Crossing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ReachedTMax,
    LeftChart,
    EventStop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSample {
    pub t: f64,
    pub x: DVector<f64>,
    pub v: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicTrace {
    pub samples: Vec<TraceSample>,
    pub energy: f64,
    pub events: Vec<BoundaryEvent>,
    pub aux_events: Vec<AuxEvent>,
    pub termination: Termination,
}

impl GeodesicTrace {
    pub fn last(&self) -> &TraceSample {
        self.samples.last().expect("trace has at least one sample")
    }

    pub fn max_energy_drift(&self, metric: &ChartMetric) -> f64 {
        self.samples
            .iter()
            .map(|s| (metric.norm_sq(&s.x, &s.v) - self.energy).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopRule {
    Never,
    FirstEvent,
    /// Stop once the geodesic has left `M`, confirmed over the exit window.
    LeaveDomain,
    /// Like `LeaveDomain`, and also stop at the first auxiliary crossing.
    LeaveDomainOrAux,
}

pub fn geodesic_rhs(metric: &ChartMetric) -> impl Fn(&DVector<f64>) -> Option<DVector<f64>> + '_ {
    let n = metric.dim();
    move |y: &DVector<f64>| {
        let x = y.rows(0, n).into_owned();
        if !metric.in_chart(&x) {
            return None;
        }
        let v = y.rows(n, n).into_owned();
        let a = metric.acceleration(&x, &v)?;
        if !a.iter().all(|c| c.is_finite()) {
            return None;
        }
        let mut out = DVector::zeros(2 * n);
        out.rows_mut(0, n).copy_from(&v);
        out.rows_mut(n, n).copy_from(&a);
        Some(out)
    }
}

fn split(y: &DVector<f64>, n: usize) -> (DVector<f64>, DVector<f64>) {
    (y.rows(0, n).into_owned(), y.rows(n, n).into_owned())
}

fn join(x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    let n = x.len();
    let mut y = DVector::zeros(2 * n);
    y.rows_mut(0, n).copy_from(x);
    y.rows_mut(n, n).copy_from(v);
    y
}

/// Illinois-modified regula falsi on a bracketing interval.
pub fn illinois<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut fa: f64, mut b: f64, mut fb: f64) -> f64 {
    let mut side = 0i32;
    for _ in 0..200 {
        if (b - a).abs() <= 4.0 * f64::EPSILON * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        let mut c = (a * fb - b * fa) / (fb - fa);
        if !(c > a.min(b) && c < a.max(b)) {
            c = 0.5 * (a + b);
        }
        let fc = f(c);
        if fc == 0.0 {
            return c;
        }
        if fc.signum() == fb.signum() {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    if fa.abs() < fb.abs() {
        a
    } else {
        b
    }
}

/// Incremental tracer exposing each accepted step with its events.
pub struct Tracer<'a> {
    metric: &'a ChartMetric,
    domain: Option<&'a DomainSpec>,
    aux: Vec<ScalarFn>,
    numerics: Numerics,
    n: usize,
    t_guard: f64,
    /// Tangential events this close to a boundary start are the start itself.
    start_merge: f64,
    pub window: f64,
    pub trace: GeodesicTrace,
}

struct Node {
    t: f64,
    y: DVector<f64>,
    phi: f64,
    slope: f64,
}

impl<'a> Tracer<'a> {
    pub fn new(
        metric: &'a ChartMetric,
        domain: Option<&'a DomainSpec>,
        x0: &DVector<f64>,
        v0: &DVector<f64>,
        numerics: &Numerics,
    ) -> Result<Self> {
        metric.eval(x0)?;
        let vn = v0.norm().max(f64::MIN_POSITIVE);
        let on_boundary = domain
            .map(|d| d.phi(x0).abs() < 10.0 * numerics.event_tol)
            .unwrap_or(false);
        let t_guard = if on_boundary { 1e-8 / vn } else { 0.0 };
        Ok(Self {
            metric,
            domain,
            aux: Vec::new(),
            numerics: *numerics,
            n: metric.dim(),
            t_guard,
            start_merge: if on_boundary { 1e-6 / vn } else { 0.0 },
            window: 10.0 * numerics.event_tol.sqrt() / vn,
            trace: GeodesicTrace {
                samples: vec![TraceSample {
                    t: 0.0,
                    x: x0.clone(),
                    v: v0.clone(),
                }],
                energy: metric.norm_sq(x0, v0),
                events: Vec::new(),
                aux_events: Vec::new(),
                termination: Termination::ReachedTMax,
            },
        })
    }

    pub fn with_aux(mut self, f: ScalarFn) -> Self {
        self.aux.push(f);
        self
    }

    fn node(&self, t: f64, y: DVector<f64>) -> Node {
        let (x, v) = split(&y, self.n);
        let (phi, slope) = match self.domain {
            Some(d) => (d.phi(&x), d.dphi_along(&x, &v)),
            None => (1.0, 0.0),
        };
        Node { t, y, phi, slope }
    }

    fn event_at(&self, t: f64, y: &DVector<f64>, crossing: Option<Crossing>) -> BoundaryEvent {
        let (x, v) = split(y, self.n);
        let d = self.domain.expect("events need a domain");
        let tr = d.transversality(&x, &v);
        let kind = if tr.abs() <= self.numerics.tangent_threshold {
            EventKind::Tangential
        } else if tr > 0.0 {
            EventKind::Enter
        } else {
            EventKind::Exit
        };
        BoundaryEvent {
            t,
            point: x.iter().copied().collect(),
            velocity: v.iter().copied().collect(),
            kind,
            transversality: tr,
            crossing,
        }
    }

    /// Runs the whole trace under the given stop rule.
    pub fn run(mut self, t_max: f64, stop: StopRule) -> Result<GeodesicTrace> {
        let rhs = geodesic_rhs(self.metric);
        let y0 = join(&self.trace.samples[0].x, &self.trace.samples[0].v);
        let vn = self.trace.samples[0].v.norm().max(f64::MIN_POSITIVE);
        let h0 = (1e-2 / vn).min(t_max);
        let Some(mut stepper) = Stepper::new(&rhs, y0, h0, self.numerics.ode_tol) else {
            return Err(Error::OutOfChart {
                point: self.trace.samples[0].x.iter().copied().collect(),
            });
        };
        let mut pending_exit: Option<f64> = None;
        while stepper.t < t_max {
            let step = match stepper.advance(t_max)? {
                Advance::Accepted(s) => s,
                Advance::Blocked => {
                    self.trace.termination = Termination::LeftChart;
                    return Ok(self.trace);
                }
            };
            let before = self.trace.events.len();
            let aux_before = self.trace.aux_events.len();
            self.scan_step(&rhs, &step)?;
            let (x1, v1) = split(&step.y1, self.n);
            self.trace.samples.push(TraceSample { t: step.t1, x: x1, v: v1 });
            if self.trace.events.len() > self.numerics.max_events {
                return Err(Error::EventOverflow {
                    max: self.numerics.max_events,
                });
            }
            match stop {
                StopRule::Never => {}
                StopRule::FirstEvent => {
                    if self.trace.events.len() > before {
                        self.trace.termination = Termination::EventStop;
                        return Ok(self.trace);
                    }
                }
                StopRule::LeaveDomain | StopRule::LeaveDomainOrAux => {
                    if stop == StopRule::LeaveDomainOrAux && self.trace.aux_events.len() > aux_before {
                        let ta = self.trace.aux_events[aux_before].t;
                        let exit_first = pending_exit.map(|te| te < ta).unwrap_or(false)
                            || self.trace.events[before..].iter().any(|e| e.leaves() && e.t < ta);
                        if !exit_first {
                            self.trace.termination = Termination::EventStop;
                            return Ok(self.trace);
                        }
                    }
                    for e in &self.trace.events[before..] {
                        match e.crossing {
                            Some(Crossing::Descending) => {
                                if pending_exit.is_none() {
                                    pending_exit = Some(e.t);
                                }
                            }
                            Some(Crossing::Ascending) => {
                                if let Some(te) = pending_exit {
                                    if e.t <= te + self.window {
                                        pending_exit = None;
                                    }
                                }
                            }
                            _ => {}
                        }
                    }
                    if let Some(te) = pending_exit {
                        if step.t1 >= te + self.window {
                            self.trace.termination = Termination::EventStop;
                            return Ok(self.trace);
                        }
                    }
                }
            }
        }
        if pending_exit.is_some() {
            self.trace.termination = Termination::EventStop;
        }
        Ok(self.trace)
    }

    fn scan_step<F>(&mut self, rhs: &F, step: &Step) -> Result<()>
    where
        F: Fn(&DVector<f64>) -> Option<DVector<f64>>,
    {
        if self.domain.is_none() && self.aux.is_empty() {
            return Ok(());
        }
        let h = step.h();
        let state = |t: f64| -> DVector<f64> {
            if t <= step.t0 {
                step.y0.clone()
            } else if t >= step.t1 {
                step.y1.clone()
            } else {
                rk_step(rhs, &step.y0, &step.f0, t - step.t0)
                    .map(|tr| tr.y)
                    .unwrap_or_else(|| step.dense(t))
            }
        };
        let nodes: Vec<Node> = (0..=4)
            .map(|i| {
                let t = if i == 4 { step.t1 } else { step.t0 + h * (i as f64) / 4.0 };
                self.node(t, if i == 0 { step.y0.clone() } else if i == 4 { step.y1.clone() } else { state(t) })
            })
            .collect();

        if let Some(domain) = self.domain {
            let tol = self.numerics.event_tol;
            if nodes.iter().all(|nd| nd.phi.abs() < tol) && h > self.t_guard.max(1e-9) && step.t1 > self.t_guard {
                return Err(Error::BoundaryRun { t: step.t0 });
            }
            let phi_at = |t: f64| -> f64 {
                let (x, _) = split(&state(t), self.n);
                domain.phi(&x)
            };
            let slope_at = |t: f64| -> f64 {
                let (x, v) = split(&state(t), self.n);
                domain.dphi_along(&x, &v)
            };
            let mut found: Vec<BoundaryEvent> = Vec::new();
            for w in nodes.windows(2) {
                let (a, b) = (&w[0], &w[1]);
                if b.phi == 0.0 {
                    found.push(self.event_at(b.t, &b.y, Some(if a.phi > 0.0 { Crossing::Descending } else { Crossing::Ascending })));
                    continue;
                }
                if a.phi * b.phi < 0.0 {
                    let t = illinois(phi_at, a.t, a.phi, b.t, b.phi);
                    let c = if a.phi > 0.0 { Crossing::Descending } else { Crossing::Ascending };
                    found.push(self.event_at(t, &state(t), Some(c)));
                } else if a.slope * b.slope < 0.0 {
                    let tm = illinois(slope_at, a.t, a.slope, b.t, b.slope);
                    let ym = state(tm);
                    let pm = self.node(tm, ym.clone()).phi;
                    if pm * a.phi < 0.0 {
                        let t1 = illinois(phi_at, a.t, a.phi, tm, pm);
                        let t2 = illinois(phi_at, tm, pm, b.t, b.phi);
                        let e1 = self.event_at(t1, &state(t1), Some(if a.phi > 0.0 { Crossing::Descending } else { Crossing::Ascending }));
                        let e2 = self.event_at(t2, &state(t2), Some(if a.phi > 0.0 { Crossing::Ascending } else { Crossing::Descending }));
                        let close = (t2 - t1) * self.trace.samples[0].v.norm() < 1e-6;
                        if close && e1.kind == EventKind::Tangential && e2.kind == EventKind::Tangential {
                            found.push(self.event_at(tm, &ym, Some(Crossing::Touch)));
                        } else {
                            found.push(e1);
                            found.push(e2);
                        }
                    } else if pm.abs() < 10.0 * tol {
                        found.push(self.event_at(tm, &ym, Some(Crossing::Touch)));
                    }
                }
            }
            for e in found {
                if e.t < self.t_guard || (e.kind == EventKind::Tangential && e.t < self.start_merge) {
                    continue;
                }
                if let Some(last) = self.trace.events.last() {
                    if e.t <= last.t + 1e-12 * (1.0 + last.t.abs()) {
                        continue;
                    }
                }
                self.trace.events.push(e);
            }
        }

        for (idx, f) in self.aux.iter().enumerate() {
            let val_at = |t: f64| -> f64 {
                let (x, _) = split(&state(t), self.n);
                f(&x)
            };
            for w in nodes.windows(2) {
                let (a, b) = (&w[0], &w[1]);
                let fa = f(&split(&a.y, self.n).0);
                let fb = f(&split(&b.y, self.n).0);
                if fa * fb < 0.0 {
                    let t = illinois(val_at, a.t, fa, b.t, fb);
                    if t < self.t_guard {
                        continue;
                    }
                    let (x, v) = split(&state(t), self.n);
                    self.trace.aux_events.push(AuxEvent {
                        index: idx,
                        t,
                        x,
                        v,
                        crossing: if fa > 0.0 { Crossing::Descending } else { Crossing::Ascending },
                    });
                }
            }
        }
        Ok(())
    }
}

/// Integrates the geodesic equation without a domain.
pub fn integrate_geodesic(
    metric: &ChartMetric,
    x0: &DVector<f64>,
    v0: &DVector<f64>,
    t_max: f64,
    numerics: &Numerics,
) -> Result<GeodesicTrace> {
    if !(t_max > 0.0) {
        return Err(Error::Precondition("t_max must be positive".into()));
    }
    Tracer::new(metric, None, x0, v0, numerics)?.run(t_max, StopRule::Never)
}

/// Records every boundary event in `(0, t_max]`.
pub fn trace_through_domain(
    metric: &ChartMetric,
    domain: &DomainSpec,
    x0: &DVector<f64>,
    v0: &DVector<f64>,
    t_max: f64,
    numerics: &Numerics,
) -> Result<GeodesicTrace> {
    trace_with(metric, domain, x0, v0, t_max, numerics, StopRule::Never)
}

pub fn trace_with(
    metric: &ChartMetric,
    domain: &DomainSpec,
    x0: &DVector<f64>,
    v0: &DVector<f64>,
    t_max: f64,
    numerics: &Numerics,
    stop: StopRule,
) -> Result<GeodesicTrace> {
    if !(t_max > 0.0) {
        return Err(Error::Precondition("t_max must be positive".into()));
    }
    Tracer::new(metric, Some(domain), x0, v0, numerics)?.run(t_max, stop)
}

/// Geodesic state after affine time `t ≥ 0`.
pub fn flow(
    metric: &ChartMetric,
    x0: &DVector<f64>,
    v0: &DVector<f64>,
    t: f64,
    numerics: &Numerics,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if t == 0.0 {
        return Ok((x0.clone(), v0.clone()));
    }
    let (v, tt) = if t < 0.0 { (-v0, -t) } else { (v0.clone(), t) };
    let rhs = geodesic_rhs(metric);
    let y = super::ode::integrate_to(&rhs, join(x0, &v), tt, numerics.ode_tol)?.ok_or_else(|| {
        Error::OutOfChart {
            point: x0.iter().copied().collect(),
        }
    })?;
    let (x1, v1) = split(&y, metric.dim());
    Ok(if t < 0.0 { (x1, -v1) } else { (x1, v1) })
}

/// Exponential map `exp_x(v)`.
pub fn exp_map(metric: &ChartMetric, x: &DVector<f64>, v: &DVector<f64>, numerics: &Numerics) -> Result<DVector<f64>> {
    Ok(flow(metric, x, v, 1.0, numerics)?.0)
}
