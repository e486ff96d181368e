//! Conversions between interior and complete scattering data.
//!
//! Interior data follows from a complete table by grouping samples that
//! share a final exit. Complete data follows from interior data and the
//! metric on a boundary collar: geodesics are continued through the collar
//! after every tangential return, and a geodesic that grazes the boundary
//! and dives into the deep interior is continued through the limit of
//! interior scattering along transversal approximations. Lightlike travel
//! times are then recovered from the first-variation identity on the
//! exterior side.

use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::family::forward5_vec;
use super::lightlike::null_split;
use crate::error::{Error, Result};
use crate::geodesic::{flow, shoot, Crossing, StopRule, Tracer};
use crate::metric::{frame_at, CausalClass, ChartMetric, DomainSpec, Signature, TangentVec};
use crate::numerics::Numerics;
use crate::scattering::{
    final_exit_index, probe_sign, start_class, visits_before, LensTable, Provenance, ScatteringKind,
    ScatteringSample, ScatteringTable, TableFailure,
};

/// Relative tolerance for matching two final exit states.
pub const EXIT_MATCH_TOL: f64 = 1e-6;

fn state_distance(a: &TangentVec, b: &TangentVec) -> f64 {
    ((&a.base - &b.base).norm_squared() + (&a.vec - &b.vec).norm_squared()).sqrt()
}

fn failure(s: &TangentVec, e: &Error) -> TableFailure {
    TableFailure {
        x: s.base.iter().copied().collect(),
        v: s.vec.iter().copied().collect(),
        error: e.to_string(),
    }
}

/// Interior scattering data from a complete table that is closed under the
/// flow (see [`crate::scattering::flow_closure`]).
///
/// For a sample `(x, v)` with final exit `(y, w)` the interior travel time is
/// `τ(x, v) − τ(z, u)` for the group member `(z, u)` with the largest
/// `τ(z, u) < τ(x, v)`, and `S^in(x, v) = (z, u)`; without such a member the
/// first return is the final exit itself.
pub fn recover_interior_from_complete(table: &ScatteringTable) -> Result<ScatteringTable> {
    if table.kind != ScatteringKind::Complete {
        return Err(Error::Precondition("a complete table is required".into()));
    }
    let samples = &table.samples;
    let mut out = ScatteringTable::new(ScatteringKind::Interior);
    out.grid_meta = table.grid_meta.clone();
    out.failures = table.failures.clone();
    for s in samples {
        if s.tau <= 0.0 {
            out.failures.push(failure(&s.inbound, &Error::ZeroMeasure));
            continue;
        }
        let scale = 1.0 + s.outbound.base.norm() + s.outbound.vec.norm();
        let mut next: Option<&ScatteringSample> = None;
        let mut below = 0usize;
        for o in samples {
            if o.tau < s.tau - 1e-12 * s.tau.max(1.0)
                && state_distance(&o.outbound, &s.outbound) < EXIT_MATCH_TOL * scale
            {
                below += 1;
                if next.map_or(true, |n| o.tau > n.tau) {
                    next = Some(o);
                }
            }
        }
        if below + 1 < s.event_count {
            out.failures.push(failure(&s.inbound, &Error::IncompleteTable(format!("{} of {} boundary states present", below + 1, s.event_count))));
            continue;
        }
        let (outbound, tau) = match next {
            Some(n) => (n.inbound.clone(), s.tau - n.tau),
            None => (s.outbound.clone(), s.tau),
        };
        let mut r = ScatteringSample {
            inbound: s.inbound.clone(),
            outbound,
            tau,
            length: 0.0,
            kind: ScatteringKind::Interior,
            event_count: 1,
            provenance: Provenance::FromComplete,
        };
        r.length = s.length * tau / s.tau;
        out.samples.push(r);
    }
    Ok(out)
}

/// The metric on the collar `{depth < collar_width}` of the boundary and on
/// a thin exterior layer; conversions evaluate it nowhere else.
#[derive(Clone, Copy)]
pub struct Collar<'a> {
    pub metric: &'a ChartMetric,
    pub domain: &'a DomainSpec,
}

impl<'a> Collar<'a> {
    pub fn width(&self) -> f64 {
        self.domain.collar_width
    }
}

/// Settings for the interior-to-complete conversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConversionParams {
    /// Step bound; defaults to half the collar width, floored at `1e−3·t_max`.
    pub delta: Option<f64>,
    /// Number of exterior anchor states for lightlike travel times.
    pub anchors: usize,
    /// Family step `Δ/a²` for the exterior variation.
    pub family_step: f64,
    /// Number of approach directions tried before giving up on a limit.
    pub attempts: usize,
    /// Limit declared once this many successive refinements move less than
    /// `limit_tol`.
    pub limit_moves: usize,
    pub limit_tol: f64,
    pub max_refinements: usize,
    pub seed: u64,
}

impl Default for ConversionParams {
    fn default() -> Self {
        Self {
            delta: None,
            anchors: 32,
            family_step: 1e-3,
            attempts: 4,
            limit_moves: 3,
            limit_tol: 1e-6,
            max_refinements: 28,
            seed: 0,
        }
    }
}

pub fn default_delta(domain: &DomainSpec, numerics: &Numerics) -> f64 {
    (0.5 * domain.collar_width).max(1e-3 * numerics.t_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepCase {
    /// Interior return transversal to the boundary: the geodesic leaves.
    Exit,
    /// Tangential return followed by an exit within the collar.
    CollarExit,
    /// Tangential return followed by a dive out of the collar.
    Limit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    /// Elapsed parameter at the start of the step.
    pub anchor: f64,
    /// Parameter advanced by the step.
    pub progress: f64,
    /// Step bound in force; `Limit` steps advance by at least this much.
    pub delta: f64,
    pub case: StepCase,
    pub refinements: usize,
}

#[derive(Debug, Clone)]
pub struct CompleteRecovery {
    pub sample: ScatteringSample,
    pub steps: Vec<StepLog>,
    /// Travel time accumulated from the interior data.
    pub tau_data: f64,
    /// Travel time from the exterior variation (lightlike inputs).
    pub tau_variation: Option<f64>,
    /// Per-anchor estimates of the exterior variation.
    pub anchor_estimates: Vec<f64>,
    pub max_iterations: usize,
}

struct Step1 {
    exit: TangentVec,
    tau: f64,
    visits: usize,
    steps: Vec<StepLog>,
}

fn collar_tracer<'a>(collar: &Collar<'a>, x: &DVector<f64>, v: &DVector<f64>, numerics: &Numerics) -> Result<Tracer<'a>> {
    let width = collar.width();
    let domain = collar.domain.clone();
    let metric = collar.metric.clone();
    Ok(Tracer::new(collar.metric, Some(collar.domain), x, v, numerics)?
        .with_aux(Arc::new(move |p: &DVector<f64>| width - domain.depth(&metric, p))))
}

/// Richardson tableau for sequences sampled at `s, s/2, s/4, …` with a
/// smooth expansion in `s`.
struct Extrapolator {
    rows: Vec<Vec<DVector<f64>>>,
    order: usize,
}

impl Extrapolator {
    fn new(order: usize) -> Self {
        Self { rows: Vec::new(), order }
    }

    fn push(&mut self, f: DVector<f64>) -> DVector<f64> {
        let mut row = vec![f];
        if let Some(prev) = self.rows.last() {
            for m in 1..=self.order.min(prev.len()) {
                let c = 2f64.powi(m as i32) - 1.0;
                let next = &row[m - 1] + (&row[m - 1] - &prev[m - 1]) / c;
                row.push(next);
            }
        }
        let best = row.last().cloned().unwrap_or_else(|| DVector::zeros(0));
        self.rows.push(row);
        best
    }
}

struct Limit {
    state: TangentVec,
    tau: f64,
    refinements: usize,
}

/// Continuation of the grazing state `(z, u)` past the deep interior: the
/// limit of interior scattering along exterior starts `p_s → z` whose
/// geodesics pass through `flow(z, u, δ)`.
fn limit_from_touch(
    table: &LensTable,
    collar: &Collar,
    z: &DVector<f64>,
    u: &DVector<f64>,
    delta: f64,
    params: &ConversionParams,
    numerics: &Numerics,
) -> Result<Limit> {
    let metric = collar.metric;
    let domain = collar.domain;
    let (target, _) = flow(metric, z, u, delta, numerics)?;
    let frame = frame_at(metric, domain, z)?;
    let un = u.norm();
    let timelike = if metric.signature() == Signature::Lorentzian {
        frame.tangent_basis[0].clone() * un
    } else {
        DVector::zeros(u.len())
    };
    let nu = &frame.outward_normal * un;
    let mut last_err = Error::Convergence("no approach attempt".into());
    for attempt in 0..params.attempts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(attempt as u64));
        let (b, c) = if attempt == 0 {
            (1.0, 1.0)
        } else {
            (rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0))
        };
        let jitter = if attempt == 0 {
            DVector::zeros(u.len())
        } else {
            let k = rng.gen_range(1..frame.tangent_basis.len().max(2));
            let e = frame.tangent_basis.get(k).cloned().unwrap_or_else(|| DVector::zeros(u.len()));
            e * (un * rng.gen_range(-0.5..0.5))
        };
        let dir = -(u + &timelike * b) + &nu * c + jitter;
        match refine_limit(table, collar, z, &dir, &target, delta, params, numerics) {
            Ok(l) => return Ok(l),
            Err(e) => last_err = e,
        }
    }
    Err(last_err)
}

#[allow(clippy::too_many_arguments)]
fn refine_limit(
    table: &LensTable,
    collar: &Collar,
    z: &DVector<f64>,
    dir: &DVector<f64>,
    target: &DVector<f64>,
    delta: f64,
    params: &ConversionParams,
    numerics: &Numerics,
) -> Result<Limit> {
    let metric = collar.metric;
    let n = metric.dim();
    let mut ex = Extrapolator::new(4);
    let mut prev: Option<DVector<f64>> = None;
    let mut quiet = 0usize;
    let mut guess: Option<DVector<f64>> = None;
    let mut s = 0.25 * delta;
    for j in 0..params.max_refinements {
        let (p, _) = flow(metric, z, dir, s, numerics)?;
        let v0 = guess.clone().unwrap_or_else(|| target - &p);
        let vshoot = shoot(metric, &p, target, &v0, None, numerics)?;
        guess = Some(vshoot.clone());
        let vel = &vshoot / (delta + s);
        let trace = collar_tracer(collar, &p, &vel, numerics)?.run(delta + s, StopRule::FirstEvent)?;
        let entry = trace
            .events
            .first()
            .filter(|e| e.crossing == Some(Crossing::Ascending) && e.transversality > numerics.tangent_threshold)
            .ok_or_else(|| Error::Convergence("approximating geodesic does not enter transversally".into()))?;
        let r = table.query(&entry.x(), &entry.v())?;
        let tau = -s + entry.t + r.tau;
        let mut f = DVector::zeros(2 * n + 1);
        f.rows_mut(0, n).copy_from(&r.outbound.base);
        f.rows_mut(n, n).copy_from(&r.outbound.vec);
        f[2 * n] = tau;
        let est = ex.push(f);
        if let Some(pe) = &prev {
            if (&est - pe).norm() < params.limit_tol {
                quiet += 1;
            } else {
                quiet = 0;
            }
        }
        prev = Some(est.clone());
        if quiet >= params.limit_moves {
            return Ok(Limit {
                state: TangentVec::new(metric, est.rows(0, n).into_owned(), est.rows(n, n).into_owned()),
                tau: est[2 * n],
                refinements: j + 1,
            });
        }
        s *= 0.5;
    }
    Err(Error::Convergence(format!("limit not settled after {} refinements", params.max_refinements)))
}

fn step1(
    table: &LensTable,
    collar: &Collar,
    x: &DVector<f64>,
    v: &DVector<f64>,
    delta: f64,
    params: &ConversionParams,
    numerics: &Numerics,
) -> Result<Step1> {
    let metric = collar.metric;
    let domain = collar.domain;
    let max_iter = (numerics.t_max / delta).ceil() as usize;
    let first = table.query(x, v)?;
    let mut elapsed = first.tau;
    let mut state = first.outbound;
    let mut visits = 1usize;
    let mut steps = vec![StepLog {
        anchor: 0.0,
        progress: first.tau,
        delta,
        case: StepCase::Exit,
        refinements: 0,
    }];
    for _ in 0..max_iter {
        if elapsed > numerics.t_max {
            return Err(Error::NonTerminating { t_max: numerics.t_max });
        }
        match start_class(domain, &state.base, &state.vec, numerics) {
            -1 => {
                return Ok(Step1 {
                    exit: state,
                    tau: elapsed,
                    visits,
                    steps,
                })
            }
            1 => return Err(Error::Consistency("interior return points inward".into())),
            _ => {}
        }
        if probe_sign(metric, domain, &state.base, &state.vec, numerics)? <= 0.0 {
            return Ok(Step1 {
                exit: state,
                tau: elapsed,
                visits,
                steps,
            });
        }
        visits += 1;
        let anchor = elapsed;
        let tracer = collar_tracer(collar, &state.base, &state.vec, numerics)?;
        let window = tracer.window;
        let trace = tracer.run(numerics.t_max - elapsed, StopRule::LeaveDomainOrAux)?;
        let t_aux = trace
            .aux_events
            .iter()
            .find(|a| a.crossing == Crossing::Descending)
            .map(|a| a.t);
        let inside: Vec<_> = trace
            .events
            .iter()
            .filter(|e| t_aux.map_or(true, |ta| e.t < ta))
            .cloned()
            .collect();
        if let Some(i) = final_exit_index(&inside, window) {
            let e = &inside[i];
            visits += visits_before(&inside[..i]);
            elapsed += e.t;
            state = TangentVec::new(metric, e.x(), e.v());
            steps.push(StepLog {
                anchor,
                progress: e.t,
                delta,
                case: StepCase::CollarExit,
                refinements: 0,
            });
            continue;
        }
        let Some(t_aux) = t_aux else {
            return Err(Error::NonTerminating { t_max: numerics.t_max });
        };
        visits += visits_before(&inside);
        let last = inside
            .iter()
            .rev()
            .find(|e| matches!(e.crossing, Some(Crossing::Touch) | Some(Crossing::Ascending)));
        let (t_z, z, u) = match last {
            Some(e) => (e.t, e.x(), e.v()),
            None => (0.0, state.base.clone(), state.vec.clone()),
        };
        let d_eff = delta.min(0.5 * (t_aux - t_z));
        let lim = limit_from_touch(table, collar, &z, &u, d_eff, params, numerics)?;
        if lim.tau < d_eff * (1.0 - 1e-9) {
            return Err(Error::Stall(format!("limit step advanced {} < {}", lim.tau, d_eff)));
        }
        if let Some((m, _)) = &table.oracle {
            let (y, w) = flow(m, &z, &u, lim.tau, numerics)?;
            let scale = 1.0 + y.norm() + w.norm();
            if ((&y - &lim.state.base).norm() + (&w - &lim.state.vec).norm()) > 1e-6 * scale {
                return Err(Error::Consistency("limit state is not on the flow".into()));
            }
        }
        elapsed += t_z + lim.tau;
        state = lim.state;
        steps.push(StepLog {
            anchor: anchor + t_z,
            progress: lim.tau,
            delta: d_eff,
            case: StepCase::Limit,
            refinements: lim.refinements,
        });
    }
    Err(Error::NonTermination { steps: max_iter })
}

/// Travel time of a lightlike input from the exterior continuation of the
/// family `v(λ) = a(e0 + (1 − λ/a²)e1)` at the entry. For each anchor
/// `z_k = flow(y, w, s_k)` past the exit, the family crosses the hyperplane
/// through `z_k` normal to the exit velocity at `z_k(λ)`, and the identity
/// with `x' = 0`, `h = 0`, `h' = −2` gives `τ + s_k = −g(z_k'(0), u_k)`.
#[allow(clippy::too_many_arguments)]
fn exterior_variation_tau(
    table: &LensTable,
    collar: &Collar,
    x: &DVector<f64>,
    v: &DVector<f64>,
    exit: &TangentVec,
    delta: f64,
    params: &ConversionParams,
    numerics: &Numerics,
) -> Result<(f64, Vec<f64>)> {
    let metric = collar.metric;
    let split = null_split(metric, collar.domain, x, v)?;
    let step = params.family_step * split.a * split.a;
    let mut exits = vec![exit.clone()];
    for k in 1..5 {
        let vk = split.direction(k as f64 * step);
        exits.push(step1(table, collar, x, &vk, delta, params, numerics)?.exit);
    }
    let wn = exit.vec.norm();
    let reach = 0.5 * collar.width() / wn;
    let count = params.anchors.max(1);
    let offsets: Vec<f64> = (0..count).map(|i| reach * 2f64.powf(-(i as f64) / 4.0)).collect();
    let mut anchors = Vec::with_capacity(count);
    for &s in &offsets {
        anchors.push(flow(metric, &exit.base, &exit.vec, s, numerics)?);
    }
    // crossings[k][i]: where member k meets hyperplane i.
    let mut crossings: Vec<Vec<Option<DVector<f64>>>> = Vec::with_capacity(5);
    for e in &exits {
        let mut tracer = Tracer::new(metric, None, &e.base, &e.vec, numerics)?;
        for (z, u) in &anchors {
            let (z, n) = (z.clone(), u.clone());
            tracer = tracer.with_aux(Arc::new(move |p: &DVector<f64>| (p - &z).dot(&n)));
        }
        let trace = tracer.run(2.0 * reach * wn / e.vec.norm().max(f64::MIN_POSITIVE), StopRule::Never)?;
        let mut row = vec![None; count];
        for a in &trace.aux_events {
            if row[a.index].is_none() {
                row[a.index] = Some(a.x.clone());
            }
        }
        crossings.push(row);
    }
    let mut estimates = Vec::new();
    for i in 0..count {
        let pts: Option<Vec<DVector<f64>>> = crossings.iter().map(|r| r[i].clone()).collect();
        let Some(pts) = pts else { continue };
        let zp = forward5_vec(&pts, step);
        let (z, u) = &anchors[i];
        estimates.push(-metric.inner(z, &zp, u) - offsets[i]);
    }
    if estimates.is_empty() {
        return Err(Error::Recovery("no admissible exterior anchor".into()));
    }
    let tau = estimates.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = 1e-4 * tau.abs().max(1.0);
    if estimates.windows(2).any(|w| w[1] > w[0] + tol) {
        return Err(Error::Consistency("anchor estimates increase toward the exit".into()));
    }
    Ok((tau, estimates))
}

/// Complete scattering of one inbound state from interior data and the
/// collar metric.
pub fn recover_complete_state(
    table: &LensTable,
    collar: &Collar,
    x: &DVector<f64>,
    v: &DVector<f64>,
    params: &ConversionParams,
    numerics: &Numerics,
) -> Result<CompleteRecovery> {
    if table.kind() != ScatteringKind::Interior {
        return Err(Error::Precondition("an interior table is required".into()));
    }
    let delta = params
        .delta
        .or(numerics.delta)
        .unwrap_or_else(|| default_delta(collar.domain, numerics));
    let max_iterations = (numerics.t_max / delta).ceil() as usize;
    let s1 = step1(table, collar, x, v, delta, params, numerics)?;
    let lightlike = collar.metric.signature() == Signature::Lorentzian
        && collar.metric.causal_class(x, v)? == CausalClass::Lightlike;
    let (tau_variation, anchor_estimates) = if lightlike {
        let (t, est) = exterior_variation_tau(table, collar, x, v, &s1.exit, delta, params, numerics)?;
        (Some(t), est)
    } else {
        (None, Vec::new())
    };
    let tau = tau_variation.unwrap_or(s1.tau);
    let mut sample = ScatteringSample::new(
        collar.metric,
        TangentVec::new(collar.metric, x.clone(), v.clone()),
        s1.exit,
        tau,
        ScatteringKind::Complete,
        s1.visits,
    );
    sample.provenance = Provenance::FromInterior;
    Ok(CompleteRecovery {
        sample,
        steps: s1.steps,
        tau_data: s1.tau,
        tau_variation,
        anchor_estimates,
        max_iterations,
    })
}

#[derive(Debug, Clone)]
pub struct ConversionOutput {
    pub table: ScatteringTable,
    pub runs: Vec<CompleteRecovery>,
}

/// Complete scattering data for every inbound state of an interior table.
pub fn recover_complete_from_interior(
    table: &LensTable,
    collar: &Collar,
    params: &ConversionParams,
    numerics: &Numerics,
) -> Result<ConversionOutput> {
    let states: Vec<(DVector<f64>, DVector<f64>)> = table
        .table
        .samples
        .iter()
        .map(|s| (s.inbound.base.clone(), s.inbound.vec.clone()))
        .collect();
    recover_complete_states(table, collar, &states, params, numerics)
}

pub fn recover_complete_states(
    table: &LensTable,
    collar: &Collar,
    states: &[(DVector<f64>, DVector<f64>)],
    params: &ConversionParams,
    numerics: &Numerics,
) -> Result<ConversionOutput> {
    if table.kind() != ScatteringKind::Interior {
        return Err(Error::Precondition("an interior table is required".into()));
    }
    let results: Vec<Result<CompleteRecovery>> = states
        .par_iter()
        .map(|(x, v)| recover_complete_state(table, collar, x, v, params, numerics))
        .collect();
    let mut out = ScatteringTable::new(ScatteringKind::Complete);
    out.grid_meta = table.table.grid_meta.clone();
    let mut runs = Vec::new();
    for ((x, v), r) in states.iter().zip(results) {
        match r {
            Ok(run) => {
                out.samples.push(run.sample.clone());
                runs.push(run);
            }
            Err(e) => out.failures.push(TableFailure {
                x: x.iter().copied().collect(),
                v: v.iter().copied().collect(),
                error: e.to_string(),
            }),
        }
    }
    Ok(ConversionOutput { table: out, runs })
}
