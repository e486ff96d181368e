//! Time separation `d(x, y)`: the supremum of proper times of future-directed
//! causal curves from `x` to `y`, staying inside the domain.
//!
//! The chain method maximizes over piecewise chart-linear causal curves and
//! therefore returns a lower bound for `d`. The shooting method evaluates the
//! connecting geodesic and is exact only before the first cut point.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodesic::shoot;
use crate::metric::{CatalogEntry, ChartMetric, DomainSpec};
use crate::numerics::Numerics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Shooting,
    Chain,
}

#[derive(Debug, Clone)]
pub struct TimeSeparationField {
    pub metric: ChartMetric,
    pub domain: Option<DomainSpec>,
    pub method: Method,
    pub numerics: Numerics,
}

#[derive(Debug, Clone)]
pub struct Separation {
    pub value: f64,
    /// Set when the optimizer stopped early or nodes had to be projected back
    /// into the domain.
    pub approximate: bool,
    pub segments: usize,
    pub nodes: Vec<DVector<f64>>,
}

impl Separation {
    fn zero() -> Self {
        Self {
            value: 0.0,
            approximate: false,
            segments: 0,
            nodes: Vec::new(),
        }
    }
}

/// Three-point Gauss–Legendre rule on `[0, 1]`.
const GAUSS_U: [f64; 3] = [0.112_701_665_379_258_31, 0.5, 0.887_298_334_620_741_7];
const GAUSS_W: [f64; 3] = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
/// Newton iterations per penalty stage.
const MAX_ITERS: usize = 60;
const NULL_TOL: f64 = 1e-8;
const DOMAIN_TOL: f64 = 1e-6;
/// Coarse chains further than this fraction below the best are not refined.
const PRUNE_GAP: f64 = 1e-2;
/// Coarse chains closer than this fraction of the span trace the same path.
const SAME_PATH: f64 = 2e-2;
/// Non-causal segments up to this fraction of the span are merged away.
const SHORT_SEGMENT: f64 = 1e-2;

impl TimeSeparationField {
    pub fn new(metric: ChartMetric, domain: Option<DomainSpec>, method: Method, numerics: Numerics) -> Self {
        Self {
            metric,
            domain,
            method,
            numerics,
        }
    }

    pub fn from_entry(entry: &CatalogEntry, method: Method, numerics: Numerics) -> Self {
        let domain = entry.domain.has_boundary().then(|| entry.domain.clone());
        Self::new(entry.metric.clone(), domain, method, numerics)
    }

    pub fn with_method(&self, method: Method) -> Self {
        Self { method, ..self.clone() }
    }

    pub fn d(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
        Ok(self.separation(x, y)?.value)
    }

    pub fn separation(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<Separation> {
        self.metric.eval(x)?;
        self.metric.eval(y)?;
        if let Some(dom) = &self.domain {
            for p in [x, y] {
                if dom.phi(p) < -10.0 * self.numerics.event_tol.max(1e-12) {
                    return Err(Error::Precondition("point lies outside the domain".into()));
                }
            }
        }
        if (x - y).norm() == 0.0 {
            return Ok(Separation::zero());
        }
        match self.method {
            Method::Shooting => self.by_shooting(x, y),
            Method::Chain => Ok(self.by_chain(x, y)),
        }
    }

    fn by_shooting(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<Separation> {
        let mut best: Option<Separation> = None;
        let mut last_err = None;
        for target in self.metric.lifts(y) {
            let guess = &target - x;
            match shoot(&self.metric, x, &target, &guess, None, &self.numerics) {
                Ok(v) => {
                    let q = -self.metric.norm_sq(x, &v);
                    let value = if q > 0.0 && self.metric.is_future(x, &v) { q.sqrt() } else { 0.0 };
                    if best.as_ref().is_none_or(|b| value > b.value) {
                        best = Some(Separation {
                            value,
                            approximate: false,
                            segments: 1,
                            nodes: vec![x.clone(), target.clone()],
                        });
                    }
                }
                Err(e) => last_err = Some(e),
            }
        }
        best.ok_or_else(|| last_err.unwrap_or(Error::SingularJacobian))
    }

    fn by_chain(&self, x: &DVector<f64>, y: &DVector<f64>) -> Separation {
        // Optimize every start at the coarse level, then refine only the
        // distinct chains that come close to the best coarse value.
        let mut coarse: Vec<(DVector<f64>, Separation)> = Vec::new();
        for target in self.metric.lifts(y) {
            for start in self.initial_paths(x, &target) {
                let s = self.settle(x, &target, &start);
                coarse.push((target.clone(), s));
            }
        }
        let top = coarse.iter().map(|(_, s)| s.value).fold(0.0, f64::max);
        if top == 0.0 {
            return Separation::zero();
        }
        let span = (y - x).norm();
        let mut kept: Vec<(DVector<f64>, Separation)> = Vec::new();
        for (target, s) in coarse {
            if s.value < (1.0 - PRUNE_GAP) * top {
                continue;
            }
            let duplicate = kept.iter().any(|(t, k)| {
                t == &target && polyline_distance(&k.nodes, &s.nodes) <= SAME_PATH * span
            });
            if !duplicate {
                kept.push((target, s));
            }
        }
        let mut best = Separation::zero();
        for (target, s) in kept {
            let s = self.refine(x, &target, s);
            if s.value > best.value {
                best = s;
            }
        }
        best
    }

    /// Straight chain, plus chains bowed sideways when the straight one
    /// leaves the domain.
    fn initial_paths(&self, a: &DVector<f64>, b: &DVector<f64>) -> Vec<Vec<DVector<f64>>> {
        let k = self.numerics.chain.initial_segments.max(1);
        let straight: Vec<DVector<f64>> = (0..=k).map(|i| a + (b - a) * (i as f64 / k as f64)).collect();
        let mut out = vec![straight.clone()];
        let Some(dom) = &self.domain else {
            return out;
        };
        if straight[1..k].iter().all(|p| dom.phi(p) >= -DOMAIN_TOL) {
            return out;
        }
        let n = a.len();
        let ds = DVector::from_fn(n, |i, _| if i == 0 { 0.0 } else { b[i] - a[i] });
        let len = ds.norm();
        if len == 0.0 {
            return out;
        }
        for perp in spatial_perpendiculars(&ds) {
            for amp in [0.25, -0.25, 0.5, -0.5] {
                let bowed = straight
                    .iter()
                    .enumerate()
                    .map(|(i, p)| p + &perp * (amp * len * (std::f64::consts::PI * i as f64 / k as f64).sin()))
                    .collect();
                out.push(bowed);
            }
        }
        out
    }

    /// Optimizes and projects a chain at its current resolution.
    fn settle(&self, a: &DVector<f64>, b: &DVector<f64>, nodes: &[DVector<f64>]) -> Separation {
        let (opt, converged) = self.optimize(a, b, nodes);
        let (projected, moved) = self.project(opt);
        Separation {
            value: self.chain_value(&projected),
            approximate: !converged || moved > 1e-9,
            segments: projected.len() - 1,
            nodes: projected,
        }
    }

    /// Doubles the segment count of a settled chain until the value stops
    /// improving by more than `chain.rtol`.
    fn refine(&self, a: &DVector<f64>, b: &DVector<f64>, first: Separation) -> Separation {
        let cp = self.numerics.chain;
        let mut best = first;
        while 2 * best.segments <= cp.max_segments && best.value > 0.0 {
            let prev = best.value;
            let s = self.settle(a, b, &subdivide(&best.nodes));
            if s.value <= prev {
                break;
            }
            best = s;
            if best.value - prev <= cp.rtol * best.value {
                break;
            }
        }
        best
    }

    fn optimize(&self, a: &DVector<f64>, b: &DVector<f64>, nodes: &[DVector<f64>]) -> (Vec<DVector<f64>>, bool) {
        let n = a.len();
        let k = nodes.len() - 1;
        if k < 2 {
            return (nodes.to_vec(), true);
        }
        let span = (b - a).norm().max(1e-12);
        let h = span / k as f64;
        let mut param: Vec<f64> = nodes[1..k].iter().flat_map(|p| p.iter().copied()).collect();
        let mut converged = true;
        let mut stage_value = None;
        // Penalty continuation: each stage starts from the previous optimum.
        for scale in [1.0, 1e2, 1e4] {
            let problem = ChainProblem {
                metric: &self.metric,
                domain: self.domain.as_ref(),
                a: a.clone(),
                b: b.clone(),
                k,
                n,
                mu: scale * 1e3 / h,
                eta: 1e-6 * h,
                mu_q: scale * 1e3 / (h * h * h),
                mu_t: scale * 1e3 / h,
                times: nodes[1..k].iter().map(|p| p[0]).collect(),
            };
            let init_cost = problem.evaluate(&param, false).0;
            let (r, f, ok) = newton(&problem, problem.reduce(&param));
            let p = problem.expand(&r);
            converged &= ok;
            if f <= init_cost {
                param = p;
            }
            // Stop stiffening once the projected chain no longer changes.
            let value = self.chain_value(&self.project(assemble(a, b, &param, n, k)).0);
            if value > 0.0 && stage_value.is_some_and(|v: f64| (value - v).abs() <= self.numerics.chain.rtol * value) {
                break;
            }
            stage_value = Some(value);
            match penalty_state(self, a, b, &param, n, k) {
                Penalty::Inactive => break,
                // Stiffer penalties do not rescue a chain that stays clearly spacelike.
                Penalty::Spacelike if scale == 1.0 => break,
                _ => {}
            }
        }
        (assemble(a, b, &param, n, k), converged)
    }

    /// Pushes nodes with `φ < 0` back onto the domain by Newton steps along
    /// `∇φ`; returns the largest displacement.
    fn project(&self, mut nodes: Vec<DVector<f64>>) -> (Vec<DVector<f64>>, f64) {
        let mut moved = 0.0f64;
        let last = nodes.len() - 1;
        for p in nodes[1..last].iter_mut() {
            let Some(dom) = &self.domain else { break };
            let start = p.clone();
            for _ in 0..8 {
                let phi = dom.phi(p);
                if phi >= 0.0 {
                    break;
                }
                let g = dom.dphi(p);
                let g2 = g.norm_squared();
                if g2 == 0.0 {
                    break;
                }
                *p -= &g * (phi / g2 * (1.0 + 1e-9));
            }
            moved = moved.max((&*p - start).norm());
        }
        // Nodes bunched against the boundary can leave short past-pointing or
        // spacelike segments; dropping a node keeps the chain admissible.
        let span = (&nodes[last] - &nodes[0]).norm();
        while nodes.len() > 2 {
            let bad = nodes.windows(2).position(|w| {
                let delta = &w[1] - &w[0];
                delta.norm() <= SHORT_SEGMENT * span && !self.segment_causal(&w[0], &delta)
            });
            let Some(i) = bad else { break };
            nodes.remove(if i + 1 < nodes.len() - 1 { i + 1 } else { i });
        }
        (nodes, moved)
    }

    fn segment_causal(&self, p: &DVector<f64>, delta: &DVector<f64>) -> bool {
        let scale = delta.norm_squared();
        scale == 0.0
            || GAUSS_U.iter().all(|u| {
                let x = p + delta * *u;
                -self.metric.norm_sq(&x, delta) >= -NULL_TOL * scale && self.metric.is_future(&x, delta)
            })
    }

    /// Proper time of a chain, or 0 when some segment is not future causal
    /// or a node or quadrature point leaves the domain. Segments within
    /// `NULL_TOL` of the light cone count as null.
    pub fn chain_value(&self, nodes: &[DVector<f64>]) -> f64 {
        let mut total = 0.0;
        for w in nodes.windows(2) {
            let delta = &w[1] - &w[0];
            let scale = delta.norm_squared();
            if scale == 0.0 {
                continue;
            }
            for (u, wt) in GAUSS_U.iter().zip(GAUSS_W) {
                let x = &w[0] + &delta * *u;
                if self.domain.as_ref().is_some_and(|d| d.phi(&x) < -DOMAIN_TOL) {
                    return 0.0;
                }
                let q = -self.metric.norm_sq(&x, &delta);
                if q < -NULL_TOL * scale || !self.metric.is_future(&x, &delta) {
                    return 0.0;
                }
                total += wt * q.max(0.0).sqrt();
            }
        }
        total
    }
}

enum Penalty {
    Inactive,
    Active,
    /// Some segment has `q < −SPACELIKE_GAP·|Δ|²`.
    Spacelike,
}

const SPACELIKE_GAP: f64 = 1e-2;

/// Which penalty terms are active at the interior nodes `param`. When none
/// is, stiffer penalty stages would return the same chain.
fn penalty_state(
    field: &TimeSeparationField,
    a: &DVector<f64>,
    b: &DVector<f64>,
    param: &[f64],
    n: usize,
    k: usize,
) -> Penalty {
    let node = |i: usize| {
        if i == 0 {
            a.clone()
        } else if i == k {
            b.clone()
        } else {
            DVector::from_column_slice(&param[(i - 1) * n..i * n])
        }
    };
    let mut state = Penalty::Inactive;
    for i in 0..k {
        let p0 = node(i);
        let delta = node(i + 1) - &p0;
        for u in GAUSS_U {
            let x = &p0 + &delta * u;
            let gd = field.metric.g(&x) * &delta;
            let q = -delta.dot(&gd);
            if q < -SPACELIKE_GAP * delta.norm_squared() {
                return Penalty::Spacelike;
            }
            let outside = field
                .domain
                .as_ref()
                .is_some_and(|d| d.phi(&x) < 0.0 || (i > 0 && d.phi(&p0) < 0.0));
            if outside || q < 0.0 || gd[0] > 0.0 {
                state = Penalty::Active;
            }
        }
    }
    state
}

/// Unit vectors in the spatial coordinates orthogonal to `ds`.
fn spatial_perpendiculars(ds: &DVector<f64>) -> Vec<DVector<f64>> {
    let n = ds.len();
    let unit = ds.normalize();
    let mut basis: Vec<DVector<f64>> = vec![unit];
    for i in 1..n {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        for b in &basis {
            let c = e.dot(b);
            e -= b * c;
        }
        if e.norm() > 1e-8 {
            basis.push(e.normalize());
        }
    }
    basis.split_off(1)
}

/// Symmetric Hausdorff distance between two polylines, taken over nodes.
/// Nodes slide along a chain at almost no cost, so comparing them pairwise
/// would separate chains that follow the same path.
fn polyline_distance(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    let to_polyline = |p: &DVector<f64>, line: &[DVector<f64>]| {
        line.windows(2)
            .map(|w| {
                let d = &w[1] - &w[0];
                let len2 = d.norm_squared();
                let u = if len2 > 0.0 { ((p - &w[0]).dot(&d) / len2).clamp(0.0, 1.0) } else { 0.0 };
                (p - (&w[0] + d * u)).norm()
            })
            .fold(f64::INFINITY, f64::min)
    };
    let one = |x: &[DVector<f64>], y: &[DVector<f64>]| x.iter().map(|p| to_polyline(p, y)).fold(0.0, f64::max);
    one(a, b).max(one(b, a))
}

fn assemble(a: &DVector<f64>, b: &DVector<f64>, param: &[f64], n: usize, k: usize) -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(k + 1);
    out.push(a.clone());
    for i in 0..k - 1 {
        out.push(DVector::from_column_slice(&param[i * n..(i + 1) * n]));
    }
    out.push(b.clone());
    out
}

fn subdivide(nodes: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(2 * nodes.len() - 1);
    for w in nodes.windows(2) {
        out.push(w[0].clone());
        out.push((&w[0] + &w[1]) * 0.5);
    }
    out.push(nodes[nodes.len() - 1].clone());
    out
}

struct ChainProblem<'a> {
    metric: &'a ChartMetric,
    domain: Option<&'a DomainSpec>,
    a: DVector<f64>,
    b: DVector<f64>,
    k: usize,
    n: usize,
    /// Weight of the quadratic penalty on nodes and quadrature points outside
    /// the domain.
    mu: f64,
    /// Smoothing of `√q` near the light cone.
    eta: f64,
    /// Weights of the penalties on spacelike and past-pointing segments.
    mu_q: f64,
    mu_t: f64,
    /// Time coordinates of the interior nodes, held fixed: nodes sliding
    /// along a straight segment leave the objective unchanged, which makes
    /// the Hessian singular.
    times: Vec<f64>,
}

impl ChainProblem<'_> {
    fn free(&self) -> usize {
        self.n - 1
    }

    fn expand(&self, r: &[f64]) -> Vec<f64> {
        let d = self.free();
        self.times
            .iter()
            .enumerate()
            .flat_map(|(i, &t)| std::iter::once(t).chain(r[i * d..(i + 1) * d].iter().copied()))
            .collect()
    }

    fn reduce(&self, p: &[f64]) -> Vec<f64> {
        p.chunks(self.n).flat_map(|c| c[1..].iter().copied()).collect()
    }

    /// [`Self::evaluate`] in the spatial coordinates of the interior nodes.
    fn evaluate_free(&self, r: &[f64], want_grad: bool) -> (f64, Vec<f64>) {
        let (f, g) = self.evaluate(&self.expand(r), want_grad);
        (f, if want_grad { self.reduce(&g) } else { g })
    }
    fn node(&self, p: &[f64], i: usize) -> DVector<f64> {
        if i == 0 {
            self.a.clone()
        } else if i == self.k {
            self.b.clone()
        } else {
            DVector::from_column_slice(&p[(i - 1) * self.n..i * self.n])
        }
    }

    /// Negative smoothed proper time plus the domain penalty.
    fn evaluate(&self, p: &[f64], want_grad: bool) -> (f64, Vec<f64>) {
        let n = self.n;
        let mut f = 0.0;
        let mut grad = if want_grad { vec![0.0; p.len()] } else { Vec::new() };
        let eta2 = self.eta * self.eta;
        let nodes: Vec<DVector<f64>> = (0..=self.k).map(|i| self.node(p, i)).collect();
        for i in 0..self.k {
            let delta = &nodes[i + 1] - &nodes[i];
            for (u, wt) in GAUSS_U.iter().zip(GAUSS_W) {
                let x = &nodes[i] + &delta * *u;
                let g = self.metric.g(&x);
                let gd = &g * &delta;
                let q = -delta.dot(&gd);
                // Past-directed timelike segments count against the objective, and
                // spacelike or past-pointing segments pick up quadratic penalties.
                let orient = if q > 0.0 && gd[0] > 0.0 { -1.0 } else { 1.0 };
                let r = (q.abs() + eta2).sqrt();
                f -= wt * orient * q.signum() * (r - self.eta);
                if let Some(dom) = self.domain {
                    let phi = dom.phi(&x);
                    if phi < 0.0 {
                        f += wt * self.mu * phi * phi;
                        if want_grad {
                            let d = dom.dphi(&x);
                            for j in 0..n {
                                let gj = 2.0 * wt * self.mu * phi * d[j];
                                if i + 1 < self.k {
                                    grad[i * n + j] += u * gj;
                                }
                                if i > 0 {
                                    grad[(i - 1) * n + j] += (1.0 - u) * gj;
                                }
                            }
                        }
                    }
                }
                let q_bad = (-q).max(0.0);
                let t_bad = gd[0].max(0.0);
                f += wt * (self.mu_q * q_bad * q_bad + self.mu_t * t_bad * t_bad);
                if want_grad {
                    let df_dq = wt * (-orient / (2.0 * r) - 2.0 * self.mu_q * q_bad);
                    let df_dt = 2.0 * wt * self.mu_t * t_bad;
                    let dg = self.metric.derivative(&x);
                    let c: Vec<f64> = dg.iter().map(|m| delta.dot(&(m * &delta))).collect();
                    for j in 0..n {
                        let dq_b = -2.0 * gd[j] - u * c[j];
                        let dq_a = 2.0 * gd[j] - (1.0 - u) * c[j];
                        let e = (&dg[j] * &delta)[0];
                        let dt_b = g[(0, j)] + u * e;
                        let dt_a = -g[(0, j)] + (1.0 - u) * e;
                        if i + 1 < self.k {
                            grad[i * n + j] += df_dq * dq_b + df_dt * dt_b;
                        }
                        if i > 0 {
                            grad[(i - 1) * n + j] += df_dq * dq_a + df_dt * dt_a;
                        }
                    }
                }
            }
        }
        if let Some(dom) = self.domain {
            for i in 1..self.k {
                let phi = dom.phi(&nodes[i]);
                if phi < 0.0 {
                    f += self.mu * phi * phi;
                    if want_grad {
                        let d = dom.dphi(&nodes[i]);
                        for j in 0..n {
                            grad[(i - 1) * n + j] += 2.0 * self.mu * phi * d[j];
                        }
                    }
                }
            }
        }
        (f, grad)
    }
}

/// Damped Newton on the chain objective. Interior nodes only couple to
/// their neighbours, so the Hessian is block tridiagonal; it is assembled
/// from gradient differences that perturb every third node at once and
/// factored block by block. Returns the final point, its cost and whether
/// the Newton decrement fell below tolerance.
fn newton(problem: &ChainProblem, mut p: Vec<f64>) -> (Vec<f64>, f64, bool) {
    let (mut f, mut g) = problem.evaluate_free(&p, true);
    for _ in 0..MAX_ITERS {
        let (diag, lower) = hessian_blocks(problem, &p, &g);
        let scale = diag.iter().map(|d| d.amax()).fold(0.0, f64::max).max(1e-12);
        let mut shift = 0.0;
        let step = loop {
            if let Some(d) = solve_block_tridiagonal(&diag, &lower, &g, shift) {
                break d;
            }
            shift = if shift == 0.0 { 1e-10 * scale } else { 10.0 * shift };
            if shift > 1e3 * scale {
                return (p, f, false);
            }
        };
        let slope: f64 = g.iter().zip(&step).map(|(a, b)| a * b).sum();
        if -slope <= 1e-13 * (1.0 + f.abs()) {
            return (p, f, true);
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = p.iter().zip(&step).map(|(x, d)| x + t * d).collect();
            let ft = problem.evaluate_free(&trial, false).0;
            if ft <= f + 1e-4 * t * slope {
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((trial, ft)) = accepted else {
            return (p, f, false);
        };
        let done = f - ft <= 1e-15 * (1.0 + f.abs());
        p = trial;
        f = ft;
        g = problem.evaluate_free(&p, true).1;
        if done {
            return (p, f, true);
        }
    }
    (p, f, false)
}

/// Diagonal blocks `∂²f/∂p_i²` and sub-diagonal blocks `∂²f/∂p_{i+1}∂p_i`
/// by forward differences of the gradient.
fn hessian_blocks(problem: &ChainProblem, p: &[f64], g: &[f64]) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
    let n = problem.free();
    let m = problem.k - 1;
    let mut diag = vec![DMatrix::zeros(n, n); m];
    let mut lower = vec![DMatrix::zeros(n, n); m.saturating_sub(1)];
    for color in 0..3 {
        for j in 0..n {
            let mut q = p.to_vec();
            let mut steps = vec![0.0; m];
            for i in (color..m).step_by(3) {
                let h = 1e-7 * (1.0 + p[i * n + j].abs());
                q[i * n + j] += h;
                steps[i] = h;
            }
            if color >= m {
                continue;
            }
            let gq = problem.evaluate_free(&q, true).1;
            for i in (color..m).step_by(3) {
                for r in 0..n {
                    diag[i][(r, j)] = (gq[i * n + r] - g[i * n + r]) / steps[i];
                    if i + 1 < m {
                        lower[i][(r, j)] = (gq[(i + 1) * n + r] - g[(i + 1) * n + r]) / steps[i];
                    }
                }
            }
        }
    }
    for d in &mut diag {
        let sym = (&*d + d.transpose()) * 0.5;
        *d = sym;
    }
    (diag, lower)
}

/// Solves `(H + shift·I)x = −g` for symmetric block tridiagonal `H` by block
/// Cholesky; `None` when a pivot block is not positive definite.
fn solve_block_tridiagonal(
    diag: &[DMatrix<f64>],
    lower: &[DMatrix<f64>],
    g: &[f64],
    shift: f64,
) -> Option<Vec<f64>> {
    let m = diag.len();
    let n = diag.first()?.nrows();
    let rhs = |i: usize| -DVector::from_column_slice(&g[i * n..(i + 1) * n]);
    let mut factors: Vec<nalgebra::Cholesky<f64, nalgebra::Dyn>> = Vec::with_capacity(m);
    let mut y: Vec<DVector<f64>> = Vec::with_capacity(m);
    for i in 0..m {
        let mut s = &diag[i] + DMatrix::identity(n, n) * shift;
        let mut b = rhs(i);
        if i > 0 {
            let l = &lower[i - 1];
            let prev = &factors[i - 1];
            s -= l * prev.solve(&l.transpose());
            b -= l * prev.solve(&y[i - 1]);
        }
        factors.push(s.cholesky()?);
        y.push(b);
    }
    let mut x = vec![DVector::zeros(n); m];
    for i in (0..m).rev() {
        let mut b = y[i].clone();
        if i + 1 < m {
            b -= lower[i].transpose() * &x[i + 1];
        }
        x[i] = factors[i].solve(&b);
    }
    Some(x.iter().flat_map(|v| v.iter().copied()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CausalRelation {
    Chronological,
    NullBoundary,
    NonCausal,
}

/// Classifies `y` relative to `x`: chronological when `d > tol`, on the
/// boundary of the causal future when a future null geodesic joins them.
pub fn causal_boundary_class(
    field: &TimeSeparationField,
    x: &DVector<f64>,
    y: &DVector<f64>,
    tol: f64,
) -> Result<CausalRelation> {
    let d = field.d(x, y)?;
    if d > tol {
        return Ok(CausalRelation::Chronological);
    }
    let mut shot = false;
    for target in field.metric.lifts(y) {
        let guess = &target - x;
        if let Ok(v) = shoot(&field.metric, x, &target, &guess, None, &field.numerics) {
            shot = true;
            let q = field.metric.norm_sq(x, &v);
            if q.abs() <= (tol * tol).max(1e-9 * v.norm_squared()) && field.metric.is_future(x, &v) {
                return Ok(CausalRelation::NullBoundary);
            }
        }
    }
    if shot {
        Ok(CausalRelation::NonCausal)
    } else {
        Err(Error::Inconclusive(
            "no connecting geodesic found and the separation vanishes".into(),
        ))
    }
}

/// Minkowski time separation `√(Δt² − |Δx|²)` for future causal pairs.
pub fn minkowski_separation(x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let d = y - x;
    let q = d[0] * d[0] - d.rows(1, d.len() - 1).norm_squared();
    if d[0] > 0.0 && q > 0.0 {
        q.sqrt()
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::catalog;

    fn v(c: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(c)
    }

    fn field(entry: &CatalogEntry, method: Method) -> TimeSeparationField {
        TimeSeparationField::from_entry(entry, method, Numerics::default())
    }

    #[test]
    fn minkowski_examples() {
        let e = catalog::minkowski(3);
        for m in [Method::Chain, Method::Shooting] {
            let f = field(&e, m);
            let d = f.d(&v(&[0.0, 0.0, 0.0]), &v(&[2.0, 1.0, 0.0])).unwrap();
            assert!((d - 3f64.sqrt()).abs() < 1e-8, "{m:?}: {d}");
            assert_eq!(f.d(&v(&[0.0, 0.0, 0.0]), &v(&[1.0, 2.0, 0.0])).unwrap(), 0.0);
            assert_eq!(f.d(&v(&[1.0, 0.0, 0.0]), &v(&[1.0, 0.0, 0.0])).unwrap(), 0.0);
        }
    }

    #[test]
    fn annulus_obstacle() {
        let e = catalog::minkowski_annulus(0.5, 1.0);
        let f = field(&e, Method::Chain);
        let s = f.separation(&v(&[0.0, 1.0, 0.0]), &v(&[3.0, -1.0, 0.0])).unwrap();
        let l = 2.0 * 0.75f64.sqrt() + 0.5 * (std::f64::consts::PI - 2.0 * 0.5f64.acos());
        let expected = (9.0 - l * l).sqrt();
        assert!((s.value - expected).abs() < 0.02 * expected, "{} vs {expected}", s.value);
    }

    #[test]
    fn classification_examples() {
        let f = field(&catalog::minkowski(3), Method::Chain);
        let o = v(&[0.0, 0.0, 0.0]);
        let c = |y: &[f64]| causal_boundary_class(&f, &o, &v(y), 1e-6).unwrap();
        assert_eq!(c(&[1.0, 1.0, 0.0]), CausalRelation::NullBoundary);
        assert_eq!(c(&[2.0, 1.0, 0.0]), CausalRelation::Chronological);
        assert_eq!(c(&[1.0, 2.0, 0.0]), CausalRelation::NonCausal);
    }

    #[test]
    fn objective_gradient_matches_finite_differences() {
        let e = catalog::product_conformal(0.3, 0.3, [0.1, 0.0], 1.0);
        let p = ChainProblem {
            metric: &e.metric,
            domain: Some(&e.domain),
            a: v(&[0.0, 0.5, 0.0]),
            b: v(&[3.0, -0.5, 0.1]),
            k: 4,
            n: 3,
            mu: 10.0,
            eta: 1e-3,
            mu_q: 5.0,
            mu_t: 7.0,
            times: vec![0.8, 0.5, 2.2],
        };
        // Includes a past-pointing segment and a node outside the disk.
        let x = vec![0.8, 0.3, 0.2, 0.5, 0.0, 1.1, 2.2, -0.6, 0.4];
        let (_, g) = p.evaluate(&x, true);
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += 1e-6;
            let mut xm = x.clone();
            xm[i] -= 1e-6;
            let fd = (p.evaluate(&xp, false).0 - p.evaluate(&xm, false).0) / 2e-6;
            assert!((g[i] - fd).abs() < 1e-6 * (1.0 + fd.abs()), "{i}: {} vs {fd}", g[i]);
        }
    }
}
