//! Newton shooting for the inverse exponential map, Jacobi fields and
//! conjugate point detection.
//!
//! All three use the variational equations of the geodesic flow,
//! `δẍ = ∂_x a · δx + ∂_v a · δv` with `a = −Γ(v, v)`. The position derivative
//! of `a` is taken by central differences with step `1e-5`; the velocity
//! derivative `−2Γ(v, ·)` is exact.

use nalgebra::{DMatrix, DVector};

use super::ode::{integrate_to, rk_step, Advance, Stepper};
use super::trace::GeodesicTrace;
use crate::error::{Error, Result};
use crate::metric::ChartMetric;
use crate::numerics::Numerics;

/// Step for differentiating the Christoffel symbols.
pub const CURVATURE_FD_STEP: f64 = 1e-5;

/// Right-hand side for `(x, v, X, V)` with `X, V` stored column-major as
/// `n × k` blocks following the `2n` base entries.
fn variational_rhs(metric: &ChartMetric, k: usize) -> impl Fn(&DVector<f64>) -> Option<DVector<f64>> + '_ {
    let n = metric.dim();
    move |y: &DVector<f64>| {
        let x = y.rows(0, n).into_owned();
        if !metric.in_chart(&x) {
            return None;
        }
        let v = y.rows(n, n).into_owned();
        let a = metric.acceleration(&x, &v)?;
        let gamma = metric.christoffel(&x).ok()?;
        let mut dadx = DMatrix::zeros(n, n);
        for l in 0..n {
            let h = CURVATURE_FD_STEP * x[l].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[l] += h;
            xm[l] -= h;
            let ap = metric.acceleration(&xp, &v)?;
            let am = metric.acceleration(&xm, &v)?;
            dadx.set_column(l, &((ap - am) / (2.0 * h)));
        }
        let mut dadv = DMatrix::zeros(n, n);
        for kk in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for i in 0..n {
                    s += gamma.get(kk, i, j) * v[i];
                }
                dadv[(kk, j)] = -2.0 * s;
            }
        }
        let xb = DMatrix::from_column_slice(n, k, &y.as_slice()[2 * n..2 * n + n * k]);
        let vb = DMatrix::from_column_slice(n, k, &y.as_slice()[2 * n + n * k..2 * n + 2 * n * k]);
        let ab = &dadx * &xb + &dadv * &vb;
        let mut out = DVector::zeros(y.len());
        out.rows_mut(0, n).copy_from(&v);
        out.rows_mut(n, n).copy_from(&a);
        out.as_mut_slice()[2 * n..2 * n + n * k].copy_from_slice(vb.as_slice());
        out.as_mut_slice()[2 * n + n * k..].copy_from_slice(ab.as_slice());
        if !out.iter().all(|c| c.is_finite()) {
            return None;
        }
        Some(out)
    }
}

fn pack(x: &DVector<f64>, v: &DVector<f64>, xb: &DMatrix<f64>, vb: &DMatrix<f64>) -> DVector<f64> {
    let mut data = Vec::with_capacity(x.len() * 2 + xb.len() * 2);
    data.extend_from_slice(x.as_slice());
    data.extend_from_slice(v.as_slice());
    data.extend_from_slice(xb.as_slice());
    data.extend_from_slice(vb.as_slice());
    DVector::from_vec(data)
}

struct Unpacked {
    x: DVector<f64>,
    v: DVector<f64>,
    xb: DMatrix<f64>,
    vb: DMatrix<f64>,
}

fn unpack(y: &DVector<f64>, n: usize, k: usize) -> Unpacked {
    Unpacked {
        x: y.rows(0, n).into_owned(),
        v: y.rows(n, n).into_owned(),
        xb: DMatrix::from_column_slice(n, k, &y.as_slice()[2 * n..2 * n + n * k]),
        vb: DMatrix::from_column_slice(n, k, &y.as_slice()[2 * n + n * k..]),
    }
}

/// Endpoint `γ_v(T)` and its derivative with respect to `v`.
pub fn endpoint_with_jacobian(
    metric: &ChartMetric,
    x: &DVector<f64>,
    v: &DVector<f64>,
    t_end: f64,
    numerics: &Numerics,
) -> Result<(DVector<f64>, DVector<f64>, DMatrix<f64>)> {
    let n = metric.dim();
    let y0 = pack(x, v, &DMatrix::zeros(n, n), &DMatrix::identity(n, n));
    let rhs = variational_rhs(metric, n);
    let y = integrate_to(&rhs, y0, t_end, numerics.ode_tol)?.ok_or_else(|| Error::OutOfChart {
        point: x.iter().copied().collect(),
    })?;
    let u = unpack(&y, n, n);
    Ok((u.x, u.v, u.xb))
}

const STALL_WINDOW: usize = 4;
const STALL_RATIO: f64 = 0.5;
const MAX_BACKTRACKS: usize = 16;

/// Solves `γ_v(T) = y` by damped Newton iteration starting from `v0`, with
/// `T = 1` unless `t_fixed` is given.
pub fn shoot(
    metric: &ChartMetric,
    x: &DVector<f64>,
    y: &DVector<f64>,
    v0: &DVector<f64>,
    t_fixed: Option<f64>,
    numerics: &Numerics,
) -> Result<DVector<f64>> {
    metric.eval(x)?;
    metric.eval(y)?;
    let t_end = t_fixed.unwrap_or(1.0);
    let tol = numerics.shoot_tol * y.norm().max(1.0);
    let mut v = v0.clone();
    let (mut end, _, mut jac) = endpoint_with_jacobian(metric, x, &v, t_end, numerics)?;
    let mut res = &end - y;
    let mut history = Vec::with_capacity(numerics.shoot_max_iter);
    for _ in 0..numerics.shoot_max_iter {
        if res.norm() < tol {
            return Ok(v);
        }
        // Give up once the residual stops shrinking: Newton converges
        // quadratically near a solution, so slow progress means none nearby.
        history.push(res.norm());
        if history.len() > STALL_WINDOW && res.norm() > STALL_RATIO * history[history.len() - 1 - STALL_WINDOW] {
            break;
        }
        let svd = jac.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smin > 1e-12 * smax.max(1e-300)) {
            return Err(Error::SingularJacobian);
        }
        let step = svd.solve(&(-&res), 0.0).map_err(|_| Error::SingularJacobian)?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            let cand = &v + &step * lambda;
            if let Ok((e, _, j)) = endpoint_with_jacobian(metric, x, &cand, t_end, numerics) {
                let r = &e - y;
                if r.norm() < res.norm() || r.norm() < tol {
                    v = cand;
                    end = e;
                    jac = j;
                    res = r;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let _ = end;
    if res.norm() < tol {
        Ok(v)
    } else {
        Err(Error::ShootingFailure {
            iterations: numerics.shoot_max_iter,
            residual: res.norm(),
        })
    }
}

/// Jacobi field sampled along a geodesic.
#[derive(Debug, Clone)]
pub struct JacobiSolution {
    pub along: GeodesicTrace,
    pub t: Vec<f64>,
    pub j: Vec<DVector<f64>>,
    /// Covariant derivative `∇_{γ̇} J`.
    pub j_prime: Vec<DVector<f64>>,
    pub first_zero: Option<f64>,
}

/// Integrates the Jacobi equation with `J(0) = j0`, `∇J(0) = j0_prime` along
/// the geodesic starting at the first sample of `trace`.
pub fn jacobi_field(
    metric: &ChartMetric,
    trace: &GeodesicTrace,
    j0: &DVector<f64>,
    j0_prime: &DVector<f64>,
    numerics: &Numerics,
) -> Result<JacobiSolution> {
    let n = metric.dim();
    let s0 = &trace.samples[0];
    let t_end = trace.last().t;
    let gamma0 = metric.christoffel(&s0.x)?;
    let jdot0 = j0_prime - gamma0.contract(&s0.v, j0);
    let xb = DMatrix::from_column_slice(n, 1, j0.as_slice());
    let vb = DMatrix::from_column_slice(n, 1, jdot0.as_slice());
    let rhs = variational_rhs(metric, 1);
    let y0 = pack(&s0.x, &s0.v, &xb, &vb);
    let mut out = JacobiSolution {
        along: trace.clone(),
        t: vec![0.0],
        j: vec![j0.clone()],
        j_prime: vec![j0_prime.clone()],
        first_zero: None,
    };
    if t_end <= 0.0 {
        return Ok(out);
    }
    let mut st = Stepper::new(&rhs, y0, (t_end * 1e-3).max(1e-8), numerics.ode_tol)
        .ok_or_else(|| Error::OutOfChart {
            point: s0.x.iter().copied().collect(),
        })?
        .with_h_max(t_end / 100.0);
    let scale = j0.norm().max(j0_prime.norm());
    while st.t < t_end {
        let step = match st.advance(t_end)? {
            Advance::Accepted(s) => s,
            Advance::Blocked => break,
        };
        let u1 = unpack(&step.y1, n, 1);
        let g1 = metric.christoffel(&u1.x)?;
        let jv = u1.xb.column(0).into_owned();
        let jd = u1.vb.column(0).into_owned();
        let jp = &jd + g1.contract(&u1.v, &jv);
        if out.first_zero.is_none() {
            let j_prev = out.j.last().unwrap();
            // nontrivial sign change of every component indicates passage through zero
            let u0 = unpack(&step.y0, n, 1);
            let prev_norm = j_prev.norm();
            if prev_norm > 1e-9 * scale && jv.norm() > 0.0 && step.t0 > 0.0 {
                let dot0 = j_prev.dot(&u0.vb.column(0));
                let dot1 = jv.dot(&jd);
                if dot0 < 0.0 && dot1 > 0.0 {
                    // |J|² has a local minimum in the step; refine it
                    let norm_at = |t: f64| {
                        rk_step(&rhs, &step.y0, &step.f0, t - step.t0)
                            .map(|tr| unpack(&tr.y, n, 1).xb.column(0).norm())
                            .unwrap_or(f64::INFINITY)
                    };
                    let (tm, vm) = golden_min(norm_at, step.t0, step.t1);
                    if vm < 1e-6 * scale.max(1e-300) * (1.0 + tm) {
                        out.first_zero = Some(tm);
                    }
                }
            }
        }
        out.t.push(step.t1);
        out.j.push(jv);
        out.j_prime.push(jp);
    }
    Ok(out)
}

pub fn golden_min<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a).abs() < 1e-13 * (1.0 + a.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Smallest singular value and determinant of `X(t)/t`, where
/// `X(t) = ∂γ_v(t)/∂v` collects the Jacobi fields with `J(0) = 0`.
fn degeneracy(xb: &DMatrix<f64>, t: f64) -> (f64, f64) {
    let m = xb / t;
    let s = m.clone().svd(false, false).singular_values.min();
    (s, m.determinant())
}

/// First `t ∈ (0, t_max]` at which the endpoint map of `exp_x` degenerates.
pub fn first_conjugate_time(
    metric: &ChartMetric,
    x: &DVector<f64>,
    v: &DVector<f64>,
    t_max: f64,
    numerics: &Numerics,
) -> Result<Option<f64>> {
    let n = metric.dim();
    let rhs = variational_rhs(metric, n);
    let y0 = pack(x, v, &DMatrix::zeros(n, n), &DMatrix::identity(n, n));
    let speed = v.norm().max(f64::MIN_POSITIVE);
    let h_max = (t_max / 200.0).min(0.05 / speed);
    let mut st = Stepper::new(&rhs, y0, h_max * 0.1, numerics.ode_tol)
        .ok_or_else(|| Error::OutOfChart {
            point: x.iter().copied().collect(),
        })?
        .with_h_max(h_max);
    let at = |y: &DVector<f64>, t: f64| degeneracy(&unpack(y, n, n).xb, t);
    let mut hist: Vec<(f64, f64, f64)> = Vec::new();
    let mut steps = Vec::new();
    while st.t < t_max {
        let step = match st.advance(t_max)? {
            Advance::Accepted(s) => s,
            Advance::Blocked => break,
        };
        let (s1, d1) = at(&step.y1, step.t1);
        let state_at = |t: f64| {
            rk_step(&rhs, &step.y0, &step.f0, t - step.t0)
                .map(|tr| tr.y)
                .unwrap_or_else(|| step.dense(t))
        };
        if let Some(&(t0, _, d0)) = hist.last() {
            if t0 > 0.0 && d0 * d1 < 0.0 {
                let mut a = t0;
                let mut b = step.t1;
                let mut da = d0;
                for _ in 0..80 {
                    let m = 0.5 * (a + b);
                    let (_, dm) = at(&state_at(m), m);
                    if dm * da > 0.0 {
                        a = m;
                        da = dm;
                    } else {
                        b = m;
                    }
                    if b - a < 1e-13 * (1.0 + b) {
                        break;
                    }
                }
                return Ok(Some(0.5 * (a + b)));
            }
        }
        if hist.len() >= 2 {
            let (_, sa, _) = hist[hist.len() - 2];
            let (tb, sb, _) = hist[hist.len() - 1];
            if sb < sa && sb < s1 {
                // local minimum around tb: refine between the neighbouring nodes
                let prev: &super::ode::Step = steps.last().unwrap();
                let lo = prev.t0;
                let f = |t: f64| {
                    let y = if t <= tb {
                        rk_step(&rhs, &prev.y0, &prev.f0, t - prev.t0).map(|tr| tr.y).unwrap_or_else(|| prev.dense(t))
                    } else {
                        state_at(t)
                    };
                    at(&y, t).0
                };
                let (tm, sm) = golden_min(f, lo, step.t1);
                if sm < numerics.conj_tol {
                    return Ok(Some(tm));
                }
            }
        }
        hist.push((step.t1, s1, d1));
        steps.push(step);
        if steps.len() > 2 {
            steps.remove(0);
        }
    }
    Ok(None)
}
