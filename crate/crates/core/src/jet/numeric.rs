//! Travel-time probes near a strictly convex boundary direction and the
//! numerical recovery of normal derivatives of the metric from them.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use super::symbolic::{jet_coefficient, to_f64, Rational};
use crate::error::{Error, Result};
use crate::metric::{catalog, frame_at, second_fundamental_form, CausalClass, ChartMetric, DomainSpec, Signature};
use crate::numerics::Numerics;
use crate::scattering::complete_scattering;

/// Lower end of the default `ε` grid.
pub const EPS_MIN: f64 = 1e-3;
pub const GRID_POINTS: usize = 24;
pub const PROBE_ODE_TOL: f64 = 1e-12;
pub const PROBE_EVENT_TOL: f64 = 1e-14;
/// Largest admissible condition number of the weighted design matrix.
pub const MAX_CONDITION: f64 = 1e12;

/// `n` log-spaced values in `[EPS_MIN, eps_max]`.
pub fn eps_grid(eps_max: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![eps_max];
    }
    let (a, b) = (EPS_MIN.ln(), eps_max.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Fit order used when targeting the `ε^{2m−1}` coefficient.
pub fn default_order(m: u32) -> usize {
    2 * m as usize + 5
}

/// Tolerances recommended for probe traces.
pub fn probe_numerics(base: &Numerics) -> Numerics {
    Numerics {
        ode_tol: base.ode_tol.min(PROBE_ODE_TOL),
        event_tol: base.event_tol.min(PROBE_EVENT_TOL),
        ..*base
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct JetProbe {
    pub base: Vec<f64>,
    pub direction: Vec<f64>,
    /// Inward unit normal at the base point.
    pub normal: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub taus: Vec<f64>,
    /// Grid values dropped because the probe left tangentially.
    pub trimmed: Vec<f64>,
    /// `−II(v, v)`, which equals `½∂_n g(v, v)` in boundary normal coordinates.
    pub k: f64,
    pub fit: Option<ExpansionFit>,
}

/// `√(1 ± ε²)v + ε∂_n`, with the sign chosen so that a unit `v` stays unit.
pub fn probe_direction(signature: Signature, v: &DVector<f64>, normal: &DVector<f64>, eps: f64) -> DVector<f64> {
    let s = match signature {
        Signature::Lorentzian => (1.0 + eps * eps).sqrt(),
        Signature::Riemannian => (1.0 - eps * eps).sqrt(),
    };
    v * s + normal * eps
}

/// `K = −II(v, v)`; strictly negative for a strictly convex direction.
pub fn convexity_k(metric: &ChartMetric, domain: &DomainSpec, p: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
    Ok(-second_fundamental_form(metric, domain, p, v)?)
}

/// Traces `v_ε` from `p` for every `ε` in the grid and records the exit times.
pub fn probe_travel_time(
    metric: &ChartMetric,
    domain: &DomainSpec,
    p: &DVector<f64>,
    v: &DVector<f64>,
    eps: &[f64],
    numerics: &Numerics,
) -> Result<JetProbe> {
    if eps.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
        return Err(Error::InvalidParameter("probe offsets must lie in (0, 1)".into()));
    }
    if metric.signature() == Signature::Lorentzian && metric.causal_class(p, v)? != CausalClass::Timelike {
        return Err(Error::Precondition("Lorentzian probes need a timelike direction".into()));
    }
    let k = convexity_k(metric, domain, p, v)?;
    let scale = metric.norm_sq(p, v).abs().max(1e-300);
    if !(k < -1e-9 * scale) {
        return Err(Error::Precondition(format!(
            "direction is not strictly convex (II(v, v) = {:e})",
            -k
        )));
    }
    let normal = frame_at(metric, domain, p)?.inward_normal();
    let num = Numerics {
        event_tol: numerics.event_tol.min(PROBE_EVENT_TOL),
        ..*numerics
    };
    let results: Vec<Result<Option<f64>>> = eps
        .par_iter()
        .map(|&e| {
            let w = probe_direction(metric.signature(), v, &normal, e);
            let s = complete_scattering(metric, domain, p, &w, &num)?;
            let tr = domain.transversality(&s.outbound.base, &s.outbound.vec);
            Ok(if tr.abs() <= num.tangent_threshold { None } else { Some(s.tau) })
        })
        .collect();
    let mut probe = JetProbe {
        base: p.iter().copied().collect(),
        direction: v.iter().copied().collect(),
        normal: normal.iter().copied().collect(),
        epsilons: Vec::with_capacity(eps.len()),
        taus: Vec::with_capacity(eps.len()),
        trimmed: Vec::new(),
        k,
        fit: None,
    };
    for (&e, r) in eps.iter().zip(results) {
        match r? {
            Some(t) => {
                probe.epsilons.push(e);
                probe.taus.push(t);
            }
            None => probe.trimmed.push(e),
        }
    }
    Ok(probe)
}

/// Polynomial through the origin fitted to `τ(ε)`.
#[derive(Debug, Clone, Serialize)]
pub struct ExpansionFit {
    pub order: usize,
    /// `a₁, …, a_order`.
    pub coefficients: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Root-mean-square relative residual.
    pub residual: f64,
    pub condition: f64,
    /// Relative change of `a₁` when refitting on every other grid point.
    pub subgrid_gap: Option<f64>,
}

impl ExpansionFit {
    /// `a_k`, or zero beyond the fitted order.
    pub fn coefficient(&self, k: usize) -> f64 {
        if k == 0 || k > self.order {
            0.0
        } else {
            self.coefficients[k - 1]
        }
    }

    pub fn sigma_of(&self, k: usize) -> f64 {
        if k == 0 || k > self.order {
            f64::INFINITY
        } else {
            self.sigma[k - 1]
        }
    }
}

struct RawFit {
    coefficients: Vec<f64>,
    sigma: Vec<f64>,
    residual: f64,
    condition: f64,
}

fn solve_fit(eps: &[f64], taus: &[f64], order: usize) -> Result<RawFit> {
    let n = eps.len();
    let emax = eps.iter().fold(0.0f64, |m, e| m.max(*e));
    // Relative weighting; columns use ε/ε_max so the matrix stays well scaled.
    let a = DMatrix::from_fn(n, order, |i, k| (eps[i] / emax).powi(k as i32 + 1) / taus[i].abs());
    let y = DVector::from_element(n, 1.0);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::IllConditionedFit { condition });
    }
    let (u, vt) = (svd.u.as_ref().unwrap(), svd.v_t.as_ref().unwrap());
    let uty = u.transpose() * &y;
    let scaled = vt.transpose() * DVector::from_fn(order, |k, _| uty[k] / svd.singular_values[k]);
    let r = &a * &scaled - &y;
    let rss = r.norm_squared();
    let dof = (n - order).max(1) as f64;
    let s2 = rss / dof;
    let coefficients: Vec<f64> = (0..order).map(|k| scaled[k] / emax.powi(k as i32 + 1)).collect();
    let sigma: Vec<f64> = (0..order)
        .map(|k| {
            let var: f64 = (0..order)
                .map(|j| (vt[(j, k)] / svd.singular_values[j]).powi(2))
                .sum::<f64>()
                * s2;
            var.sqrt() / emax.powi(k as i32 + 1)
        })
        .collect();
    Ok(RawFit {
        coefficients,
        sigma,
        residual: (rss / n as f64).sqrt(),
        condition,
    })
}

/// Weighted least-squares fit of `τ(ε) = Σ_{k=1}^{order} a_k ε^k`.
pub fn fit_series(eps: &[f64], taus: &[f64], order: usize) -> Result<ExpansionFit> {
    if eps.len() != taus.len() {
        return Err(Error::InvalidParameter("grid and samples differ in length".into()));
    }
    if order == 0 || eps.len() < 2 * order {
        return Err(Error::Precondition(format!(
            "order {order} needs at least {} samples, got {}",
            2 * order,
            eps.len()
        )));
    }
    if taus.iter().any(|t| !(t.abs() > 0.0) || !t.is_finite()) {
        return Err(Error::Precondition("samples must be finite and non-zero".into()));
    }
    let full = solve_fit(eps, taus, order)?;
    let sub_e: Vec<f64> = eps.iter().step_by(2).copied().collect();
    let sub_t: Vec<f64> = taus.iter().step_by(2).copied().collect();
    let sub_order = order.min(sub_e.len() / 2);
    let subgrid_gap = if sub_order >= 1 {
        solve_fit(&sub_e, &sub_t, sub_order)
            .ok()
            .map(|f| ((f.coefficients[0] - full.coefficients[0]) / full.coefficients[0]).abs())
    } else {
        None
    };
    Ok(ExpansionFit {
        order,
        coefficients: full.coefficients,
        sigma: full.sigma,
        residual: full.residual,
        condition: full.condition,
        subgrid_gap,
    })
}

pub fn fit_expansion(probe: &mut JetProbe, order: usize) -> Result<&ExpansionFit> {
    let fit = fit_series(&probe.epsilons, &probe.taus, order)?;
    Ok(probe.fit.insert(fit))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FirstOrderJet {
    pub k: f64,
    /// `∂_n g(v, v) = 2K`.
    pub value: f64,
    pub sigma: f64,
}

/// Largest relative uncertainty of `a₁` accepted by [`recover_m1`].
pub const A1_REL_SIGMA_MAX: f64 = 1e-4;

/// `K = −2/a₁` and `∂_n g(v, v) = 2K`.
pub fn recover_m1(fit: &ExpansionFit) -> Result<FirstOrderJet> {
    let a1 = fit.coefficient(1);
    let s1 = fit.sigma_of(1);
    if !(a1.abs() > 1e-12) {
        return Err(Error::ConvexityViolation(format!("leading coefficient {a1:e} vanishes")));
    }
    if !(s1 < A1_REL_SIGMA_MAX * a1.abs()) {
        return Err(Error::Inconclusive(format!(
            "leading coefficient {a1} has relative uncertainty {:e}",
            s1 / a1.abs()
        )));
    }
    let k = -2.0 / a1;
    Ok(FirstOrderJet {
        k,
        value: 2.0 * k,
        sigma: 4.0 * s1 / (a1 * a1),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JetEntry {
    pub m: u32,
    pub value: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct JetResult {
    pub base_point: Vec<f64>,
    pub direction: Vec<f64>,
    #[serde(rename = "K")]
    pub k: f64,
    pub entries: Vec<JetEntry>,
    /// `(m, a_{2m−1})` for every level the fit reaches.
    pub coefficients_used: Vec<(u32, f64)>,
    pub fit: ExpansionFit,
}

impl JetResult {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "base_point": self.base_point,
            "direction": self.direction,
            "K": self.k,
            "entries": self.entries,
            "fit": {
                "coefficients": self.fit.coefficients,
                "residual": self.fit.residual,
                "condition": self.fit.condition,
            },
        })
    }
}

/// Fits the probe and reports the first normal derivative when its
/// uncertainty is at most `sigma_max`.
pub fn reconstruct_jet(probe: &mut JetProbe, order: usize, sigma_max: f64) -> Result<JetResult> {
    let fit = fit_expansion(probe, order)?.clone();
    let mut entries = Vec::new();
    let mut k = probe.k;
    if let Ok(first) = recover_m1(&fit) {
        k = first.k;
        if first.sigma <= sigma_max {
            entries.push(JetEntry {
                m: 1,
                value: first.value,
                sigma: first.sigma,
            });
        }
    }
    let coefficients_used = (1..)
        .map(|m: u32| (m, 2 * m as usize - 1))
        .take_while(|(_, i)| *i <= fit.order)
        .map(|(m, i)| (m, fit.coefficient(i)))
        .collect();
    Ok(JetResult {
        base_point: probe.base.clone(),
        direction: probe.direction.clone(),
        k,
        entries,
        coefficients_used,
        fit,
    })
}

/// Setup for the perturbation-linearity check on the cylinder normal chart.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearityParams {
    pub radius: f64,
    pub m: u32,
    /// `[q_tt, q_tθ, q_θθ]`.
    pub q: [f64; 3],
    /// Probe direction `∂_t + b∂_θ`.
    pub b: f64,
    pub s_grid: Vec<f64>,
    /// Defaults to `2m + 5`.
    pub order: Option<usize>,
    pub eps_max: f64,
    pub points: usize,
}

impl Default for LinearityParams {
    fn default() -> Self {
        Self {
            radius: 1.0,
            m: 2,
            q: [0.0, 0.0, 1.0],
            b: 0.5,
            s_grid: vec![-0.1, -0.05, 0.0, 0.05, 0.1],
            order: None,
            eps_max: 0.15,
            points: GRID_POINTS,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LinearityReport {
    pub m: u32,
    pub k: f64,
    pub s_grid: Vec<f64>,
    /// `a_{2m−1}` for each `s`.
    pub coefficients: Vec<f64>,
    pub slope: f64,
    pub slope_sigma: f64,
    pub predicted: f64,
    pub rel_dev: f64,
}

/// Ordinary least-squares line; returns `(slope, intercept, slope sigma)`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let dof = (xs.len().saturating_sub(2)).max(1) as f64;
    (slope, intercept, (rss / dof / sxx).sqrt())
}

/// Measures how the `ε^{2m−1}` coefficient moves with the size `s` of an
/// order-`m` normal perturbation and compares it with the exact coefficient.
pub fn verify_jet_linearity(params: &LinearityParams, numerics: &Numerics) -> Result<LinearityReport> {
    if params.m < 2 {
        return Err(Error::Precondition("the linearity check needs m ≥ 2".into()));
    }
    if params.s_grid.len() < 3 {
        return Err(Error::InvalidParameter("at least three perturbation sizes are needed".into()));
    }
    let order = params.order.unwrap_or_else(|| default_order(params.m));
    let idx = 2 * params.m as usize - 1;
    if idx > order {
        return Err(Error::InvalidParameter(format!("fit order {order} does not reach ε^{idx}")));
    }
    let p = DVector::from_vec(vec![0.0, 0.0, 0.0]);
    let v = DVector::from_vec(vec![1.0, params.b, 0.0]);
    let eps = eps_grid(params.eps_max, params.points);
    let base = catalog::jet_perturbed(params.radius, params.m, 0.0, params.q);
    let k = convexity_k(&base.metric, &base.domain, &p, &v)?;
    let num = probe_numerics(numerics);
    let mut coefficients = Vec::with_capacity(params.s_grid.len());
    for &s in &params.s_grid {
        let e = catalog::jet_perturbed(params.radius, params.m, s, params.q);
        let mut probe = probe_travel_time(&e.metric, &e.domain, &p, &v, &eps, &num)?;
        coefficients.push(fit_expansion(&mut probe, order)?.coefficient(idx));
    }
    let (slope, _, slope_sigma) = fit_line(&params.s_grid, &coefficients);
    let b = params.b;
    let qvv = params.q[0] + 2.0 * b * params.q[1] + b * b * params.q[2];
    let k_exact = Rational::from_float(k).ok_or_else(|| Error::ConvexityViolation(format!("K = {k}")))?;
    let predicted = to_f64(&jet_coefficient(params.m, &k_exact)?) * qvv;
    let reference = predicted.abs().max(slope.abs());
    if reference > 1e-9 && slope_sigma > 0.1 * reference {
        return Err(Error::Inconclusive(format!(
            "slope {slope} has uncertainty {slope_sigma}; coefficients {coefficients:?}"
        )));
    }
    Ok(LinearityReport {
        m: params.m,
        k,
        s_grid: params.s_grid.clone(),
        coefficients,
        slope,
        slope_sigma,
        predicted,
        rel_dev: (slope - predicted).abs() / predicted.abs().max(1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_polynomial_is_recovered() {
        let eps = eps_grid(0.15, GRID_POINTS);
        let taus: Vec<f64> = eps.iter().map(|e| 3.0 * e + 5.0 * e.powi(3)).collect();
        let fit = fit_series(&eps, &taus, 3).unwrap();
        assert!((fit.coefficient(1) - 3.0).abs() < 1e-12);
        assert!(fit.coefficient(2).abs() < 1e-9);
        assert!((fit.coefficient(3) - 5.0).abs() < 1e-8);
        assert!(fit.residual < 1e-14);
    }

    #[test]
    fn too_few_points_is_rejected() {
        let eps = eps_grid(0.15, 6);
        let taus: Vec<f64> = eps.iter().map(|e| 2.0 * e).collect();
        assert!(matches!(fit_series(&eps, &taus, 4), Err(Error::Precondition(_))));
    }

    #[test]
    fn line_fit() {
        let (s, c, sig) = fit_line(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]);
        assert!((s - 2.0).abs() < 1e-14 && (c - 1.0).abs() < 1e-14 && sig < 1e-12);
    }

    #[test]
    fn grid_is_log_spaced() {
        let g = eps_grid(0.15, GRID_POINTS);
        assert_eq!(g.len(), GRID_POINTS);
        assert!((g[0] - EPS_MIN).abs() < 1e-15 && (g[23] - 0.15).abs() < 1e-15);
        let r = g[1] / g[0];
        assert!(g.windows(2).all(|w| (w[1] / w[0] - r).abs() < 1e-12));
    }
}
