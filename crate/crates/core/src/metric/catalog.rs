//! Built-in analytic model spacetimes.
//!
//! Every entry provides a metric with analytic first derivatives together with
//! a domain whose defining function is positive inside. Parameters are looked
//! up by name so scenario files can select entries without code changes.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::chart::{ChartBounds, ChartMetric, Signature};
use super::domain::DomainSpec;
use crate::error::{Error, Result};

/// A metric, its domain, and the length scale below which geodesic segments
/// are known to be free of cut points.
#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub metric: ChartMetric,
    pub domain: DomainSpec,
    pub injectivity_scale: f64,
}

pub type Params = BTreeMap<String, f64>;

fn param(p: &Params, key: &str, default: f64) -> f64 {
    p.get(key).copied().unwrap_or(default)
}

fn positive(value: f64, name: &str) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {value}")))
    }
}

pub const NAMES: &[&str] = &[
    "minkowski",
    "minkowski_polar",
    "minkowski_slab",
    "minkowski_cylinder",
    "minkowski_cylinder_normal",
    "minkowski_annulus",
    "product_sphere",
    "product_conformal",
    "jet_perturbed",
];

/// Looks up a catalog entry by name.
pub fn build(name: &str, params: &Params) -> Result<CatalogEntry> {
    match name {
        "minkowski" => {
            let n = param(params, "n", 3.0) as usize;
            Ok(minkowski(n))
        }
        "minkowski_polar" => Ok(minkowski_polar()),
        "minkowski_slab" => Ok(minkowski_slab(
            positive(param(params, "L", 1.0), "L")?,
            param(params, "n", 3.0) as usize,
        )),
        "minkowski_cylinder" => Ok(minkowski_cylinder(positive(param(params, "R", 1.0), "R")?)),
        "minkowski_cylinder_normal" => Ok(minkowski_cylinder_normal(positive(
            param(params, "R", 1.0),
            "R",
        )?)),
        "minkowski_annulus" => {
            let r0 = positive(param(params, "r0", 0.5), "r0")?;
            let r = positive(param(params, "R", 1.0), "R")?;
            if r0 >= r {
                return Err(Error::InvalidParameter("annulus needs r0 < R".into()));
            }
            Ok(minkowski_annulus(r0, r))
        }
        "product_sphere" => Ok(product_sphere()),
        "product_conformal" => Ok(product_conformal(
            param(params, "a", 0.2),
            positive(param(params, "sigma", 0.4), "sigma")?,
            [param(params, "x0", 0.2), param(params, "y0", 0.1)],
            positive(param(params, "R", 1.0), "R")?,
        )),
        "jet_perturbed" => {
            let m = param(params, "m", 2.0);
            if m < 1.0 || m.fract() != 0.0 {
                return Err(Error::InvalidParameter(format!("m must be a positive integer, got {m}")));
            }
            let q = [
                param(params, "q_tt", 0.0),
                param(params, "q_ttheta", 0.0),
                param(params, "q_thetatheta", 1.0),
            ];
            Ok(jet_perturbed(
                positive(param(params, "R", 1.0), "R")?,
                m as u32,
                param(params, "s", 0.0),
                q,
            ))
        }
        other => Err(Error::UnknownCatalog(other.to_string())),
    }
}

fn zero_derivative(n: usize) -> Vec<DMatrix<f64>> {
    vec![DMatrix::zeros(n, n); n]
}

fn eta(n: usize) -> DMatrix<f64> {
    let mut g = DMatrix::identity(n, n);
    g[(0, 0)] = -1.0;
    g
}

/// Flat space in Cartesian coordinates `(t, x¹, …)`, no boundary.
pub fn minkowski(n: usize) -> CatalogEntry {
    let metric = ChartMetric::new(n, Signature::Lorentzian, Arc::new(move |_| eta(n)))
        .with_derivative(Arc::new(move |_| zero_derivative(n)))
        .with_id("minkowski");
    CatalogEntry {
        metric,
        domain: DomainSpec::whole(n),
        injectivity_scale: f64::INFINITY,
    }
}

/// `−dt² + dr² + r²dθ²` on `r > 0`.
pub fn minkowski_polar() -> CatalogEntry {
    let metric = ChartMetric::new(
        3,
        Signature::Lorentzian,
        Arc::new(|x| DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 1.0, x[1] * x[1]]))),
    )
    .with_derivative(Arc::new(|x| {
        let mut d = zero_derivative(3);
        d[1][(2, 2)] = 2.0 * x[1];
        d
    }))
    .with_bounds(ChartBounds::unbounded(3).with(1, 0.0, f64::INFINITY))
    .with_period(2, 2.0 * PI)
    .with_id("minkowski_polar");
    CatalogEntry {
        metric,
        domain: DomainSpec::whole(3),
        injectivity_scale: f64::INFINITY,
    }
}

/// Flat slab `0 ≤ x^{n-1} ≤ L` in Cartesian coordinates.
pub fn minkowski_slab(l: f64, n: usize) -> CatalogEntry {
    let k = n - 1;
    let mut entry = minkowski(n);
    entry.metric.catalog_id = Some("minkowski_slab".into());
    entry.domain = DomainSpec::new(
        n,
        Arc::new(move |x| x[k] * (l - x[k]) / l),
        Arc::new(move |x| {
            let mut d = DVector::zeros(n);
            d[k] = (l - 2.0 * x[k]) / l;
            d
        }),
    )
    .with_depth(Arc::new(move |x| x[k].min(l - x[k])))
    .with_collar(0.25 * l)
    .with_name("minkowski_slab");
    entry
}

fn disk_domain(r: f64, name: &str) -> DomainSpec {
    DomainSpec::new(
        3,
        Arc::new(move |x| (r * r - x[1] * x[1] - x[2] * x[2]) / (2.0 * r)),
        Arc::new(move |x| DVector::from_vec(vec![0.0, -x[1] / r, -x[2] / r])),
    )
    .with_depth(Arc::new(move |x| r - (x[1] * x[1] + x[2] * x[2]).sqrt()))
    .with_collar(0.25 * r)
    .with_name(name)
}

/// Flat solid cylinder `r ≤ R` in Cartesian coordinates `(t, x, y)`.
pub fn minkowski_cylinder(r: f64) -> CatalogEntry {
    let mut entry = minkowski(3);
    entry.metric.catalog_id = Some("minkowski_cylinder".into());
    entry.domain = disk_domain(r, "minkowski_cylinder");
    entry.injectivity_scale = f64::INFINITY;
    entry
}

/// The cylinder in boundary normal coordinates `(t, θ, x^n)` with
/// `g = −dt² + (R − x^n)²dθ² + (dx^n)²`; the boundary is `x^n = 0`.
pub fn minkowski_cylinder_normal(r: f64) -> CatalogEntry {
    let metric = ChartMetric::new(
        3,
        Signature::Lorentzian,
        Arc::new(move |x| {
            let s = r - x[2];
            DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, s * s, 1.0]))
        }),
    )
    .with_derivative(Arc::new(move |x| {
        let mut d = zero_derivative(3);
        d[2][(1, 1)] = -2.0 * (r - x[2]);
        d
    }))
    .with_bounds(ChartBounds::unbounded(3).with(2, f64::NEG_INFINITY, r))
    .with_period(1, 2.0 * PI)
    .with_id("minkowski_cylinder_normal");
    CatalogEntry {
        metric,
        domain: normal_domain(r, "minkowski_cylinder_normal"),
        injectivity_scale: f64::INFINITY,
    }
}

fn normal_domain(r: f64, name: &str) -> DomainSpec {
    DomainSpec::new(
        3,
        Arc::new(|x| x[2]),
        Arc::new(|_| DVector::from_vec(vec![0.0, 0.0, 1.0])),
    )
    .with_depth(Arc::new(|x| x[2]))
    .with_collar(0.25 * r)
    .with_name(name)
}

/// Flat annulus `r0 ≤ r ≤ R` in Cartesian coordinates.
pub fn minkowski_annulus(r0: f64, r: f64) -> CatalogEntry {
    let mut entry = minkowski(3);
    entry.metric.catalog_id = Some("minkowski_annulus".into());
    let c = 1.0 / (2.0 * (r * r - r0 * r0));
    entry.domain = DomainSpec::new(
        3,
        Arc::new(move |x| {
            let q = x[1] * x[1] + x[2] * x[2];
            c * (q - r0 * r0) * (r * r - q)
        }),
        Arc::new(move |x| {
            let q = x[1] * x[1] + x[2] * x[2];
            let dq = c * ((r * r - q) - (q - r0 * r0));
            DVector::from_vec(vec![0.0, 2.0 * x[1] * dq, 2.0 * x[2] * dq])
        }),
    )
    .with_depth(Arc::new(move |x| {
        let rr = (x[1] * x[1] + x[2] * x[2]).sqrt();
        (rr - r0).min(r - rr)
    }))
    .with_collar(0.25 * (r - r0))
    .with_name("minkowski_annulus");
    entry.injectivity_scale = f64::INFINITY;
    entry
}

/// `−dt² + dθ² + sin²θ dϕ²` in polar coordinates on the unit sphere.
pub fn product_sphere() -> CatalogEntry {
    let metric = ChartMetric::new(
        3,
        Signature::Lorentzian,
        Arc::new(|x| {
            let s = x[1].sin();
            DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 1.0, s * s]))
        }),
    )
    .with_derivative(Arc::new(|x| {
        let mut d = zero_derivative(3);
        d[1][(2, 2)] = 2.0 * x[1].sin() * x[1].cos();
        d
    }))
    .with_bounds(ChartBounds::unbounded(3).with(1, 0.0, PI))
    .with_period(2, 2.0 * PI)
    .with_id("product_sphere");
    CatalogEntry {
        metric,
        domain: DomainSpec::whole(3),
        injectivity_scale: PI,
    }
}

/// `−dt² + c(x)²(dx² + dy²)` with a Gaussian bump
/// `c = 1 + a·exp(−|x − x0|²/(2σ²))`, restricted to the disk `r ≤ R`.
pub fn product_conformal(a: f64, sigma: f64, x0: [f64; 2], r: f64) -> CatalogEntry {
    let bump = move |x: &DVector<f64>| {
        let dx = x[1] - x0[0];
        let dy = x[2] - x0[1];
        let e = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
        (1.0 + a * e, -a * e * dx / (sigma * sigma), -a * e * dy / (sigma * sigma))
    };
    let metric = ChartMetric::new(
        3,
        Signature::Lorentzian,
        Arc::new(move |x| {
            let (c, _, _) = bump(x);
            DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, c * c, c * c]))
        }),
    )
    .with_derivative(Arc::new(move |x| {
        let (c, cx, cy) = bump(x);
        let mut d = zero_derivative(3);
        for (k, dc) in [(1, cx), (2, cy)] {
            d[k][(1, 1)] = 2.0 * c * dc;
            d[k][(2, 2)] = 2.0 * c * dc;
        }
        d
    }))
    .with_id("product_conformal");
    CatalogEntry {
        metric,
        domain: disk_domain(r, "product_conformal"),
        injectivity_scale: f64::INFINITY,
    }
}

/// Cutoff equal to 1 on `x^n ≤ JET_CUTOFF.0` and 0 on `x^n ≥ JET_CUTOFF.1`.
pub const JET_CUTOFF: (f64, f64) = (0.25, 0.5);

fn bump_f(t: f64) -> (f64, f64) {
    if t <= 0.0 {
        (0.0, 0.0)
    } else {
        let f = (-1.0 / t).exp();
        (f, f / (t * t))
    }
}

/// Smooth step `χ(s)` and its derivative.
pub fn smooth_cutoff(s: f64) -> (f64, f64) {
    let (a, b) = JET_CUTOFF;
    let (fu, dfu) = bump_f(b - s);
    let (fw, dfw) = bump_f(s - a);
    let sum = fu + fw;
    if fw == 0.0 {
        return (1.0, 0.0);
    }
    if fu == 0.0 {
        return (0.0, 0.0);
    }
    let chi = fu / sum;
    let dchi = (-dfu * fw - fu * dfw) / (sum * sum);
    (chi, dchi)
}

fn factorial(m: u32) -> f64 {
    (1..=m).map(f64::from).product()
}

/// Cylinder normal chart with `g_αβ += s·(x^n)^m/m!·χ(x^n)·q_αβ` on the
/// tangential `(t, θ)` block, `q = [q_tt, q_tθ, q_θθ]`.
pub fn jet_perturbed(r: f64, m: u32, s: f64, q: [f64; 3]) -> CatalogEntry {
    let fact = factorial(m);
    let qm = move |g: &mut DMatrix<f64>, w: f64| {
        g[(0, 0)] += w * q[0];
        g[(0, 1)] += w * q[1];
        g[(1, 0)] += w * q[1];
        g[(1, 1)] += w * q[2];
    };
    let profile = move |n: f64| {
        let (chi, dchi) = smooth_cutoff(n);
        let p = n.powi(m as i32) / fact;
        let dp = if m == 0 { 0.0 } else { n.powi(m as i32 - 1) / factorial(m - 1) };
        (s * p * chi, s * (dp * chi + p * dchi))
    };
    let metric = ChartMetric::new(
        3,
        Signature::Lorentzian,
        Arc::new(move |x| {
            let sr = r - x[2];
            let mut g = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, sr * sr, 1.0]));
            qm(&mut g, profile(x[2]).0);
            g
        }),
    )
    .with_derivative(Arc::new(move |x| {
        let mut d = zero_derivative(3);
        d[2][(1, 1)] = -2.0 * (r - x[2]);
        qm(&mut d[2], profile(x[2]).1);
        d
    }))
    .with_bounds(ChartBounds::unbounded(3).with(2, f64::NEG_INFINITY, r))
    .with_period(1, 2.0 * PI)
    .with_id("jet_perturbed");
    CatalogEntry {
        metric,
        domain: normal_domain(r, "jet_perturbed"),
        injectivity_scale: f64::INFINITY,
    }
}
