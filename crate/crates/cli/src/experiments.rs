//! Experiment runners. Each reads its strict settings from the scenario,
//! calls into `rigidity_core` and returns artifacts for the harness to write.

use nalgebra::DVector;
use rigidity_core::geodesic::{events_json, trace_csv, trace_with, StopRule};
use rigidity_core::io::{csv_row, floats, fmt_f64, indexed};
use rigidity_core::jet::{
    eps_grid, probe_travel_time, reconstruct_jet, verify_jet_linearity, default_order, LinearityParams,
};
use rigidity_core::metric::CatalogEntry;
use rigidity_core::rigidity::{
    self, boundary_lightcone_id, causal_boundary_class, construct_isometry, cylinder_embedding,
    exterior_lightlike_traveltime, pushforward_domain, pushforward_metric, verify_isometry, ChartMap, Disk,
    DiskObstacle, ExteriorParams, IsometryParams, Method, Side, TimeSeparationField,
};
use rigidity_core::scattering::{
    self, build_scattering_table, cone_directions, flow_closure, interior_scattering, scatter_states, ConeParams,
    LensTable, ScatteringKind, ScatteringSample, ScatteringTable,
};
use rigidity_core::variation::{
    recover_complete_states, recover_interior_from_complete, recover_lightlike_tau_interior, Collar,
    ConversionParams, StepCase,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{Experiment, ScenarioConfig};
use crate::error::CliError;
use crate::report::{Failure, Outcome};
use crate::selftest;

fn dv(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

fn dims(name: &str, x: &[f64], n: usize) -> Result<(), CliError> {
    if x.len() == n {
        Ok(())
    } else {
        Err(CliError::Config {
            pointer: format!("/settings/{name}"),
            message: format!("expected {n} components, got {}", x.len()),
        })
    }
}

pub fn run(cfg: &ScenarioConfig, experiment: Experiment) -> Result<Outcome, CliError> {
    match experiment {
        Experiment::Trace => trace(cfg),
        Experiment::ScatterTable => scatter_table(cfg),
        Experiment::ConvertScattering => convert_scattering(cfg),
        Experiment::RecoverTau => recover_tau(cfg),
        Experiment::RecoverJet => recover_jet(cfg),
        Experiment::JetLinearity => jet_linearity(cfg),
        Experiment::TimesepGrid => timesep_grid(cfg),
        Experiment::LightconeId => lightcone_id(cfg),
        Experiment::ExteriorReconstruct => exterior_reconstruct(cfg),
        Experiment::VerifyIsometry => isometry(cfg),
        Experiment::Selftest => Ok(selftest::run(&cfg.numerics)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stop {
    Never,
    FirstEvent,
    #[default]
    LeaveDomain,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSettings {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    /// Defaults to `numerics.t_max`.
    pub t_max: Option<f64>,
    #[serde(default)]
    pub stop: Stop,
}

fn trace(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let s: TraceSettings = cfg.required_settings()?;
    let e = cfg.entry()?;
    dims("x", &s.x, e.metric.dim())?;
    dims("v", &s.v, e.metric.dim())?;
    let stop = match s.stop {
        Stop::Never => StopRule::Never,
        Stop::FirstEvent => StopRule::FirstEvent,
        Stop::LeaveDomain => StopRule::LeaveDomain,
    };
    let t_max = s.t_max.unwrap_or(cfg.numerics.t_max);
    let tr = trace_with(&e.metric, &e.domain, &dv(&s.x), &dv(&s.v), t_max, &cfg.numerics, stop)?;
    let events = events_json(&tr);
    let last = tr.last();
    Ok(Outcome::new(json!({
        "samples": tr.samples.len(),
        "events": tr.events.len(),
        "event_times": tr.events.iter().map(|e| e.t).collect::<Vec<_>>(),
        "final_t": last.t,
        "termination": format!("{:?}", tr.termination),
        "max_energy_drift": tr.max_energy_drift(&e.metric),
    }))
    .artifact("trace.csv", trace_csv(&tr))
    .json_artifact("events.json", &events))
}

/// Boundary sampling for scattering tables.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    Circle { radius: f64, times: Vec<f64>, angles: Vec<f64> },
    SlabFace { times: Vec<f64>, xs: Vec<f64> },
    Points(Vec<Vec<f64>>),
}

impl GridSpec {
    fn build(&self) -> scattering::BoundaryGrid {
        match self {
            GridSpec::Circle { radius, times, angles } => scattering::BoundaryGrid::circle(*radius, times, angles),
            GridSpec::SlabFace { times, xs } => scattering::BoundaryGrid::slab_face(times, xs),
            GridSpec::Points(p) => scattering::BoundaryGrid::from_points(p.iter().map(|x| dv(x)).collect(), "points"),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSettings {
    pub grid: GridSpec,
    pub cone: ConeParams,
    pub kind: ScatteringKind,
}

fn table_failures(t: &ScatteringTable) -> Vec<Failure> {
    t.failures
        .iter()
        .map(|f| Failure {
            input: json!({"x": f.x, "v": f.v}),
            error: f.error.clone(),
        })
        .collect()
}

fn scatter_table(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let s: TableSettings = cfg.required_settings()?;
    let e = cfg.entry()?;
    let t = build_scattering_table(&e.metric, &e.domain, &s.grid.build(), &s.cone, s.kind, &cfg.numerics)?;
    let mut out = Outcome::new(json!({
        "samples": t.samples.len(),
        "failures": t.failures.len(),
        "kind": s.kind.as_str(),
    }))
    .artifact("table.csv", t.to_csv())
    .json_artifact("table.json", &t.to_json());
    out.failures = table_failures(&t);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    InteriorFromComplete,
    CompleteFromInterior,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvertSettings {
    pub direction: Direction,
    pub grid: GridSpec,
    pub cone: ConeParams,
    #[serde(default)]
    pub conversion: ConversionParams,
    /// Largest accepted relative travel-time deviation from the direct table.
    #[serde(default = "default_tau_tol")]
    pub tau_tol: f64,
}

fn default_tau_tol() -> f64 {
    1e-4
}

fn deviations(recovered: &[ScatteringSample], direct: &[ScatteringSample]) -> (f64, f64) {
    let mut state = 0.0f64;
    let mut tau = 0.0f64;
    for (r, d) in recovered.iter().zip(direct) {
        let ds = ((&r.outbound.base - &d.outbound.base).norm_squared()
            + (&r.outbound.vec - &d.outbound.vec).norm_squared())
        .sqrt();
        state = state.max(ds);
        tau = tau.max((r.tau - d.tau).abs() / d.tau.abs().max(f64::MIN_POSITIVE));
    }
    (state, tau)
}

fn convert_scattering(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let s: ConvertSettings = cfg.required_settings()?;
    let e = cfg.entry()?;
    let n = &cfg.numerics;
    let grid = s.grid.build();
    let mut states = Vec::new();
    for p in &grid.points {
        let x = dv(p);
        for v in cone_directions(&e.metric, &e.domain, &x, &s.cone)? {
            states.push((x.clone(), v));
        }
    }
    let (recovered, direct, steps_ok) = match s.direction {
        Direction::InteriorFromComplete => {
            let closed = flow_closure(&e.metric, &e.domain, &states, n)?;
            let complete = scatter_states(&e.metric, &e.domain, &closed, ScatteringKind::Complete, n);
            let direct = scatter_states(&e.metric, &e.domain, &closed, ScatteringKind::Interior, n);
            (recover_interior_from_complete(&complete)?, direct, true)
        }
        Direction::CompleteFromInterior => {
            let interior = scatter_states(&e.metric, &e.domain, &states, ScatteringKind::Interior, n);
            let lens = LensTable::new(interior, *n).with_oracle(e.metric.clone(), e.domain.clone());
            let collar = Collar {
                metric: &e.metric,
                domain: &e.domain,
            };
            let params = ConversionParams {
                seed: cfg.seed,
                ..s.conversion
            };
            let out = recover_complete_states(&lens, &collar, &states, &params, n)?;
            let steps_ok = out.runs.iter().all(|r| {
                r.steps.len() <= r.max_iterations
                    && r.steps
                        .iter()
                        .filter(|st| st.case == StepCase::Limit)
                        .all(|st| st.progress >= st.delta)
            });
            let direct = scatter_states(&e.metric, &e.domain, &states, ScatteringKind::Complete, n);
            (out.table, direct, steps_ok)
        }
    };
    // Compare only states present in both tables.
    let mut pairs_r = Vec::new();
    let mut pairs_d = Vec::new();
    for r in &recovered.samples {
        if let Some(d) = direct
            .samples
            .iter()
            .find(|d| (&d.inbound.base - &r.inbound.base).norm() + (&d.inbound.vec - &r.inbound.vec).norm() < 1e-12)
        {
            pairs_r.push(r.clone());
            pairs_d.push(d.clone());
        }
    }
    let (state_dev, tau_dev) = deviations(&pairs_r, &pairs_d);
    let mut out = Outcome::new(json!({
        "direction": s.direction,
        "states": states.len(),
        "compared": pairs_r.len(),
        "max_state_deviation": state_dev,
        "max_tau_deviation": tau_dev,
        "step_bounds_hold": steps_ok,
    }))
    .artifact("recovered.csv", recovered.to_csv())
    .artifact("direct.csv", direct.to_csv());
    out.failures = table_failures(&recovered);
    out.passed = tau_dev < s.tau_tol && steps_ok;
    Ok(out)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverTauSettings {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

fn recover_tau(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let s: RecoverTauSettings = cfg.required_settings()?;
    let e = cfg.entry()?;
    let n = &cfg.numerics;
    let (x, v) = (dv(&s.x), dv(&s.v));
    let lens = LensTable::new(ScatteringTable::new(ScatteringKind::Interior), *n)
        .with_oracle(e.metric.clone(), e.domain.clone());
    let r = recover_lightlike_tau_interior(&lens, &e.metric, &e.domain, &x, &v)?;
    let direct = interior_scattering(&e.metric, &e.domain, &x, &v, n)?;
    let summary = json!({
        "tau_recovered": r.sample.tau,
        "tau_direct": direct.tau,
        "relative_error": (r.sample.tau - direct.tau).abs() / direct.tau,
        "h0": r.h0,
        "h_prime": r.h_prime,
        "lambdas": r.lambdas,
        "entries": r.entries.iter().map(|p| p.as_slice().to_vec()).collect::<Vec<_>>(),
        "exit": {"y": r.sample.outbound.base.as_slice(), "w": r.sample.outbound.vec.as_slice()},
    });
    Ok(Outcome::new(summary.clone()).json_artifact("recover_tau.json", &summary))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverJetSettings {
    pub p: Vec<f64>,
    pub v: Vec<f64>,
    /// Defaults to `numerics.eps_max`.
    pub eps_max: Option<f64>,
    #[serde(default = "default_points")]
    pub points: usize,
    /// Polynomial order of the fit; defaults to the order needed for `m = 1`.
    pub order: Option<usize>,
    #[serde(default = "default_sigma_max")]
    pub sigma_max: f64,
}

fn default_points() -> usize {
    24
}

fn default_sigma_max() -> f64 {
    1e-3
}

fn recover_jet(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let s: RecoverJetSettings = cfg.required_settings()?;
    let e = cfg.entry()?;
    let eps = eps_grid(s.eps_max.unwrap_or(cfg.numerics.eps_max), s.points);
    let mut probe = probe_travel_time(&e.metric, &e.domain, &dv(&s.p), &dv(&s.v), &eps, &cfg.numerics)?;
    let order = s.order.unwrap_or_else(|| default_order(1).max(11));
    let jet = reconstruct_jet(&mut probe, order, s.sigma_max)?;
    let mut csv = csv_row(["eps", "tau"].map(String::from));
    for (a, t) in probe.epsilons.iter().zip(&probe.taus) {
        csv.push_str(&csv_row([fmt_f64(*a), fmt_f64(*t)]));
    }
    let j = jet.to_json();
    Ok(Outcome::new(json!({"entries": j["entries"], "K": j["K"]}))
        .artifact("probe.csv", csv)
        .json_artifact("jet.json", &j))
}

fn jet_linearity(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let p: LinearityParams = cfg.settings()?;
    let r = verify_jet_linearity(&p, &cfg.numerics)?;
    let mut out = Outcome::new(json!({
        "m": r.m,
        "slope": r.slope,
        "predicted": r.predicted,
        "rel_dev": r.rel_dev,
    }))
    .json_artifact("linearity.json", &r);
    out.passed = (r.slope - r.predicted).abs() <= 0.02 * r.predicted.abs().max(1e-12);
    Ok(out)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimesepSettings {
    pub x: Vec<f64>,
    pub targets: Vec<Vec<f64>>,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_class_tol")]
    pub tol: f64,
}

fn default_method() -> Method {
    Method::Chain
}

fn default_class_tol() -> f64 {
    1e-6
}

fn timesep_grid(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let s: TimesepSettings = cfg.required_settings()?;
    let e = cfg.entry()?;
    let n = e.metric.dim();
    dims("x", &s.x, n)?;
    let field = TimeSeparationField::from_entry(&e, s.method, cfg.numerics);
    let x = dv(&s.x);
    let mut csv = csv_row(indexed("y", n).chain(["d", "relation"].map(String::from)));
    let mut failures = Vec::new();
    let mut evaluated = 0;
    for (i, y) in s.targets.iter().enumerate() {
        dims(&format!("targets/{i}"), y, n)?;
        let yv = dv(y);
        let d = field.d(&x, &yv);
        let rel = causal_boundary_class(&field, &x, &yv, s.tol);
        match (d, rel) {
            (Ok(d), Ok(rel)) => {
                evaluated += 1;
                let rel = serde_json::to_value(rel).ok().and_then(|v| v.as_str().map(String::from));
                csv.push_str(&csv_row(floats(y.iter()).chain([fmt_f64(d), rel.unwrap_or_default()])));
            }
            (Err(err), _) | (_, Err(err)) => failures.push(Failure {
                input: json!({"x": s.x, "y": y}),
                error: err.to_string(),
            }),
        }
    }
    let mut out = Outcome::new(json!({"targets": s.targets.len(), "evaluated": evaluated}))
        .artifact("timesep.csv", csv);
    out.failures = failures;
    Ok(out)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LightconeSettings {
    /// Base point as boundary parameters `(t, θ)`.
    pub base: [f64; 2],
    pub t_step: f64,
    pub nt: usize,
    pub m: usize,
    #[serde(default = "default_lightcone_tol")]
    pub tol: f64,
    /// Radius of the extension used for the second separation.
    pub extension_radius: f64,
    #[serde(default = "default_method")]
    pub method: Method,
}

fn default_lightcone_tol() -> f64 {
    1e-5
}

fn cylinder_radius(cfg: &ScenarioConfig) -> Result<f64, CliError> {
    let m = cfg.metric.as_ref().filter(|m| m.name == "minkowski_cylinder").ok_or_else(|| CliError::Config {
        pointer: "/metric/name".into(),
        message: "lightcone_id supports minkowski_cylinder".into(),
    })?;
    Ok(m.params.get("R").copied().unwrap_or(1.0))
}

fn lightcone_id(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let s: LightconeSettings = cfg.required_settings()?;
    let r = cylinder_radius(cfg)?;
    if !(s.extension_radius > r) {
        return Err(CliError::Config {
            pointer: "/settings/extension_radius".into(),
            message: format!("extension radius must exceed R = {r}"),
        });
    }
    let e = cfg.entry()?;
    let field = TimeSeparationField::from_entry(&e, s.method, cfg.numerics);
    let wide = rigidity_core::metric::catalog::minkowski_cylinder(s.extension_radius);
    let ext = TimeSeparationField::from_entry(&wide, s.method, cfg.numerics);
    let embed = cylinder_embedding(r);
    let x = embed(s.base[0], s.base[1]);
    let grid = rigidity::BoundaryGrid::uniform(s.t_step, s.nt, s.m);
    let id = boundary_lightcone_id(&field, &ext, &x, &grid, embed, s.tol)?;
    Ok(Outcome::new(json!({
        "cells": id.cells.len(),
        "marked": id.marked().count(),
    }))
    .artifact("lightcone.csv", id.to_csv()))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExteriorSettings {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub disks: Vec<Disk>,
    #[serde(default)]
    pub params: ExteriorParams,
    #[serde(default = "default_exterior_method")]
    pub method: Method,
}

fn default_exterior_method() -> Method {
    Method::Shooting
}

fn exterior_reconstruct(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let s: ExteriorSettings = cfg.required_settings()?;
    let e = cfg.entry()?;
    let field = TimeSeparationField::from_entry(&e, s.method, cfg.numerics);
    let obstacle = DiskObstacle::new(s.disks.clone());
    let run = exterior_lightlike_traveltime(&field, &obstacle, &dv(&s.x), &dv(&s.v), &s.params)?;
    Ok(Outcome::new(json!({
        "steps": run.steps.len(),
        "total_parameter": run.total_parameter,
        "left_domain": run.left_domain,
        "final_x": run.final_x,
    }))
    .json_artifact("exterior.json", &run))
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigidMotion {
    pub dt: f64,
    pub angle: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsometrySettings {
    /// Rigid motion relating the two copies of the metric.
    pub rigid_motion: RigidMotion,
    /// Interior sample points; drawn from the seed when absent.
    pub samples: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_sample_count")]
    pub sample_count: usize,
    #[serde(default = "default_sample_radius")]
    pub sample_radius: f64,
    #[serde(default)]
    pub params: IsometryParams,
}

fn default_sample_count() -> usize {
    50
}

fn default_sample_radius() -> f64 {
    0.8
}

fn isometry_samples(s: &IsometrySettings, seed: u64) -> Vec<DVector<f64>> {
    if let Some(p) = &s.samples {
        return p.iter().map(|x| dv(x)).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..s.sample_count)
        .map(|_| {
            let r = s.sample_radius * rng.gen::<f64>().sqrt();
            let a = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            dv(&[rng.gen_range(0.0..1.0), r * a.cos(), r * a.sin()])
        })
        .collect()
}

fn isometry(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let s: IsometrySettings = cfg.required_settings()?;
    let e: CatalogEntry = cfg.entry()?;
    let m1 = Side {
        metric: e.metric,
        domain: e.domain,
    };
    let f = ChartMap::rigid_motion(s.rigid_motion.dt, s.rigid_motion.angle);
    let m2 = Side {
        metric: pushforward_metric(&m1.metric, &f),
        domain: pushforward_domain(&m1.domain, &f),
    };
    let samples = isometry_samples(&s, cfg.seed);
    let c = construct_isometry(&m1, &m2, &f, &samples, &s.params, &cfg.numerics)?;
    let check = verify_isometry(&c, &m1, &m2, &f, &s.params, &cfg.numerics)?;
    let map_error = c
        .samples
        .iter()
        .map(|p| (dv(&p.phi_x) - f.apply(&dv(&p.x))).norm())
        .fold(0.0, f64::max);
    let mut out = Outcome::new(json!({
        "samples": c.samples.len(),
        "max_map_error": map_error,
        "max_discrepancy": c.max_discrepancy,
        "pullback_error": check.max_error,
    }))
    .json_artifact("isometry.json", &json!({"candidate": c, "check": check}));
    out.passed = check.max_error < 1e-3;
    Ok(out)
}
