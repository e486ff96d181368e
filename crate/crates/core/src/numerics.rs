//! Numerical tolerances shared by the integrators and recovery routines.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainParams {
    pub initial_segments: usize,
    pub max_segments: usize,
    pub rtol: f64,
    pub slack: f64,
}

impl Default for ChainParams {
    fn default() -> Self {
        Self {
            initial_segments: 8,
            max_segments: 64,
            rtol: 1e-5,
            slack: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    /// Local error tolerance per integration step.
    pub ode_tol: f64,
    /// Root tolerance on `φ` for boundary events.
    pub event_tol: f64,
    /// Normalized transversality at or below which an event is tangential.
    pub tangent_threshold: f64,
    pub t_max: f64,
    pub max_events: usize,
    /// Probe offset used to decide where a boundary start is heading.
    pub probe_dt: f64,
    pub shoot_tol: f64,
    pub shoot_max_iter: usize,
    pub conj_tol: f64,
    pub eps_max: f64,
    /// Step bound for the interior-to-complete conversion; `None` picks it from the collar.
    pub delta: Option<f64>,
    pub cone_width: f64,
    pub max_rejections: usize,
    pub chain: ChainParams,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            ode_tol: 1e-10,
            event_tol: 1e-11,
            tangent_threshold: 1e-6,
            t_max: 20.0,
            max_events: 64,
            probe_dt: 1e-6,
            shoot_tol: 1e-10,
            shoot_max_iter: 50,
            conj_tol: 1e-7,
            eps_max: 0.15,
            delta: None,
            cone_width: 0.15,
            max_rejections: 1000,
            chain: ChainParams::default(),
        }
    }
}

impl Numerics {
    pub fn with_t_max(mut self, t_max: f64) -> Self {
        self.t_max = t_max;
        self
    }

    pub fn with_ode_tol(mut self, tol: f64) -> Self {
        self.ode_tol = tol;
        self
    }

    /// Rejects non-positive tolerances; returns the offending field name.
    pub fn validate(&self) -> Result<(), &'static str> {
        let checks = [
            (self.ode_tol, "ode_tol"),
            (self.event_tol, "event_tol"),
            (self.tangent_threshold, "tangent_threshold"),
            (self.t_max, "t_max"),
            (self.probe_dt, "probe_dt"),
            (self.shoot_tol, "shoot_tol"),
            (self.conj_tol, "conj_tol"),
            (self.eps_max, "eps_max"),
            (self.cone_width, "cone_width"),
            (self.chain.rtol, "chain.rtol"),
            (self.chain.slack, "chain.slack"),
        ];
        for (v, name) in checks {
            if !(v > 0.0 && v.is_finite()) {
                return Err(name);
            }
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d.is_finite()) {
                return Err("delta");
            }
        }
        if self.chain.initial_segments == 0 || self.chain.max_segments < self.chain.initial_segments {
            return Err("chain.segments");
        }
        Ok(())
    }
}
