//! Dormand–Prince 5(4) integrator for autonomous first-order systems.
//!
//! The right-hand side may decline to evaluate (returning `None`), which the
//! stepper treats as "outside the admissible region" and answers by shrinking
//! the step. Accepted steps carry enough data for cubic Hermite dense output.

use nalgebra::DVector;

use crate::error::{Error, Result};

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Result of one trial step.
pub struct Trial {
    pub y: DVector<f64>,
    pub f: DVector<f64>,
    pub err: DVector<f64>,
}

/// A single explicit step of size `h` from `(y0, f0)`. Returns `None` when a
/// stage leaves the admissible region.
pub fn rk_step<F>(f: &F, y0: &DVector<f64>, f0: &DVector<f64>, h: f64) -> Option<Trial>
where
    F: Fn(&DVector<f64>) -> Option<DVector<f64>>,
{
    let mut k: Vec<DVector<f64>> = Vec::with_capacity(7);
    k.push(f0.clone());
    for (s, row) in A.iter().enumerate().skip(1) {
        let mut ys = y0.clone();
        for (j, a) in row.iter().enumerate().take(s) {
            if *a != 0.0 {
                ys.axpy(h * a, &k[j], 1.0);
            }
        }
        if s == 6 {
            // FSAL: stage 7 is evaluated at the 5th-order solution
            let f7 = f(&ys)?;
            k.push(f7);
            let mut err = DVector::zeros(y0.len());
            for (j, e) in E.iter().enumerate() {
                if *e != 0.0 {
                    err.axpy(h * e, &k[j], 1.0);
                }
            }
            return Some(Trial {
                y: ys,
                f: k.pop().unwrap(),
                err,
            });
        }
        k.push(f(&ys)?);
    }
    unreachable!()
}

/// State at the two ends of an accepted step.
#[derive(Debug, Clone)]
pub struct Step {
    pub t0: f64,
    pub y0: DVector<f64>,
    pub f0: DVector<f64>,
    pub t1: f64,
    pub y1: DVector<f64>,
    pub f1: DVector<f64>,
}

impl Step {
    pub fn h(&self) -> f64 {
        self.t1 - self.t0
    }

    /// Cubic Hermite interpolant.
    pub fn dense(&self, t: f64) -> DVector<f64> {
        let h = self.h();
        let s = (t - self.t0) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        &self.y0 * h00 + &self.f0 * (h10 * h) + &self.y1 * h01 + &self.f1 * (h11 * h)
    }
}

pub enum Advance {
    Accepted(Step),
    /// The region boundary was reached; the state could not be advanced.
    Blocked,
}

pub struct Stepper<F> {
    f: F,
    pub t: f64,
    pub y: DVector<f64>,
    pub fy: DVector<f64>,
    pub h: f64,
    tol: f64,
    h_max: f64,
}

fn error_norm(err: &DVector<f64>, y0: &DVector<f64>, y1: &DVector<f64>, tol: f64) -> f64 {
    let n = err.len() as f64;
    let s: f64 = err
        .iter()
        .zip(y0.iter().zip(y1.iter()))
        .map(|(e, (a, b))| {
            let sc = tol * (1.0 + a.abs().max(b.abs()));
            (e / sc).powi(2)
        })
        .sum();
    (s / n).sqrt()
}

impl<F> Stepper<F>
where
    F: Fn(&DVector<f64>) -> Option<DVector<f64>>,
{
    pub fn new(f: F, y0: DVector<f64>, h0: f64, tol: f64) -> Option<Self> {
        let fy = f(&y0)?;
        Some(Self {
            f,
            t: 0.0,
            y: y0,
            fy,
            h: h0,
            tol,
            h_max: f64::INFINITY,
        })
    }

    pub fn rhs(&self) -> &F {
        &self.f
    }

    pub fn with_h_max(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self
    }

    /// Advances by one accepted step, never beyond `t_end`.
    pub fn advance(&mut self, t_end: f64) -> Result<Advance> {
        let mut h = self.h.min(self.h_max);
        let mut blocked_halvings = 0;
        loop {
            let remaining = t_end - self.t;
            let clipped = h >= remaining;
            let hs = if clipped { remaining } else { h };
            let h_min = 1e-14 * (1.0 + self.t.abs());
            if hs < h_min && !clipped {
                if blocked_halvings > 0 {
                    return Ok(Advance::Blocked);
                }
                return Err(Error::Stiffness { t: self.t });
            }
            match rk_step(&self.f, &self.y, &self.fy, hs) {
                None => {
                    blocked_halvings += 1;
                    if blocked_halvings > 60 || hs < h_min {
                        return Ok(Advance::Blocked);
                    }
                    h = hs * 0.5;
                }
                Some(trial) => {
                    let en = error_norm(&trial.err, &self.y, &trial.y, self.tol);
                    if en.is_finite() && en <= 1.0 {
                        let t1 = if clipped { t_end } else { self.t + hs };
                        let step = Step {
                            t0: self.t,
                            y0: std::mem::replace(&mut self.y, trial.y.clone()),
                            f0: std::mem::replace(&mut self.fy, trial.f.clone()),
                            t1,
                            y1: trial.y,
                            f1: trial.f,
                        };
                        self.t = t1;
                        let fac = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
                        let grown = hs * fac;
                        self.h = if blocked_halvings > 0 { grown.min(hs) } else { grown }.min(self.h_max);
                        if clipped {
                            self.h = self.h.max(h);
                        }
                        return Ok(Advance::Accepted(step));
                    }
                    let fac = if en.is_finite() { (0.9 * en.powf(-0.2)).clamp(0.1, 0.9) } else { 0.1 };
                    h = hs * fac;
                }
            }
        }
    }
}

/// Integrates `y' = f(y)` from 0 to `t` and returns the end state.
pub fn integrate_to<F>(f: F, y0: DVector<f64>, t: f64, tol: f64) -> Result<Option<DVector<f64>>>
where
    F: Fn(&DVector<f64>) -> Option<DVector<f64>>,
{
    let scale = y0.norm().max(1.0);
    let Some(mut st) = Stepper::new(f, y0, 1e-3 * t.abs().max(1e-12).min(1.0) / scale.max(1.0), tol) else {
        return Ok(None);
    };
    while st.t < t {
        match st.advance(t)? {
            Advance::Accepted(_) => {}
            Advance::Blocked => return Ok(None),
        }
    }
    Ok(Some(st.y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_period() {
        let f = |y: &DVector<f64>| Some(DVector::from_vec(vec![y[1], -y[0]]));
        let y = integrate_to(f, DVector::from_vec(vec![1.0, 0.0]), std::f64::consts::TAU, 1e-12)
            .unwrap()
            .unwrap();
        assert!((y[0] - 1.0).abs() < 1e-10);
        assert!(y[1].abs() < 1e-10);
    }

    #[test]
    fn exponential_growth() {
        let f = |y: &DVector<f64>| Some(y.clone());
        let y = integrate_to(f, DVector::from_vec(vec![1.0]), 2.0, 1e-12).unwrap().unwrap();
        assert!((y[0] - 2f64.exp()).abs() / 2f64.exp() < 1e-10);
    }

    #[test]
    fn blocked_region_reports_none() {
        let f = |y: &DVector<f64>| if y[0] < 1.0 { Some(DVector::from_vec(vec![1.0])) } else { None };
        let r = integrate_to(f, DVector::from_vec(vec![0.0]), 2.0, 1e-10).unwrap();
        assert!(r.is_none());
    }

    #[test]
    fn dense_output_is_accurate_enough_for_bracketing() {
        let f = |y: &DVector<f64>| Some(DVector::from_vec(vec![y[1], -y[0]]));
        let mut st = Stepper::new(f, DVector::from_vec(vec![0.0, 1.0]), 0.1, 1e-10).unwrap();
        if let Advance::Accepted(step) = st.advance(1.0).unwrap() {
            let tm = 0.5 * (step.t0 + step.t1);
            assert!((step.dense(tm)[0] - tm.sin()).abs() < 1e-5);
        } else {
            panic!("step blocked");
        }
    }
}
