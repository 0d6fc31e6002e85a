//! Flat maps of the planar coordinated-turn aircraft model
//!
//! ```text
//! x'   = Va cos(psi)
//! y'   = Va sin(psi)
//! psi' = g tan(phi) / Va
//! ```
//!
//! with flat output `z = (x, y)`. Heading comes from `z'`, the roll input
//! from `z'` and `z''`.

use std::f64::consts::{PI, TAU};

use thiserror::Error;

use crate::spline::{Point, SplineCurve, SplineError};

pub const DEFAULT_GRAVITY: f64 = 9.81;
pub const DEFAULT_EPS_V: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlatError {
    #[error("speed {speed:e} m/s below {eps:e} at t = {t}: heading undefined")]
    SingularVelocity { t: f64, speed: f64, eps: f64 },
    #[error("curve order {0} too low: need order >= 4 for continuous heading and roll rates")]
    OrderTooLow(usize),
    #[error(transparent)]
    Spline(#[from] SplineError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatSample {
    pub z: Point,
    pub dz: Point,
    pub ddz: Point,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct StateSample {
    pub x: f64,
    pub y: f64,
    /// Heading in `[0, 2 pi)`.
    pub psi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct InputSample {
    pub va: f64,
    pub phi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatModel {
    pub gravity: f64,
    pub eps_v: f64,
}

impl Default for FlatModel {
    fn default() -> Self {
        Self { gravity: DEFAULT_GRAVITY, eps_v: DEFAULT_EPS_V }
    }
}

fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    // rem_euclid can round up to TAU itself
    if w >= TAU { 0.0 } else { w }
}

impl FlatModel {
    fn check_speed(&self, s: &FlatSample, t: f64) -> Result<f64, FlatError> {
        let speed = s.dz.norm();
        if !(speed >= self.eps_v) {
            return Err(FlatError::SingularVelocity { t, speed, eps: self.eps_v });
        }
        Ok(speed)
    }

    /// State `(x, y, psi)` from the flat output and its first derivative.
    pub fn theta(&self, s: &FlatSample) -> Result<StateSample, FlatError> {
        self.theta_at(s, f64::NAN)
    }

    fn theta_at(&self, s: &FlatSample, t: f64) -> Result<StateSample, FlatError> {
        self.check_speed(s, t)?;
        Ok(StateSample { x: s.z.x, y: s.z.y, psi: wrap_angle(s.dz.y.atan2(s.dz.x)) })
    }

    /// Inputs `(Va, phi)`:
    /// `Va = |z'|`, `phi = atan((z2'' z1' - z2' z1'') / (g |z'|))`.
    pub fn phi_input(&self, s: &FlatSample) -> Result<InputSample, FlatError> {
        self.phi_input_at(s, f64::NAN)
    }

    fn phi_input_at(&self, s: &FlatSample, t: f64) -> Result<InputSample, FlatError> {
        let va = self.check_speed(s, t)?;
        let cross = s.ddz.y * s.dz.x - s.dz.y * s.ddz.x;
        Ok(InputSample { va, phi: (cross / (self.gravity * va)).atan() })
    }

    /// Flat sample of a curve at `t`.
    pub fn sample(curve: &SplineCurve, t: f64) -> Result<FlatSample, FlatError> {
        Ok(FlatSample { z: curve.eval(t)?, dz: curve.derivative(1, t)?, ddz: curve.derivative(2, t)? })
    }

    /// States and inputs along a curve of order at least 4.
    pub fn trace(&self, curve: &SplineCurve, times: &[f64]) -> Result<Vec<TracePoint>, FlatError> {
        if curve.order() < 4 {
            return Err(FlatError::OrderTooLow(curve.order()));
        }
        times
            .iter()
            .map(|&t| {
                let s = Self::sample(curve, t)?;
                Ok(TracePoint { t, state: self.theta_at(&s, t)?, input: self.phi_input_at(&s, t)? })
            })
            .collect()
    }

    /// Largest absolute mismatch of the three model equations, with
    /// centered finite differences of step `h` for the state derivatives.
    /// Within `h` of either end the second-order one-sided stencil
    /// `(-3 f(t) + 4 f(t + h) - f(t + 2h)) / 2h` (mirrored at the right end)
    /// is used instead.
    pub fn dynamics_residual(&self, curve: &SplineCurve, times: &[f64], h: f64) -> Result<f64, FlatError> {
        let (lo, hi) = (curve.knots().start(), curve.knots().end());
        let state = |t: f64| -> Result<StateSample, FlatError> { Ok(self.trace(curve, &[t])?[0].state) };
        let mut worst: f64 = 0.0;
        for &t in times {
            let here = self.trace(curve, &[t])?[0];
            // (offset in steps, weight) pairs of the stencil
            let stencil: &[(f64, f64)] = if t - h < lo {
                &[(0.0, -1.5), (1.0, 2.0), (2.0, -0.5)]
            } else if t + h > hi {
                &[(0.0, 1.5), (-1.0, -2.0), (-2.0, 0.5)]
            } else {
                &[(-1.0, -0.5), (1.0, 0.5)]
            };
            let (mut dx, mut dy, mut dpsi) = (0.0, 0.0, 0.0);
            for &(k, w) in stencil {
                let s = state(t + k * h)?;
                dx += w * s.x;
                dy += w * s.y;
                // unwrap across the 0 / 2 pi seam relative to `here`
                let mut a = s.psi - here.state.psi;
                if a > PI {
                    a -= TAU;
                } else if a < -PI {
                    a += TAU;
                }
                dpsi += w * a;
            }
            let (dx, dy, dpsi) = (dx / h, dy / h, dpsi / h);
            let (va, psi, phi) = (here.input.va, here.state.psi, here.input.phi);
            let r1 = (dx - va * psi.cos()).abs();
            let r2 = (dy - va * psi.sin()).abs();
            let r3 = (dpsi - self.gravity * phi.tan() / va).abs();
            worst = worst.max(r1).max(r2).max(r3);
        }
        Ok(worst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TracePoint {
    pub t: f64,
    pub state: StateSample,
    pub input: InputSample,
}
