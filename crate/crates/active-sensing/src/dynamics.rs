//! Plant, outputs, reference orbit, active-sensing controller, closed loop,
//! and the linearized periodic system matrix.
//!
//! The plant is a normalized mass-damper in one degree of freedom,
//!
//! ```text
//! dx/dt = z
//! dz/dt = -z + u
//! ```
//!
//! whose sensor measures only the rate of change of a position-dependent
//! scene, `y = gamma(x) z`. The active-sensing controller superimposes a
//! sinusoidal feed-forward input `alpha(t) = a cos t - a sin t` (which keeps
//! the rate sensor excited) on a nonlinear output-feedback term, so that the
//! closed loop settles onto the circular reference orbit
//! `(a sin t, a cos t)` instead of an unreachable equilibrium point.
//!
//! All functions here are pure and safe to call from any number of threads.

use serde::Serialize;
use std::f64::consts::TAU;
use std::ops::{Add, Mul, Sub};
use thiserror::Error;

use crate::mat2::Mat2;

/// Plant state: position `x` and velocity `z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct State {
    pub x: f64,
    pub z: f64,
}

impl State {
    pub fn new(x: f64, z: f64) -> Self {
        Self { x, z }
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.z)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.z.is_finite()
    }
}

impl Add for State {
    type Output = State;

    fn add(self, rhs: State) -> State {
        State::new(self.x + rhs.x, self.z + rhs.z)
    }
}

impl Sub for State {
    type Output = State;

    fn sub(self, rhs: State) -> State {
        State::new(self.x - rhs.x, self.z - rhs.z)
    }
}

impl Mul<f64> for State {
    type Output = State;

    fn mul(self, s: f64) -> State {
        State::new(self.x * s, self.z * s)
    }
}

/// Invalid controller parameters.
#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("active-sensing amplitude must be positive and finite, got {0}")]
    InvalidAmplitude(f64),
    #[error("feedback gain must be nonnegative and finite, got {0}")]
    InvalidGain(f64),
    #[error("combined gain delta = k a^2 must be nonnegative and finite, got {0}")]
    InvalidDelta(f64),
}

/// Controller parameters: feedback gain `k`, active-sensing amplitude `a`,
/// and the derived combined gain `delta = k a^2`.
///
/// The linearized dynamics depend on `(k, a)` only through `delta`, which is
/// why it is cached here rather than recomputed at every field evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SystemParams {
    k: f64,
    a: f64,
    delta: f64,
}

impl SystemParams {
    /// Builds parameters from gain `k >= 0` and amplitude `a > 0`.
    pub fn new(k: f64, a: f64) -> Result<Self, ParamError> {
        if !a.is_finite() || a <= 0.0 {
            return Err(ParamError::InvalidAmplitude(a));
        }
        if !k.is_finite() || k < 0.0 {
            return Err(ParamError::InvalidGain(k));
        }
        Ok(Self {
            k,
            a,
            delta: k * a * a,
        })
    }

    /// Builds parameters realizing a given combined gain, fixing `k = 1`,
    /// `a = sqrt(delta)`. Only `delta` matters to the linear analysis.
    ///
    /// `delta = 0` cannot be realized with `k = 1` (the amplitude must stay
    /// positive), so that case takes `k = 0`, `a = 1` instead.
    pub fn from_delta(delta: f64) -> Result<Self, ParamError> {
        if !delta.is_finite() || delta < 0.0 {
            return Err(ParamError::InvalidDelta(delta));
        }
        if delta == 0.0 {
            Self::new(0.0, 1.0)
        } else {
            Self::new(1.0, delta.sqrt())
        }
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// Measured output pair: scene rate `y1 = x z` and velocity `y2 = z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Output {
    pub y1: f64,
    pub y2: f64,
}

impl Output {
    /// Measures the augmented output at a state (quadratic scene, so the
    /// rate channel is `x z`).
    pub fn measure(s: State) -> Output {
        Output {
            y1: s.x * s.z,
            y2: s.z,
        }
    }
}

/// A scene gradient `gamma(x)` with its first two derivatives.
///
/// The observability diagnostics need `gamma`, `gamma'` and `gamma''`
/// pointwise; implementations supply them analytically.
pub trait ScalarField {
    fn value(&self, x: f64) -> f64;
    fn deriv(&self, x: f64) -> f64;
    fn second_deriv(&self, x: f64) -> f64;

    /// Short human-readable descriptor used in reports.
    fn describe(&self) -> String;
}

/// The locally quadratic scene: `gamma(x) = x`.
///
/// This is the default scene under which the closed loop and all stability
/// analyses are formulated.
#[derive(Debug, Clone, Copy, Default)]
pub struct LinearGamma;

impl ScalarField for LinearGamma {
    fn value(&self, x: f64) -> f64 {
        x
    }

    fn deriv(&self, _x: f64) -> f64 {
        1.0
    }

    fn second_deriv(&self, _x: f64) -> f64 {
        0.0
    }

    fn describe(&self) -> String {
        "linear".to_string()
    }
}

/// The degenerate hyperbolic scene `gamma(x) = 1/(c1 x + c0)`, for which the
/// local-observability condition vanishes identically.
#[derive(Debug, Clone, Copy)]
pub struct HyperbolicGamma {
    pub c0: f64,
    pub c1: f64,
}

impl ScalarField for HyperbolicGamma {
    fn value(&self, x: f64) -> f64 {
        1.0 / (self.c1 * x + self.c0)
    }

    fn deriv(&self, x: f64) -> f64 {
        let d = self.c1 * x + self.c0;
        -self.c1 / (d * d)
    }

    fn second_deriv(&self, x: f64) -> f64 {
        let d = self.c1 * x + self.c0;
        2.0 * self.c1 * self.c1 / (d * d * d)
    }

    fn describe(&self) -> String {
        format!("hyperbolic(c0={}, c1={})", self.c0, self.c1)
    }
}

/// Open-loop plant field: `(dx/dt, dz/dt) = (z, -z + u)`.
pub fn open_loop_field(s: State, u: f64) -> State {
    State::new(s.z, -s.z + u)
}

/// Active-sensing feed-forward input `alpha(t) = a cos t - a sin t`.
pub fn active_sensing_input(t: f64, a: f64) -> f64 {
    a * t.cos() - a * t.sin()
}

/// The circular reference orbit `(a sin t, a cos t)` of radius `a`.
pub fn reference_orbit(t: f64, a: f64) -> State {
    State::new(a * t.sin(), a * t.cos())
}

/// Euclidean distance from a state to the reference-orbit point at time `t`.
pub fn orbit_distance(s: State, t: f64, a: f64) -> f64 {
    (s - reference_orbit(t, a)).norm()
}

/// Active-sensing control law: feed-forward plus output feedback,
/// `u = alpha(t) - k (y1 y2 - y1* y2*)`.
///
/// The feedback compares the product of the measured outputs against its
/// value on the reference orbit, `y1* y2* = a^3 sin t cos^2 t`, and vanishes
/// identically on the orbit.
pub fn control_law(s: State, t: f64, p: &SystemParams) -> f64 {
    let y = Output::measure(s);
    let (sin_t, cos_t) = t.sin_cos();
    let orbit_product = p.a * p.a * p.a * sin_t * cos_t * cos_t;
    p.a * cos_t - p.a * sin_t - p.k * (y.y1 * y.y2 - orbit_product)
}

/// Closed-loop vector field under the active-sensing control law.
///
/// `2*pi`-periodic in `t`; all time dependence enters through `sin`/`cos`,
/// so no wrap-around normalization is applied.
pub fn closed_loop_field(s: State, t: f64, p: &SystemParams) -> State {
    let (sin_t, cos_t) = t.sin_cos();
    let orbit_product = p.a * p.a * p.a * sin_t * cos_t * cos_t;
    let u = p.a * cos_t - p.a * sin_t - p.k * (s.x * s.z * s.z - orbit_product);
    State::new(s.z, -s.z + u)
}

/// System matrix of the closed loop linearized about the reference orbit:
///
/// ```text
/// A(t) = [ 0                1                    ]
///        [ -delta cos^2 t   -1 - delta sin(2t)   ]
/// ```
///
/// `pi`-periodic in `t`, and a function of the parameters only through
/// `delta = k a^2`.
pub fn linearized_a(t: f64, p: &SystemParams) -> Mat2 {
    let cos_t = t.cos();
    Mat2::new(
        0.0,
        1.0,
        -p.delta * cos_t * cos_t,
        -1.0 - p.delta * (2.0 * t).sin(),
    )
}

/// One full forcing period of the closed loop.
pub const FORCING_PERIOD: f64 = TAU;
