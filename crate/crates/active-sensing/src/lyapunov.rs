//! Quadratic Lyapunov certificates for the linearized periodic loop.
//!
//! The candidate is `V(e) = e' P e / 2` with `P = [[1, 1], [1, eta]]`,
//! `eta > 1`, whose derivative along the flow is `-e' Q(t) e` with
//! `Q(t) = -(P A(t) + A(t)' P) / 2`. Stability follows when `Q(t)` stays
//! positive semidefinite over a period, which is checked here by dense
//! sampling of its trace and determinant. The analytic gain bound
//! `delta_dagger = 2(sqrt(7) - 2)/3` (attained at `eta_dagger = 1 + sqrt 7`)
//! is deliberately conservative; the sampled certificate extends somewhat
//! beyond it, and the Floquet analysis further still.

use serde::Serialize;
use std::f64::consts::PI;
use thiserror::Error;

use crate::integrate::Trajectory;
use crate::mat2::Mat2;

/// `Q(t)` is exactly singular once per period, so its sampled determinant is
/// allowed to brush zero from below by this much.
pub const PSD_DET_TOLERANCE: f64 = -1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum LyapunovError {
    #[error("eta must exceed 1, got {0}")]
    InvalidEta(f64),
    #[error("delta must be nonnegative and finite, got {0}")]
    InvalidDelta(f64),
    #[error("need at least 1000 samples to resolve the trigonometric extrema, got {0}")]
    TooFewSamples(usize),
    #[error("trajectory delta {found:?} does not match requested delta {expected}")]
    ParamMismatch { expected: f64, found: Option<f64> },
}

/// Result of sampling `Q(t)` over one period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LyapunovCert {
    pub delta: f64,
    pub eta: f64,
    pub verified: bool,
    pub worst_det_q: f64,
    pub worst_trace_q: f64,
    /// Sample time attaining the minimum determinant.
    pub argmin_t: f64,
    #[serde(skip)]
    pub p: Mat2,
}

/// The Lyapunov weighting matrix `P = [[1, 1], [1, eta]]`.
pub fn p_matrix(eta: f64) -> Mat2 {
    Mat2::new(1.0, 1.0, 1.0, eta)
}

/// The derivative form `Q(t) = -(P A(t) + A(t)' P) / 2` in closed form:
///
/// ```text
/// Q(t) = [ delta cos^2 t                  (delta/2)(sin 2t + eta cos^2 t) ]
///        [ (delta/2)(sin 2t + eta cos^2 t)  delta eta sin 2t + (eta - 1)  ]
/// ```
pub fn q_matrix(t: f64, delta: f64, eta: f64) -> Mat2 {
    let cos_t = t.cos();
    let cos2 = cos_t * cos_t;
    let sin_2t = (2.0 * t).sin();
    let off = 0.5 * delta * (sin_2t + eta * cos2);
    Mat2::new(delta * cos2, off, off, delta * eta * sin_2t + (eta - 1.0))
}

/// The analytic certificate bounds `(delta_dagger, eta_dagger)`:
/// the largest provable gain `2(sqrt(7) - 2)/3` and the weighting
/// `1 + sqrt(7)` that attains it.
pub fn analytic_bounds() -> (f64, f64) {
    let sqrt7 = 7.0f64.sqrt();
    (2.0 / 3.0 * (sqrt7 - 2.0), 1.0 + sqrt7)
}

/// Samples `Q(t)` on a uniform grid over `[0, pi]` and records the worst
/// determinant and trace.
///
/// The certificate verifies when the determinant never drops below
/// [`PSD_DET_TOLERANCE`] and the trace stays positive. The entries of `Q`
/// are trigonometric polynomials of degree two, so a grid of a thousand or
/// more points resolves every extremum; fewer samples are rejected.
pub fn certify(delta: f64, eta: f64, n_samples: usize) -> Result<LyapunovCert, LyapunovError> {
    if !eta.is_finite() || eta <= 1.0 {
        return Err(LyapunovError::InvalidEta(eta));
    }
    if !delta.is_finite() || delta < 0.0 {
        return Err(LyapunovError::InvalidDelta(delta));
    }
    if n_samples < 1000 {
        return Err(LyapunovError::TooFewSamples(n_samples));
    }

    let mut worst_det = f64::INFINITY;
    let mut worst_trace = f64::INFINITY;
    let mut argmin_t = 0.0;
    for i in 0..n_samples {
        let t = i as f64 * PI / (n_samples - 1) as f64;
        let q = q_matrix(t, delta, eta);
        let det = q.det();
        if det < worst_det {
            worst_det = det;
            argmin_t = t;
        }
        worst_trace = worst_trace.min(q.trace());
    }

    Ok(LyapunovCert {
        delta,
        eta,
        verified: worst_det >= PSD_DET_TOLERANCE && worst_trace > 0.0,
        worst_det_q: worst_det,
        worst_trace_q: worst_trace,
        argmin_t,
        p: p_matrix(eta),
    })
}

/// Evaluates `V` and `dV/dt` at every sample of a linearized trajectory:
/// `V = e' P e / 2`, `dV/dt = -e' Q(t) e`.
///
/// The trajectory must have been generated under the linearized flow with
/// the same `delta`, which is checked against its stamped parameters.
pub fn v_dot_along_flow(
    traj: &Trajectory,
    delta: f64,
    eta: f64,
) -> Result<Vec<(f64, f64, f64)>, LyapunovError> {
    if !eta.is_finite() || eta <= 1.0 {
        return Err(LyapunovError::InvalidEta(eta));
    }
    match traj.params {
        Some(p) if p.delta() == delta => {}
        other => {
            return Err(LyapunovError::ParamMismatch {
                expected: delta,
                found: other.map(|p| p.delta()),
            })
        }
    }
    let p = p_matrix(eta);
    Ok(traj
        .samples
        .iter()
        .map(|&(t, e)| {
            let v = 0.5 * p.quadratic_form(e.x, e.z);
            let v_dot = -q_matrix(t, delta, eta).quadratic_form(e.x, e.z);
            (t, v, v_dot)
        })
        .collect())
}
