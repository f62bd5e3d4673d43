//! Monodromy matrix, Floquet multipliers, stability classification, and the
//! combined-gain sweep.
//!
//! The linearized closed loop is pi-periodic, so its stability is decided by
//! the eigenvalues of the monodromy matrix `M = Phi(pi)` with `Phi(0) = I`
//! (the Floquet multipliers): the orbit is exponentially stable iff both lie
//! strictly inside the unit circle. Because `tr A(t) = -1 - delta sin 2t`
//! integrates to `-pi` over one period, `det M = exp(-pi)` independent of
//! `delta` - a built-in consistency check every computed monodromy is held
//! to.

use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;
use thiserror::Error;

use crate::dynamics::{linearized_a, ParamError, SystemParams};
use crate::integrate::{integrate_matrix_ode, IntegrateError, StepperConfig};
use crate::mat2::Mat2;

/// Reference value of the critical combined gain, determined numerically by
/// bisection on the spectral radius (tolerance 1e-6, step pi/4000) and
/// recorded to four significant digits.
pub const CRITICAL_DELTA_REFERENCE: f64 = 3.200;

#[derive(Debug, Error)]
pub enum FloquetError {
    #[error("delta must be nonnegative: {0}")]
    Param(#[from] ParamError),
    #[error("monodromy integration failed at delta = {delta}: {source}")]
    Integration {
        delta: f64,
        source: IntegrateError,
    },
    #[error(
        "bisection bracket invalid: spectral radius is {sr_lo} at {lo} and {sr_hi} at {hi}, \
         need < 1 at the lower end and > 1 at the upper end"
    )]
    BracketInvalid {
        lo: f64,
        hi: f64,
        sr_lo: f64,
        sr_hi: f64,
    },
}

/// Stability data for one combined-gain value.
#[derive(Debug, Clone, Copy)]
pub struct FloquetResult {
    pub delta: f64,
    pub monodromy: Mat2,
    /// Floquet multipliers ordered by (modulus desc, real part desc,
    /// imaginary part desc).
    pub multipliers: (Complex64, Complex64),
    pub spectral_radius: f64,
    pub stable: bool,
}

impl FloquetResult {
    pub fn from_monodromy(delta: f64, monodromy: Mat2) -> Self {
        let multipliers = multipliers(&monodromy);
        let spectral_radius = multipliers.0.norm().max(multipliers.1.norm());
        Self {
            delta,
            monodromy,
            multipliers,
            spectral_radius,
            stable: spectral_radius < 1.0,
        }
    }
}

/// Monodromy matrix `M = Phi(pi)`, `Phi(0) = I`, of the linearized loop at a
/// given combined gain.
pub fn monodromy(delta: f64, cfg: &StepperConfig) -> Result<Mat2, FloquetError> {
    let p = SystemParams::from_delta(delta)?;
    integrate_matrix_ode(|t| linearized_a(t, &p), Mat2::IDENTITY, 0.0, PI, cfg)
        .map_err(|source| FloquetError::Integration { delta, source })
}

/// Eigenvalues of a 2x2 matrix from its characteristic polynomial
/// `lambda^2 - tr(M) lambda + det(M)`, ordered by (modulus desc, real desc,
/// imaginary desc).
///
/// The real-root branch uses the cancellation-free quadratic formula (larger
/// root first, companion root as `det / root`), which keeps the product of
/// the returned pair equal to the determinant to roundoff.
pub fn multipliers(m: &Mat2) -> (Complex64, Complex64) {
    let tr = m.trace();
    let det = m.det();
    let disc = tr * tr - 4.0 * det;
    if disc >= 0.0 {
        let root = 0.5 * (tr + tr.signum() * disc.sqrt());
        let (r1, r2) = if root == 0.0 {
            (0.0, 0.0)
        } else {
            (root, det / root)
        };
        let (big, small) = if (r1.abs(), r1) >= (r2.abs(), r2) {
            (r1, r2)
        } else {
            (r2, r1)
        };
        (Complex64::new(big, 0.0), Complex64::new(small, 0.0))
    } else {
        let re = 0.5 * tr;
        let im = 0.5 * (-disc).sqrt();
        (Complex64::new(re, im), Complex64::new(re, -im))
    }
}

/// Computes a `FloquetResult` on every point of the uniform grid
/// `delta_min, delta_min + step, ...` up to `delta_max` (inclusive).
///
/// Points are independent and evaluated in parallel; assembly is by grid
/// index, so the output is deterministic regardless of scheduling. A failed
/// integration is recorded in its slot without aborting the sweep.
///
/// Panics if the grid is empty or the step is not positive; callers are
/// expected to validate user input first.
pub fn sweep_delta(
    delta_min: f64,
    delta_max: f64,
    step: f64,
    cfg: &StepperConfig,
) -> Vec<Result<FloquetResult, FloquetError>> {
    assert!(
        delta_min >= 0.0 && delta_min < delta_max,
        "need 0 <= delta_min < delta_max"
    );
    assert!(step > 0.0, "need step > 0");
    let n = ((delta_max - delta_min) / step * (1.0 + 1e-12)).floor() as usize + 1;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let delta = delta_min + i as f64 * step;
            monodromy(delta, cfg).map(|m| FloquetResult::from_monodromy(delta, m))
        })
        .collect()
}

fn spectral_radius_at(delta: f64, cfg: &StepperConfig) -> Result<f64, FloquetError> {
    Ok(FloquetResult::from_monodromy(delta, monodromy(delta, cfg)?).spectral_radius)
}

/// Locates the stability boundary by bisection on `spectral_radius - 1`.
///
/// Requires the spectral radius to be below one at `lo` and above one at
/// `hi`; bisects until `hi - lo <= tol` and returns the midpoint.
pub fn find_critical_delta(
    lo: f64,
    hi: f64,
    tol: f64,
    cfg: &StepperConfig,
) -> Result<f64, FloquetError> {
    assert!(lo < hi && tol > 0.0, "need lo < hi and tol > 0");
    let sr_lo = spectral_radius_at(lo, cfg)?;
    let sr_hi = spectral_radius_at(hi, cfg)?;
    if !(sr_lo < 1.0 && sr_hi > 1.0) {
        return Err(FloquetError::BracketInvalid { lo, hi, sr_lo, sr_hi });
    }
    let (mut lo, mut hi) = (lo, hi);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if spectral_radius_at(mid, cfg)? < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
