//! Deterministic fixed-step integration of planar nonautonomous systems and
//! 2x2 matrix ODEs.
//!
//! Classical RK4 is the workhorse; Dormand-Prince 4(5) is available as a
//! fixed-step cross-check. Both land exactly on the requested end time by
//! shortening the final step, and both are bit-deterministic on a fixed
//! platform: no adaptivity, no heuristics.

use thiserror::Error;

use crate::dynamics::{closed_loop_field, linearized_a, State, SystemParams};
use crate::mat2::Mat2;

/// Integration method selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    Rk4,
    /// Dormand-Prince 4(5), applied with a fixed step (fifth-order solution,
    /// no error control). Used to cross-validate RK4 results.
    Dp45,
}

/// Fixed-step integrator configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperConfig {
    /// Step size, > 0.
    pub h: f64,
    pub method: Method,
    /// Norm bound beyond which a trajectory is truncated as escaping.
    pub escape_radius: f64,
}

impl StepperConfig {
    pub fn new(h: f64) -> Self {
        Self {
            h,
            method: Method::Rk4,
            escape_radius: 1e6,
        }
    }

    /// Default step for monodromy computation (pi/2000).
    pub fn monodromy_default() -> Self {
        Self::new(std::f64::consts::PI / 2000.0)
    }

    /// Default step for nonlinear closed-loop simulation (1e-3).
    pub fn simulation_default() -> Self {
        Self::new(1e-3)
    }

    fn check(&self) -> Result<(), IntegrateError> {
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(IntegrateError::InvalidConfig(format!(
                "step size must be positive and finite, got {}",
                self.h
            )));
        }
        if !(self.escape_radius > 0.0) {
            return Err(IntegrateError::InvalidConfig(format!(
                "escape radius must be positive, got {}",
                self.escape_radius
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum IntegrateError {
    #[error("state became non-finite at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("integration interval is empty: t_end = {t_end} <= t0 = {t0}")]
    InvalidInterval { t0: f64, t_end: f64 },
    #[error("invalid stepper configuration: {0}")]
    InvalidConfig(String),
}

/// Time-stamped state sequence produced by a fixed-step integration.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// `(t, state)` pairs at uniform spacing, first entry at `t0`.
    pub samples: Vec<(f64, State)>,
    /// Controller parameters when the trajectory came from the closed loop
    /// or its linearization; `None` for integrations of arbitrary fields.
    pub params: Option<SystemParams>,
    pub t0: f64,
    pub step_size: f64,
    /// Set when the integration stopped early because the state norm
    /// exceeded the escape radius.
    pub truncated_by_escape: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn final_sample(&self) -> (f64, State) {
        *self.samples.last().expect("trajectory has at least the initial sample")
    }

    pub fn final_state(&self) -> State {
        self.final_sample().1
    }

    pub fn final_time(&self) -> f64 {
        self.final_sample().0
    }
}

/// One classical RK4 step of size `h` from `(s, t)`.
pub fn rk4_step<F>(field: &F, s: State, t: f64, h: f64) -> State
where
    F: Fn(State, f64) -> State,
{
    let half = 0.5 * h;
    let k1 = field(s, t);
    let k2 = field(s + k1 * half, t + half);
    let k3 = field(s + k2 * half, t + half);
    let k4 = field(s + k3 * h, t + h);
    s + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0)
}

/// One fixed-step Dormand-Prince 4(5) step (fifth-order solution).
pub fn dp45_step<F>(field: &F, s: State, t: f64, h: f64) -> State
where
    F: Fn(State, f64) -> State,
{
    let k1 = field(s, t);
    let k2 = field(s + k1 * (h * 1.0 / 5.0), t + h / 5.0);
    let k3 = field(s + k1 * (h * 3.0 / 40.0) + k2 * (h * 9.0 / 40.0), t + h * 3.0 / 10.0);
    let k4 = field(
        s + k1 * (h * 44.0 / 45.0) + k2 * (h * -56.0 / 15.0) + k3 * (h * 32.0 / 9.0),
        t + h * 4.0 / 5.0,
    );
    let k5 = field(
        s + k1 * (h * 19372.0 / 6561.0)
            + k2 * (h * -25360.0 / 2187.0)
            + k3 * (h * 64448.0 / 6561.0)
            + k4 * (h * -212.0 / 729.0),
        t + h * 8.0 / 9.0,
    );
    let k6 = field(
        s + k1 * (h * 9017.0 / 3168.0)
            + k2 * (h * -355.0 / 33.0)
            + k3 * (h * 46732.0 / 5247.0)
            + k4 * (h * 49.0 / 176.0)
            + k5 * (h * -5103.0 / 18656.0),
        t + h,
    );
    s + k1 * (h * 35.0 / 384.0)
        + k3 * (h * 500.0 / 1113.0)
        + k4 * (h * 125.0 / 192.0)
        + k5 * (h * -2187.0 / 6784.0)
        + k6 * (h * 11.0 / 84.0)
}

fn step_once<F>(method: Method, field: &F, s: State, t: f64, h: f64) -> State
where
    F: Fn(State, f64) -> State,
{
    match method {
        Method::Rk4 => rk4_step(field, s, t, h),
        Method::Dp45 => dp45_step(field, s, t, h),
    }
}

/// Integrates a time-dependent planar field from `(s0, t0)` to `t_end`,
/// recording every step.
///
/// The final step is shortened to land exactly on `t_end`. If the state norm
/// exceeds `cfg.escape_radius` the trajectory stops early with
/// `truncated_by_escape` set (the escaping sample is kept). A field returning
/// NaN or infinity is an error.
pub fn integrate_state<F>(
    field: F,
    s0: State,
    t0: f64,
    t_end: f64,
    cfg: &StepperConfig,
) -> Result<Trajectory, IntegrateError>
where
    F: Fn(State, f64) -> State,
{
    cfg.check()?;
    if !(t_end > t0) {
        return Err(IntegrateError::InvalidInterval { t0, t_end });
    }
    if !s0.is_finite() {
        return Err(IntegrateError::NonFiniteState { t: t0 });
    }

    let span = t_end - t0;
    let n_full = (span / cfg.h).floor() as u64;
    let remainder = span - n_full as f64 * cfg.h;
    // A remainder at roundoff scale is absorbed rather than taken as an
    // extra, vanishing step.
    let final_partial = remainder > cfg.h * 1e-9;

    let mut samples = Vec::with_capacity(n_full as usize + 2);
    samples.push((t0, s0));
    let mut s = s0;
    let mut truncated = false;

    let mut advance = |s: &mut State, t: f64, h: f64, t_next: f64| -> Result<bool, IntegrateError> {
        *s = step_once(cfg.method, &field, *s, t, h);
        if !s.is_finite() {
            return Err(IntegrateError::NonFiniteState { t: t_next });
        }
        samples.push((t_next, *s));
        Ok(s.norm() > cfg.escape_radius)
    };

    for i in 0..n_full {
        let t = t0 + i as f64 * cfg.h;
        let t_next = if !final_partial && i + 1 == n_full {
            t_end
        } else {
            t0 + (i + 1) as f64 * cfg.h
        };
        if advance(&mut s, t, cfg.h, t_next)? {
            truncated = true;
            break;
        }
    }
    if final_partial && !truncated {
        let t = t0 + n_full as f64 * cfg.h;
        if advance(&mut s, t, t_end - t, t_end)? {
            truncated = true;
        }
    }

    Ok(Trajectory {
        samples,
        params: None,
        t0,
        step_size: cfg.h,
        truncated_by_escape: truncated,
    })
}

/// Integrates the nonlinear closed loop, stamping the trajectory with its
/// parameters.
pub fn integrate_closed_loop(
    p: &SystemParams,
    s0: State,
    t0: f64,
    t_end: f64,
    cfg: &StepperConfig,
) -> Result<Trajectory, IntegrateError> {
    let mut traj = integrate_state(|s, t| closed_loop_field(s, t, p), s0, t0, t_end, cfg)?;
    traj.params = Some(*p);
    Ok(traj)
}

/// Integrates the linearized flow `d/dt e = A(t) e` about the reference
/// orbit, stamping the trajectory with its parameters.
pub fn integrate_linearized(
    p: &SystemParams,
    e0: State,
    t0: f64,
    t_end: f64,
    cfg: &StepperConfig,
) -> Result<Trajectory, IntegrateError> {
    let field = |s: State, t: f64| {
        let (dx, dz) = linearized_a(t, p).apply(s.x, s.z);
        State::new(dx, dz)
    };
    let mut traj = integrate_state(field, e0, t0, t_end, cfg)?;
    traj.params = Some(*p);
    Ok(traj)
}

/// Integrates the 2x2 matrix flow `dM/dt = A(t) M` from `M(t0) = m0` and
/// returns `M(t_end)`.
///
/// RK4 on the four-dimensional matrix system; the final step is shortened to
/// land exactly on `t_end`. Linear flows cannot escape in finite time, so
/// no escape check is applied, but a non-finite matrix is still an error.
pub fn integrate_matrix_ode<F>(
    a: F,
    m0: Mat2,
    t0: f64,
    t_end: f64,
    cfg: &StepperConfig,
) -> Result<Mat2, IntegrateError>
where
    F: Fn(f64) -> Mat2,
{
    cfg.check()?;
    if !(t_end > t0) {
        return Err(IntegrateError::InvalidInterval { t0, t_end });
    }

    let span = t_end - t0;
    let n_full = (span / cfg.h).floor() as u64;
    let remainder = span - n_full as f64 * cfg.h;
    let final_partial = remainder > cfg.h * 1e-9;

    let mut m = m0;
    let step = |m: &mut Mat2, t: f64, h: f64| -> Result<(), IntegrateError> {
        let k1 = a(t) * *m;
        let k2 = a(t + 0.5 * h) * (*m + k1 * (0.5 * h));
        let k3 = a(t + 0.5 * h) * (*m + k2 * (0.5 * h));
        let k4 = a(t + h) * (*m + k3 * h);
        *m = *m + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
        if !m.is_finite() {
            return Err(IntegrateError::NonFiniteState { t: t + h });
        }
        Ok(())
    };

    for i in 0..n_full {
        step(&mut m, t0 + i as f64 * cfg.h, cfg.h)?;
    }
    if final_partial {
        let t = t0 + n_full as f64 * cfg.h;
        step(&mut m, t, t_end - t)?;
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{open_loop_field, reference_orbit};
    use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};

    /// Closed form of the free open loop from (0, 1):
    /// x(t) = 1 - exp(-t), z(t) = exp(-t).
    fn open_loop_exact(t: f64) -> State {
        State::new(1.0 - (-t).exp(), (-t).exp())
    }

    #[test]
    fn open_loop_against_closed_form() {
        let cfg = StepperConfig::new(1e-3);
        let traj =
            integrate_state(|s, _| open_loop_field(s, 0.0), State::new(0.0, 1.0), 0.0, 1.0, &cfg)
                .unwrap();
        let (t_end, s_end) = traj.final_sample();
        assert_eq!(t_end, 1.0);
        let err = (s_end - open_loop_exact(1.0)).norm();
        assert!(err < 1e-8, "endpoint error {err}");
        assert!(!traj.truncated_by_escape);
    }

    #[test]
    fn dp45_agrees_with_rk4_on_closed_form() {
        let mut cfg = StepperConfig::new(1e-3);
        cfg.method = Method::Dp45;
        let traj =
            integrate_state(|s, _| open_loop_field(s, 0.0), State::new(0.0, 1.0), 0.0, 1.0, &cfg)
                .unwrap();
        let err = (traj.final_state() - open_loop_exact(1.0)).norm();
        assert!(err < 1e-11, "dp45 endpoint error {err}");
    }

    #[test]
    fn closed_loop_converges_to_orbit() {
        let p = SystemParams::new(1.0, FRAC_1_SQRT_2).unwrap();
        let cfg = StepperConfig::simulation_default();
        let traj = integrate_closed_loop(&p, State::new(1.0, 1.0), 0.0, 50.0, &cfg).unwrap();
        let (t, s) = traj.final_sample();
        let d = crate::dynamics::orbit_distance(s, t, p.a());
        assert!(d < 1e-2, "distance to orbit at t=50: {d}");
    }

    #[test]
    fn on_orbit_start_stays_on_orbit() {
        let p = SystemParams::new(1.0, FRAC_1_SQRT_2).unwrap();
        let cfg = StepperConfig::new(1e-3);
        let t0 = 0.3;
        let traj =
            integrate_closed_loop(&p, reference_orbit(t0, p.a()), t0, t0 + TAU, &cfg).unwrap();
        let max_dev = traj
            .samples
            .iter()
            .map(|&(t, s)| crate::dynamics::orbit_distance(s, t, p.a()))
            .fold(0.0f64, f64::max);
        assert!(max_dev <= 1e-8, "max deviation {max_dev}");
    }

    #[test]
    fn constant_matrix_against_exponential() {
        // A = [[0,1],[0,-1]] has exp(A t) = [[1, 1-e^-t],[0, e^-t]].
        let a = Mat2::new(0.0, 1.0, 0.0, -1.0);
        let cfg = StepperConfig::new(PI / 2000.0);
        let m = integrate_matrix_ode(|_| a, Mat2::IDENTITY, 0.0, PI, &cfg).unwrap();
        let exact = Mat2::new(1.0, 1.0 - (-PI).exp(), 0.0, (-PI).exp());
        assert!(m.max_abs_diff(&exact) < 1e-9, "diff {}", m.max_abs_diff(&exact));
    }

    #[test]
    fn zero_matrix_field_is_identity_flow() {
        let m0 = Mat2::new(1.5, -0.25, 2.0, 0.75);
        let cfg = StepperConfig::new(0.01);
        let m = integrate_matrix_ode(|_| Mat2::ZERO, m0, 0.0, 2.0, &cfg).unwrap();
        assert_eq!(m, m0);
    }

    #[test]
    fn monodromy_determinant_at_half_delta() {
        let p = SystemParams::from_delta(0.5).unwrap();
        let cfg = StepperConfig::monodromy_default();
        let m = integrate_matrix_ode(|t| linearized_a(t, &p), Mat2::IDENTITY, 0.0, PI, &cfg)
            .unwrap();
        assert!((m.det() - (-PI).exp()).abs() < 1e-9);
    }

    #[test]
    fn wronskian_identity_along_flow() {
        // det Phi(t) = exp(-(t - t0) + (delta/2)(cos 2t - cos 2t0)), the
        // closed-form integral of tr A(s) = -1 - delta sin 2s.
        let cfg = StepperConfig::new(PI / 2000.0);
        let mut worst = 0.0f64;
        for (i, &delta) in [0.0, 0.7, 1.9, 3.3, 4.0].iter().enumerate() {
            let p = SystemParams::from_delta(delta).unwrap();
            let t0 = 0.37 * i as f64 - 0.9;
            for &span in &[0.31, 1.2, 2.4, PI] {
                let m = integrate_matrix_ode(
                    |t| linearized_a(t, &p),
                    Mat2::IDENTITY,
                    t0,
                    t0 + span,
                    &cfg,
                )
                .unwrap();
                let t = t0 + span;
                let exact =
                    (-(t - t0) + 0.5 * delta * ((2.0 * t).cos() - (2.0 * t0).cos())).exp();
                worst = worst.max((m.det() - exact).abs());
            }
        }
        assert!(worst < 1e-8, "worst Wronskian error {worst}");
    }

    #[test]
    fn rk4_halving_reduces_error_sixteenfold() {
        let endpoint_error = |h: f64| {
            let cfg = StepperConfig::new(h);
            let traj = integrate_state(
                |s, _| open_loop_field(s, 0.0),
                State::new(0.0, 1.0),
                0.0,
                1.0,
                &cfg,
            )
            .unwrap();
            (traj.final_state() - open_loop_exact(1.0)).norm()
        };
        let (e1, e2, e3) = (endpoint_error(1e-2), endpoint_error(5e-3), endpoint_error(2.5e-3));
        for ratio in [e1 / e2, e2 / e3] {
            assert!((14.0..=18.0).contains(&ratio), "order ratio {ratio}");
        }
    }

    #[test]
    fn identical_inputs_give_bit_identical_trajectories() {
        let p = SystemParams::new(1.0, FRAC_1_SQRT_2).unwrap();
        let cfg = StepperConfig::new(1e-3);
        let run = || integrate_closed_loop(&p, State::new(1.0, 1.0), 0.0, 10.0, &cfg).unwrap();
        let (a, b) = (run(), run());
        assert_eq!(a.samples.len(), b.samples.len());
        for (&(ta, sa), &(tb, sb)) in a.samples.iter().zip(&b.samples) {
            assert!(ta.to_bits() == tb.to_bits());
            assert!(sa.x.to_bits() == sb.x.to_bits() && sa.z.to_bits() == sb.z.to_bits());
        }
    }

    #[test]
    fn escape_truncates_and_marks() {
        // Strong positive feedback blows up from (3, 3) quickly.
        let p = SystemParams::new(1.0, FRAC_1_SQRT_2).unwrap();
        let mut cfg = StepperConfig::new(1e-3);
        cfg.escape_radius = 10.0;
        // Outside the domain of attraction at this phase the cubic term
        // drives a genuine finite-time blow-up.
        let traj =
            integrate_closed_loop(&p, State::new(2.5, 2.5), 7.0 * PI / 8.0, 7.0 * PI / 8.0 + 100.0, &cfg)
                .unwrap();
        assert!(traj.truncated_by_escape);
        assert!(traj.final_state().norm() > 10.0);
        assert!(traj.final_state().is_finite());
    }

    #[test]
    fn non_finite_field_is_an_error() {
        let cfg = StepperConfig::new(0.1);
        let res = integrate_state(
            |_, _| State::new(f64::NAN, 0.0),
            State::new(0.0, 0.0),
            0.0,
            1.0,
            &cfg,
        );
        assert!(matches!(res, Err(IntegrateError::NonFiniteState { .. })));
    }

    #[test]
    fn invalid_interval_and_config_are_errors() {
        let cfg = StepperConfig::new(0.1);
        let res = integrate_state(|s, _| s, State::new(0.0, 0.0), 1.0, 1.0, &cfg);
        assert!(matches!(res, Err(IntegrateError::InvalidInterval { .. })));
        let res = integrate_state(|s, _| s, State::new(0.0, 0.0), 0.0, 1.0, &StepperConfig::new(0.0));
        assert!(matches!(res, Err(IntegrateError::InvalidConfig(_))));
    }

    #[test]
    fn timestamps_are_uniform_and_land_on_t_end() {
        let cfg = StepperConfig::new(0.01);
        let traj = integrate_state(
            |s, _| open_loop_field(s, 0.0),
            State::new(0.0, 1.0),
            0.25,
            1.005,
            &cfg,
        )
        .unwrap();
        assert_eq!(traj.final_time(), 1.005);
        for pair in traj.samples.windows(2) {
            let dt = pair[1].0 - pair[0].0;
            assert!(dt > 0.0);
            assert!(dt <= cfg.h * (1.0 + 1e-12));
        }
    }
}
