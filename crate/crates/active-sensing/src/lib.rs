//! Active-sensing output feedback for a plant whose sensor only detects
//! change.
//!
//! A one-degree-of-freedom mass-damper carries a rate sensor: it measures
//! how fast the scene changes as the body moves, and is blind to absolute
//! position. No dynamic output feedback can stabilize such a plant to a
//! point - on the zero-velocity slice the output is identically zero, so
//! every position looks the same to the controller
//! ([`observability::impossibility_witness`] turns that argument into a
//! machine-checked property). The next best thing is achievable: inject a
//! small sinusoidal "active sensing" motion that keeps the sensor awake and
//! wrap nonlinear output feedback around it, and the loop acquires an
//! exponentially stable circular orbit of radius `a`
//! ([`dynamics::closed_loop_field`]).
//!
//! The crate simulates that loop and certifies its stability numerically:
//!
//! - [`dynamics`]: plant, controller, reference orbit, linearization
//! - [`integrate`]: deterministic fixed-step RK4 / DP45 for states and
//!   2x2 matrix flows
//! - [`floquet`]: monodromy, multipliers, stability sweep over the combined
//!   gain `delta = k a^2`, critical-gain bisection
//! - [`lyapunov`]: quadratic certificates with the analytic gain bound
//! - [`observability`]: rank and rate-sensing diagnostics, impossibility
//!   property
//! - [`doa`]: phase-resolved domain-of-attraction rasters
//! - [`io`]: round-trip-exact CSV/JSON serialization
//! - [`cli`]: the `active-sensing` binary's subcommands
//!
//! The `examples/` directory has one runnable walk-through per capability;
//! `cargo run --example floquet_sweep` is a good place to start.

pub mod cli;
pub mod doa;
pub mod dynamics;
pub mod floquet;
pub mod integrate;
pub mod io;
pub mod lyapunov;
pub mod mat2;
pub mod observability;

pub use doa::{classify_cell, compute_grid, CellClass, DoaConfig, DoaGrid};
pub use dynamics::{
    active_sensing_input, closed_loop_field, control_law, linearized_a, open_loop_field,
    orbit_distance, reference_orbit, Output, ScalarField, State, SystemParams,
};
pub use floquet::{find_critical_delta, monodromy, multipliers, sweep_delta, FloquetResult};
pub use integrate::{
    integrate_closed_loop, integrate_linearized, integrate_matrix_ode, integrate_state, Method,
    StepperConfig, Trajectory,
};
pub use lyapunov::{analytic_bounds, certify, q_matrix, v_dot_along_flow, LyapunovCert};
pub use mat2::Mat2;
pub use observability::{
    impossibility_witness, linear_observability_rank, nonlinear_condition, observability_report,
    GenericFeedback, ObservabilityReport,
};
