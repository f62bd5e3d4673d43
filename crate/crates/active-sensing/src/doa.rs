//! Grid estimation of the domain of attraction of the reference orbit.
//!
//! The closed loop is nonautonomous, so whether an initial state converges
//! depends on the initial time as well. A cell is classified per starting
//! phase, and the per-phase rasters combine into three regions:
//!
//! - conservative: converges for *every* sampled starting phase
//!   (the intersection of the per-phase domains of attraction),
//! - always-diverges: escapes for every sampled phase,
//! - phase-dependent: converges for some phases but not others.
//!
//! Cells that neither converge nor diverge anywhere within the horizon stay
//! undecided and are reported as such, never merged into a region. The
//! intersection over a continuum of starting phases is approximated by a
//! uniform sample (16 phases by default), so the conservative region is
//! conservative up to that discretization.

use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::TAU;
use std::fmt;
use thiserror::Error;

use crate::dynamics::{closed_loop_field, orbit_distance, State, SystemParams};
use crate::integrate::rk4_step;

/// Outcome of one cell classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CellClass {
    Converges,
    Diverges,
    Undecided,
}

impl fmt::Display for CellClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CellClass::Converges => "converges",
            CellClass::Diverges => "diverges",
            CellClass::Undecided => "undecided",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for CellClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "converges" => Ok(CellClass::Converges),
            "diverges" => Ok(CellClass::Diverges),
            "undecided" => Ok(CellClass::Undecided),
            other => Err(format!("unknown cell class {other:?}")),
        }
    }
}

#[derive(Debug, Error)]
pub enum DoaError {
    #[error("invalid grid configuration: {0}")]
    InvalidConfig(String),
}

/// Configuration of a domain-of-attraction raster.
#[derive(Debug, Clone, Serialize)]
pub struct DoaConfig {
    pub x_range: (f64, f64),
    pub z_range: (f64, f64),
    pub nx: usize,
    pub nz: usize,
    /// Starting phases in `[0, 2 pi)`.
    pub t0_samples: Vec<f64>,
    /// Maximum integration time per cell.
    pub horizon: f64,
    /// A trajectory counts as converged once it stays within this distance
    /// of the orbit for one full forcing period.
    pub convergence_tol: f64,
    /// A trajectory counts as diverged once its norm exceeds this.
    pub escape_radius: f64,
    /// RK4 step used for cell classification.
    pub step: f64,
    pub params: SystemParams,
}

impl Default for DoaConfig {
    /// The reference setup: combined gain 1/2 (`k = 1`, `a = 1/sqrt 2`),
    /// grid `[-4, 4]^2` at 200 x 200, 16 starting phases.
    fn default() -> Self {
        let params = SystemParams::new(1.0, std::f64::consts::FRAC_1_SQRT_2)
            .expect("reference parameters are valid");
        Self {
            x_range: (-4.0, 4.0),
            z_range: (-4.0, 4.0),
            nx: 200,
            nz: 200,
            t0_samples: uniform_t0_samples(16),
            horizon: 100.0 * TAU,
            convergence_tol: 0.05 * params.a(),
            escape_radius: 1e3,
            step: 2e-2,
            params,
        }
    }
}

/// `n` uniformly spaced starting phases covering `[0, 2 pi)`.
pub fn uniform_t0_samples(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 * TAU / n as f64).collect()
}

impl DoaConfig {
    pub fn validate(&self) -> Result<(), DoaError> {
        let err = |msg: String| Err(DoaError::InvalidConfig(msg));
        if self.nx < 2 || self.nz < 2 {
            return err(format!("grid must be at least 2x2, got {}x{}", self.nx, self.nz));
        }
        if !(self.x_range.0 < self.x_range.1) || !(self.z_range.0 < self.z_range.1) {
            return err("coordinate ranges must be nonempty intervals".into());
        }
        if self.t0_samples.is_empty() {
            return err("need at least one starting phase".into());
        }
        if self.t0_samples.iter().any(|&t0| !(0.0..TAU).contains(&t0)) {
            return err("starting phases must lie in [0, 2 pi)".into());
        }
        if !(self.convergence_tol > 0.0 && self.convergence_tol < self.params.a()) {
            return err(format!(
                "convergence tolerance must lie in (0, a), got {}",
                self.convergence_tol
            ));
        }
        let extent = self
            .x_range
            .0
            .abs()
            .max(self.x_range.1.abs())
            .max(self.z_range.0.abs())
            .max(self.z_range.1.abs());
        if !(self.escape_radius > extent) {
            return err(format!(
                "escape radius {} must exceed the grid extent {extent}",
                self.escape_radius
            ));
        }
        if !(self.step > 0.0) || !(self.horizon > 0.0) {
            return err("step and horizon must be positive".into());
        }
        Ok(())
    }

    /// Grid abscissae, endpoints included.
    pub fn x_values(&self) -> Vec<f64> {
        linspace(self.x_range.0, self.x_range.1, self.nx)
    }

    pub fn z_values(&self) -> Vec<f64> {
        linspace(self.z_range.0, self.z_range.1, self.nz)
    }

    /// Row-major cell index (`x` varies fastest).
    pub fn cell_index(&self, ix: usize, iz: usize) -> usize {
        iz * self.nx + ix
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.nz
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i + 1 == n { hi } else { lo + i as f64 * step })
        .collect()
}

/// Classifies one initial condition at one starting phase.
///
/// Integrates the closed loop with fixed-step RK4. Diverges as soon as the
/// state norm exceeds the escape radius (a non-finite state also counts as
/// divergence). Converges once the distance to the moving orbit point has
/// stayed below the tolerance continuously for one full forcing period;
/// sustained proximity is required because momentary closeness to a moving
/// target is not convergence. Anything else within the horizon is undecided.
pub fn classify_cell(s0: State, t0: f64, cfg: &DoaConfig) -> CellClass {
    let p = &cfg.params;
    let a = p.a();
    let field = |s: State, t: f64| closed_loop_field(s, t, p);
    let t_end = t0 + cfg.horizon;
    let h = cfg.step;

    if !s0.is_finite() || s0.norm() > cfg.escape_radius {
        return CellClass::Diverges;
    }

    let mut s = s0;
    let mut within_since = if orbit_distance(s0, t0, a) < cfg.convergence_tol {
        Some(t0)
    } else {
        None
    };

    let mut i: u64 = 0;
    loop {
        let t = t0 + i as f64 * h;
        if t >= t_end - h * 1e-9 {
            return CellClass::Undecided;
        }
        let (h_step, t_next) = if t + h >= t_end {
            (t_end - t, t_end)
        } else {
            (h, t0 + (i + 1) as f64 * h)
        };
        s = rk4_step(&field, s, t, h_step);
        i += 1;

        if !s.is_finite() || s.norm() > cfg.escape_radius {
            return CellClass::Diverges;
        }
        if orbit_distance(s, t_next, a) < cfg.convergence_tol {
            let since = *within_since.get_or_insert(t_next);
            if t_next - since >= TAU {
                return CellClass::Converges;
            }
        } else {
            within_since = None;
        }
    }
}

/// Full raster of cell classifications with the derived region rasters.
#[derive(Debug, Clone)]
pub struct DoaGrid {
    pub config: DoaConfig,
    /// One classification raster per starting phase, each in row-major cell
    /// order.
    pub per_t0: Vec<Vec<CellClass>>,
    /// Converges for every sampled phase.
    pub conservative: Vec<bool>,
    /// Diverges for every sampled phase.
    pub always_diverges: Vec<bool>,
    /// Converges for at least one phase but not all.
    pub t0_dependent: Vec<bool>,
    /// Remainder: never converges, does not diverge everywhere.
    pub undecided: Vec<bool>,
}

impl DoaGrid {
    fn assemble(config: DoaConfig, per_t0: Vec<Vec<CellClass>>) -> Self {
        let n = config.n_cells();
        let mut conservative = vec![false; n];
        let mut always_diverges = vec![false; n];
        let mut t0_dependent = vec![false; n];
        let mut undecided = vec![false; n];
        for i in 0..n {
            let all_converge = per_t0.iter().all(|r| r[i] == CellClass::Converges);
            let any_converge = per_t0.iter().any(|r| r[i] == CellClass::Converges);
            let all_diverge = per_t0.iter().all(|r| r[i] == CellClass::Diverges);
            conservative[i] = all_converge;
            always_diverges[i] = all_diverge;
            t0_dependent[i] = any_converge && !all_converge;
            undecided[i] = !any_converge && !all_diverge;
        }
        Self {
            config,
            per_t0,
            conservative,
            always_diverges,
            t0_dependent,
            undecided,
        }
    }

    pub fn count(raster: &[bool]) -> usize {
        raster.iter().filter(|&&b| b).count()
    }
}

fn rasters_for(cfg: &DoaConfig, parallel: bool) -> Vec<Vec<CellClass>> {
    let xs = cfg.x_values();
    let zs = cfg.z_values();
    let classify_index = |t0: f64, idx: usize| {
        let (ix, iz) = (idx % cfg.nx, idx / cfg.nx);
        classify_cell(State::new(xs[ix], zs[iz]), t0, cfg)
    };
    cfg.t0_samples
        .iter()
        .map(|&t0| {
            if parallel {
                (0..cfg.n_cells())
                    .into_par_iter()
                    .map(|idx| classify_index(t0, idx))
                    .collect()
            } else {
                (0..cfg.n_cells()).map(|idx| classify_index(t0, idx)).collect()
            }
        })
        .collect()
}

/// Computes the full raster, classifying cells in parallel.
///
/// Cells are independent work items; assembly is by cell index, so the
/// result does not depend on the parallel schedule.
pub fn compute_grid(cfg: &DoaConfig) -> Result<DoaGrid, DoaError> {
    cfg.validate()?;
    Ok(DoaGrid::assemble(cfg.clone(), rasters_for(cfg, true)))
}

/// Single-threaded reference implementation of [`compute_grid`].
pub fn compute_grid_serial(cfg: &DoaConfig) -> Result<DoaGrid, DoaError> {
    cfg.validate()?;
    Ok(DoaGrid::assemble(cfg.clone(), rasters_for(cfg, false)))
}
