//! CSV and JSON serialization of analysis results.
//!
//! Every float is written in scientific notation with 17 significant digits,
//! which round-trips any f64 bit-exactly through the readers in this module.
//! CSV files carry a header row and use `.` as the decimal separator
//! regardless of locale.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::doa::{CellClass, DoaGrid};
use crate::dynamics::{control_law, SystemParams};
use crate::floquet::FloquetResult;
use crate::integrate::Trajectory;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{0}")]
    MissingData(String),
}

/// Formats a float with 17 significant digits (bit-exact round trip).
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_field<T: std::str::FromStr>(field: &str, line: usize) -> Result<T, IoError> {
    field.trim().parse().map_err(|_| IoError::Parse {
        line,
        msg: format!("cannot parse field {field:?}"),
    })
}

fn split_line(
    line: &str,
    expected: usize,
    line_no: usize,
) -> Result<Vec<&str>, IoError> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != expected {
        return Err(IoError::Parse {
            line: line_no,
            msg: format!("expected {expected} fields, got {}", fields.len()),
        });
    }
    Ok(fields)
}

// ---- trajectory CSV: t, x, z, u ----

pub const TRAJECTORY_HEADER: &str = "t,x,z,u";

/// One row of a trajectory file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub x: f64,
    pub z: f64,
    pub u: f64,
}

/// Writes a closed-loop trajectory with the applied control at each sample.
pub fn write_trajectory_csv<W: Write>(
    w: &mut W,
    traj: &Trajectory,
    params: &SystemParams,
) -> Result<(), IoError> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for &(t, s) in &traj.samples {
        let u = control_law(s, t, params);
        writeln!(
            w,
            "{},{},{},{}",
            format_float(t),
            format_float(s.x),
            format_float(s.z),
            format_float(u)
        )?;
    }
    Ok(())
}

pub fn read_trajectory_csv<R: BufRead>(r: R) -> Result<Vec<TrajectoryRow>, IoError> {
    let mut rows = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line.trim() != TRAJECTORY_HEADER {
                return Err(IoError::Parse {
                    line: 1,
                    msg: format!("unexpected header {line:?}"),
                });
            }
            continue;
        }
        let f = split_line(&line, 4, i + 1)?;
        rows.push(TrajectoryRow {
            t: parse_field(f[0], i + 1)?,
            x: parse_field(f[1], i + 1)?,
            z: parse_field(f[2], i + 1)?,
            u: parse_field(f[3], i + 1)?,
        });
    }
    Ok(rows)
}

// ---- Floquet sweep CSV ----

pub const FLOQUET_HEADER: &str = "delta,m11,m12,m21,m22,re1,im1,re2,im2,specrad,stable";

/// One row of a sweep file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloquetRow {
    pub delta: f64,
    pub m11: f64,
    pub m12: f64,
    pub m21: f64,
    pub m22: f64,
    pub re1: f64,
    pub im1: f64,
    pub re2: f64,
    pub im2: f64,
    pub specrad: f64,
    pub stable: bool,
}

impl From<&FloquetResult> for FloquetRow {
    fn from(r: &FloquetResult) -> Self {
        FloquetRow {
            delta: r.delta,
            m11: r.monodromy.a11,
            m12: r.monodromy.a12,
            m21: r.monodromy.a21,
            m22: r.monodromy.a22,
            re1: r.multipliers.0.re,
            im1: r.multipliers.0.im,
            re2: r.multipliers.1.re,
            im2: r.multipliers.1.im,
            specrad: r.spectral_radius,
            stable: r.stable,
        }
    }
}

pub fn write_floquet_csv<W: Write>(w: &mut W, results: &[FloquetResult]) -> Result<(), IoError> {
    writeln!(w, "{FLOQUET_HEADER}")?;
    for r in results {
        let row = FloquetRow::from(r);
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            format_float(row.delta),
            format_float(row.m11),
            format_float(row.m12),
            format_float(row.m21),
            format_float(row.m22),
            format_float(row.re1),
            format_float(row.im1),
            format_float(row.re2),
            format_float(row.im2),
            format_float(row.specrad),
            row.stable
        )?;
    }
    Ok(())
}

pub fn read_floquet_csv<R: BufRead>(r: R) -> Result<Vec<FloquetRow>, IoError> {
    let mut rows = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line.trim() != FLOQUET_HEADER {
                return Err(IoError::Parse {
                    line: 1,
                    msg: format!("unexpected header {line:?}"),
                });
            }
            continue;
        }
        let f = split_line(&line, 11, i + 1)?;
        rows.push(FloquetRow {
            delta: parse_field(f[0], i + 1)?,
            m11: parse_field(f[1], i + 1)?,
            m12: parse_field(f[2], i + 1)?,
            m21: parse_field(f[3], i + 1)?,
            m22: parse_field(f[4], i + 1)?,
            re1: parse_field(f[5], i + 1)?,
            im1: parse_field(f[6], i + 1)?,
            re2: parse_field(f[7], i + 1)?,
            im2: parse_field(f[8], i + 1)?,
            specrad: parse_field(f[9], i + 1)?,
            stable: parse_field(f[10], i + 1)?,
        });
    }
    Ok(rows)
}

// ---- domain-of-attraction CSVs ----

pub const DOA_LONG_HEADER: &str = "x0,z0,t0,class";
pub const DOA_SUMMARY_HEADER: &str = "x0,z0,conservative,always_diverges,t0_dependent";

/// Writes the long-format raster: one row per (cell, starting phase).
pub fn write_doa_long_csv<W: Write>(w: &mut W, grid: &DoaGrid) -> Result<(), IoError> {
    writeln!(w, "{DOA_LONG_HEADER}")?;
    let xs = grid.config.x_values();
    let zs = grid.config.z_values();
    for (raster, &t0) in grid.per_t0.iter().zip(&grid.config.t0_samples) {
        for iz in 0..grid.config.nz {
            for ix in 0..grid.config.nx {
                let class = raster[grid.config.cell_index(ix, iz)];
                writeln!(
                    w,
                    "{},{},{},{}",
                    format_float(xs[ix]),
                    format_float(zs[iz]),
                    format_float(t0),
                    class
                )?;
            }
        }
    }
    Ok(())
}

pub fn read_doa_long_csv<R: BufRead>(r: R) -> Result<Vec<(f64, f64, f64, CellClass)>, IoError> {
    let mut rows = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line.trim() != DOA_LONG_HEADER {
                return Err(IoError::Parse {
                    line: 1,
                    msg: format!("unexpected header {line:?}"),
                });
            }
            continue;
        }
        let f = split_line(&line, 4, i + 1)?;
        rows.push((
            parse_field(f[0], i + 1)?,
            parse_field(f[1], i + 1)?,
            parse_field(f[2], i + 1)?,
            parse_field(f[3], i + 1)?,
        ));
    }
    Ok(rows)
}

/// Writes the per-cell region summary.
pub fn write_doa_summary_csv<W: Write>(w: &mut W, grid: &DoaGrid) -> Result<(), IoError> {
    writeln!(w, "{DOA_SUMMARY_HEADER}")?;
    let xs = grid.config.x_values();
    let zs = grid.config.z_values();
    for iz in 0..grid.config.nz {
        for ix in 0..grid.config.nx {
            let i = grid.config.cell_index(ix, iz);
            writeln!(
                w,
                "{},{},{},{},{}",
                format_float(xs[ix]),
                format_float(zs[iz]),
                grid.conservative[i],
                grid.always_diverges[i],
                grid.t0_dependent[i]
            )?;
        }
    }
    Ok(())
}

pub fn read_doa_summary_csv<R: BufRead>(
    r: R,
) -> Result<Vec<(f64, f64, bool, bool, bool)>, IoError> {
    let mut rows = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line.trim() != DOA_SUMMARY_HEADER {
                return Err(IoError::Parse {
                    line: 1,
                    msg: format!("unexpected header {line:?}"),
                });
            }
            continue;
        }
        let f = split_line(&line, 5, i + 1)?;
        rows.push((
            parse_field(f[0], i + 1)?,
            parse_field(f[1], i + 1)?,
            parse_field(f[2], i + 1)?,
            parse_field(f[3], i + 1)?,
            parse_field(f[4], i + 1)?,
        ));
    }
    Ok(rows)
}

/// Serializes any `Serialize` value as pretty JSON with a trailing newline.
pub fn write_json<W: Write, T: serde::Serialize>(w: &mut W, value: &T) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| IoError::MissingData(format!("JSON serialization failed: {e}")))?;
    writeln!(w, "{text}")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::State;
    use crate::integrate::{integrate_closed_loop, StepperConfig};
    use proptest::prelude::*;
    use std::io::BufReader;

    #[test]
    fn trajectory_round_trips_bit_exactly() {
        let p = SystemParams::new(1.0, std::f64::consts::FRAC_1_SQRT_2).unwrap();
        let cfg = StepperConfig::new(0.05);
        let traj = integrate_closed_loop(&p, State::new(1.0, 1.0), 0.0, 2.0, &cfg).unwrap();

        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &traj, &p).unwrap();
        let rows = read_trajectory_csv(BufReader::new(buf.as_slice())).unwrap();

        assert_eq!(rows.len(), traj.samples.len());
        for (row, &(t, s)) in rows.iter().zip(&traj.samples) {
            assert_eq!(row.t.to_bits(), t.to_bits());
            assert_eq!(row.x.to_bits(), s.x.to_bits());
            assert_eq!(row.z.to_bits(), s.z.to_bits());
            assert_eq!(row.u.to_bits(), control_law(s, t, &p).to_bits());
        }
    }

    #[test]
    fn floquet_round_trips_bit_exactly() {
        let cfg = StepperConfig::monodromy_default();
        let results: Vec<FloquetResult> = crate::floquet::sweep_delta(0.0, 0.2, 0.05, &cfg)
            .into_iter()
            .map(Result::unwrap)
            .collect();
        let mut buf = Vec::new();
        write_floquet_csv(&mut buf, &results).unwrap();
        let rows = read_floquet_csv(BufReader::new(buf.as_slice())).unwrap();
        assert_eq!(rows.len(), results.len());
        for (row, r) in rows.iter().zip(&results) {
            assert_eq!(*row, FloquetRow::from(r));
        }
    }

    #[test]
    fn doa_round_trips() {
        let cfg = crate::doa::DoaConfig {
            nx: 4,
            nz: 3,
            x_range: (-2.0, 2.0),
            z_range: (-1.5, 1.5),
            t0_samples: crate::doa::uniform_t0_samples(2),
            horizon: 24.0 * std::f64::consts::PI,
            ..crate::doa::DoaConfig::default()
        };
        let grid = crate::doa::compute_grid(&cfg).unwrap();

        let mut long = Vec::new();
        write_doa_long_csv(&mut long, &grid).unwrap();
        let rows = read_doa_long_csv(BufReader::new(long.as_slice())).unwrap();
        assert_eq!(rows.len(), cfg.n_cells() * cfg.t0_samples.len());
        assert_eq!(rows[0].3, grid.per_t0[0][0]);

        let mut summary = Vec::new();
        write_doa_summary_csv(&mut summary, &grid).unwrap();
        let srows = read_doa_summary_csv(BufReader::new(summary.as_slice())).unwrap();
        assert_eq!(srows.len(), cfg.n_cells());
        for (i, row) in srows.iter().enumerate() {
            assert_eq!(row.2, grid.conservative[i]);
            assert_eq!(row.3, grid.always_diverges[i]);
            assert_eq!(row.4, grid.t0_dependent[i]);
        }
    }

    #[test]
    fn malformed_input_is_a_parse_error() {
        let text = "t,x,z,u\n1.0,2.0,3.0\n";
        let err = read_trajectory_csv(BufReader::new(text.as_bytes())).unwrap_err();
        assert!(matches!(err, IoError::Parse { line: 2, .. }));

        let text = "wrong,header\n";
        let err = read_trajectory_csv(BufReader::new(text.as_bytes())).unwrap_err();
        assert!(matches!(err, IoError::Parse { line: 1, .. }));
    }

    proptest! {
        /// 17 significant digits round-trip any finite f64 bit-exactly.
        #[test]
        fn float_format_round_trips(bits in any::<u64>()) {
            let x = f64::from_bits(bits);
            prop_assume!(x.is_finite());
            let parsed: f64 = format_float(x).parse().unwrap();
            prop_assert_eq!(parsed.to_bits(), x.to_bits());
        }
    }
}
