//! File formats and atomic persistence.
//!
//! Every artifact is written to a temporary file in the destination
//! directory and renamed into place, so a crash never leaves a partial
//! file under the final name. Floats carry 17 significant digits, enough
//! for the binary value to survive a write/read cycle exactly; re-running
//! a scenario therefore reproduces artifacts byte for byte.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::analysis::{RunTracks, SurfaceRow, SweepRecord};
use crate::error::{Error, Result};
use crate::integrator::TimeSeries;
use crate::observables::ObservableTrack;

/// Column names of the per-run time-series CSV, in order.
pub const RUN_CSV_COLUMNS: [&str; 10] = [
    "t", "I1", "I2", "A1", "A2", "tau1", "tau2", "sigma1", "sigma2", "P_ground",
];

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

/// Serializes a float with 17 significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `bytes` under `path` atomically, creating parent directories as
/// needed.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(parent).map_err(|e| Error::io(path_str(parent), e))?;
    let mut tmp =
        tempfile::NamedTempFile::new_in(parent).map_err(|e| Error::io(path_str(parent), e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path_str(path), e))?;
    tmp.persist(path)
        .map_err(|e| Error::io(path_str(path), e.error))?;
    Ok(())
}

/// Serializes `value` as pretty-printed JSON with a trailing newline and
/// writes it atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| Error::format(path_str(path), format!("serialization failed: {e}")))?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path_str(path), e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path_str(path), e.to_string()))
}

/// Writes the per-run time series with its observable tracks. Cells of a
/// delay or noise column are empty until the mode's track is defined.
pub fn write_run_csv(path: &Path, series: &TimeSeries, track: &ObservableTrack) -> Result<()> {
    let mut out = String::with_capacity(series.len() * 220);
    out.push_str(&RUN_CSV_COLUMNS.join(","));
    out.push('\n');
    let cell = |defined_from: Option<usize>, values: &[f64], i: usize| -> String {
        match defined_from {
            Some(start) if i >= start => fmt_float(values[i]),
            _ => String::new(),
        }
    };
    for i in 0..series.len() {
        let row = [
            fmt_float(series.times[i]),
            fmt_float(series.intensity1[i]),
            fmt_float(series.intensity2[i]),
            fmt_float(series.area1[i]),
            fmt_float(series.area2[i]),
            cell(track.defined_from1, &track.tau1, i),
            cell(track.defined_from2, &track.tau2, i),
            cell(track.defined_from1, &track.sigma1, i),
            cell(track.defined_from2, &track.sigma2, i),
            fmt_float(series.ground_mass[i]),
        ];
        out.push_str(&row.join(","));
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

/// A reloaded per-run time-series file. Delay and noise tracks carry zero
/// filler before their `defined_from` index, mirroring
/// [`ObservableTrack`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunCsv {
    pub times: Vec<f64>,
    pub intensity1: Vec<f64>,
    pub intensity2: Vec<f64>,
    pub area1: Vec<f64>,
    pub area2: Vec<f64>,
    pub tau1: Vec<f64>,
    pub tau2: Vec<f64>,
    pub sigma1: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub ground_mass: Vec<f64>,
    pub defined_from1: Option<usize>,
    pub defined_from2: Option<usize>,
}

impl RunCsv {
    pub fn tracks(&self, n_half: u32) -> RunTracks {
        RunTracks {
            n_half,
            times: self.times.clone(),
            intensity1: self.intensity1.clone(),
            intensity2: self.intensity2.clone(),
        }
    }
}

pub fn read_run_csv(path: &Path) -> Result<RunCsv> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path_str(path), e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format(path_str(path), "empty file"))?;
    let names: Vec<&str> = header.split(',').collect();
    if names.len() != RUN_CSV_COLUMNS.len() {
        return Err(Error::format(
            path_str(path),
            format!("expected {} columns, found {}", RUN_CSV_COLUMNS.len(), names.len()),
        ));
    }
    for (i, (found, expected)) in names.iter().zip(RUN_CSV_COLUMNS).enumerate() {
        if *found != expected {
            return Err(Error::format(
                path_str(path),
                format!("column {}: expected '{expected}', found '{found}'", i + 1),
            ));
        }
    }

    let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::new(); RUN_CSV_COLUMNS.len()];
    for (row_idx, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != RUN_CSV_COLUMNS.len() {
            return Err(Error::format(
                path_str(path),
                format!("row {}: expected {} cells, found {}", row_idx + 2, RUN_CSV_COLUMNS.len(), cells.len()),
            ));
        }
        for (col, cell) in cells.iter().enumerate() {
            let value = if cell.is_empty() {
                None
            } else {
                Some(cell.parse::<f64>().map_err(|e| {
                    Error::format(
                        path_str(path),
                        format!("row {} column {} ('{}'): {e}", row_idx + 2, col + 1, cell),
                    )
                })?)
            };
            columns[col].push(value);
        }
    }
    let rows = columns[0].len();
    if rows == 0 {
        return Err(Error::format(path_str(path), "no data rows"));
    }

    let full = |col: usize| -> Result<Vec<f64>> {
        columns[col]
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.ok_or_else(|| {
                    Error::format(
                        path_str(path),
                        format!("row {} column {}: unexpected empty cell", i + 2, col + 1),
                    )
                })
            })
            .collect()
    };
    // An optional column must be one undefined prefix followed by values;
    // a hole in the middle means the file was truncated or edited.
    let prefixed = |col: usize| -> Result<(Vec<f64>, Option<usize>)> {
        let start = columns[col].iter().position(Option::is_some);
        let mut values = vec![0.0; rows];
        if let Some(start) = start {
            for (i, v) in columns[col].iter().enumerate().skip(start) {
                values[i] = v.ok_or_else(|| {
                    Error::format(
                        path_str(path),
                        format!("row {} column {}: defined track has a hole", i + 2, col + 1),
                    )
                })?;
            }
        }
        Ok((values, start))
    };

    let (tau1, from1_tau) = prefixed(5)?;
    let (tau2, from2_tau) = prefixed(6)?;
    let (sigma1, from1_sigma) = prefixed(7)?;
    let (sigma2, from2_sigma) = prefixed(8)?;
    if from1_tau != from1_sigma || from2_tau != from2_sigma {
        return Err(Error::format(
            path_str(path),
            "delay and noise columns of one mode disagree on where they start",
        ));
    }
    Ok(RunCsv {
        times: full(0)?,
        intensity1: full(1)?,
        intensity2: full(2)?,
        area1: full(3)?,
        area2: full(4)?,
        tau1,
        tau2,
        sigma1,
        sigma2,
        ground_mass: full(9)?,
        defined_from1: from1_tau,
        defined_from2: from2_tau,
    })
}

/// Flat per-N table of the sweep extraction; cells of quantities a mode
/// never produced stay empty.
pub fn write_sweep_csv(path: &Path, records: &[SweepRecord]) -> Result<()> {
    let mut out = String::new();
    out.push_str(
        "n_half,gamma1,gamma2,init_kind,peak1_t,peak1_i,peak2_t,peak2_i,fwhm1,fwhm2,\
         tau1_inf,tau2_inf,sigma1_inf,sigma2_inf,sigma1_min_t,sigma1_min_v,\
         sigma2_min_t,sigma2_min_v,area1_inf,area2_inf\n",
    );
    let opt = |v: Option<f64>| v.map(fmt_float).unwrap_or_default();
    for r in records {
        let row = [
            r.n_half.to_string(),
            fmt_float(r.gamma1),
            fmt_float(r.gamma2),
            r.init_kind.clone(),
            opt(r.peak1.map(|p| p.t)),
            opt(r.peak1.map(|p| p.value)),
            opt(r.peak2.map(|p| p.t)),
            opt(r.peak2.map(|p| p.value)),
            opt(r.fwhm1),
            opt(r.fwhm2),
            opt(r.tau1_inf),
            opt(r.tau2_inf),
            opt(r.sigma1_inf),
            opt(r.sigma2_inf),
            opt(r.sigma1_min.map(|p| p.t)),
            opt(r.sigma1_min.map(|p| p.value)),
            opt(r.sigma2_min.map(|p| p.t)),
            opt(r.sigma2_min.map(|p| p.value)),
            fmt_float(r.area1_inf),
            fmt_float(r.area2_inf),
        ];
        out.push_str(&row.join(","));
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

/// Long-format normalized intensity surface. The shifted-time column only
/// appears when a display offset was requested.
pub fn write_surface_csv(path: &Path, rows: &[SurfaceRow]) -> Result<()> {
    let with_shift = rows.iter().any(|r| r.shifted_t.is_some());
    let mut out = String::with_capacity(rows.len() * 120);
    out.push_str("n_half,t,tau_d,i1_norm,i2_norm");
    if with_shift {
        out.push_str(",shifted_t");
    }
    out.push('\n');
    for r in rows {
        out.push_str(&r.n_half.to_string());
        for v in [r.t, r.tau_d, r.i1_norm, r.i2_norm] {
            out.push(',');
            out.push_str(&fmt_float(v));
        }
        if with_shift {
            out.push(',');
            out.push_str(&r.shifted_t.map(fmt_float).unwrap_or_default());
        }
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

/// Table of noise-track minima per run and mode.
pub fn write_sigma_minima_csv(path: &Path, records: &[SweepRecord]) -> Result<()> {
    let mut out = String::from("n_half,mode,t_min,sigma_min\n");
    for r in records {
        for (mode, minimum) in [(1u8, r.sigma1_min), (2, r.sigma2_min)] {
            if let Some(m) = minimum {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    r.n_half,
                    mode,
                    fmt_float(m.t),
                    fmt_float(m.value)
                ));
            }
        }
    }
    atomic_write(path, out.as_bytes())
}
