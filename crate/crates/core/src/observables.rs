//! Derived observables of a run: time-dependent delays, timing noise, and
//! their asymptotic values.
//!
//! The delay of a mode is the mean emission time of its photons up to `t`,
//! `tau(t) = M1(t)/A(t)`; the noise is the relative standard deviation of
//! the emission-time distribution, `sigma(t) = sqrt(M2/A - tau^2)/tau`. Both
//! are undefined until the mode has emitted a meaningful amount; tracks
//! carry the first defined sample index instead of non-finite sentinels, and
//! the values before it are zero filler that consumers must skip.

use crate::error::{Error, Result};
use crate::integrator::TimeSeries;

/// Radiation mode selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    One,
    Two,
}

impl Mode {
    pub fn index(self) -> usize {
        match self {
            Mode::One => 0,
            Mode::Two => 1,
        }
    }
}

/// Fraction of the final area below which the mode counts as not yet
/// radiating. Relative rather than absolute so the threshold is scale-free
/// across N and Gamma.
const AREA_THRESHOLD_REL: f64 = 1e-12;

fn mode_slices(series: &TimeSeries, mode: Mode) -> (&[f64], &[f64], &[f64]) {
    match mode {
        Mode::One => (&series.area1, &series.m1_1, &series.m2_1),
        Mode::Two => (&series.area2, &series.m1_2, &series.m2_2),
    }
}

/// First sample index where the mode's track is defined, if anywhere.
pub fn defined_from(series: &TimeSeries, mode: Mode) -> Option<usize> {
    let (area, _, _) = mode_slices(series, mode);
    let a_end = *area.last()?;
    if a_end <= 0.0 {
        return None;
    }
    let a_min = AREA_THRESHOLD_REL * a_end;
    area.iter().position(|a| *a >= a_min && *a > 0.0)
}

/// `tau(t)` samples for one mode; zero filler before the defined region.
pub fn delay_track(series: &TimeSeries, mode: Mode) -> Vec<f64> {
    let (area, m1, _) = mode_slices(series, mode);
    let mut out = vec![0.0; area.len()];
    if let Some(start) = defined_from(series, mode) {
        for i in start..area.len() {
            out[i] = m1[i] / area[i];
        }
    }
    out
}

/// `sigma(t)` samples for one mode; zero filler before the defined region.
pub fn sigma_track(series: &TimeSeries, mode: Mode) -> Vec<f64> {
    let (area, m1, m2) = mode_slices(series, mode);
    let mut out = vec![0.0; area.len()];
    if let Some(start) = defined_from(series, mode) {
        for i in start..area.len() {
            let tau = m1[i] / area[i];
            let second = m2[i] / area[i];
            // The variance can round slightly negative (order 1e-12) right
            // after definition; clamp rather than emit a non-finite sigma.
            let var = (second - tau * tau).max(0.0);
            out[i] = var.sqrt() / tau;
        }
    }
    out
}

/// Both modes' delay and noise tracks over the sample grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableTrack {
    pub times: Vec<f64>,
    pub tau1: Vec<f64>,
    pub tau2: Vec<f64>,
    pub sigma1: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub defined_from1: Option<usize>,
    pub defined_from2: Option<usize>,
}

pub fn observable_track(series: &TimeSeries) -> ObservableTrack {
    ObservableTrack {
        times: series.times.clone(),
        tau1: delay_track(series, Mode::One),
        tau2: delay_track(series, Mode::Two),
        sigma1: sigma_track(series, Mode::One),
        sigma2: sigma_track(series, Mode::Two),
        defined_from1: defined_from(series, Mode::One),
        defined_from2: defined_from(series, Mode::Two),
    }
}

/// Long-time limits evaluated at `t_end` of a completed run. A mode that
/// never radiated has no delay or noise limit (`None`).
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticSummary {
    pub tau1_inf: Option<f64>,
    pub tau2_inf: Option<f64>,
    pub sigma1_inf: Option<f64>,
    pub sigma2_inf: Option<f64>,
    pub area1_inf: f64,
    pub area2_inf: f64,
    /// Bound on the truncation error of the first moments: the probability
    /// still unsettled at `t_end` times `t_end`.
    pub truncation_bound: f64,
}

pub fn asymptotics(series: &TimeSeries) -> Result<AsymptoticSummary> {
    if !series.completed {
        return Err(Error::validation(
            "run did not reach its completion threshold; extend t_max before \
             taking asymptotics",
        ));
    }
    let end = series.len() - 1;
    let mode_inf = |mode: Mode| -> (Option<f64>, Option<f64>) {
        let (area, m1, m2) = mode_slices(series, mode);
        if defined_from(series, mode).is_none() {
            return (None, None);
        }
        let tau = m1[end] / area[end];
        let var = (m2[end] / area[end] - tau * tau).max(0.0);
        (Some(tau), Some(var.sqrt() / tau))
    };
    let (tau1_inf, sigma1_inf) = mode_inf(Mode::One);
    let (tau2_inf, sigma2_inf) = mode_inf(Mode::Two);
    Ok(AsymptoticSummary {
        tau1_inf,
        tau2_inf,
        sigma1_inf,
        sigma2_inf,
        area1_inf: series.area1[end],
        area2_inf: series.area2[end],
        truncation_bound: (1.0 - series.absorbed_mass[end]) * series.t_end,
    })
}
