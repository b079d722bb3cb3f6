//! Data reduction over finished runs: pulse peaks and widths, the classic
//! delay/noise formulas, least-squares checks of the expected scalings, and
//! the two-mode synthesis timing report.

use serde::{Deserialize, Serialize};

use crate::dynamics::{DecayRates, InitialKind};
use crate::error::{Error, Result};
use crate::integrator::TimeSeries;
use crate::observables::{self, Mode, ObservableTrack};
use crate::EULER_GAMMA;

/// Classic delay of the superradiant peak for N cooperating two-level
/// emitters: `(E0 + ln N)/N` with E0 the Euler–Mascheroni constant.
pub fn dicke_delay(n_half: u32) -> Result<f64> {
    let n = formula_n(n_half)?;
    Ok((EULER_GAMMA + n.ln()) / n)
}

/// Classic relative timing noise of the superradiant pulse:
/// `pi / (sqrt(6) * (E0 + ln N))`.
pub fn dicke_sigma(n_half: u32) -> Result<f64> {
    let n = formula_n(n_half)?;
    Ok(std::f64::consts::PI / (6f64.sqrt() * (EULER_GAMMA + n.ln())))
}

fn formula_n(n_half: u32) -> Result<f64> {
    if n_half < 2 {
        return Err(Error::validation(format!(
            "delay/noise formulas need at least 2 emitters per species, got {n_half}"
        )));
    }
    Ok(f64::from(n_half))
}

/// A located extremum of a sampled track.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub t: f64,
    pub value: f64,
}

/// Vertex of the parabola through three samples; `None` when the points
/// carry no downward curvature to refine against.
fn parabola_vertex(x: [f64; 3], y: [f64; 3]) -> Option<Peak> {
    let d1 = (y[1] - y[0]) / (x[1] - x[0]);
    let d2 = (y[2] - y[1]) / (x[2] - x[1]);
    let curv = (d2 - d1) / (x[2] - x[0]);
    if curv >= 0.0 {
        return None;
    }
    let t = 0.5 * (x[0] + x[1]) - d1 / (2.0 * curv);
    let value = y[0] + d1 * (t - x[0]) + curv * (t - x[0]) * (t - x[1]);
    Some(Peak { t, value })
}

/// Peak time and height of one mode's intensity, refined by quadratic
/// interpolation through the three samples around the grid maximum.
/// Tracks peaked at the first sample are reported there unrefined: an
/// initially inverted mode radiates hardest at t = 0 and there is nothing
/// to the left to interpolate against.
pub fn peak_extract(series: &TimeSeries, mode: Mode) -> Result<Peak> {
    let intensity = series.intensity(mode == Mode::Two);
    let times = &series.times;
    let argmax = intensity
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::validation("empty intensity track"))?;
    let max = intensity[argmax];
    if max <= 0.0 {
        return Err(Error::validation(
            "intensity track is identically zero; this mode never radiates",
        ));
    }
    if argmax == 0 || argmax == intensity.len() - 1 {
        return Ok(Peak { t: times[argmax], value: max });
    }
    let window = [argmax - 1, argmax, argmax + 1];
    let refined = parabola_vertex(
        window.map(|i| times[i]),
        window.map(|i| intensity[i]),
    );
    Ok(refined.unwrap_or(Peak { t: times[argmax], value: max }))
}

/// Full width of one mode's pulse at half its (refined) peak height,
/// linearly interpolating the two crossings nearest the peak. A pulse
/// peaked at t = 0 has no left flank; its width is twice the right
/// half-width.
pub fn fwhm(series: &TimeSeries, mode: Mode) -> Result<f64> {
    let peak = peak_extract(series, mode)?;
    let intensity = series.intensity(mode == Mode::Two);
    let times = &series.times;
    let level = 0.5 * peak.value;
    let argmax = intensity
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();

    let right = (argmax + 1..intensity.len())
        .find(|&j| intensity[j] < level)
        .map(|j| {
            let frac = (intensity[j - 1] - level) / (intensity[j - 1] - intensity[j]);
            times[j - 1] + frac * (times[j] - times[j - 1])
        })
        .ok_or_else(|| {
            Error::validation("pulse never falls to half maximum; extend the run")
        })?;

    let left = (0..argmax).rev().find(|&i| intensity[i] < level).map(|i| {
        let frac = (level - intensity[i]) / (intensity[i + 1] - intensity[i]);
        times[i] + frac * (times[i + 1] - times[i])
    });
    Ok(match left {
        Some(l) => right - l,
        None => 2.0 * (right - peak.t),
    })
}

/// Ordinary least-squares line with labelled axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub x_label: String,
    pub y_label: String,
}

/// The fits artifact written by the analyze stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitsArtifact {
    pub fits: Vec<FitReport>,
}

pub fn linear_fit(xs: &[f64], ys: &[f64], x_label: &str, y_label: &str) -> Result<FitReport> {
    if xs.len() != ys.len() {
        return Err(Error::validation("fit inputs differ in length"));
    }
    if xs.len() < 3 {
        return Err(Error::validation(format!(
            "a meaningful line needs at least 3 points, got {}",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - x_mean) * (x - x_mean)).sum();
    if sxx == 0.0 {
        return Err(Error::validation("all x values coincide; slope is undefined"));
    }
    let sxy: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (x - x_mean) * (y - y_mean))
        .sum();
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let ss_tot: f64 = ys.iter().map(|y| (y - y_mean) * (y - y_mean)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    // Constant data carries no variance to explain; report 0 rather than 0/0.
    let r_squared = if ss_tot == 0.0 {
        0.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(FitReport {
        slope,
        intercept,
        r_squared,
        x_label: x_label.to_string(),
        y_label: y_label.to_string(),
    })
}

/// Everything extracted from one run that the scaling checks consume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub n_half: u32,
    pub gamma1: f64,
    pub gamma2: f64,
    pub init_kind: String,
    pub peak1: Option<Peak>,
    pub peak2: Option<Peak>,
    pub fwhm1: Option<f64>,
    pub fwhm2: Option<f64>,
    pub tau1_inf: Option<f64>,
    pub tau2_inf: Option<f64>,
    pub sigma1_inf: Option<f64>,
    pub sigma2_inf: Option<f64>,
    pub sigma1_min: Option<Peak>,
    pub sigma2_min: Option<Peak>,
    pub area1_inf: f64,
    pub area2_inf: f64,
}

/// Per-N records of a sweep, sorted by N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub records: Vec<SweepRecord>,
}

impl SweepSummary {
    pub fn from_records(mut records: Vec<SweepRecord>) -> Self {
        records.sort_by_key(|r| r.n_half);
        SweepSummary { records }
    }
}

/// Reduces one completed run to its sweep record. Quantities of a mode
/// that never radiates are absent rather than zero.
pub fn summarize_run(
    n_half: u32,
    rates: &DecayRates,
    init: &InitialKind,
    series: &TimeSeries,
) -> Result<SweepRecord> {
    let summary = observables::asymptotics(series)?;
    let track = observables::observable_track(series);
    let mode_quantities = |mode: Mode| -> Result<(Option<Peak>, Option<f64>, Option<Peak>)> {
        let silent = series.intensity(mode == Mode::Two).iter().all(|v| *v == 0.0);
        if silent {
            return Ok((None, None, None));
        }
        Ok((
            Some(peak_extract(series, mode)?),
            Some(fwhm(series, mode)?),
            Some(sigma_minimum(&track, mode)?),
        ))
    };
    let (peak1, fwhm1, sigma1_min) = mode_quantities(Mode::One)?;
    let (peak2, fwhm2, sigma2_min) = mode_quantities(Mode::Two)?;
    Ok(SweepRecord {
        n_half,
        gamma1: rates.gamma1(),
        gamma2: rates.gamma2(),
        init_kind: init.name().to_string(),
        peak1,
        peak2,
        fwhm1,
        fwhm2,
        tau1_inf: summary.tau1_inf,
        tau2_inf: summary.tau2_inf,
        sigma1_inf: summary.sigma1_inf,
        sigma2_inf: summary.sigma2_inf,
        sigma1_min,
        sigma2_min,
        area1_inf: summary.area1_inf,
        area2_inf: summary.area2_inf,
    })
}

/// The four expected scalings, fitted per radiating mode: peak intensity
/// against N^2, asymptotic delay against the delay formula, asymptotic
/// noise against the noise formula, and pulse width against 1/N.
pub fn criteria_battery(sweep: &SweepSummary) -> Result<Vec<FitReport>> {
    let distinct: std::collections::BTreeSet<u32> =
        sweep.records.iter().map(|r| r.n_half).collect();
    if distinct.len() < 5 {
        return Err(Error::validation(format!(
            "scaling fits need at least 5 distinct N, got {}",
            distinct.len()
        )));
    }
    let mut reports = Vec::new();
    for mode in [Mode::One, Mode::Two] {
        let tag = mode.index() + 1;
        let pick = |r: &SweepRecord| match mode {
            Mode::One => (r.peak1, r.tau1_inf, r.sigma1_inf, r.fwhm1),
            Mode::Two => (r.peak2, r.tau2_inf, r.sigma2_inf, r.fwhm2),
        };
        if !sweep.records.iter().all(|r| {
            let (p, t, s, w) = pick(r);
            p.is_some() && t.is_some() && s.is_some() && w.is_some()
        }) {
            continue;
        }
        let mut n_sq = Vec::new();
        let mut peak_val = Vec::new();
        let mut delay_formula = Vec::new();
        let mut tau = Vec::new();
        let mut sigma_formula = Vec::new();
        let mut sigma = Vec::new();
        let mut inv_n = Vec::new();
        let mut width = Vec::new();
        for r in &sweep.records {
            let (p, t, s, w) = pick(r);
            let n = f64::from(r.n_half);
            n_sq.push(n * n);
            peak_val.push(p.unwrap().value);
            delay_formula.push(dicke_delay(r.n_half)?);
            tau.push(t.unwrap());
            sigma_formula.push(dicke_sigma(r.n_half)?);
            sigma.push(s.unwrap());
            inv_n.push(1.0 / n);
            width.push(w.unwrap());
        }
        reports.push(linear_fit(&n_sq, &peak_val, "N^2", &format!("i{tag}_peak"))?);
        reports.push(linear_fit(&delay_formula, &tau, "tau_D", &format!("tau{tag}_inf"))?);
        reports.push(linear_fit(&sigma_formula, &sigma, "sigma_D", &format!("sigma{tag}_inf"))?);
        reports.push(linear_fit(&inv_n, &width, "1/N", &format!("fwhm{tag}"))?);
    }
    Ok(reports)
}

/// Global minimum of one mode's noise track over its defined region. The
/// first 1% of defined samples is excluded: sigma is born from a 0/0 limit
/// there and the sample right at the definition threshold can dip below
/// the physical curve.
pub fn sigma_minimum(track: &ObservableTrack, mode: Mode) -> Result<Peak> {
    let (start, sigma) = match mode {
        Mode::One => (track.defined_from1, &track.sigma1),
        Mode::Two => (track.defined_from2, &track.sigma2),
    };
    let start = start.ok_or_else(|| {
        Error::validation("noise track is nowhere defined; this mode never radiates")
    })?;
    let span = sigma.len() - start;
    let lo = (start + span.div_ceil(100)).min(sigma.len() - 1);
    let (i, v) = sigma[lo..]
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, v)| (lo + i, *v))
        .unwrap();
    Ok(Peak { t: track.times[i], value: v })
}

/// Timing comparison between the measured two-mode emission and the
/// sequential single-mode (cascade) estimate at the same rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub n_half: u32,
    pub gamma_ratio: f64,
    pub tau1d_formula: f64,
    pub tau2d_cascade_estimate: f64,
    pub cascade_sum: f64,
    pub mode1_peak_time: f64,
    pub mode2_peak_time: f64,
    pub completion_fraction: f64,
    pub completion_time_90: f64,
    pub speedup: f64,
}

/// Builds the synthesis report from a finished fully-inverted run.
/// `completion_fraction` is the share of the total photon budget (2N) whose
/// emission marks completion; the cross time is linearly interpolated.
pub fn synthesis_report(
    n_half: u32,
    rates: &DecayRates,
    series: &TimeSeries,
    completion_fraction: f64,
) -> Result<SynthesisReport> {
    if rates.gamma2() <= 0.0 {
        return Err(Error::validation(
            "synthesis timing needs both modes radiating; gamma2 must be positive",
        ));
    }
    if !(0.0..1.0).contains(&completion_fraction) || completion_fraction <= 0.0 {
        return Err(Error::validation(format!(
            "completion fraction must lie in (0, 1), got {completion_fraction}"
        )));
    }
    let tau1d = dicke_delay(n_half)?;
    let ratio = rates.gamma1() / rates.gamma2();
    let tau2d = ratio * tau1d;
    let budget = 2.0 * f64::from(n_half);
    let target = completion_fraction * budget;
    let emitted = |i: usize| series.area1[i] + series.area2[i];
    let cross = (0..series.len()).find(|&i| emitted(i) >= target).ok_or_else(|| {
        Error::validation(format!(
            "run emitted {:.6} of the {target:.6} photons needed for completion; extend t_max",
            emitted(series.len() - 1)
        ))
    })?;
    let completion_time_90 = if cross == 0 {
        series.times[0]
    } else {
        let (e0, e1) = (emitted(cross - 1), emitted(cross));
        let frac = (target - e0) / (e1 - e0);
        series.times[cross - 1] + frac * (series.times[cross] - series.times[cross - 1])
    };
    let speedup = (tau1d + tau2d) / completion_time_90;
    Ok(SynthesisReport {
        n_half,
        gamma_ratio: ratio,
        tau1d_formula: tau1d,
        tau2d_cascade_estimate: tau2d,
        cascade_sum: tau1d + tau2d,
        mode1_peak_time: peak_extract(series, Mode::One)?.t,
        mode2_peak_time: peak_extract(series, Mode::Two)?.t,
        completion_fraction,
        completion_time_90,
        speedup,
    })
}

/// One row of the peak-normalized intensity surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceRow {
    pub n_half: u32,
    pub t: f64,
    pub tau_d: f64,
    pub i1_norm: f64,
    pub i2_norm: f64,
    /// Present when a display offset was requested: `t - alpha * tau_d`.
    pub shifted_t: Option<f64>,
}

/// The minimum a surface needs from one run: its time grid and both
/// intensity tracks. Carved out of [`TimeSeries`] so tracks reloaded from
/// disk qualify as well.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTracks {
    pub n_half: u32,
    pub times: Vec<f64>,
    pub intensity1: Vec<f64>,
    pub intensity2: Vec<f64>,
}

impl RunTracks {
    pub fn from_series(n_half: u32, series: &TimeSeries) -> Self {
        RunTracks {
            n_half,
            times: series.times.clone(),
            intensity1: series.intensity1.clone(),
            intensity2: series.intensity2.clone(),
        }
    }
}

/// Long-format surface of per-N peak-normalized intensities against time
/// and the delay formula. Each N-slice of a radiating mode has maximum
/// exactly 1; a silent mode stays 0.
pub fn normalized_surface(runs: &[RunTracks], alpha: Option<f64>) -> Result<Vec<SurfaceRow>> {
    if runs.len() < 3 {
        return Err(Error::validation(format!(
            "a surface needs at least 3 runs, got {}",
            runs.len()
        )));
    }
    let mut rows = Vec::new();
    for run in runs {
        let tau_d = dicke_delay(run.n_half)?;
        // Divide by the grid maximum (rather than multiply by its
        // reciprocal) so the peak sample normalizes to exactly 1.
        let norm = |track: &[f64], i: usize, max: f64| {
            if max > 0.0 { track[i] / max } else { 0.0 }
        };
        let max1 = run.intensity1.iter().cloned().fold(0.0, f64::max);
        let max2 = run.intensity2.iter().cloned().fold(0.0, f64::max);
        for i in 0..run.times.len() {
            let t = run.times[i];
            rows.push(SurfaceRow {
                n_half: run.n_half,
                t,
                tau_d,
                i1_norm: norm(&run.intensity1, i, max1),
                i2_norm: norm(&run.intensity2, i, max2),
                shifted_t: alpha.map(|a| t - a * tau_d),
            });
        }
    }
    Ok(rows)
}
