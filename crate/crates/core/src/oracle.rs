//! Independent reference solutions used to validate the production
//! integrator: dense matrix-exponential propagation for small systems and
//! the exact two-atom solution.
//!
//! The dense route deliberately shares nothing with the sparse generator: it
//! enumerates states in its own order and assembles the full matrix row by
//! row from the inflow/outflow terms of the rate equation, so a structural
//! bug in the production path cannot cancel out here.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{DecayRates, Distribution};
use crate::error::{Error, Result};
use crate::statespace::StateSpace;

/// Largest dense dimension the oracle will accept (N <= 49).
pub const DENSE_DIM_CAP: usize = 5000;

/// Reference distributions at the requested probe times, plus the deviation
/// against a production solution once one has been compared in.
#[derive(Debug, Clone)]
pub struct OracleResult {
    pub probe_times: Vec<f64>,
    pub distributions: Vec<Distribution>,
    pub max_deviation_vs_production: f64,
}

impl OracleResult {
    /// Record the elementwise deviation against a production solution at the
    /// same probe times.
    pub fn compare_production(&mut self, production: &[Distribution]) -> f64 {
        let dev = max_deviation(production, &self.distributions);
        self.max_deviation_vs_production = dev;
        dev
    }
}

/// Largest absolute elementwise difference between two lists of
/// distributions.
pub fn max_deviation(a: &[Distribution], b: &[Distribution]) -> f64 {
    let mut worst = 0.0f64;
    for (da, db) in a.iter().zip(b) {
        for (x, y) in da.values().iter().zip(db.values()) {
            worst = worst.max((x - y).abs());
        }
    }
    worst
}

/// Propagate `init` through `P(t) = exp(G t) P(0)` with a dense matrix
/// exponential, evaluated at each probe time.
pub fn dense_expm_solve(
    space: &StateSpace,
    rates: &DecayRates,
    init: &Distribution,
    probe_times: &[f64],
) -> Result<OracleResult> {
    let dim = space.dim();
    if dim > DENSE_DIM_CAP {
        return Err(Error::validation(format!(
            "dense oracle limited to dimension {DENSE_DIM_CAP}, got {dim}"
        )));
    }
    if init.len() != dim {
        return Err(Error::validation(format!(
            "initial distribution has {} entries, state space needs {dim}",
            init.len()
        )));
    }
    for (i, t) in probe_times.iter().enumerate() {
        if !t.is_finite() || *t < 0.0 {
            return Err(Error::validation(format!(
                "probe time {i} must be finite and >= 0, got {t}"
            )));
        }
        if i > 0 && *t < probe_times[i - 1] {
            return Err(Error::validation("probe times must be sorted ascending"));
        }
    }

    // Own enumeration: m ascending, n ascending — unrelated to the
    // production index layout.
    let two_n = space.two_n();
    let mut labels = Vec::with_capacity(dim);
    let mut local = HashMap::new();
    for m in 0..=two_n {
        for n in 0..=m {
            local.insert((n, m), labels.len());
            labels.push((n, m));
        }
    }

    let i1 = |n: u32, m: u32| n as f64 * (two_n - m + 1) as f64;
    let i2 = |n: u32, m: u32| (m - n) as f64 * (two_n - m + 1) as f64;
    let (g1, g2) = (rates.gamma1(), rates.gamma2());

    // Row-wise inflow/outflow assembly of dP_{n,m}/dt.
    let mut matrix = DMatrix::zeros(dim, dim);
    for (row, &(n, m)) in labels.iter().enumerate() {
        matrix[(row, row)] = -(g1 * i1(n, m) + g2 * i2(n, m));
        if m < two_n {
            if n + 1 <= m + 1 {
                matrix[(row, local[&(n + 1, m + 1)])] += g1 * i1(n + 1, m + 1);
            }
            matrix[(row, local[&(n, m + 1)])] += g2 * i2(n, m + 1);
        }
    }

    let mut p = DVector::zeros(dim);
    for (row, &(n, m)) in labels.iter().enumerate() {
        p[row] = init.values()[space.index_of(n, m)?];
    }

    let mut distributions = Vec::with_capacity(probe_times.len());
    let mut cached: Option<(f64, DMatrix<f64>)> = None;
    let mut t_cur = 0.0;
    for &t in probe_times {
        let dt = t - t_cur;
        if dt > 0.0 {
            let reuse = matches!(&cached, Some((d, _)) if *d == dt);
            if !reuse {
                cached = Some((dt, (matrix.clone() * dt).exp()));
            }
            let (_, e) = cached.as_ref().unwrap();
            p = e * &p;
            t_cur = t;
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::numerical(format!(
                "oracle lost normalization at t={t}: total probability {total:.12}"
            )));
        }
        let mut values = vec![0.0; dim];
        for (row, &(n, m)) in labels.iter().enumerate() {
            values[space.index_of(n, m)?] = p[row];
        }
        distributions.push(Distribution::from_raw(values));
    }

    Ok(OracleResult {
        probe_times: probe_times.to_vec(),
        distributions,
        max_deviation_vs_production: f64::NAN,
    })
}

/// Exact solution of the two-atom system (N = 1) started from one atom in
/// each upper level.
///
/// With `r = gamma1 + gamma2`, the occupied states are
/// `P_{1,2} = e^{-rt}`, `P_{1,1}` solving `P' = gamma2 e^{-rt} - 2 gamma1 P`
/// and `P_{0,1}` solving `P' = gamma1 e^{-rt} - 2 gamma2 P`, with the ground
/// state taking the remainder.
#[derive(Debug, Clone)]
pub struct TwoAtomSolution {
    /// Distribution in production index order for N = 1:
    /// `(2,2), (1,2), (0,2), (1,1), (0,1), (0,0)`.
    pub distribution: Distribution,
    pub intensity1: f64,
    pub intensity2: f64,
}

pub fn two_atom_closed_form(rates: &DecayRates, t: f64) -> TwoAtomSolution {
    let (g1, g2) = (rates.gamma1(), rates.gamma2());
    let r = g1 + g2;
    let p12 = (-r * t).exp();
    // Transient amplitude for y' = a e^{-rt} - b y, y(0) = 0:
    // y = a (e^{-rt} - e^{-bt}) / (b - r), with the confluent limit
    // a t e^{-rt} when b -> r.
    let transient = |a: f64, b: f64| {
        if (b - r).abs() < 1e-9 * r.max(b) {
            a * t * (-r * t).exp()
        } else {
            a * ((-r * t).exp() - (-b * t).exp()) / (b - r)
        }
    };
    let p11 = transient(g2, 2.0 * g1);
    let p01 = transient(g1, 2.0 * g2);
    let p00 = 1.0 - p12 - p11 - p01;
    // Mode 1 empties the first upper level: active in (1,2) with factor 1
    // and (1,1) with factor 2. Mode 2 mirrors this through (1,2) and (0,1).
    let intensity1 = g1 * (p12 + 2.0 * p11);
    let intensity2 = g2 * (p12 + 2.0 * p01);
    TwoAtomSolution {
        distribution: Distribution::from_raw(vec![0.0, p12, 0.0, p11, p01, p00]),
        intensity1,
        intensity2,
    }
}

/// Closed-form mode observables for the equal-rate two-atom system; by
/// symmetry both modes share them. `m1`/`m2` are the raw first and second
/// intensity moments, the integrals of `t I(t)` and `t^2 I(t)`.
#[derive(Debug, Clone, Copy)]
pub struct TwoAtomMoments {
    pub intensity: f64,
    pub area: f64,
    pub m1: f64,
    pub m2: f64,
}

pub fn two_atom_equal_rate_moments(gamma: f64, t: f64) -> TwoAtomMoments {
    let g = gamma;
    let x = g * t;
    let e = (-2.0 * x).exp();
    TwoAtomMoments {
        intensity: g * e * (1.0 + 2.0 * x),
        area: 1.0 - e * (1.0 + x),
        m1: (3.0 - e * (3.0 + 6.0 * x + 4.0 * x * x)) / (4.0 * g),
        m2: (1.0 - e * (((x + 2.0) * x + 2.0) * x + 1.0)) / (g * g),
    }
}

/// One comparison of the verification battery.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct VerifyCase {
    pub label: String,
    pub deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Outcome of the full verification battery.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct VerifyReport {
    pub max_n: u32,
    pub tolerance: f64,
    pub cases: Vec<VerifyCase>,
    pub worst_deviation: f64,
    pub passed: bool,
}

/// Cross-checks the production integrator against the dense exponential for
/// every N up to `max_n` over a grid of rate pairs, anchors the dense route
/// itself against the exact two-atom solution, and pushes one run through
/// the observable pipeline against closed-form limits.
///
/// The integrator runs well below its default tolerances here: local error
/// control admits global drift of roughly steps x rel_tol, so meeting the
/// battery tolerance needs headroom underneath it.
///
/// `inject_rate_bug` multiplies one production transition rate by 1.1 first;
/// it exists so the battery can demonstrate it actually detects a wrong
/// generator.
pub fn run_verification(max_n: u32, tolerance: f64, inject_rate_bug: bool) -> Result<VerifyReport> {
    use crate::dynamics::{build_generator, emission_weights, initial_distribution, InitialKind};
    use crate::integrator::{integrate, integrate_probed, SolverConfig};

    if max_n == 0 {
        return Err(Error::validation("verification needs at least N = 1"));
    }
    if !(tolerance > 0.0) {
        return Err(Error::validation("tolerance must be positive"));
    }
    crate::statespace::dimension(max_n).and_then(|dim| {
        if dim > DENSE_DIM_CAP {
            Err(Error::validation(format!(
                "N = {max_n} needs a dense system of dimension {dim}, above the cap {DENSE_DIM_CAP}"
            )))
        } else {
            Ok(())
        }
    })?;

    let tight = SolverConfig {
        rel_tol: 1e-10,
        abs_tol: 1e-14,
        ..Default::default()
    };
    let mut cases = Vec::new();
    let rate_grid = [(1.0, 1.0), (1.0, 0.1), (1.0, 0.0), (0.0, 0.1)];

    for n_half in 1..=max_n {
        let space = StateSpace::new(n_half)?;
        for (g1, g2) in rate_grid {
            let rates = DecayRates::new(g1, g2)?;
            let mut gen = build_generator(&space, &rates);
            if inject_rate_bug {
                gen.perturb_edge_for_fault_injection(0, 1.1);
            }
            let weights = emission_weights(&space, &rates, false);
            let init = initial_distribution(&space, &InitialKind::VStandard)?;
            let first = integrate(&gen, &weights, &init, &tight)?;
            let t_end = first.t_end;
            let probes: Vec<f64> = (0..20).map(|i| t_end * f64::from(i) / 19.0).collect();
            let probed_config = SolverConfig { t_max: Some(t_end), ..tight.clone() };
            let probed = integrate_probed(&gen, &weights, &init, &probed_config, &probes)?;
            let mut reference = dense_expm_solve(&space, &rates, &init, &probes)?;
            let deviation = reference.compare_production(&probed.probe_distributions);
            cases.push(VerifyCase {
                label: format!("N={n_half} gamma=({g1},{g2}) production vs dense expm"),
                deviation,
                tolerance,
                passed: deviation <= tolerance,
            });
        }
    }

    // The dense route itself is anchored to the exact two-atom solution.
    {
        let space = StateSpace::new(1)?;
        let mut worst = 0.0f64;
        for (g1, g2) in [(1.0, 1.0), (1.0, 0.5), (1.0, 0.1), (1.0, 0.0), (0.0, 1.0)] {
            let rates = DecayRates::new(g1, g2)?;
            let init = initial_distribution(&space, &InitialKind::VStandard)?;
            let times = [0.0, 0.1, 0.5, 1.0, 2.0, 5.0];
            let reference = dense_expm_solve(&space, &rates, &init, &times)?;
            for (i, &t) in times.iter().enumerate() {
                let exact = two_atom_closed_form(&rates, t);
                worst = worst.max(max_deviation(
                    std::slice::from_ref(&exact.distribution),
                    std::slice::from_ref(&reference.distributions[i]),
                ));
            }
        }
        cases.push(VerifyCase {
            label: "two-atom closed form vs dense expm".to_string(),
            deviation: worst,
            tolerance: 1e-12,
            passed: worst <= 1e-12,
        });
    }

    // Observable pipeline against the closed-form equal-rate limits. The
    // completion threshold bounds the delay truncation error at roughly
    // epsilon * t_end, so the run must settle far below the 1e-6 target.
    {
        let space = StateSpace::new(1)?;
        let rates = DecayRates::new(1.0, 1.0)?;
        let mut gen = build_generator(&space, &rates);
        if inject_rate_bug {
            gen.perturb_edge_for_fault_injection(0, 1.1);
        }
        let weights = emission_weights(&space, &rates, false);
        let init = initial_distribution(&space, &InitialKind::VStandard)?;
        let config = SolverConfig { completion_epsilon: 1e-10, ..tight };
        let series = integrate(&gen, &weights, &init, &config)?;
        let summary = crate::observables::asymptotics(&series)?;
        let sigma_limit = 7f64.sqrt() / 3.0;
        let worst = [
            (summary.tau1_inf.unwrap_or(f64::INFINITY) - 0.75).abs(),
            (summary.tau2_inf.unwrap_or(f64::INFINITY) - 0.75).abs(),
            (summary.sigma1_inf.unwrap_or(f64::INFINITY) - sigma_limit).abs(),
            (summary.area1_inf - 1.0).abs(),
            (summary.area2_inf - 1.0).abs(),
        ]
        .into_iter()
        .fold(0.0f64, f64::max);
        cases.push(VerifyCase {
            label: "observable pipeline vs two-atom closed form".to_string(),
            deviation: worst,
            tolerance: 1e-6,
            passed: worst <= 1e-6,
        });
    }

    let worst_deviation = cases
        .iter()
        .filter(|c| c.label.contains("production"))
        .map(|c| c.deviation)
        .fold(0.0f64, f64::max);
    let passed = cases.iter().all(|c| c.passed);
    Ok(VerifyReport { max_n, tolerance, cases, worst_deviation, passed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn probes(t_end: f64, count: usize) -> Vec<f64> {
        (1..=count).map(|i| t_end * i as f64 / count as f64).collect()
    }

    #[test]
    fn probe_at_zero_returns_init() {
        let space = StateSpace::new(2).unwrap();
        let rates = DecayRates::new(1.0, 0.3).unwrap();
        let init = crate::dynamics::initial_distribution(
            &space,
            &crate::dynamics::InitialKind::VStandard,
        )
        .unwrap();
        let res = dense_expm_solve(&space, &rates, &init, &[0.0]).unwrap();
        assert_eq!(res.distributions[0].values(), init.values());
    }

    #[test]
    fn two_atom_example_values() {
        // At gamma1 = gamma2 = 1, t = 0.5: P_{1,2} = e^{-1},
        // P_{1,1} = P_{0,1} = 0.5 e^{-1}.
        let rates = DecayRates::new(1.0, 1.0).unwrap();
        let sol = two_atom_closed_form(&rates, 0.5);
        let v = sol.distribution.values();
        assert_abs_diff_eq!(v[1], 0.3678794411714423, epsilon = 1e-15);
        assert_abs_diff_eq!(v[3], 0.1839397205857212, epsilon = 1e-15);
        assert_abs_diff_eq!(v[4], 0.1839397205857212, epsilon = 1e-15);
        assert_abs_diff_eq!(v[5], 0.2642411176571153, epsilon = 1e-15);
        assert_abs_diff_eq!(sol.distribution.total(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn two_atom_matches_expm() {
        let space = StateSpace::new(1).unwrap();
        for (g1, g2) in [(1.0, 1.0), (1.0, 0.5), (1.0, 0.1), (1.0, 0.0), (0.0, 0.1)] {
            let rates = DecayRates::new(g1, g2).unwrap();
            let init = crate::dynamics::initial_distribution(
                &space,
                &crate::dynamics::InitialKind::VStandard,
            )
            .unwrap();
            let times = probes(3.0, 20);
            let res = dense_expm_solve(&space, &rates, &init, &times).unwrap();
            for (i, t) in times.iter().enumerate() {
                let closed = two_atom_closed_form(&rates, *t);
                let dev = max_deviation(
                    std::slice::from_ref(&closed.distribution),
                    std::slice::from_ref(&res.distributions[i]),
                );
                assert!(dev <= 1e-12, "gamma=({g1},{g2}) t={t}: dev {dev:e}");
            }
        }
    }

    #[test]
    fn expm_keeps_normalization() {
        let space = StateSpace::new(4).unwrap();
        let rates = DecayRates::new(1.0, 0.1).unwrap();
        let init = crate::dynamics::initial_distribution(
            &space,
            &crate::dynamics::InitialKind::VStandard,
        )
        .unwrap();
        let res = dense_expm_solve(&space, &rates, &init, &probes(5.0, 10)).unwrap();
        for d in &res.distributions {
            assert_abs_diff_eq!(d.total(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn rejects_oversized_and_bad_probes() {
        let rates = DecayRates::new(1.0, 1.0).unwrap();
        let small = StateSpace::new(1).unwrap();
        let init = crate::dynamics::initial_distribution(
            &small,
            &crate::dynamics::InitialKind::VStandard,
        )
        .unwrap();
        assert!(dense_expm_solve(&small, &rates, &init, &[0.5, 0.2]).is_err());
        assert!(dense_expm_solve(&small, &rates, &init, &[-1.0]).is_err());

        let big = StateSpace::new(50).unwrap();
        let init_big =
            crate::dynamics::initial_distribution(&big, &crate::dynamics::InitialKind::VStandard)
                .unwrap();
        assert!(matches!(
            dense_expm_solve(&big, &rates, &init_big, &[0.1]),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn two_atom_mode_swap_symmetry() {
        let a = two_atom_closed_form(&DecayRates::new(1.0, 0.3).unwrap(), 0.8);
        let b = two_atom_closed_form(&DecayRates::new(0.3, 1.0).unwrap(), 0.8);
        assert_abs_diff_eq!(a.intensity1, b.intensity2, epsilon = 1e-15);
        assert_abs_diff_eq!(a.intensity2, b.intensity1, epsilon = 1e-15);
        let (va, vb) = (a.distribution.values(), b.distribution.values());
        assert_abs_diff_eq!(va[3], vb[4], epsilon = 1e-15);
        assert_abs_diff_eq!(va[4], vb[3], epsilon = 1e-15);
    }

    #[test]
    fn gamma2_zero_decouples_mode2() {
        let rates = DecayRates::new(1.0, 0.0).unwrap();
        for t in [0.1, 0.7, 2.5] {
            let sol = two_atom_closed_form(&rates, t);
            assert_eq!(sol.intensity2, 0.0);
            // The stalled state (0,1) keeps all the mode-2 atom's population.
            let v = sol.distribution.values();
            assert_eq!(v[5], 0.0);
            assert_abs_diff_eq!(v[1] + v[3] + v[4], 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn equal_rate_moments_match_quadrature() {
        // Simpson integration of the closed-form intensity against the
        // closed-form area and moments.
        let gamma = 1.3;
        let t_end = 0.9;
        let steps = 20_000;
        let h = t_end / steps as f64;
        let f = |order: u32, t: f64| {
            t.powi(order as i32) * two_atom_equal_rate_moments(gamma, t).intensity
        };
        let simpson = |order: u32| {
            let mut acc = f(order, 0.0) + f(order, t_end);
            for k in 1..steps {
                let w = if k % 2 == 1 { 4.0 } else { 2.0 };
                acc += w * f(order, k as f64 * h);
            }
            acc * h / 3.0
        };
        let m = two_atom_equal_rate_moments(gamma, t_end);
        assert_abs_diff_eq!(m.area, simpson(0), epsilon = 1e-10);
        assert_abs_diff_eq!(m.m1, simpson(1), epsilon = 1e-10);
        assert_abs_diff_eq!(m.m2, simpson(2), epsilon = 1e-10);
    }

    #[test]
    fn equal_rate_asymptotics() {
        let m = two_atom_equal_rate_moments(1.0, 60.0);
        assert_abs_diff_eq!(m.area, 1.0, epsilon = 1e-12);
        let tau = m.m1 / m.area;
        let tau_sq = m.m2 / m.area;
        assert_abs_diff_eq!(tau, 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(tau_sq, 1.0, epsilon = 1e-12);
        let sigma = (tau_sq - tau * tau).sqrt() / tau;
        assert_abs_diff_eq!(sigma, 7f64.sqrt() / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn verification_battery_passes_for_small_systems() {
        let report = run_verification(3, 1e-8, false).unwrap();
        assert!(report.passed, "cases: {:#?}", report.cases);
        // 3 N values x 4 rate pairs, plus the two anchor cases.
        assert_eq!(report.cases.len(), 14);
        assert!(report.worst_deviation <= 1e-8);
        assert!(report.cases.iter().all(|c| c.deviation.is_finite()));
    }

    #[test]
    fn verification_battery_catches_an_injected_rate_bug() {
        let report = run_verification(2, 1e-8, true).unwrap();
        assert!(!report.passed);
        assert!(report.worst_deviation > 1e-8);
    }

    #[test]
    fn verification_battery_rejects_bad_arguments() {
        assert!(matches!(run_verification(0, 1e-8, false), Err(Error::Validation(_))));
        assert!(matches!(run_verification(50, 1e-8, false), Err(Error::Validation(_))));
        assert!(matches!(run_verification(3, 0.0, false), Err(Error::Validation(_))));
    }
}
