//! Decay dynamics of the two-mode cascade.
//!
//! Each state `(n, m)` feeds two downward transitions. Mode 1 takes an
//! intermediate-level atom to the ground level, `(n, m) -> (n - 1, m - 1)`
//! in our labels' flow direction `(n + 1, m + 1) -> (n, m)`, with cooperative
//! enhancement `I1(n, m) = n (2N - m + 1)`. Mode 2 takes an upper-level atom
//! to the intermediate level, `(n, m) -> (n, m - 1)` flowing as
//! `(n, m + 1) -> (n, m)`, with `I2(n, m) = (m - n)(2N - m + 1)`. Physical
//! rates are `gamma1 * I1` and `gamma2 * I2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statespace::StateSpace;

/// Single-atom decay rates for the two transitions. At least one must be
/// positive, both must be finite and non-negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayRates {
    gamma1: f64,
    gamma2: f64,
}

impl DecayRates {
    pub fn new(gamma1: f64, gamma2: f64) -> Result<Self> {
        for (name, g) in [("gamma1", gamma1), ("gamma2", gamma2)] {
            if !g.is_finite() || g < 0.0 {
                return Err(Error::validation(format!(
                    "{name} must be finite and >= 0, got {g}"
                )));
            }
        }
        if gamma1 == 0.0 && gamma2 == 0.0 {
            return Err(Error::validation(
                "at least one of gamma1, gamma2 must be positive",
            ));
        }
        Ok(DecayRates { gamma1, gamma2 })
    }

    pub fn gamma1(&self) -> f64 {
        self.gamma1
    }

    pub fn gamma2(&self) -> f64 {
        self.gamma2
    }

    /// Largest single-atom rate.
    pub fn fastest(&self) -> f64 {
        self.gamma1.max(self.gamma2)
    }

    /// Smallest nonzero single-atom rate.
    pub fn slowest_nonzero(&self) -> f64 {
        match (self.gamma1 > 0.0, self.gamma2 > 0.0) {
            (true, true) => self.gamma1.min(self.gamma2),
            (true, false) => self.gamma1,
            _ => self.gamma2,
        }
    }
}

/// Cooperative factor for the mode-1 transition out of `(n, m)`.
pub fn coop_rate_mode1(n: u32, m: u32, n_half: u32) -> Result<u64> {
    check_state(n, m, n_half)?;
    Ok(n as u64 * (2 * n_half as u64 - m as u64 + 1))
}

/// Cooperative factor for the mode-2 transition out of `(n, m)`.
pub fn coop_rate_mode2(n: u32, m: u32, n_half: u32) -> Result<u64> {
    check_state(n, m, n_half)?;
    Ok((m - n) as u64 * (2 * n_half as u64 - m as u64 + 1))
}

fn check_state(n: u32, m: u32, n_half: u32) -> Result<()> {
    if n_half < 1 {
        return Err(Error::validation(format!(
            "atom pair count must be at least 1, got {n_half}"
        )));
    }
    if n > m || m > 2 * n_half {
        return Err(Error::validation(format!(
            "state (n={n}, m={m}) outside 0 <= n <= m <= {}",
            2 * n_half
        )));
    }
    Ok(())
}

/// One off-diagonal entry of the generator: probability flows from `source`
/// to `target` at `rate`.
#[derive(Debug, Clone, Copy)]
pub struct Edge {
    pub source: u32,
    pub target: u32,
    pub rate: f64,
}

/// Sparse generator of the master equation `dP/dt = G P`.
///
/// Stored as the diagonal (total outflow, non-positive) plus the list of
/// transition edges. Columns sum to zero except for absorbing states, whose
/// outflow is exactly zero.
#[derive(Debug, Clone)]
pub struct Generator {
    space: StateSpace,
    rates: DecayRates,
    diagonal: Vec<f64>,
    edges: Vec<Edge>,
    absorbing: Vec<u32>,
}

pub fn build_generator(space: &StateSpace, rates: &DecayRates) -> Generator {
    let two_n = space.two_n() as u64;
    let dim = space.dim();
    let mut diagonal = vec![0.0; dim];
    let mut edges = Vec::with_capacity(2 * dim);
    let mut absorbing = Vec::new();

    for (idx, (n, m)) in space.states().enumerate() {
        let weight = two_n - m as u64 + 1;
        let i1 = n as u64 * weight;
        let i2 = (m - n) as u64 * weight;
        let r1 = rates.gamma1() * i1 as f64;
        let r2 = rates.gamma2() * i2 as f64;
        diagonal[idx] = -(r1 + r2);
        if r1 > 0.0 {
            // (n, m) -> (n - 1, m - 1): one layer down, same distance from
            // the layer head, which in this layout is idx + (m + 1).
            edges.push(Edge {
                source: idx as u32,
                target: (idx + m as usize + 1) as u32,
                rate: r1,
            });
        }
        if r2 > 0.0 {
            // (n, m) -> (n, m - 1): one layer down, one closer to the head.
            edges.push(Edge {
                source: idx as u32,
                target: (idx + m as usize) as u32,
                rate: r2,
            });
        }
        if r1 + r2 == 0.0 {
            absorbing.push(idx as u32);
        }
    }

    Generator { space: *space, rates: *rates, diagonal, edges, absorbing }
}

impl Generator {
    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn rates(&self) -> &DecayRates {
        &self.rates
    }

    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    /// States with zero total outflow. `(0, 0)` always qualifies; when one of
    /// the single-atom rates vanishes the cascade stalls on a whole family of
    /// states (e.g. all of `(0, m)` for `gamma2 = 0`).
    pub fn absorbing_states(&self) -> &[u32] {
        &self.absorbing
    }

    /// Largest total outflow rate; sets the stiffness scale of the system.
    pub fn max_rate(&self) -> f64 {
        self.diagonal.iter().fold(0.0, |acc, d| acc.max(-d))
    }

    /// `out = G p`.
    pub fn apply(&self, p: &[f64], out: &mut [f64]) {
        debug_assert_eq!(p.len(), self.dim());
        debug_assert_eq!(out.len(), self.dim());
        for (o, (d, v)) in out.iter_mut().zip(self.diagonal.iter().zip(p)) {
            *o = d * v;
        }
        for e in &self.edges {
            out[e.target as usize] += e.rate * p[e.source as usize];
        }
    }

    /// Scale one edge rate in place. Deliberately corrupts the generator;
    /// only used to prove that the verification battery catches a wrong rate.
    #[doc(hidden)]
    pub fn perturb_edge_for_fault_injection(&mut self, edge_index: usize, factor: f64) {
        let e = &mut self.edges[edge_index];
        let old = e.rate;
        e.rate *= factor;
        self.diagonal[e.source as usize] -= e.rate - old;
    }
}

/// Per-state weights turning a distribution into the two emission
/// intensities, `I_k(t) = sum_i w_k[i] P_i(t)`.
///
/// By default the weights carry the physical rate factor
/// (`gamma_k * I_k(n, m)`), so the intensity is the photon emission rate of
/// that mode. With `bare_cooperative` the factor `gamma_k` is dropped and the
/// weights are the raw cooperative factors.
#[derive(Debug, Clone)]
pub struct EmissionWeights {
    pub mode1: Vec<f64>,
    pub mode2: Vec<f64>,
}

pub fn emission_weights(
    space: &StateSpace,
    rates: &DecayRates,
    bare_cooperative: bool,
) -> EmissionWeights {
    let two_n = space.two_n() as u64;
    let (w1, w2) = if bare_cooperative {
        (1.0, 1.0)
    } else {
        (rates.gamma1(), rates.gamma2())
    };
    let mut mode1 = Vec::with_capacity(space.dim());
    let mut mode2 = Vec::with_capacity(space.dim());
    for (n, m) in space.states() {
        let weight = (two_n - m as u64 + 1) as f64;
        mode1.push(w1 * n as f64 * weight);
        mode2.push(w2 * (m - n) as f64 * weight);
    }
    EmissionWeights { mode1, mode2 }
}

/// Probability distribution over the state space. Entries are non-negative
/// and sum to 1 within rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    values: Vec<f64>,
}

impl Distribution {
    /// Validating constructor for externally supplied data.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let mut sum = 0.0;
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::validation(format!(
                    "distribution entry {i} must be finite and >= 0, got {v}"
                )));
            }
            sum += v;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::validation(format!(
                "distribution must sum to 1 within 1e-9, got {sum:.12}"
            )));
        }
        Ok(Distribution { values })
    }

    /// For internally produced data that is already known to be consistent.
    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        Distribution { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Supported initial conditions.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialKind {
    /// The standard start: N atoms in each upper level, none in the ground
    /// level. Point mass on `(N, 2N)`.
    VStandard,
    /// Same occupation as `VStandard`, named for the reduced two-level runs:
    /// with `gamma2 = 0` the second-mode atoms freeze and the N mode-1 atoms
    /// relax from fully excited, the conventional Dicke setup.
    TwoLevelConventional,
    /// Reduced two-level start from a half-excited ensemble: N atoms in the
    /// second upper level, N already in the ground level. Point mass on
    /// `(0, N)`, meant to be paired with `gamma1 = 0`.
    TwoLevelUnconventional,
    /// Arbitrary validated distribution.
    Custom(Vec<f64>),
}

impl InitialKind {
    /// Stable name used in file formats and CLI flags.
    pub fn name(&self) -> &'static str {
        match self {
            InitialKind::VStandard => "v-standard",
            InitialKind::TwoLevelConventional => "two-level-conventional",
            InitialKind::TwoLevelUnconventional => "two-level-unconventional",
            InitialKind::Custom(_) => "custom",
        }
    }

    pub fn parse_named(name: &str) -> Result<Self> {
        match name {
            "v-standard" => Ok(InitialKind::VStandard),
            "two-level-conventional" => Ok(InitialKind::TwoLevelConventional),
            "two-level-unconventional" => Ok(InitialKind::TwoLevelUnconventional),
            other => Err(Error::validation(format!(
                "unknown initial condition '{other}' \
                 (expected v-standard, two-level-conventional or two-level-unconventional)"
            ))),
        }
    }
}

pub fn initial_distribution(space: &StateSpace, kind: &InitialKind) -> Result<Distribution> {
    match kind {
        InitialKind::VStandard | InitialKind::TwoLevelConventional => {
            let mut values = vec![0.0; space.dim()];
            values[space.index_of(space.n_half(), space.two_n())?] = 1.0;
            Ok(Distribution::from_raw(values))
        }
        InitialKind::TwoLevelUnconventional => {
            let mut values = vec![0.0; space.dim()];
            values[space.index_of(0, space.n_half())?] = 1.0;
            Ok(Distribution::from_raw(values))
        }
        InitialKind::Custom(values) => {
            if values.len() != space.dim() {
                return Err(Error::validation(format!(
                    "custom distribution has {} entries, state space needs {}",
                    values.len(),
                    space.dim()
                )));
            }
            Distribution::new(values.clone())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cooperative_rates_match_hand_values() {
        // N = 5, fully excited: only mode 2 is open, at rate 2N * 1.
        assert_eq!(coop_rate_mode1(10, 10, 5).unwrap(), 10);
        assert_eq!(coop_rate_mode2(10, 10, 5).unwrap(), 0);
        assert_eq!(coop_rate_mode2(0, 10, 5).unwrap(), 10);
        // Mid-cascade values.
        assert_eq!(coop_rate_mode1(3, 7, 5).unwrap(), 12);
        assert_eq!(coop_rate_mode2(3, 7, 5).unwrap(), 16);
        // Ground state is inert.
        assert_eq!(coop_rate_mode1(0, 0, 5).unwrap(), 0);
        assert_eq!(coop_rate_mode2(0, 0, 5).unwrap(), 0);
    }

    #[test]
    fn cooperative_rates_reject_bad_labels() {
        assert!(coop_rate_mode1(3, 2, 5).is_err());
        assert!(coop_rate_mode2(0, 11, 5).is_err());
        assert!(coop_rate_mode1(0, 0, 0).is_err());
    }

    #[test]
    fn rates_validation() {
        assert!(DecayRates::new(1.0, 0.0).is_ok());
        assert!(DecayRates::new(0.0, 0.5).is_ok());
        assert!(DecayRates::new(0.0, 0.0).is_err());
        assert!(DecayRates::new(-1.0, 0.5).is_err());
        assert!(DecayRates::new(f64::NAN, 0.5).is_err());
        let r = DecayRates::new(1.0, 0.1).unwrap();
        assert_eq!(r.fastest(), 1.0);
        assert_eq!(r.slowest_nonzero(), 0.1);
        let r = DecayRates::new(1.0, 0.0).unwrap();
        assert_eq!(r.slowest_nonzero(), 1.0);
    }

    #[test]
    fn generator_columns_sum_to_zero() {
        let space = StateSpace::new(4).unwrap();
        let rates = DecayRates::new(1.0, 0.37).unwrap();
        let gen = build_generator(&space, &rates);
        let mut col_sums = gen.diagonal().to_vec();
        for e in gen.edges() {
            col_sums[e.source as usize] += e.rate;
        }
        for (i, s) in col_sums.iter().enumerate() {
            assert!(s.abs() < 1e-12, "column {i} sums to {s}");
        }
    }

    #[test]
    fn generator_is_lower_triangular() {
        let space = StateSpace::new(4).unwrap();
        let rates = DecayRates::new(0.8, 1.3).unwrap();
        let gen = build_generator(&space, &rates);
        for e in gen.edges() {
            assert!(e.target > e.source);
            assert!(e.rate > 0.0);
        }
    }

    #[test]
    fn generator_edges_match_the_stencil() {
        let space = StateSpace::new(3).unwrap();
        let rates = DecayRates::new(1.0, 0.5).unwrap();
        let gen = build_generator(&space, &rates);
        for e in gen.edges() {
            let (n, m) = space.state_of(e.source as usize).unwrap();
            let (tn, tm) = space.state_of(e.target as usize).unwrap();
            assert_eq!(tm, m - 1);
            if tn + 1 == n {
                let expect = rates.gamma1() * coop_rate_mode1(n, m, 3).unwrap() as f64;
                assert_eq!(e.rate, expect);
            } else {
                assert_eq!(tn, n);
                let expect = rates.gamma2() * coop_rate_mode2(n, m, 3).unwrap() as f64;
                assert_eq!(e.rate, expect);
            }
        }
    }

    #[test]
    fn absorbing_set_depends_on_rates() {
        let space = StateSpace::new(3).unwrap();

        // Both modes open: only (0, 0) is absorbing.
        let gen = build_generator(&space, &DecayRates::new(1.0, 0.5).unwrap());
        assert_eq!(gen.absorbing_states(), &[space.ground_index() as u32]);

        // gamma2 = 0: mode 1 needs n >= 1, so every (0, m) state stalls.
        let gen = build_generator(&space, &DecayRates::new(1.0, 0.0).unwrap());
        let expect: Vec<u32> = space
            .states()
            .enumerate()
            .filter(|&(_, (n, _))| n == 0)
            .map(|(i, _)| i as u32)
            .collect();
        assert_eq!(gen.absorbing_states(), expect.as_slice());
    }

    #[test]
    fn apply_matches_dense_multiplication() {
        let space = StateSpace::new(2).unwrap();
        let rates = DecayRates::new(1.0, 0.25).unwrap();
        let gen = build_generator(&space, &rates);
        let dim = space.dim();
        // A deterministic, fully populated probe vector.
        let p: Vec<f64> = (0..dim).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let mut out = vec![0.0; dim];
        gen.apply(&p, &mut out);

        let mut dense = vec![vec![0.0; dim]; dim];
        for i in 0..dim {
            dense[i][i] = gen.diagonal()[i];
        }
        for e in gen.edges() {
            dense[e.target as usize][e.source as usize] += e.rate;
        }
        for i in 0..dim {
            let expect: f64 = (0..dim).map(|j| dense[i][j] * p[j]).sum();
            assert!((out[i] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn emission_weights_carry_rate_factors() {
        let space = StateSpace::new(2).unwrap();
        let rates = DecayRates::new(2.0, 0.5).unwrap();
        let w = emission_weights(&space, &rates, false);
        let raw = emission_weights(&space, &rates, true);
        for (idx, (n, m)) in space.states().enumerate() {
            let i1 = coop_rate_mode1(n, m, 2).unwrap() as f64;
            let i2 = coop_rate_mode2(n, m, 2).unwrap() as f64;
            assert_eq!(w.mode1[idx], 2.0 * i1);
            assert_eq!(w.mode2[idx], 0.5 * i2);
            assert_eq!(raw.mode1[idx], i1);
            assert_eq!(raw.mode2[idx], i2);
        }
    }

    #[test]
    fn initial_distributions() {
        let space = StateSpace::new(3).unwrap();
        let standard = initial_distribution(&space, &InitialKind::VStandard).unwrap();
        let balanced = space.index_of(3, 6).unwrap();
        assert_eq!(standard.values()[balanced], 1.0);
        assert_eq!(standard.total(), 1.0);
        let conventional =
            initial_distribution(&space, &InitialKind::TwoLevelConventional).unwrap();
        assert_eq!(conventional.values(), standard.values());

        let half = initial_distribution(&space, &InitialKind::TwoLevelUnconventional).unwrap();
        let idx = space.index_of(0, 3).unwrap();
        assert_eq!(half.values()[idx], 1.0);

        let mut custom = vec![0.0; space.dim()];
        custom[3] = 0.5;
        custom[7] = 0.5;
        let d = initial_distribution(&space, &InitialKind::Custom(custom)).unwrap();
        assert_eq!(d.values()[3], 0.5);

        assert!(initial_distribution(&space, &InitialKind::Custom(vec![1.0])).is_err());
        let mut bad = vec![0.0; space.dim()];
        bad[0] = 0.7;
        assert!(initial_distribution(&space, &InitialKind::Custom(bad)).is_err());
    }

    #[test]
    fn initial_kind_names_roundtrip() {
        for kind in [
            InitialKind::VStandard,
            InitialKind::TwoLevelConventional,
            InitialKind::TwoLevelUnconventional,
        ] {
            assert_eq!(InitialKind::parse_named(kind.name()).unwrap(), kind);
        }
        assert!(InitialKind::parse_named("bogus").is_err());
    }

    proptest! {
        #[test]
        fn generator_conserves_total_outflow(n_half in 1u32..12, g1 in 0.0f64..3.0, g2 in 0.0f64..3.0) {
            prop_assume!(g1 > 0.0 || g2 > 0.0);
            let space = StateSpace::new(n_half).unwrap();
            let rates = DecayRates::new(g1, g2).unwrap();
            let gen = build_generator(&space, &rates);
            let dim = space.dim();
            let p = vec![1.0 / dim as f64; dim];
            let mut out = vec![0.0; dim];
            gen.apply(&p, &mut out);
            let total: f64 = out.iter().sum();
            // G conserves probability: 1^T G = 0.
            prop_assert!(total.abs() < 1e-10 * gen.max_rate().max(1.0));
        }
    }
}
