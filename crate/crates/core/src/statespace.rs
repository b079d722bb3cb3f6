//! Enumeration of the collective states of 2N three-level V-type atoms.
//!
//! Each atom has two upper levels and a shared ground level. A state is
//! labelled `(n, m)`: `n` atoms sit in the first upper level, `m - n` in the
//! second upper level, and `2N - m` in the ground level, so `m` counts the
//! atoms still excited. Valid labels satisfy `0 <= n <= m <= 2N`, a
//! triangular set of `(2N + 1)(2N + 2) / 2` states.
//!
//! Indices are assigned layer by layer with `m` descending from `2N` to `0`
//! and, inside a layer, `n` descending from `m` to `0`. Index 0 is
//! `(2N, 2N)` (every atom in the first upper level) and the last index is
//! the all-ground state `(0, 0)`. Both decay modes de-excite one atom and
//! decrease `m`, moving probability strictly toward higher indices, so the
//! generator is lower triangular in this ordering.

use crate::error::{Error, Result};

/// Number of states for `2N` atoms, `N = n_half`.
pub fn dimension(n_half: u32) -> Result<usize> {
    if n_half < 1 {
        return Err(Error::validation(format!(
            "atom pair count must be at least 1, got {n_half}"
        )));
    }
    let two_n = 2 * n_half as u64;
    Ok(((two_n + 1) * (two_n + 2) / 2) as usize)
}

/// Index layout over the triangular `(n, m)` label set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateSpace {
    n_half: u32,
    dim: usize,
}

impl StateSpace {
    pub fn new(n_half: u32) -> Result<Self> {
        let dim = dimension(n_half)?;
        Ok(StateSpace { n_half, dim })
    }

    pub fn n_half(&self) -> u32 {
        self.n_half
    }

    pub fn two_n(&self) -> u32 {
        2 * self.n_half
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_valid(&self, n: u32, m: u32) -> bool {
        n <= m && m <= self.two_n()
    }

    // First index of the layer with a given m. Layers are stored in
    // descending m, so everything below layer m occupies the last
    // (m + 1)(m + 2) / 2 slots.
    fn layer_offset(&self, m: u32) -> usize {
        let m = m as usize;
        self.dim - (m + 1) * (m + 2) / 2
    }

    pub fn index_of(&self, n: u32, m: u32) -> Result<usize> {
        if !self.is_valid(n, m) {
            return Err(Error::validation(format!(
                "state (n={n}, m={m}) outside 0 <= n <= m <= {}",
                self.two_n()
            )));
        }
        Ok(self.layer_offset(m) + (m - n) as usize)
    }

    pub fn state_of(&self, index: usize) -> Result<(u32, u32)> {
        if index >= self.dim {
            return Err(Error::validation(format!(
                "index {index} out of range for dimension {}",
                self.dim
            )));
        }
        // Find the layer: the smallest k = m + 1 with k(k + 1)/2 >= dim - index.
        let r = (self.dim - index) as u64;
        let mut k = (((8.0 * r as f64 + 1.0).sqrt() - 1.0) / 2.0).ceil() as u64;
        while k * (k + 1) / 2 < r {
            k += 1;
        }
        while k >= 1 && (k - 1) * k / 2 >= r {
            k -= 1;
        }
        let m = (k - 1) as u32;
        let n = m - (index - self.layer_offset(m)) as u32;
        Ok((n, m))
    }

    /// All `(n, m)` labels in index order.
    pub fn states(&self) -> impl Iterator<Item = (u32, u32)> {
        let two_n = self.two_n();
        (0..=two_n).rev().flat_map(move |m| (0..=m).rev().map(move |n| (n, m)))
    }

    /// Index of the all-ground state `(0, 0)`.
    pub fn ground_index(&self) -> usize {
        self.dim - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dimension_matches_triangular_count() {
        assert_eq!(dimension(1).unwrap(), 6);
        assert_eq!(dimension(5).unwrap(), 66);
        assert_eq!(dimension(150).unwrap(), 45451);
        assert_eq!(dimension(300).unwrap(), 180901);
    }

    #[test]
    fn dimension_rejects_zero_atoms() {
        assert!(matches!(dimension(0), Err(Error::Validation(_))));
    }

    #[test]
    fn endpoints_of_the_ordering() {
        let space = StateSpace::new(5).unwrap();
        assert_eq!(space.index_of(10, 10).unwrap(), 0);
        assert_eq!(space.index_of(0, 0).unwrap(), space.dim() - 1);
        assert_eq!(space.ground_index(), 65);
        // The balanced start (N excited in each upper level) sits at index N.
        assert_eq!(space.index_of(5, 10).unwrap(), 5);
    }

    #[test]
    fn rejects_labels_outside_the_triangle() {
        let space = StateSpace::new(1).unwrap();
        assert!(space.index_of(2, 1).is_err());
        assert!(space.index_of(0, 3).is_err());
        assert!(space.state_of(6).is_err());
    }

    #[test]
    fn roundtrip_is_exhaustive_for_small_n() {
        let space = StateSpace::new(3).unwrap();
        let mut seen = vec![false; space.dim()];
        for m in 0..=space.two_n() {
            for n in 0..=m {
                let idx = space.index_of(n, m).unwrap();
                assert!(!seen[idx], "index {idx} assigned twice");
                seen[idx] = true;
                assert_eq!(space.state_of(idx).unwrap(), (n, m));
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn states_iterator_matches_index_order() {
        let space = StateSpace::new(4).unwrap();
        for (idx, (n, m)) in space.states().enumerate() {
            assert_eq!(space.index_of(n, m).unwrap(), idx);
        }
        assert_eq!(space.states().count(), space.dim());
    }

    #[test]
    fn decays_move_toward_higher_indices() {
        // Both decay modes decrease m (and mode 1 also decreases n), so their
        // targets must sit strictly after the source in index order.
        let space = StateSpace::new(6).unwrap();
        for (n, m) in space.states() {
            let src = space.index_of(n, m).unwrap();
            if n >= 1 {
                assert!(space.index_of(n - 1, m - 1).unwrap() > src);
            }
            if m > n {
                assert!(space.index_of(n, m - 1).unwrap() > src);
            }
        }
    }

    proptest! {
        #[test]
        fn index_roundtrips(n_half in 1u32..40, raw_n in 0u32..80, raw_m in 0u32..80) {
            let space = StateSpace::new(n_half).unwrap();
            let m = raw_m % (space.two_n() + 1);
            let n = raw_n % (m + 1);
            let idx = space.index_of(n, m).unwrap();
            prop_assert!(idx < space.dim());
            prop_assert_eq!(space.state_of(idx).unwrap(), (n, m));
        }
    }
}
