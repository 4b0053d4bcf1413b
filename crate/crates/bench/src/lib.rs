//! Fixtures shared by the benchmarks.

use qkdsim_core::simcore::rng::splitmix64_finalize;
use qkdsim_core::{venqci_preset, Scenario};

/// The preset network cut to `days` simulated days.
pub fn preset_days(days: f64) -> Scenario {
    let mut s = venqci_preset();
    s.duration = days * 86_400.0;
    s
}

/// `n` deterministic values in [0, 1).
pub fn uniform(n: usize, seed: u64) -> Vec<f64> {
    (0..n as u64)
        .map(|i| (splitmix64_finalize(seed.wrapping_add(i)) >> 11) as f64 / (1u64 << 53) as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_is_in_range_and_repeatable() {
        let a = uniform(1000, 3);
        assert!(a.iter().all(|x| (0.0..1.0).contains(x)));
        assert_eq!(a, uniform(1000, 3));
        assert_ne!(a, uniform(1000, 4));
    }
}
