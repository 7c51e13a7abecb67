//! Spike family violating uniform integrability.
//!
//! `X_k(m) = V_m(U_k)` equals `+A_m` on `[0, g(m)/2)`, `-A_m` on
//! `(g(m)/2, g(m)]` and `0` elsewhere, with `g(m) = 1/sqrt(m+1)`. The
//! heights are inflated along a mass sequence so that
//! `(m_n / M_{N(n)}) A_{m_n} > 1 + sum_{k<n} A_{m_k}`, where `N(n)` is the
//! first horizon at which a nonzero draw in `[n, N(n)]` has probability
//! above 1/2. `N(n)` is estimated by simulation.

use crate::error::{Error, Result};
use crate::mass_seq::MassSpec;
use crate::rng::{StreamKey, CALIBRATION_REPLICATION};
use crate::stats::{wilson, wilson_half_width_at_half, Z95};
use rand::Rng;
use serde::Serialize;

/// Spike width `g(m) = 1/sqrt(m+1)`.
pub fn w2_g(m: f64) -> f64 {
    1.0 / (m + 1.0).sqrt()
}

/// Largest acceptable Wilson half-width at `p = 1/2` for the `N(n)` estimate.
pub const MAX_HALF_WIDTH: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct W2Table {
    /// `m_1, .., m_L` of the driving mass sequence.
    pub masses: Vec<f64>,
    /// Prefix sums `M_1, .., M_T` up to the largest horizon used.
    pub cumsums: Vec<f64>,
    /// Estimated `N(n)`, nondecreasing.
    pub horizons: Vec<usize>,
    /// `A_{m_n}`.
    pub amplitudes: Vec<f64>,
    pub budget: u64,
    pub zero_spikes: bool,
}

impl W2Table {
    /// Builds heights for `n = 1..=levels` and, recursively, for every
    /// index up to `N(levels)` so that sums up to that horizon are covered.
    pub fn build(mass: &MassSpec, levels: usize, budget: u64, seed: u64, zero_spikes: bool) -> Result<W2Table> {
        if levels == 0 {
            return Err(Error::InvalidFamily("w2_violator needs at least one level".into()));
        }
        if budget < 2 || wilson_half_width_at_half(budget) > MAX_HALF_WIDTH {
            return Err(Error::BudgetTooSmall(format!(
                "budget {budget} gives a confidence interval wider than +-{MAX_HALF_WIDTH} around 1/2"
            )));
        }
        let mut seq = mass.sequence()?;
        let mut masses: Vec<f64> = Vec::new();
        let mut grow = |masses: &mut Vec<f64>, upto: usize| -> Result<()> {
            while masses.len() < upto {
                let m = seq.next_mass()?;
                masses.push(crate::mass_seq::to_f64_mass(m, masses.len() as u64 + 1)?);
            }
            Ok(())
        };
        let key = StreamKey::new(seed, CALIBRATION_REPLICATION);
        let mut horizons: Vec<usize> = Vec::new();
        let mut target = levels;
        let mut n = 1;
        while n <= target {
            let cap = 64 * n + 64;
            grow(&mut masses, cap)?;
            let mut rng = key.stream(n as u64);
            // first index j >= n with a nonzero draw, or cap + 1
            let mut hits = vec![0u64; cap + 2];
            for _ in 0..budget {
                let mut j = n;
                while j <= cap && rng.random::<f64>() >= w2_g(masses[j - 1]) {
                    j += 1;
                }
                hits[j] += 1;
            }
            let mut acc = 0u64;
            let mut found = None;
            for (big_n, &h) in hits.iter().enumerate().take(cap + 1).skip(n) {
                acc += h;
                if wilson(acc, budget, Z95).0 > 0.5 {
                    found = Some(big_n);
                    break;
                }
            }
            let big_n = found.ok_or_else(|| {
                Error::BudgetTooSmall(format!("no horizon up to {cap} certifies probability above 1/2 for n = {n}"))
            })?;
            let big_n = big_n.max(horizons.last().copied().unwrap_or(0));
            horizons.push(big_n);
            if n == levels {
                target = big_n;
            }
            n += 1;
        }
        let max_h = *horizons.iter().max().expect("at least one level");
        grow(&mut masses, max_h)?;
        let mut cumsums = Vec::with_capacity(max_h);
        let mut total = 0.0;
        for &m in &masses[..max_h] {
            total += m;
            cumsums.push(total);
        }
        let mut amplitudes = Vec::with_capacity(horizons.len());
        let mut sum_prev = 0.0;
        for (i, &h) in horizons.iter().enumerate() {
            let a = if zero_spikes { 0.0 } else { 2.0 * (1.0 + sum_prev) * cumsums[h - 1] / masses[i] };
            if !a.is_finite() {
                return Err(Error::Overflow(format!("spike height A_{} overflows", i + 1)));
            }
            sum_prev += a;
            amplitudes.push(a);
        }
        masses.truncate(horizons.len());
        Ok(W2Table { masses, cumsums, horizons, amplitudes, budget, zero_spikes })
    }

    /// Number of levels with a height.
    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    /// `A(m)`: height of the largest tabulated mass not above `m`.
    pub fn amplitude(&self, m: f64) -> f64 {
        let i = self.masses.partition_point(|&x| x <= m);
        self.amplitudes[i.saturating_sub(1)]
    }

    /// `V_m(u)`.
    pub fn value(&self, m: f64, u: f64) -> f64 {
        let g = w2_g(m);
        if u < g / 2.0 {
            self.amplitude(m)
        } else if u > g / 2.0 && u <= g {
            -self.amplitude(m)
        } else {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horizons_track_exact_oracle() {
        // With m_k = k^2 + 2k, g(m_k) = 1/(k+1) and P(no spike in [n, N]) = n/(N+1),
        // so the exact threshold is N(n) = 2n. At N = 2n - 1 the probability is
        // exactly 1/2, which the one-sided bound certifies by chance about 2.5% of the time.
        let t = W2Table::build(&MassSpec::W2Counter, 16, 10_000, 11, false).unwrap();
        assert!(t.len() >= 32);
        let mut exact = 0;
        for (i, &h) in t.horizons.iter().enumerate() {
            let n = i + 1;
            assert!(h + 1 >= 2 * n, "N({n}) = {h}");
            assert!(h as f64 <= 2.3 * n as f64 + 4.0, "N({n}) = {h}");
            exact += usize::from(h >= 2 * n);
        }
        assert!(exact * 10 >= t.len() * 9);
        for w in t.horizons.windows(2) {
            assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn heights_satisfy_inflation() {
        let t = W2Table::build(&MassSpec::W2Counter, 8, 10_000, 3, false).unwrap();
        let mut prev = 0.0;
        for n in 0..t.len() {
            let lhs = t.masses[n] / t.cumsums[t.horizons[n] - 1] * t.amplitudes[n];
            assert!(lhs > 1.0 + prev);
            prev += t.amplitudes[n];
        }
    }

    #[test]
    fn small_budget_rejected() {
        assert!(matches!(W2Table::build(&MassSpec::W2Counter, 4, 10, 0, false), Err(Error::BudgetTooSmall(_))));
    }

    #[test]
    fn spike_probability_is_g() {
        let t = W2Table::build(&MassSpec::W2Counter, 4, 1000, 0, false).unwrap();
        let m = 8.0;
        let g = w2_g(m);
        assert_eq!(t.value(m, g / 4.0), t.amplitude(m));
        assert_eq!(t.value(m, 0.75 * g), -t.amplitude(m));
        assert_eq!(t.value(m, 1.5 * g), 0.0);
    }
}
