//! Reproductions of the two counterexamples: a family without uniform
//! integrability that breaks the weak law, and a family with slowly
//! decaying tails that breaks the strong law on `m_k = 4^k`.

use super::probes::{strong_probe, weak_probe, StrongReport, Tolerance, WeakReport};
use super::{Axis, Trajectories};
use crate::error::{Error, Result};
use crate::ext::ExtFloat;
use crate::mass_seq::MassSpec;
use crate::rng::StreamKey;
use crate::rv_family::w2::MAX_HALF_WIDTH;
use crate::rv_family::FamilySpec;
use crate::stats::{mean, sample_sd, Compensated, Proportion};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct W2Options {
    pub mass: MassSpec,
    /// Number of spike levels tabulated.
    pub levels: usize,
    /// Draws used both to estimate each `N(i)` and to estimate the
    /// exceedance probabilities.
    pub budget: u64,
    pub seed: u64,
    pub checkpoints: Vec<usize>,
    pub zero_spikes: bool,
}

impl Default for W2Options {
    fn default() -> Self {
        W2Options { mass: MassSpec::W2Counter, levels: 32, budget: 10_000, seed: 1, checkpoints: vec![8, 16, 32], zero_spikes: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct W2Checkpoint {
    pub i: usize,
    /// `N(i)`.
    pub horizon: usize,
    pub amplitude: f64,
    /// `P(|S_{N(i)}| > 1)`.
    pub exceed: Proportion,
    /// Probability of at least one spike in `[i, N(i)]`.
    pub spike: Proportion,
    /// Whether the estimate clears `1/2` up to the interval slack.
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct W2Report {
    pub options: W2Options,
    pub slack: f64,
    pub checkpoints: Vec<W2Checkpoint>,
    pub all_certified: bool,
}

/// Builds the spike family on its mass sequence and estimates
/// `P(|S_{N(i)}| > 1)` at each checkpoint.
pub fn counterexample_w2(opts: &W2Options) -> Result<W2Report> {
    if opts.checkpoints.is_empty() || opts.checkpoints.iter().any(|&i| i == 0 || i > opts.levels) {
        return Err(Error::InvalidConfig(format!("checkpoints must lie in 1..={}", opts.levels)));
    }
    let spec = FamilySpec::W2Violator {
        mass: opts.mass.clone(),
        levels: opts.levels,
        budget: opts.budget,
        zero_spikes: opts.zero_spikes,
    };
    let family = spec.build(opts.seed)?;
    let table = family.w2_table().expect("w2 family carries its table");
    let horizons: Vec<usize> = opts.checkpoints.iter().map(|&i| table.horizons[i - 1]).collect();
    let n_max = *horizons.iter().max().expect("nonempty");
    let masses = opts.mass.generate(n_max)?;
    let rows: Vec<(Vec<bool>, Vec<bool>)> = (0..opts.budget)
        .into_par_iter()
        .map(|r| {
            let key = StreamKey::new(opts.seed, r);
            let mut acc = Compensated::new();
            let mut spikes = Vec::with_capacity(n_max);
            let mut exceed = vec![false; horizons.len()];
            for (k, &m) in masses.iter().enumerate() {
                let x = family.sample_x(&key, k as u64 + 1, m)?;
                spikes.push(x != 0.0);
                acc.add(m * x);
                for (c, &h) in horizons.iter().enumerate() {
                    if h == k + 1 {
                        exceed[c] = (acc.value() / table.cumsums[k]).abs() > 1.0;
                    }
                }
            }
            let spike = opts.checkpoints.iter().zip(&horizons).map(|(&i, &h)| spikes[i - 1..h].iter().any(|&s| s)).collect();
            Ok((exceed, spike))
        })
        .collect::<Result<_>>()?;
    let checkpoints: Vec<W2Checkpoint> = opts
        .checkpoints
        .iter()
        .enumerate()
        .map(|(c, &i)| {
            let exceed = Proportion::new(rows.iter().filter(|(e, _)| e[c]).count() as u64, opts.budget);
            let spike = Proportion::new(rows.iter().filter(|(_, s)| s[c]).count() as u64, opts.budget);
            W2Checkpoint {
                i,
                horizon: horizons[c],
                amplitude: table.amplitudes[i - 1],
                exceed,
                spike,
                certified: exceed.estimate >= 0.5 - MAX_HALF_WIDTH,
            }
        })
        .collect();
    let all_certified = checkpoints.iter().all(|c| c.certified);
    Ok(W2Report { options: opts.clone(), slack: MAX_HALF_WIDTH, checkpoints, all_certified })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct S1Options {
    /// Number of increments `K`.
    pub horizon: u64,
    pub replications: u64,
    pub seed: u64,
    pub eps: f64,
    /// Replaces the family by `X = 0`, which never jumps.
    pub zero: bool,
    /// Additional `K' <= K` at which the jump count is compared with its mean.
    pub checkpoints: Vec<u64>,
    /// Tail starts for the strong probe; defaults to `K/16, K/8, K/4`.
    pub n0: Vec<f64>,
    pub tolerance: Tolerance,
}

impl Default for S1Options {
    fn default() -> Self {
        S1Options {
            horizon: 1000,
            replications: 200,
            seed: 1,
            eps: 0.05,
            zero: false,
            checkpoints: vec![4, 10, 100],
            n0: Vec::new(),
            tolerance: Tolerance::default(),
        }
    }
}

/// Jump count statistics up to one index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct S1Checkpoint {
    pub k: u64,
    pub mean_count: f64,
    pub sd: f64,
    /// `sum_{j <= k} p_j`.
    pub expected: f64,
    /// `sqrt(sum p_j (1 - p_j))`.
    pub expected_sd: f64,
    /// `sd / sqrt(R)`.
    pub standard_error: f64,
    /// `|mean - expected| <= 3 * standard_error`.
    pub within_3se: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct S1Report {
    pub options: S1Options,
    pub checkpoints: Vec<S1Checkpoint>,
    /// Replications with a jump among the later half of the indices.
    pub late_jumps: Proportion,
    /// Exact probability of a jump among the later half.
    pub late_jump_probability: f64,
    pub weak: WeakReport,
    pub strong: StrongReport,
    #[serde(skip)]
    pub trajectories: Trajectories,
}

/// `P(|X_k(4^k)| = 1) = 1 / log2(4^k) = 1/(2k)`.
pub fn s1_jump_probability(k: u64) -> f64 {
    (1.0 / (2.0 * k as f64)).min(1.0)
}

/// Counts jumps `|X_k(4^k)| = 1` for `k <= K` and tracks the incremental
/// sums on `m_k = 4^k`, whose masses exceed the `f64` range beyond `k = 511`.
pub fn counterexample_s1(opts: &S1Options) -> Result<S1Report> {
    let k_max = opts.horizon;
    if k_max < 2 || opts.replications < 2 {
        return Err(Error::InvalidConfig("counterexample_s1 needs K >= 2 and at least two replications".into()));
    }
    if !(opts.eps > 0.0 && opts.eps.is_finite()) {
        return Err(Error::InvalidConfig("eps must be positive".into()));
    }
    opts.tolerance.validate()?;
    let family = if opts.zero { FamilySpec::Constant { value: 0.0 } } else { FamilySpec::S1Violator }.build(opts.seed)?;
    let mut checkpoints: Vec<u64> = opts.checkpoints.iter().copied().filter(|&k| k >= 1 && k < k_max).collect();
    checkpoints.push(k_max);
    checkpoints.sort_unstable();
    checkpoints.dedup();

    // weights m_k / M_k and M_{k-1} / M_k
    let mut weights = Vec::with_capacity(k_max as usize);
    let mut total = ExtFloat::ZERO;
    for k in 1..=k_max {
        let m = ExtFloat::pow2(2 * k as i64);
        let prev = total;
        total = total + m;
        weights.push(((m / total).to_f64_lossy(), (prev / total).to_f64_lossy()));
    }

    let rows: Vec<(Vec<f64>, Vec<bool>)> = (0..opts.replications)
        .into_par_iter()
        .map(|r| {
            let key = StreamKey::new(opts.seed, r);
            let mut s = 0.0;
            let mut path = Vec::with_capacity(k_max as usize);
            let mut jumps = Vec::with_capacity(k_max as usize);
            for k in 1..=k_max {
                let x = family.sample_x_ext(&key, k, ExtFloat::pow2(2 * k as i64))?;
                jumps.push(x.abs() == 1.0);
                let (w, carry) = weights[k as usize - 1];
                s = carry * s + w * x;
                path.push(s);
            }
            Ok((path, jumps))
        })
        .collect::<Result<_>>()?;

    let reps = opts.replications as f64;
    let stats = checkpoints
        .iter()
        .map(|&k| {
            let counts: Vec<f64> = rows.iter().map(|(_, j)| j[..k as usize].iter().filter(|&&b| b).count() as f64).collect();
            let ps = (1..=k).map(|j| if opts.zero { 0.0 } else { s1_jump_probability(j) });
            let (expected, var) = ps.fold((0.0, 0.0), |(e, v), p| (e + p, v + p * (1.0 - p)));
            let mean_count = mean(&counts);
            let sd = sample_sd(&counts);
            let standard_error = sd / reps.sqrt();
            S1Checkpoint {
                k,
                mean_count,
                sd,
                expected,
                expected_sd: var.sqrt(),
                standard_error,
                within_3se: (mean_count - expected).abs() <= 3.0 * standard_error,
            }
        })
        .collect();
    let half = (k_max / 2) as usize;
    let late = rows.iter().filter(|(_, j)| j[half..].iter().any(|&b| b)).count() as u64;
    let late_jump_probability = if opts.zero {
        0.0
    } else {
        1.0 - (half as u64 + 1..=k_max).map(|k| 1.0 - s1_jump_probability(k)).product::<f64>()
    };

    let trajectories = Trajectories {
        axis: Axis::Increment,
        points: (1..=k_max).map(|k| k as f64).collect(),
        expected: vec![0.0; k_max as usize],
        values: rows.into_iter().map(|(p, _)| p).collect(),
    };
    let n0 = if opts.n0.is_empty() {
        [16, 8, 4].iter().map(|d| (k_max / d).max(1) as f64).collect::<Vec<_>>()
    } else {
        opts.n0.clone()
    };
    let mut n0_sorted = n0;
    n0_sorted.dedup();
    let weak = weak_probe(&trajectories, &[opts.eps], &opts.tolerance)?;
    let strong = strong_probe(&trajectories, &[opts.eps], &n0_sorted, &opts.tolerance)?;
    Ok(S1Report {
        options: opts.clone(),
        checkpoints: stats,
        late_jumps: Proportion::new(late, opts.replications),
        late_jump_probability,
        weak,
        strong,
        trajectories,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::{Trend, Verdict};

    #[test]
    fn w2_checkpoints_exceed_half() {
        let r = counterexample_w2(&W2Options::default()).unwrap();
        assert_eq!(r.checkpoints.len(), 3);
        for c in &r.checkpoints {
            assert!(c.exceed.estimate > 0.45, "{c:?}");
            // a spike in [i, N(i)] forces the exceedance
            assert!(c.exceed.successes >= c.spike.successes);
            assert!(c.certified);
        }
    }

    #[test]
    fn w2_small_budget_is_rejected() {
        let opts = W2Options { budget: 10, ..W2Options::default() };
        assert!(matches!(counterexample_w2(&opts), Err(Error::BudgetTooSmall(_))));
    }

    #[test]
    fn w2_without_spikes_never_exceeds() {
        let opts = W2Options { zero_spikes: true, budget: 2000, ..W2Options::default() };
        let r = counterexample_w2(&opts).unwrap();
        assert!(r.checkpoints.iter().all(|c| c.exceed.successes == 0));
        assert!(!r.all_certified);
    }

    #[test]
    fn s1_small_horizon_mean() {
        let opts = S1Options { horizon: 4, replications: 4000, checkpoints: vec![], ..S1Options::default() };
        let r = counterexample_s1(&opts).unwrap();
        let c = &r.checkpoints[0];
        assert!((c.expected - (0.5 + 0.25 + 1.0 / 6.0 + 0.125)).abs() < 1e-15);
        assert!(c.within_3se, "{c:?}");
        assert!((c.mean_count - 1.0417).abs() < 0.05);
    }

    #[test]
    fn s1_recurrence_at_one_thousand() {
        let r = counterexample_s1(&S1Options::default()).unwrap();
        let last = r.checkpoints.last().unwrap();
        assert_eq!(last.k, 1000);
        // sum_{k <= 1000} 1/(2k) = H_1000 / 2
        assert!((last.expected - 3.742_735_430_4).abs() < 1e-9, "{}", last.expected);
        assert!(r.checkpoints.iter().all(|c| c.within_3se), "{:?}", r.checkpoints);
        assert_eq!(r.strong.verdict, Verdict::NotConverging);
        assert_eq!(r.weak.per_eps[0].trend, Trend::Decreasing);
        assert!(r.late_jumps.lower <= r.late_jump_probability && r.late_jump_probability <= r.late_jumps.upper);
    }

    #[test]
    fn s1_zero_variant_never_jumps() {
        let opts = S1Options { zero: true, replications: 20, ..S1Options::default() };
        let r = counterexample_s1(&opts).unwrap();
        assert!(r.checkpoints.iter().all(|c| c.mean_count == 0.0 && c.within_3se));
        assert_eq!(r.strong.verdict, Verdict::Converging);
    }
}
