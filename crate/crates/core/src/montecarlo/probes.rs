//! Weak, strong and limit probes over replicated trajectories. All probes
//! work with the deviation `S - E S` of each replication.

use super::Trajectories;
use crate::error::{Error, Result};
use crate::stats::{mean, sample_sd, Proportion, Z95};
use serde::{Deserialize, Serialize};

/// Thresholds used to turn estimates into verdicts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerance {
    /// Largest final `P(|S - E S| > eps)` accepted as weak convergence.
    pub weak_threshold: f64,
    /// Largest fraction of replications with a tail excursion accepted as
    /// almost sure convergence.
    pub strong_fraction: f64,
    /// Accuracy of a limit read off the expectation curve.
    pub limit_tol: f64,
    /// Spread of the expectation curve above which it is reported as oscillating.
    pub oscillation: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { weak_threshold: 0.05, strong_fraction: 0.01, limit_tol: 0.02, oscillation: 0.3 }
    }
}

impl Tolerance {
    pub fn validate(&self) -> Result<()> {
        let probs = [self.weak_threshold, self.strong_fraction];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidConfig("probability thresholds must lie in [0, 1]".into()));
        }
        if !(self.limit_tol > 0.0 && self.oscillation > 0.0) {
            return Err(Error::InvalidConfig("limit tolerance and oscillation threshold must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Converging,
    NotConverging,
    Undetermined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Decreasing,
    Flat,
    Increasing,
}

/// `2 exp(-t eps^2 / 2)`, the Hoeffding bound for an average of signs
/// accumulated over total time `t`.
pub fn hoeffding_bound(t: f64, eps: f64) -> f64 {
    (2.0 * (-t * eps * eps / 2.0).exp()).min(1.0)
}

/// Summary of the replications at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridStats {
    pub point: f64,
    pub expected: f64,
    pub mean: f64,
    pub sd: f64,
    /// 95% normal band for the mean.
    pub mean_ci: (f64, f64),
    /// `P(|S - E S| > eps)` for each epsilon.
    pub exceed: Vec<Proportion>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsVerdict {
    pub eps: f64,
    pub trend: Trend,
    /// Estimate the verdict is based on, with its interval.
    pub last: Proportion,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakReport {
    pub epsilons: Vec<f64>,
    pub threshold: f64,
    pub stats: Vec<GridStats>,
    pub per_eps: Vec<EpsVerdict>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrongReport {
    pub epsilons: Vec<f64>,
    pub n0: Vec<f64>,
    pub threshold: f64,
    /// `tail_sup[r][i] = max over points >= n0[i] of |S - E S|`.
    pub tail_sup: Vec<Vec<f64>>,
    /// `fractions[e][i]`: replications with `tail_sup > eps_e` at `n0[i]`.
    pub fractions: Vec<Vec<Proportion>>,
    pub per_eps: Vec<EpsVerdict>,
    pub verdict: Verdict,
}

fn check_epsilons(eps: &[f64]) -> Result<()> {
    if eps.is_empty() || eps.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(Error::InvalidConfig("epsilons must be a nonempty list of positive numbers".into()));
    }
    Ok(())
}

fn check_trajectories(traj: &Trajectories) -> Result<()> {
    if traj.values.is_empty() || traj.points.is_empty() {
        return Err(Error::InsufficientData("no trajectories".into()));
    }
    if traj.expected.len() != traj.points.len() || traj.values.iter().any(|v| v.len() != traj.points.len()) {
        return Err(Error::InsufficientData("trajectory lengths disagree with the grid".into()));
    }
    Ok(())
}

fn combine(per_eps: &[EpsVerdict]) -> Verdict {
    if per_eps.iter().any(|v| v.verdict == Verdict::NotConverging) {
        Verdict::NotConverging
    } else if per_eps.iter().all(|v| v.verdict == Verdict::Converging) {
        Verdict::Converging
    } else {
        Verdict::Undetermined
    }
}

fn judge(last: Proportion, threshold: f64, trend: Trend) -> Verdict {
    if last.lower > threshold {
        Verdict::NotConverging
    } else if last.estimate <= threshold && trend != Trend::Increasing {
        Verdict::Converging
    } else {
        Verdict::Undetermined
    }
}

/// Compares the average of the first third with the last third.
fn trend(values: &[f64]) -> Trend {
    let third = (values.len() / 3).max(1);
    let early = mean(&values[..third]);
    let late = mean(&values[values.len() - third..]);
    if late < early {
        Trend::Decreasing
    } else if late == early {
        Trend::Flat
    } else {
        Trend::Increasing
    }
}

/// `P(|S_t - E S_t| > eps)` along the grid.
pub fn weak_probe(traj: &Trajectories, eps: &[f64], tol: &Tolerance) -> Result<WeakReport> {
    check_trajectories(traj)?;
    check_epsilons(eps)?;
    let reps = traj.replications() as u64;
    let stats: Vec<GridStats> = (0..traj.points.len())
        .map(|j| {
            let xs: Vec<f64> = traj.values.iter().map(|v| v[j]).collect();
            let m = mean(&xs);
            let sd = sample_sd(&xs);
            let half = Z95 * sd / (reps as f64).sqrt();
            let exceed = eps
                .iter()
                .map(|&e| {
                    let hits = xs.iter().filter(|&&s| (s - traj.expected[j]).abs() > e).count() as u64;
                    Proportion::new(hits, reps)
                })
                .collect();
            GridStats { point: traj.points[j], expected: traj.expected[j], mean: m, sd, mean_ci: (m - half, m + half), exceed }
        })
        .collect();
    let per_eps: Vec<EpsVerdict> = eps
        .iter()
        .enumerate()
        .map(|(e, &eps)| {
            let curve: Vec<f64> = stats.iter().map(|s| s.exceed[e].estimate).collect();
            let trend = trend(&curve);
            let last = stats.last().expect("grid is nonempty").exceed[e];
            EpsVerdict { eps, trend, last, verdict: judge(last, tol.weak_threshold, trend) }
        })
        .collect();
    let verdict = combine(&per_eps);
    Ok(WeakReport { epsilons: eps.to_vec(), threshold: tol.weak_threshold, stats, per_eps, verdict })
}

/// Tail suprema `sup_{t >= n0} |S_t - E S_t|` along an increasing `n0`
/// schedule. The fractions are nonincreasing in `n0` because the tails shrink.
pub fn strong_probe(traj: &Trajectories, eps: &[f64], n0: &[f64], tol: &Tolerance) -> Result<StrongReport> {
    check_trajectories(traj)?;
    check_epsilons(eps)?;
    let last_point = *traj.points.last().expect("checked");
    if n0.is_empty() || n0.windows(2).any(|w| w[0] >= w[1]) || n0.iter().any(|&x| !(x <= last_point)) {
        return Err(Error::InvalidConfig(format!(
            "n0 schedule must be nonempty, increasing and end at or before the last grid point {last_point}"
        )));
    }
    let starts: Vec<usize> = n0.iter().map(|&x| traj.points.partition_point(|&t| t < x)).collect();
    let tail_sup: Vec<Vec<f64>> = (0..traj.replications())
        .map(|r| {
            let dev: Vec<f64> = traj.deviations(r).map(f64::abs).collect();
            let mut suffix = vec![0.0f64; dev.len() + 1];
            for j in (0..dev.len()).rev() {
                suffix[j] = suffix[j + 1].max(dev[j]);
            }
            starts.iter().map(|&s| suffix[s]).collect()
        })
        .collect();
    let reps = traj.replications() as u64;
    let fractions: Vec<Vec<Proportion>> = eps
        .iter()
        .map(|&e| {
            (0..n0.len())
                .map(|i| Proportion::new(tail_sup.iter().filter(|row| row[i] > e).count() as u64, reps))
                .collect()
        })
        .collect();
    let per_eps: Vec<EpsVerdict> = eps
        .iter()
        .zip(&fractions)
        .map(|(&eps, row)| {
            let curve: Vec<f64> = row.iter().map(|p| p.estimate).collect();
            let trend = trend(&curve);
            let last = *row.last().expect("n0 is nonempty");
            EpsVerdict { eps, trend, last, verdict: judge(last, tol.strong_fraction, trend) }
        })
        .collect();
    let verdict = combine(&per_eps);
    Ok(StrongReport { epsilons: eps.to_vec(), n0: n0.to_vec(), threshold: tol.strong_fraction, tail_sup, fractions, per_eps, verdict })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitPoint {
    pub point: f64,
    pub expected: f64,
    pub mean: f64,
    pub mean_ci: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum LimitVerdict {
    Converging { limit: f64 },
    Oscillating { low: f64, high: f64 },
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitReport {
    pub points: Vec<LimitPoint>,
    /// Replication mean at the last point of the subsequence.
    pub v_hat: f64,
    /// `E S` at the last point of the subsequence.
    pub expected_last: f64,
    /// Range of `E S` over the later half of the subsequence.
    pub expected_range: (f64, f64),
    /// Range of `E S` over the last quarter of the subsequence.
    pub final_range: (f64, f64),
    pub eps: f64,
    /// Replications whose deviation exceeds `eps` somewhere on the last quarter.
    pub residual: Proportion,
    pub verdict: LimitVerdict,
}

fn range(xs: &[f64]) -> (f64, f64) {
    xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Limit of `E S` along the subsequence of grid positions `sub` (all
/// points when `None`), with the per-replication residuals `S - E S`.
pub fn limit_probe(traj: &Trajectories, sub: Option<&[usize]>, eps: f64, tol: &Tolerance) -> Result<LimitReport> {
    check_trajectories(traj)?;
    check_epsilons(&[eps])?;
    let all: Vec<usize> = (0..traj.points.len()).collect();
    let sub = sub.unwrap_or(&all);
    if sub.len() < 2 || sub.windows(2).any(|w| w[0] >= w[1]) || sub.iter().any(|&j| j >= traj.points.len()) {
        return Err(Error::InvalidConfig("subsequence must hold at least two increasing grid positions".into()));
    }
    let reps = traj.replications();
    let points: Vec<LimitPoint> = sub
        .iter()
        .map(|&j| {
            let xs: Vec<f64> = traj.values.iter().map(|v| v[j]).collect();
            let m = mean(&xs);
            let half = Z95 * sample_sd(&xs) / (reps as f64).sqrt();
            LimitPoint { point: traj.points[j], expected: traj.expected[j], mean: m, mean_ci: (m - half, m + half) }
        })
        .collect();
    let expected: Vec<f64> = points.iter().map(|p| p.expected).collect();
    let half = sub.len() / 2;
    let quarter = sub.len() - (sub.len() / 4).max(1);
    let expected_range = range(&expected[half..]);
    let final_range = range(&expected[quarter..]);
    let hits = (0..reps)
        .filter(|&r| sub[quarter..].iter().any(|&j| (traj.values[r][j] - traj.expected[j]).abs() > eps))
        .count() as u64;
    let residual = Proportion::new(hits, reps as u64);
    let last = points.last().expect("at least two points");
    let verdict = if expected_range.1 - expected_range.0 > tol.oscillation {
        LimitVerdict::Oscillating { low: expected_range.0, high: expected_range.1 }
    } else if final_range.1 - final_range.0 <= tol.limit_tol && residual.estimate <= tol.strong_fraction {
        LimitVerdict::Converging { limit: last.expected }
    } else {
        LimitVerdict::Undetermined
    };
    Ok(LimitReport {
        v_hat: last.mean,
        expected_last: last.expected,
        points,
        expected_range,
        final_range,
        eps,
        residual,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::{run, GridSpec, SimConfig};

    fn sim(mass: &str, family: &str, end: f64, reps: u64, seed: u64) -> Trajectories {
        run(&SimConfig::new(mass.parse().unwrap(), family.parse().unwrap(), GridSpec::geometric(end), reps, seed)).unwrap()
    }

    #[test]
    fn hoeffding_values() {
        assert_eq!(hoeffding_bound(0.0, 0.1), 1.0);
        assert!((hoeffding_bound(1e5, 0.05) - 2.0 * (-125.0f64).exp()).abs() < 1e-60);
    }

    #[test]
    fn zero_family_everything_vanishes() {
        let t = sim("example_divergent", "constant:0", 1e4, 5, 1);
        let tol = Tolerance::default();
        let w = weak_probe(&t, &[0.01, 0.1], &tol).unwrap();
        assert!(w.stats.iter().all(|s| s.exceed.iter().all(|p| p.estimate == 0.0)));
        assert_eq!(w.verdict, Verdict::Converging);
        let s = strong_probe(&t, &[0.01], &[10.0, 100.0], &tol).unwrap();
        assert!(s.tail_sup.iter().flatten().all(|&x| x == 0.0));
        assert_eq!(s.verdict, Verdict::Converging);
    }

    #[test]
    fn walk_on_divergent_masses_converges_weakly_within_hoeffding() {
        let t = sim("example_divergent", "rw_bounded", 1e5, 200, 3);
        let w = weak_probe(&t, &[0.05, 0.1], &Tolerance::default()).unwrap();
        assert_eq!(w.verdict, Verdict::Converging);
        assert!(w.per_eps.iter().all(|v| v.trend == Trend::Decreasing));
        // each estimate lies below the Hoeffding bound plus the upper Wilson slack
        for s in &w.stats {
            for (p, &e) in s.exceed.iter().zip(&w.epsilons) {
                assert!(p.lower <= hoeffding_bound(s.point, e), "t = {}: {p:?}", s.point);
            }
        }
    }

    #[test]
    fn walk_on_cesar_converges_strongly() {
        let t = sim("example_cesar", "rw_bounded", 1e6, 100, 4);
        let s = strong_probe(&t, &[0.05], &[1e3, 1e4, 1e5], &Tolerance::default()).unwrap();
        assert_eq!(s.verdict, Verdict::Converging);
        assert_eq!(s.fractions[0].last().unwrap().successes, 0);
        // union of Hoeffding bounds over the tail grid from 1e5 is negligible
        let union: f64 = t.points.iter().filter(|&&x| x >= 1e5).map(|&x| hoeffding_bound(x, 0.05)).sum();
        assert!(union < 1e-6);
    }

    #[test]
    fn strong_fractions_are_monotone() {
        let t = sim("const:1", "rw_bounded", 1e4, 50, 2);
        let s = strong_probe(&t, &[0.02, 0.05, 0.2], &[1.0, 10.0, 100.0, 1000.0, 1e4], &Tolerance::default()).unwrap();
        for row in &s.fractions {
            for w in row.windows(2) {
                assert!(w[1].successes <= w[0].successes);
            }
        }
        for row in &s.tail_sup {
            for w in row.windows(2) {
                assert!(w[1] <= w[0]);
            }
        }
    }

    #[test]
    fn strong_probe_rejects_bad_schedule() {
        let t = sim("const:1", "rw_bounded", 100.0, 2, 2);
        let tol = Tolerance::default();
        assert!(strong_probe(&t, &[0.1], &[10.0, 5.0], &tol).is_err());
        assert!(strong_probe(&t, &[0.1], &[1e3], &tol).is_err());
        assert!(strong_probe(&t, &[], &[1.0], &tol).is_err());
    }

    #[test]
    fn biased_limits() {
        let tol = Tolerance::default();
        let t = sim("example_divergent", "biased", 1e6, 20, 5);
        let l = limit_probe(&t, None, 0.05, &tol).unwrap();
        assert!((l.v_hat - 1.0).abs() < 0.02, "{}", l.v_hat);
        assert!(matches!(l.verdict, LimitVerdict::Converging { limit } if (limit - 1.0).abs() < 0.02));

        let t = sim("example_triangular", "biased", 1e6, 20, 5);
        let l = limit_probe(&t, None, 0.05, &tol).unwrap();
        assert!((l.expected_last - 0.75).abs() < 0.02, "{}", l.expected_last);
        assert!((l.v_hat - 0.75).abs() < 0.02, "{}", l.v_hat);
    }

    #[test]
    fn remp_expectation_oscillates() {
        let t = sim("example_remp", "biased", 1e7, 4, 5);
        let l = limit_probe(&t, None, 0.05, &Tolerance::default()).unwrap();
        assert!(matches!(l.verdict, LimitVerdict::Oscillating { .. }), "{:?}", l.verdict);
        assert!(l.expected_range.1 - l.expected_range.0 > 0.3);
    }
}
