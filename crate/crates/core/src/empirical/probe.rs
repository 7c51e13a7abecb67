use super::{PointMeasure, TestFunction};
use crate::error::{Error, Result};
use crate::mass_seq::{PrefixIndex, RunIndex};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Convergence {
    Converged,
    Oscillating,
    NotConverged,
    Undetermined,
}

/// Two probe times at which one test function takes values further apart
/// than the oscillation threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub function: String,
    pub t_low: f64,
    pub value_low: f64,
    pub t_high: f64,
    pub value_high: f64,
}

/// A moment tracked along the probe times against its limit value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentTrail {
    pub name: String,
    pub target: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub verdict: Convergence,
    pub tol: f64,
    pub times: Vec<f64>,
    /// `ell_t` at each probe, when known.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub counts: Vec<u64>,
    /// `max_f |<lambda_t, f> - <candidate, f>|` at each probe.
    pub distances: Vec<f64>,
    /// First probe of the final scale window.
    pub window_start: usize,
    /// First probe of the later half scanned for oscillation.
    pub half_start: usize,
    pub witness: Option<Witness>,
    pub moment: Option<MomentTrail>,
}

/// Number of alternating moves larger than `h` (a zigzag with hysteresis).
pub(crate) fn zigzag_legs(values: &[f64], h: f64) -> usize {
    let Some(&first) = values.first() else { return 0 };
    let mut dir = 0i8;
    let mut extreme = first;
    let mut legs = 0;
    for &v in &values[1..] {
        match dir {
            0 => {
                if v - first > h {
                    dir = 1;
                    legs = 1;
                    extreme = v;
                } else if first - v > h {
                    dir = -1;
                    legs = 1;
                    extreme = v;
                }
            }
            1 => {
                if v > extreme {
                    extreme = v;
                } else if extreme - v > h {
                    dir = -1;
                    legs += 1;
                    extreme = v;
                }
            }
            _ => {
                if v < extreme {
                    extreme = v;
                } else if v - extreme > h {
                    dir = 1;
                    legs += 1;
                    extreme = v;
                }
            }
        }
    }
    legs
}

/// Minimum number of zigzag legs in the later half that counts as oscillation.
const MIN_LEGS: usize = 3;

/// Convergence verdict from panel values `values[f][i]` against `targets[f]`.
///
/// Oscillation (at least three alternating moves larger than `2 tol` for
/// some function over `half_start..`, at least one of them from
/// `quarter_start` on) takes precedence; convergence needs
/// every distance from `window_start` on to be at most `tol` and the last
/// distance not to exceed the largest earlier one.
pub(crate) fn assess(
    times: Vec<f64>,
    counts: Vec<u64>,
    values: &[Vec<f64>],
    targets: &[f64],
    names: &[String],
    tol: f64,
    window_start: usize,
    (half_start, quarter_start): (usize, usize),
) -> ConvergenceReport {
    let n = times.len();
    let distances: Vec<f64> = (0..n)
        .map(|i| values.iter().zip(targets).map(|(v, t)| (v[i] - t).abs()).fold(0.0, f64::max))
        .collect();
    let h = 2.0 * tol;
    let mut witness: Option<(f64, Witness)> = None;
    for (f, series) in values.iter().enumerate() {
        let tail = &series[half_start..];
        if zigzag_legs(tail, h) < MIN_LEGS || zigzag_legs(&series[quarter_start..], h) == 0 {
            continue;
        }
        let (lo, hi) = tail.iter().enumerate().fold((0, 0), |(lo, hi), (i, &v)| {
            (if v < tail[lo] { i } else { lo }, if v > tail[hi] { i } else { hi })
        });
        let spread = tail[hi] - tail[lo];
        if witness.as_ref().is_none_or(|(s, _)| spread > *s) {
            let w = Witness {
                function: names[f].clone(),
                t_low: times[half_start + lo],
                value_low: tail[lo],
                t_high: times[half_start + hi],
                value_high: tail[hi],
            };
            witness = Some((spread, w));
        }
    }
    let verdict = if witness.is_some() {
        Convergence::Oscillating
    } else {
        let window_ok = distances[window_start..].iter().all(|&d| d <= tol);
        let earlier = distances[..window_start].iter().copied().fold(0.0, f64::max);
        let trend_ok = window_start == 0 || distances[n - 1] <= earlier.max(tol);
        if window_ok && trend_ok {
            Convergence::Converged
        } else {
            Convergence::Undetermined
        }
    };
    ConvergenceReport {
        verdict,
        tol,
        times,
        counts,
        distances,
        window_start,
        half_start,
        witness: witness.map(|(_, w)| w),
        moment: None,
    }
}

/// Ratio between the last probe time and the start of the final window.
pub(crate) const WINDOW_RATIO: f64 = 8.0;

/// Starts of the final scale window, of the later half and of the last
/// quarter (both in log scale) for increasing positive scales.
pub(crate) fn windows(scales: &[f64]) -> (usize, (usize, usize)) {
    let last = *scales.last().expect("nonempty");
    let first = scales[0];
    let start = |x: f64| scales.partition_point(|&s| s < x).min(scales.len() - 1);
    let half = start((first * last).sqrt());
    let quarter = start(first.powf(0.25) * last.powf(0.75));
    (start(last / WINDOW_RATIO), (half, quarter))
}

fn check_series(series: &[(f64, PointMeasure)], panel: &[TestFunction]) -> Result<()> {
    if panel.is_empty() {
        return Err(Error::InsufficientData("test-function panel is empty".into()));
    }
    if series.len() < 2 {
        return Err(Error::InsufficientData(format!("{} probe times given, need at least 2", series.len())));
    }
    let increasing = series.windows(2).all(|w| w[0].0 < w[1].0);
    if !(series[0].0 > 0.0 && increasing) {
        return Err(Error::InvalidGrid("probe times must be positive and strictly increasing".into()));
    }
    Ok(())
}

/// Weak convergence of time-indexed measures to `candidate` on a panel.
pub fn probe_weak(
    series: &[(f64, PointMeasure)],
    candidate: &PointMeasure,
    panel: &[TestFunction],
    tol: f64,
) -> Result<ConvergenceReport> {
    check_series(series, panel)?;
    let times: Vec<f64> = series.iter().map(|s| s.0).collect();
    let values: Vec<Vec<f64>> = panel.iter().map(|f| series.iter().map(|(_, m)| m.integrate(f)).collect()).collect();
    let targets: Vec<f64> = panel.iter().map(|f| candidate.integrate(f)).collect();
    let names: Vec<String> = panel.iter().map(|f| f.name()).collect();
    let (window, half) = windows(&times);
    Ok(assess(times, Vec::new(), &values, &targets, &names, tol, window, half))
}

fn with_moment(
    mut report: ConvergenceReport,
    name: &str,
    values: Vec<f64>,
    target: f64,
) -> ConvergenceReport {
    if report.verdict == Convergence::Converged {
        let ok = target.is_finite() && values[report.window_start..].iter().all(|v| (v - target).abs() <= report.tol);
        if !ok {
            report.verdict = Convergence::NotConverged;
        }
    }
    report.moment = Some(MomentTrail { name: name.to_string(), target, values });
    report
}

/// Weak convergence plus convergence of `int m dF_t` to a finite `int m dF_*`.
pub fn probe_l1(freqs: &[(f64, PointMeasure)], candidate: &PointMeasure, tol: f64) -> Result<ConvergenceReport> {
    let report = probe_weak(freqs, candidate, &TestFunction::default_panel(), tol)?;
    let values = freqs.iter().map(|(_, f)| f.first_moment()).collect();
    Ok(with_moment(report, "first_moment", values, candidate.first_moment()))
}

/// Weak convergence plus convergence of `int 1/m dmu_t` to a finite
/// `int 1/m dmu_*`.
pub fn probe_wplus(mus: &[(f64, PointMeasure)], candidate: &PointMeasure, tol: f64) -> Result<ConvergenceReport> {
    let report = probe_weak(mus, candidate, &TestFunction::default_panel(), tol)?;
    let values = mus.iter().map(|(_, m)| m.inverse_moment()).collect();
    Ok(with_moment(report, "inverse_moment", values, candidate.inverse_moment()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CesaroVerdict {
    /// `M_n / n` grows past an increasing schedule.
    Diverging,
    /// `M_n / n` stays bounded.
    BoundedMean,
    /// `liminf M_n / n` stays bounded while `M_n / n` is unbounded.
    NotDiverging,
    Undetermined,
}

impl CesaroVerdict {
    /// Whether the verdict settles the Cesaro divergence question.
    pub fn divergent(self) -> Option<bool> {
        match self {
            CesaroVerdict::Diverging => Some(true),
            CesaroVerdict::BoundedMean | CesaroVerdict::NotDiverging => Some(false),
            CesaroVerdict::Undetermined => None,
        }
    }
}

/// Extremes of `M_n / n` over `n` in `[n_lo, n_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CesaroWindow {
    pub n_lo: u64,
    pub n_hi: u64,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CesaroReport {
    pub verdict: CesaroVerdict,
    pub windows: Vec<CesaroWindow>,
}

/// Growth factor of the threshold schedule between consecutive checkpoints.
const CESARO_GROWTH: f64 = 2.0;
/// Bound on the growth of `max M_n / n` for a bounded mean.
const CESARO_FLAT: f64 = 1.5;

pub fn probe_cesaro(idx: &PrefixIndex) -> CesaroReport {
    probe_cesaro_runs(&RunIndex::from_prefix(idx))
}

/// `M_n / n` over the dyadic windows `[2^j, 2^(j+1) - 1]` covered by the index.
/// Diverging when the running minimum of `M_n / n` over the windows from
/// the last one on exceeds twice its value from the middle window on and
/// four times its value from the first-quarter window on.
pub fn probe_cesaro_runs(idx: &RunIndex) -> CesaroReport {
    let n = idx.len();
    let count = if n == 0 { 0 } else { (n + 1).ilog2() as usize };
    let mut windows: Vec<CesaroWindow> = (0..count)
        .map(|j| CesaroWindow { n_lo: 1 << j, n_hi: (2 << j) - 1, min_ratio: f64::INFINITY, max_ratio: 0.0 })
        .collect();
    for run in idx.runs() {
        let (a, b) = (run.first, run.last());
        let mut j = a.ilog2() as usize;
        while j < count && windows[j].n_lo <= b {
            let w = &mut windows[j];
            for k in [a.max(w.n_lo), b.min(w.n_hi)] {
                let ratio = (run.before + (k - run.first + 1) as f64 * run.mass) / k as f64;
                w.min_ratio = w.min_ratio.min(ratio);
                w.max_ratio = w.max_ratio.max(ratio);
            }
            j += 1;
        }
    }
    let verdict = if count < 4 {
        CesaroVerdict::Undetermined
    } else {
        let (q, mid, last) = (count / 4, count / 2, count - 1);
        // running liminf: smallest window minimum from window j on
        let tail_min = |j: usize| windows[j..].iter().map(|w| w.min_ratio).fold(f64::INFINITY, f64::min);
        let hi = |i: usize| windows[i].max_ratio;
        let (lo_q, lo_mid, lo_last) = (tail_min(q), tail_min(mid), tail_min(last));
        if lo_last >= CESARO_GROWTH * lo_mid && lo_last >= CESARO_GROWTH * CESARO_GROWTH * lo_q {
            CesaroVerdict::Diverging
        } else if hi(last) <= CESARO_FLAT * hi(mid) && hi(mid) <= CESARO_FLAT * hi(q) {
            CesaroVerdict::BoundedMean
        } else if lo_last <= CESARO_FLAT * lo_mid {
            CesaroVerdict::NotDiverging
        } else {
            CesaroVerdict::Undetermined
        }
    };
    CesaroReport { verdict, windows }
}

#[cfg(test)]
mod tests {
    use super::super::{freq, mu};
    use super::*;
    use crate::mass_seq::MassSpec;

    fn series(spec: &MassSpec, ns: &[usize], freqs: bool) -> Vec<(f64, PointMeasure)> {
        let idx = spec.prefix(*ns.last().unwrap()).unwrap();
        ns.iter()
            .map(|&n| {
                let t = idx.cum(n);
                (t, if freqs { freq(&idx, t).unwrap() } else { mu(&idx, t).unwrap() })
            })
            .collect()
    }

    fn dyadic(lo: u32, hi: u32) -> Vec<usize> {
        (lo..=hi).map(|j| 1usize << j).collect()
    }

    #[test]
    fn zigzag_counts_alternations() {
        assert_eq!(zigzag_legs(&[0.0, 1.0, 0.0, 1.0], 0.5), 3);
        assert_eq!(zigzag_legs(&[0.0, 0.2, 0.4, 0.6, 0.8], 0.5), 1);
        assert_eq!(zigzag_legs(&[0.0, 0.3, 0.1, 0.3], 0.5), 0);
    }

    #[test]
    fn divergent_mu_converges_to_infinity() {
        let s = series(&MassSpec::Divergent, &dyadic(4, 16), false);
        let r = probe_weak(&s, &PointMeasure::dirac(f64::INFINITY), &TestFunction::default_panel(), 0.01).unwrap();
        assert_eq!(r.verdict, Convergence::Converged);
        let w = probe_wplus(&s, &PointMeasure::dirac(f64::INFINITY), 0.01).unwrap();
        assert_eq!(w.verdict, Convergence::Converged);
    }

    #[test]
    fn irr_mu_oscillates() {
        let spec = MassSpec::Irr { k: 1.0, l: 2.0 };
        let ns: Vec<usize> = (0..=60).map(|j| (2f64.powf(j as f64 / 3.0)) as usize).collect();
        let mut ns = ns;
        ns.dedup();
        let s = series(&spec, &ns, false);
        let r = probe_weak(&s, &PointMeasure::dirac(1.0), &TestFunction::default_panel(), 0.01).unwrap();
        assert_eq!(r.verdict, Convergence::Oscillating);
        let w = r.witness.unwrap();
        assert!(w.value_high - w.value_low > 0.02);
    }

    #[test]
    fn identical_diracs_converge_at_zero_tolerance() {
        let d = PointMeasure::dirac(1.0);
        let s = vec![(1.0, d.clone()), (2.0, d.clone()), (4.0, d.clone())];
        let r = probe_weak(&s, &d, &TestFunction::default_panel(), 0.0).unwrap();
        assert_eq!(r.verdict, Convergence::Converged);
        assert!(probe_weak(&s, &d, &[], 0.1).is_err());
        assert!(probe_weak(&s[..1], &d, &TestFunction::default_panel(), 0.1).is_err());
    }

    #[test]
    fn l1_examples() {
        let f0 = series(&MassSpec::F0, &[50_000, 100_000, 200_000], true);
        assert_eq!(probe_l1(&f0, &PointMeasure::dirac(0.0), 0.01).unwrap().verdict, Convergence::Converged);
        let c2 = series(&MassSpec::Const { c: 2.0 }, &dyadic(2, 10), true);
        assert_eq!(probe_l1(&c2, &PointMeasure::dirac(2.0), 0.01).unwrap().verdict, Convergence::Converged);
    }

    #[test]
    fn wplus_examples() {
        let c1 = series(&MassSpec::Const { c: 1.0 }, &dyadic(2, 10), false);
        assert_eq!(probe_wplus(&c1, &PointMeasure::dirac(1.0), 0.01).unwrap().verdict, Convergence::Converged);
        let f0 = series(&MassSpec::F0, &[50_000, 100_000, 200_000], false);
        let r = probe_wplus(&f0, &PointMeasure::dirac(1.0), 0.01).unwrap();
        assert_eq!(r.verdict, Convergence::NotConverged);
        assert!(r.moment.unwrap().values.iter().all(|&v| v > 10.0));
    }

    #[test]
    fn cesaro_examples() {
        assert_eq!(probe_cesaro(&MassSpec::Divergent.prefix(4096).unwrap()).verdict, CesaroVerdict::Diverging);
        assert_eq!(probe_cesaro(&MassSpec::Const { c: 1.0 }.prefix(4096).unwrap()).verdict, CesaroVerdict::BoundedMean);
        assert_eq!(probe_cesaro(&MassSpec::Cesar.prefix(4096).unwrap()).verdict, CesaroVerdict::Diverging);
        assert_eq!(probe_cesaro(&MassSpec::Triangular.prefix(1 << 16).unwrap()).verdict, CesaroVerdict::BoundedMean);
        assert_eq!(probe_cesaro(&MassSpec::Const { c: 1.0 }.prefix(4).unwrap()).verdict, CesaroVerdict::Undetermined);
    }
}
