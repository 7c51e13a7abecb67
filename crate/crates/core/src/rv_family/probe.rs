//! Empirical checks of the declared conditions on a finite grid.

use super::PathFamily;
use crate::error::{Error, Result};
use crate::rng::StreamKey;
use crate::stats::{mean, sample_sd, Proportion, Z95};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConditionId {
    C,
    W1,
    W2,
    S1,
    S2,
    S3,
}

impl ConditionId {
    pub const ALL: [ConditionId; 6] =
        [ConditionId::C, ConditionId::W1, ConditionId::W2, ConditionId::S1, ConditionId::S2, ConditionId::S3];
}

impl fmt::Display for ConditionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for ConditionId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "C" => Ok(ConditionId::C),
            "W1" => Ok(ConditionId::W1),
            "W2" => Ok(ConditionId::W2),
            "S1" => Ok(ConditionId::S1),
            "S2" => Ok(ConditionId::S2),
            "S3" => Ok(ConditionId::S3),
            _ => Err(Error::InvalidConfig(format!("unknown condition '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeVerdict {
    Holds,
    Fails,
    Undetermined,
}

/// Points `(k, m)` at which the family is sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeGrid {
    pub points: Vec<(u64, f64)>,
}

impl ProbeGrid {
    pub fn new(points: Vec<(u64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidGrid("probe grid is empty".into()));
        }
        if let Some(&(k, m)) = points.iter().find(|(k, m)| *k == 0 || !(*m > 0.0 && m.is_finite())) {
            return Err(Error::InvalidGrid(format!("bad grid point (k = {k}, m = {m})")));
        }
        Ok(ProbeGrid { points })
    }

    /// `m = 2^j` for `j` in `0..=max_exp` (step `step`), for every `k` in `ks`.
    pub fn dyadic(ks: &[u64], max_exp: u32, step: u32) -> Result<Self> {
        if max_exp > 1023 || step == 0 {
            return Err(Error::InvalidGrid(format!("dyadic grid up to 2^{max_exp} in steps of {step}")));
        }
        let mut points = Vec::new();
        for &k in ks {
            for j in (0..=max_exp).step_by(step as usize) {
                points.push((k, 2f64.powi(j as i32)));
            }
        }
        ProbeGrid::new(points)
    }

    /// Distinct masses in increasing order.
    fn masses(&self) -> Vec<f64> {
        let mut ms: Vec<f64> = self.points.iter().map(|p| p.1).collect();
        ms.sort_by(f64::total_cmp);
        ms.dedup();
        ms
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeOptions {
    pub eps: f64,
    pub budget: u64,
    pub seed: u64,
    /// Absolute tolerance on probabilities and means.
    pub slack: f64,
    /// Decay exponent tested by S1; defaults to the declared one.
    pub delta: Option<f64>,
    /// Truncation levels `A` for W2.
    pub truncation_levels: Vec<f64>,
    /// S3 thresholds `t = f m / eps`.
    pub s3_factors: Vec<f64>,
    /// S3 offsets `r = f m`.
    pub s3_offsets: Vec<f64>,
    pub s3_resolution: usize,
    /// S3 skips points with `r + m` above this.
    pub s3_max_time: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            eps: 0.5,
            budget: 10_000,
            seed: 0,
            slack: 0.01,
            delta: None,
            truncation_levels: vec![1.0, 1e2, 1e4, 1e8, 1e16, 1e32],
            s3_factors: vec![0.5, 1.0, 2.0, 4.0],
            s3_offsets: vec![0.0, 1.0, 16.0],
            s3_resolution: 64,
            s3_max_time: 4096.0,
        }
    }
}

/// Smallest budget accepted by [`condition_probe`].
pub const MIN_BUDGET: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbePoint {
    pub k: u64,
    pub m: f64,
    /// Threshold, truncation level or offset, depending on the condition.
    pub param: f64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: ConditionId,
    pub family: String,
    /// Whether the family declares the condition.
    pub declared: bool,
    pub verdict: ProbeVerdict,
    pub eps: f64,
    pub budget: u64,
    /// Fitted slope (S1) or final truncated mean (W2), when relevant.
    pub statistic: Option<f64>,
    pub witness: Option<ProbePoint>,
    pub points: Vec<ProbePoint>,
    pub note: String,
}

fn point_rng(opts: &ProbeOptions, idx: usize, k: u64) -> rand_chacha::ChaCha8Rng {
    StreamKey::new(opts.seed, idx as u64).stream(k)
}

/// Centred draws `X_k(m) - E X_k(m)` (or raw draws for C).
fn draws(family: &PathFamily, opts: &ProbeOptions, idx: usize, k: u64, m: f64, centre: bool) -> Result<Vec<f64>> {
    let mut rng = point_rng(opts, idx, k);
    let shift = if centre { family.mean(k, m) } else { 0.0 };
    (0..opts.budget).map(|_| Ok(family.sample_x_marginal(k, m, &mut rng)? - shift)).collect()
}

fn proportion_point(k: u64, m: f64, param: f64, hits: u64, n: u64, bound: Option<f64>) -> ProbePoint {
    let p = Proportion::new(hits, n);
    ProbePoint { k, m, param, estimate: p.estimate, lower: p.lower, upper: p.upper, bound }
}

fn mean_point(k: u64, m: f64, param: f64, xs: &[f64]) -> ProbePoint {
    let est = mean(xs);
    let half = Z95 * sample_sd(xs) / (xs.len() as f64).sqrt();
    ProbePoint { k, m, param, estimate: est, lower: est - half, upper: est + half, bound: None }
}

/// Least-squares slope of `ln y` against `ln x`.
fn log_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let lx: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

/// Largest estimate among the points at each distinct mass.
fn sup_by_mass(points: &[ProbePoint], masses: &[f64]) -> Vec<ProbePoint> {
    masses
        .iter()
        .map(|&m| {
            points
                .iter()
                .filter(|p| p.m == m)
                .max_by(|a, b| a.estimate.total_cmp(&b.estimate))
                .cloned()
                .expect("every grid mass has a point")
        })
        .collect()
}

/// Samples `family` on `grid` and checks one condition.
pub fn condition_probe(
    family: &PathFamily,
    condition: ConditionId,
    grid: &ProbeGrid,
    opts: &ProbeOptions,
) -> Result<ConditionReport> {
    if opts.budget < MIN_BUDGET {
        return Err(Error::BudgetTooSmall(format!("condition probes need at least {MIN_BUDGET} samples, got {}", opts.budget)));
    }
    if !(opts.eps > 0.0) || !(opts.slack >= 0.0) {
        return Err(Error::InvalidConfig(format!("eps must be positive and slack nonnegative (eps = {}, slack = {})", opts.eps, opts.slack)));
    }
    let decl = family.conditions();
    let mut report = ConditionReport {
        condition,
        family: family.spec().to_string(),
        declared: false,
        verdict: ProbeVerdict::Undetermined,
        eps: opts.eps,
        budget: opts.budget,
        statistic: None,
        witness: None,
        points: Vec::new(),
        note: String::new(),
    };
    match condition {
        ConditionId::C => probe_c(family, grid, opts, &mut report)?,
        ConditionId::W1 => {
            report.declared = decl.w1;
            probe_w1(family, grid, opts, &mut report)?
        }
        ConditionId::W2 => {
            report.declared = decl.w2;
            probe_w2(family, grid, opts, &mut report)?
        }
        ConditionId::S1 => {
            report.declared = decl.s1.is_some();
            probe_s1(family, grid, opts, &mut report)?
        }
        ConditionId::S2 => {
            report.declared = decl.s2.is_some();
            probe_s2(family, grid, opts, &mut report)?
        }
        ConditionId::S3 => {
            report.declared = decl.s3.is_some();
            probe_s3(family, grid, opts, &mut report)?
        }
    }
    Ok(report)
}

fn probe_c(family: &PathFamily, grid: &ProbeGrid, opts: &ProbeOptions, report: &mut ConditionReport) -> Result<()> {
    report.declared = family.conditions().centered;
    let points: Vec<ProbePoint> = grid
        .points
        .par_iter()
        .enumerate()
        .map(|(i, &(k, m))| Ok(mean_point(k, m, 0.0, &draws(family, opts, i, k, m, false)?)))
        .collect::<Result<_>>()?;
    let witness = points
        .iter()
        .filter(|p| p.lower > opts.slack || p.upper < -opts.slack)
        .max_by(|a, b| a.estimate.abs().total_cmp(&b.estimate.abs()))
        .cloned();
    report.verdict = if witness.is_some() { ProbeVerdict::Fails } else { ProbeVerdict::Holds };
    report.note = "95% interval of the sample mean compared with 0".into();
    report.witness = witness;
    report.points = points;
    Ok(())
}

fn exceedances(
    family: &PathFamily,
    grid: &ProbeGrid,
    opts: &ProbeOptions,
    bound: impl Fn(f64) -> Option<f64> + Sync,
) -> Result<Vec<ProbePoint>> {
    grid.points
        .par_iter()
        .enumerate()
        .map(|(i, &(k, m))| {
            let ys = draws(family, opts, i, k, m, true)?;
            let hits = ys.iter().filter(|y| y.abs() > opts.eps).count() as u64;
            Ok(proportion_point(k, m, opts.eps, hits, opts.budget, bound(m)))
        })
        .collect()
}

fn probe_w1(family: &PathFamily, grid: &ProbeGrid, opts: &ProbeOptions, report: &mut ConditionReport) -> Result<()> {
    let points = exceedances(family, grid, opts, |_| None)?;
    let sups = sup_by_mass(&points, &grid.masses());
    let first = sups.first().expect("nonempty grid");
    let last = sups.last().expect("nonempty grid");
    report.verdict = if last.upper <= opts.slack.max(first.estimate) && last.estimate <= opts.slack {
        ProbeVerdict::Holds
    } else if last.lower > opts.slack && last.estimate >= 0.9 * first.estimate {
        report.witness = Some(last.clone());
        ProbeVerdict::Fails
    } else {
        ProbeVerdict::Undetermined
    };
    report.statistic = Some(last.estimate);
    report.note = format!("sup over k of P(|X - EX| > {}) at the largest mass, compared with slack {}", opts.eps, opts.slack);
    report.points = points;
    Ok(())
}

fn probe_w2(family: &PathFamily, grid: &ProbeGrid, opts: &ProbeOptions, report: &mut ConditionReport) -> Result<()> {
    let mut levels = opts.truncation_levels.clone();
    if levels.is_empty() || levels.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::InvalidConfig("W2 needs positive truncation levels".into()));
    }
    levels.sort_by(f64::total_cmp);
    let samples: Vec<Vec<f64>> = grid
        .points
        .par_iter()
        .enumerate()
        .map(|(i, &(k, m))| draws(family, opts, i, k, m, true))
        .collect::<Result<_>>()?;
    let mut points = Vec::new();
    let mut sups = Vec::new();
    for &a in &levels {
        let mut best: Option<ProbePoint> = None;
        for (&(k, m), ys) in grid.points.iter().zip(&samples) {
            let tr: Vec<f64> = ys.iter().map(|y| if y.abs() > a { y.abs() } else { 0.0 }).collect();
            let p = mean_point(k, m, a, &tr);
            if best.as_ref().is_none_or(|b| p.estimate > b.estimate) {
                best = Some(p.clone());
            }
            points.push(p);
        }
        sups.push(best.expect("nonempty grid"));
    }
    let first = sups.first().expect("at least one level");
    let last = sups.last().expect("at least one level");
    let last_positive = sups.iter().rposition(|p| p.estimate > 0.0);
    report.verdict = match last_positive {
        Some(j) if j > 0 && sups[j].lower > opts.slack && sups[j].estimate >= 0.5 * first.estimate => {
            report.witness = Some(sups[j].clone());
            ProbeVerdict::Fails
        }
        _ if last.upper <= opts.slack => ProbeVerdict::Holds,
        _ => ProbeVerdict::Undetermined,
    };
    report.statistic = Some(last.estimate);
    report.note = format!(
        "sup over the grid of E[|Y|; |Y| > A] for A up to {:e}; fails when it does not decay across the levels that still see data",
        last.param
    );
    report.points = points;
    Ok(())
}

fn probe_s1(family: &PathFamily, grid: &ProbeGrid, opts: &ProbeOptions, report: &mut ConditionReport) -> Result<()> {
    let declared = family.conditions().s1;
    let delta = match (opts.delta, declared) {
        (Some(d), _) => d,
        (None, Some(s)) => s.delta,
        (None, None) => 0.1,
    };
    if !(delta > 0.0) {
        return Err(Error::InvalidConfig(format!("S1 needs delta > 0, got {delta}")));
    }
    let schedule = declared.filter(|s| s.delta >= delta).map(|s| s.c.at(opts.eps));
    let points = exceedances(family, grid, opts, |m| schedule.map(|c| c * m.powf(-delta)))?;
    let sups = sup_by_mass(&points, &grid.masses());
    let violation = points.iter().find(|p| p.bound.is_some_and(|b| p.lower > b)).cloned();
    let later = &sups[sups.len() / 2..];
    let positive: Vec<(f64, f64)> = later.iter().filter(|p| p.estimate > 0.0).map(|p| (p.m, p.estimate)).collect();
    let slope = log_slope(&positive);
    let trailing_zero = sups.len() >= 2 && sups[sups.len() - 2..].iter().all(|p| p.estimate == 0.0);
    report.statistic = slope;
    report.verdict = if let Some(w) = violation {
        report.witness = Some(w);
        ProbeVerdict::Fails
    } else if trailing_zero || slope.is_some_and(|s| s <= -0.75 * delta) {
        ProbeVerdict::Holds
    } else if slope.is_some_and(|s| s >= -0.25 * delta) {
        report.witness = sups.last().cloned();
        ProbeVerdict::Fails
    } else {
        ProbeVerdict::Undetermined
    };
    report.note = format!(
        "log-log slope of sup_k P(|X - EX| > {}) over the upper half of the grid, tested against delta = {delta}",
        opts.eps
    );
    report.points = points;
    Ok(())
}

fn probe_s2(family: &PathFamily, grid: &ProbeGrid, opts: &ProbeOptions, report: &mut ConditionReport) -> Result<()> {
    let samples: Vec<Vec<f64>> = grid
        .points
        .par_iter()
        .enumerate()
        .map(|(i, &(k, m))| draws(family, opts, i, k, m, true))
        .collect::<Result<_>>()?;
    let mut pooled: Vec<f64> = samples.iter().flatten().map(|y| y.abs()).collect();
    pooled.sort_by(f64::total_cmp);
    let mut thresholds: Vec<f64> = [0.5, 0.9, 0.99, 0.999]
        .iter()
        .map(|q| pooled[((pooled.len() - 1) as f64 * q) as usize])
        .filter(|x| *x > 0.0)
        .collect();
    thresholds.dedup();
    let dom = family.conditions().s2.map(|s| s.dominating);
    let mut points = Vec::new();
    for &x in &thresholds {
        for (&(k, m), ys) in grid.points.iter().zip(&samples) {
            let hits = ys.iter().filter(|y| y.abs() > x).count() as u64;
            points.push(proportion_point(k, m, x, hits, opts.budget, dom.map(|d| d.tail(x))));
        }
    }
    let violation = points.iter().find(|p| p.bound.is_some_and(|b| p.lower > b + opts.slack)).cloned();
    report.verdict = match (&violation, dom) {
        (Some(_), _) => ProbeVerdict::Fails,
        (None, Some(_)) => ProbeVerdict::Holds,
        (None, None) => ProbeVerdict::Undetermined,
    };
    report.witness = violation;
    report.note = if dom.is_some() {
        "empirical tails of |X - EX| at pooled quantiles against the declared dominating tail".into()
    } else {
        "no dominating law declared".into()
    };
    report.points = points;
    Ok(())
}

fn probe_s3(family: &PathFamily, grid: &ProbeGrid, opts: &ProbeOptions, report: &mut ConditionReport) -> Result<()> {
    let decl = family.conditions().s3;
    let mut cases = Vec::new();
    let mut skipped = 0usize;
    for (i, &(k, m)) in grid.points.iter().enumerate() {
        for (j, &off) in opts.s3_offsets.iter().enumerate() {
            let r = off * m;
            if r + m > opts.s3_max_time {
                skipped += 1;
                continue;
            }
            cases.push((i, j, k, m, r));
        }
    }
    if cases.is_empty() {
        return Err(Error::InvalidGrid(format!("no S3 grid point with r + m <= {}", opts.s3_max_time)));
    }
    let per_case: Vec<Vec<ProbePoint>> = cases
        .par_iter()
        .map(|&(i, j, k, m, r)| {
            let mut sups = Vec::with_capacity(opts.budget as usize);
            for s in 0..opts.budget {
                let key = StreamKey::new(opts.seed, ((i as u64) << 40) | ((j as u64) << 32) | s);
                sups.push(family.sample_path_sup(&key, k, r, m, opts.s3_resolution)?);
            }
            Ok(opts
                .s3_factors
                .iter()
                .map(|&f| {
                    let t = f * m / opts.eps;
                    let hits = sups.iter().filter(|&&v| v >= t * opts.eps).count() as u64;
                    let bound = decl.map(|d| d.c.at(opts.eps) * (m / t).powf(d.beta));
                    let mut p = proportion_point(k, m, t, hits, opts.budget, bound);
                    p.param = t;
                    p
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let points: Vec<ProbePoint> = per_case.into_iter().flatten().collect();
    let violation = points.iter().find(|p| p.bound.is_some_and(|b| p.lower > b + opts.slack)).cloned();
    report.verdict = match (&violation, decl) {
        (Some(_), _) => ProbeVerdict::Fails,
        (None, Some(_)) => ProbeVerdict::Holds,
        (None, None) => ProbeVerdict::Undetermined,
    };
    report.witness = violation;
    report.note = format!(
        "exceedance of sup_s |W(r+s) - W(r)| >= t eps against C m^beta / t^beta; {skipped} (point, offset) pairs beyond r + m = {} skipped",
        opts.s3_max_time
    );
    report.points = points;
    Ok(())
}
