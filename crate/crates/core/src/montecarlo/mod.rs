//! Replicated simulation of gradual sums and the statistical probes built on
//! top of the resulting trajectories.
//!
//! Replication `r` draws every path from `StreamKey::new(seed, r)`, so the
//! output does not depend on how replications are scheduled over threads.

mod counter;
mod probes;

pub use counter::{counterexample_s1, counterexample_w2, S1Checkpoint, S1Options, S1Report, W2Checkpoint, W2Options, W2Report};
pub use probes::{
    hoeffding_bound, limit_probe, strong_probe, weak_probe, EpsVerdict, GridStats, LimitPoint, LimitReport, LimitVerdict,
    StrongReport, Tolerance, Trend, Verdict, WeakReport,
};

use crate::error::{Error, Result};
use crate::mass_seq::{MassSpec, PrefixIndex, RunIndex};
use crate::rng::{StreamKey, BLOCK_DOMAIN};
use crate::rv_family::{BlockTerm, FamilySpec, PathFamily};
use crate::stats::Compensated;
use crate::summation::expected_gradual_runs;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Time points at which the gradual sum is recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridSpec {
    /// `start * ratio^j` for `j = 0, 1, ..` up to `end`, with `end` appended.
    Geometric {
        #[serde(default = "default_start")]
        start: f64,
        #[serde(default = "default_ratio")]
        ratio: f64,
        end: f64,
    },
    Explicit { times: Vec<f64> },
}

fn default_start() -> f64 {
    1.0
}
fn default_ratio() -> f64 {
    1.5
}

impl GridSpec {
    pub fn geometric(end: f64) -> GridSpec {
        GridSpec::Geometric { start: default_start(), ratio: default_ratio(), end }
    }

    pub fn times(&self) -> Result<Vec<f64>> {
        let times = match self {
            GridSpec::Geometric { start, ratio, end } => {
                if !(start.is_finite() && *start > 0.0 && ratio.is_finite() && *ratio > 1.0 && end.is_finite() && end >= start) {
                    return Err(Error::InvalidGrid(format!(
                        "geometric grid needs 0 < start <= end and ratio > 1 (start {start}, ratio {ratio}, end {end})"
                    )));
                }
                let mut out = Vec::new();
                let mut j = 0i32;
                loop {
                    let t = start * ratio.powi(j);
                    if t >= *end {
                        break;
                    }
                    out.push(t);
                    j += 1;
                }
                out.push(*end);
                out
            }
            GridSpec::Explicit { times } => times.clone(),
        };
        if times.is_empty() {
            return Err(Error::InvalidGrid("grid is empty".into()));
        }
        if times.iter().any(|t| !(t.is_finite() && *t > 0.0)) || times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidGrid("grid times must be positive, finite and increasing".into()));
        }
        Ok(times)
    }
}

/// How complete increments between grid times are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SumMode {
    /// Stretches of complete increments are drawn jointly from the law of
    /// their sum when it is available in closed form.
    #[default]
    Blocked,
    /// Every increment is drawn from its own path, reproducing
    /// [`crate::summation::gradual`] bit for bit.
    PerIncrement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub mass: MassSpec,
    pub family: FamilySpec,
    pub grid: GridSpec,
    pub replications: u64,
    pub seed: u64,
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub tolerance: Tolerance,
    #[serde(default)]
    pub mode: SumMode,
}

impl SimConfig {
    pub fn new(mass: MassSpec, family: FamilySpec, grid: GridSpec, replications: u64, seed: u64) -> SimConfig {
        SimConfig { mass, family, grid, replications, seed, epsilons: vec![0.05], tolerance: Tolerance::default(), mode: SumMode::Blocked }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidConfig("at least one replication is required".into()));
        }
        if self.epsilons.is_empty() || self.epsilons.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(Error::InvalidConfig("epsilons must be a nonempty list of positive numbers".into()));
        }
        self.tolerance.validate()?;
        self.mass.with_default_seed(self.seed).validate()?;
        self.grid.times()?;
        Ok(())
    }
}

/// What the points of a trajectory are indexed by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// Gradual sums at times `t`.
    Time,
    /// Incremental sums at indices `n`.
    Increment,
}

/// Replicated sums on a common grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectories {
    pub axis: Axis,
    pub points: Vec<f64>,
    /// `E S` at each point.
    pub expected: Vec<f64>,
    /// `values[r][j]`: replication `r` at point `j`.
    pub values: Vec<Vec<f64>>,
}

impl Trajectories {
    pub fn replications(&self) -> usize {
        self.values.len()
    }

    /// `S - E S` for replication `r`.
    pub fn deviations(&self, r: usize) -> impl Iterator<Item = f64> + '_ {
        self.values[r].iter().zip(&self.expected).map(|(s, e)| s - e)
    }

    /// Rows `(replication, point, value)` in replication order.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        let label = match self.axis {
            Axis::Time => "t",
            Axis::Increment => "n",
        };
        writeln!(w, "replication,{label},S")?;
        for (r, row) in self.values.iter().enumerate() {
            for (t, s) in self.points.iter().zip(row) {
                writeln!(w, "{r},{t},{s}")?;
            }
        }
        Ok(())
    }
}

/// Grid times grouped by the increment that contains them.
struct Stop {
    ell: u64,
    mass: f64,
    /// `(grid position, t, tbar)`.
    times: Vec<(usize, f64, f64)>,
}

fn stops(idx: &RunIndex, times: &[f64]) -> Result<Vec<Stop>> {
    let mut out: Vec<Stop> = Vec::new();
    for (j, &t) in times.iter().enumerate() {
        let (loc, r) = idx.locate(t)?;
        let ell = loc.ell as u64;
        match out.last_mut() {
            Some(s) if s.ell == ell => s.times.push((j, t, loc.tbar)),
            _ => out.push(Stop { ell, mass: idx.runs()[r].mass, times: vec![(j, t, loc.tbar)] }),
        }
    }
    Ok(out)
}

/// Block terms covering increments `a..b` (exclusive).
fn block_terms(idx: &RunIndex, a: u64, b: u64) -> Vec<BlockTerm> {
    let runs = idx.runs();
    let mut r = runs.partition_point(|s| s.first <= a) - 1;
    let mut out = Vec::new();
    let mut k = a;
    while k < b {
        let span = &runs[r];
        let end = (span.last() + 1).min(b);
        out.push(BlockTerm { mass: span.mass, count: end - k, first: k });
        k = end;
        r += 1;
    }
    out
}

fn simulate_blocked(idx: &RunIndex, stops: &[Stop], family: &PathFamily, key: &StreamKey, n_points: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; n_points];
    let mut acc = Compensated::new();
    let mut next = 1u64;
    for stop in stops {
        if next < stop.ell {
            let terms = block_terms(idx, next, stop.ell);
            let mut rng = key.stream(BLOCK_DOMAIN | next);
            match family.block_sum(&terms, &mut rng) {
                Some(v) => acc.add(v),
                None => {
                    for term in &terms {
                        for k in term.first..term.first + term.count {
                            acc.add(family.path(key, k, term.mass).w(term.mass)?);
                        }
                    }
                }
            }
        }
        let mut path = family.path(key, stop.ell, stop.mass);
        for &(j, t, tbar) in &stop.times {
            let mut partial = acc;
            partial.add(path.w(tbar)?);
            out[j] = partial.value() / t;
        }
        acc.add(path.w(stop.mass)?);
        next = stop.ell + 1;
    }
    Ok(out)
}

fn simulate_per_increment(idx: &PrefixIndex, times: &[f64], family: &PathFamily, key: &StreamKey) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(times.len());
    let mut acc = Compensated::new();
    let mut next = 1usize;
    for &t in times {
        let loc = idx.locate(t)?;
        while next < loc.ell {
            let m = idx.mass(next);
            acc.add(family.path(key, next as u64, m).w(m)?);
            next += 1;
        }
        let mut partial = acc;
        let m = idx.mass(loc.ell);
        partial.add(family.path(key, loc.ell as u64, m).w(loc.tbar)?);
        out.push(partial.value() / t);
    }
    Ok(out)
}

/// Explicit prefix index reaching `t_max`.
fn prefix_until(spec: &MassSpec, t_max: f64) -> Result<PrefixIndex> {
    let mut n = RunIndex::until_time(spec, t_max)?.len();
    loop {
        let n_usize = usize::try_from(n).map_err(|_| Error::Overflow(format!("{n} increments do not fit in memory")))?;
        let p = spec.prefix(n_usize)?;
        if p.total() >= t_max {
            return Ok(p);
        }
        n += 1;
    }
}

/// Runs all replications of `config`.
pub fn run(config: &SimConfig) -> Result<Trajectories> {
    config.validate()?;
    let times = config.grid.times()?;
    let t_max = *times.last().expect("grid is nonempty");
    let mass = config.mass.with_default_seed(config.seed);
    let family = config.family.build(config.seed)?;
    let idx = RunIndex::until_time(&mass, t_max)?;
    let per_index = matches!(config.family, FamilySpec::CrazMean);
    let expected = times
        .iter()
        .map(|&t| expected_gradual_runs(&idx, t, per_index, |k, m| family.mean(k, m)))
        .collect::<Result<Vec<_>>>()?;
    let values = match config.mode {
        SumMode::Blocked => {
            let stops = stops(&idx, &times)?;
            (0..config.replications)
                .into_par_iter()
                .map(|r| simulate_blocked(&idx, &stops, &family, &StreamKey::new(config.seed, r), times.len()))
                .collect::<Result<Vec<_>>>()?
        }
        SumMode::PerIncrement => {
            let prefix = prefix_until(&mass, t_max)?;
            (0..config.replications)
                .into_par_iter()
                .map(|r| simulate_per_increment(&prefix, &times, &family, &StreamKey::new(config.seed, r)))
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(Trajectories { axis: Axis::Time, points: times, expected, values })
}
